"""Constraint-satisfaction schemas over the semi-structured knowledge base.

A schema is a list of slots, each naming a table and constraining some of its
columns to quoted literals or shared variables; a solution binds one row per
slot so that every literal matches and every variable unifies to a single
normalized token sequence.  Solving is semantically the naive cross-product
filter over row tuples; the implementation prunes with the KB's per-cell
index and enumerates slots in declared order with candidate rows ascending by
fact id, so the solution order is deterministic and caches are reproducible
byte-for-byte.

Concrete schema syntax (line-oriented, ``#`` comments allowed)::

    schema two-step-taxonomy
    slot KINDOF HYPO="water" HYPER=$x
    slot KINDOF HYPO=$x HYPER=$y

A blank line (or the next ``schema`` header) ends a schema.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from . import normalize
from .corpus import KnowledgeBase
from .expl_eval import ExplFact, Explanation

log = logging.getLogger(__name__)

CACHE_VERSION = 1


class SchemaError(ValueError):
    """Malformed schema file or a schema inconsistent with the KB."""


class StaleCacheError(RuntimeError):
    """Solution cache was built against a different knowledge base."""


@dataclass(frozen=True)
class LiteralConstraint:
    tokens: tuple[str, ...]


@dataclass(frozen=True)
class VarConstraint:
    var: str


Constraint = LiteralConstraint | VarConstraint


@dataclass(frozen=True)
class Slot:
    table: str
    constraints: tuple[tuple[str, Constraint], ...]  # (column, constraint), declared order


@dataclass(frozen=True)
class Schema:
    name: str
    slots: tuple[Slot, ...]

    @property
    def variables(self) -> frozenset[str]:
        return frozenset(
            cons.var
            for slot in self.slots
            for _, cons in slot.constraints
            if isinstance(cons, VarConstraint)
        )


@dataclass(frozen=True)
class SchemaSolution:
    schema_name: str
    bindings: tuple[str, ...]  # fact id per slot, in declared slot order
    var_assignments: tuple[tuple[str, tuple[str, ...]], ...]  # sorted by variable
    score: float = 0.0

    def var_map(self) -> dict[str, tuple[str, ...]]:
        return dict(self.var_assignments)


@dataclass
class SolutionCache:
    kb_fingerprint: str
    entries: dict[str, list[SchemaSolution]] = field(default_factory=dict)


_CONSTRAINT_RE = re.compile(r'([^\s=]+)=("(?:[^"]*)"|\$\w+)')


def _parse_slot_line(rest: str, where: str) -> Slot:
    parts = rest.split(None, 1)
    if not parts:
        raise SchemaError(f"{where}: slot line is missing a table name")
    table = parts[0]
    constraints: list[tuple[str, Constraint]] = []
    seen_columns: set[str] = set()
    remainder = parts[1] if len(parts) > 1 else ""
    pos = 0
    for match in _CONSTRAINT_RE.finditer(remainder):
        between = remainder[pos : match.start()]
        if between.strip():
            raise SchemaError(f"{where} column {match.start()}: unparseable text {between.strip()!r}")
        pos = match.end()
        column, value = match.group(1), match.group(2)
        if column in seen_columns:
            raise SchemaError(f"{where}: column {column!r} constrained twice")
        seen_columns.add(column)
        if value.startswith("$"):
            constraints.append((column, VarConstraint(var=value[1:])))
        else:
            constraints.append((column, LiteralConstraint(tokens=normalize.tokens(value[1:-1]))))
    if remainder[pos:].strip():
        raise SchemaError(f"{where} column {pos}: unparseable text {remainder[pos:].strip()!r}")
    return Slot(table=table, constraints=tuple(constraints))


def parse_schema_text(text: str, source: str = "<string>") -> list[Schema]:
    """Parse schemas from the line-oriented DSL; errors carry line positions."""
    schemas: list[Schema] = []
    names: set[str] = set()
    current_name: str | None = None
    current_slots: list[Slot] = []
    current_line = 0

    def finish() -> None:
        nonlocal current_name, current_slots
        if current_name is None:
            return
        if not current_slots:
            raise SchemaError(f"{source} line {current_line}: schema {current_name!r} has no slots")
        schemas.append(Schema(name=current_name, slots=tuple(current_slots)))
        current_name = None
        current_slots = []

    for line_num, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.strip()
        if line.startswith("#"):
            continue
        if not line:
            finish()
            continue
        keyword, _, rest = line.partition(" ")
        where = f"{source} line {line_num}"
        if keyword == "schema":
            finish()
            name = rest.strip()
            if not name:
                raise SchemaError(f"{where}: schema header is missing a name")
            if name in names:
                raise SchemaError(f"{where}: duplicate schema name {name!r}")
            names.add(name)
            current_name = name
            current_line = line_num
        elif keyword == "slot":
            if current_name is None:
                raise SchemaError(f"{where}: slot outside of a schema block")
            current_slots.append(_parse_slot_line(rest, where))
        else:
            raise SchemaError(f"{where}: expected 'schema' or 'slot', got {keyword!r}")
    finish()
    return schemas


def parse_schema_file(path: str | Path) -> list[Schema]:
    path = Path(path)
    return parse_schema_text(path.read_text(encoding="utf-8"), source=path.name)


def _validate_against_kb(schema: Schema, kb: KnowledgeBase) -> None:
    for index, slot in enumerate(schema.slots):
        if slot.table not in kb.tables:
            raise SchemaError(f"schema {schema.name!r} slot {index}: unknown table {slot.table!r}")
        columns = kb.table_columns(slot.table)
        if not columns:
            continue  # empty table: no rows to validate columns against, no solutions either
        for column, _ in slot.constraints:
            if column not in columns:
                raise SchemaError(
                    f"schema {schema.name!r} slot {index}: "
                    f"unknown column {column!r} in table {slot.table!r}"
                )


def solve(schema: Schema, kb: KnowledgeBase, limit: int | None = None) -> list[SchemaSolution]:
    """Enumerate every row binding satisfying the schema (up to ``limit``).

    Solutions come out ordered lexicographically by bound fact ids in slot
    order.  Rows may repeat across slots; semantics match the naive
    cross-product filter.
    """
    _validate_against_kb(schema, kb)
    if limit is not None and limit <= 0:
        return []
    # Normalized cell lookup per slot table, computed once.
    norm_cells: dict[str, dict[str, dict[str, tuple[str, ...]]]] = {}
    for slot in schema.slots:
        if slot.table in norm_cells:
            continue
        table_cells = {}
        for fact_id in kb.tables[slot.table]:
            table_cells[fact_id] = {
                col: normalize.tokens(cell) for col, cell in kb.facts[fact_id].cells
            }
        norm_cells[slot.table] = table_cells

    solutions: list[SchemaSolution] = []
    bound: list[str] = []
    var_bindings: dict[str, tuple[str, ...]] = {}

    def candidates(slot: Slot) -> list[str]:
        postings: list[list[str]] | None = None
        for column, cons in slot.constraints:
            if isinstance(cons, LiteralConstraint):
                toks = cons.tokens
            elif cons.var in var_bindings:
                toks = var_bindings[cons.var]
            else:
                continue
            posting = kb.lookup(slot.table, column, toks)
            postings = [posting] if postings is None else postings + [posting]
        if postings is None:
            return sorted(kb.tables[slot.table])
        postings.sort(key=len)
        result = set(postings[0])
        for posting in postings[1:]:
            result &= set(posting)
            if not result:
                break
        return sorted(result)

    def extend(slot_index: int) -> bool:
        """Depth-first extension; returns False once the limit is hit."""
        if slot_index == len(schema.slots):
            solutions.append(
                SchemaSolution(
                    schema_name=schema.name,
                    bindings=tuple(bound),
                    var_assignments=tuple(sorted(var_bindings.items())),
                )
            )
            return limit is None or len(solutions) < limit
        slot = schema.slots[slot_index]
        cells_of = norm_cells[slot.table]
        for fact_id in candidates(slot):
            row = cells_of[fact_id]
            newly_bound: list[str] = []
            ok = True
            for column, cons in slot.constraints:
                toks = row.get(column)
                if toks is None:
                    ok = False
                    break
                if isinstance(cons, LiteralConstraint):
                    if toks != cons.tokens:
                        ok = False
                        break
                else:
                    existing = var_bindings.get(cons.var)
                    if existing is None:
                        var_bindings[cons.var] = toks
                        newly_bound.append(cons.var)
                    elif existing != toks:
                        ok = False
                        break
            if ok:
                bound.append(fact_id)
                keep_going = extend(slot_index + 1)
                bound.pop()
            else:
                keep_going = True
            for var in newly_bound:
                del var_bindings[var]
            if not keep_going:
                return False
        return True

    extend(0)
    return solutions


def verify_solution(schema: Schema, kb: KnowledgeBase, solution: SchemaSolution) -> bool:
    """Re-check a solution against its schema's constraints from first principles."""
    if len(solution.bindings) != len(schema.slots):
        return False
    var_bindings: dict[str, tuple[str, ...]] = {}
    for slot, fact_id in zip(schema.slots, solution.bindings):
        if fact_id not in kb.facts or kb.facts[fact_id].table != slot.table:
            return False
        cells = {col: normalize.tokens(cell) for col, cell in kb.facts[fact_id].cells}
        for column, cons in slot.constraints:
            toks = cells.get(column)
            if toks is None:
                return False
            if isinstance(cons, LiteralConstraint):
                if toks != cons.tokens:
                    return False
            else:
                if var_bindings.setdefault(cons.var, toks) != toks:
                    return False
    return var_bindings == solution.var_map()


def score_solution(
    solution: SchemaSolution,
    scores: Mapping[str, float],
    clip_threshold: float = 0.0,
) -> float:
    """Clipped sum of the distinct bound facts' scores.

    A fact missing from ``scores`` contributes the clip value, so a very low
    clip threshold (e.g. -inf to disable clipping) makes missing scores fatal
    to the sum by design.
    """
    total = 0.0
    for fact_id in sorted(set(solution.bindings)):
        fact_score = scores.get(fact_id)
        total += clip_threshold if fact_score is None else max(fact_score, clip_threshold)
    return total


def best_scored_solution(
    solutions: Sequence[SchemaSolution],
    scores: Mapping[str, float],
    clip_threshold: float = 0.0,
) -> SchemaSolution | None:
    """Top solution by clipped-sum score (ties keep the earliest), score filled in."""
    best: SchemaSolution | None = None
    best_value = float("-inf")
    for solution in solutions:
        value = score_solution(solution, scores, clip_threshold)
        if value > best_value:
            best_value = value
            best = solution
    if best is None:
        return None
    return replace(best, score=best_value)


def solve_all(schemas: Sequence[Schema], kb: KnowledgeBase, limit: int | None = None) -> SolutionCache:
    """Solve every schema and collect the results into an in-memory cache."""
    cache = SolutionCache(kb_fingerprint=kb.fingerprint())
    for schema in schemas:
        cache.entries[schema.name] = solve(schema, kb, limit=limit)
    return cache


def build_schema_explanation(
    question_id: str,
    cache: SolutionCache,
    scores: Mapping[str, float],
    n_schemas: int,
    filter_threshold: float = 0.0,
    clip_threshold: float = 0.0,
) -> Explanation | None:
    """Combine the top-scoring solutions of the best schemas into an explanation.

    Each schema contributes its single best solution; schemas are ranked by
    that solution's clipped-sum score and the best ``n_schemas`` are unioned.
    Facts scoring below ``filter_threshold`` (or missing a score) are dropped.
    Returns None (with a warning) when nothing survives.
    """
    if n_schemas < 1:
        raise ValueError(f"n_schemas must be >= 1, got {n_schemas}")
    best: list[tuple[float, str, SchemaSolution]] = []
    for name, solutions in cache.entries.items():
        top = best_scored_solution(solutions, scores, clip_threshold)
        if top is not None:
            best.append((top.score, name, top))
    if not best:
        log.warning("question %s: no schema solutions available", question_id)
        return None
    best.sort(key=lambda item: (-item[0], item[1]))

    facts: list[ExplFact] = []
    seen: set[str] = set()
    for _value, name, solution in best[:n_schemas]:
        for fact_id in solution.bindings:
            if fact_id in seen:
                continue
            seen.add(fact_id)
            fact_score = scores.get(fact_id)
            if fact_score is None or fact_score < filter_threshold:
                continue
            facts.append(ExplFact(fact_id=fact_id, score=fact_score, source=name))
    if not facts:
        log.warning("question %s: every schema fact fell below the filter threshold", question_id)
        return None
    return Explanation(
        question_id=question_id,
        facts=tuple(facts),
        model_name=f"schema-{n_schemas}",
    )


def _solution_line(solution: SchemaSolution) -> str:
    return json.dumps(
        {
            "schema": solution.schema_name,
            "bindings": list(solution.bindings),
            "vars": {var: list(toks) for var, toks in solution.var_assignments},
        },
        ensure_ascii=False,
    )


def save_cache(cache: SolutionCache, path: str | Path) -> None:
    """Write a cache as JSONL: a fingerprinted header then one solution per line."""
    header = json.dumps(
        {
            "kind": "solution-cache",
            "version": CACHE_VERSION,
            "kb_fingerprint": cache.kb_fingerprint,
            "schemas": list(cache.entries),
        }
    )
    with Path(path).open("w", encoding="utf-8") as handle:
        handle.write(header + "\n")
        for solutions in cache.entries.values():
            for solution in solutions:
                handle.write(_solution_line(solution) + "\n")


def cache_solutions(
    schemas: Sequence[Schema],
    kb: KnowledgeBase,
    path: str | Path,
    limit: int | None = None,
) -> SolutionCache:
    """Solve all schemas and persist the cache to ``path``."""
    cache = solve_all(schemas, kb, limit=limit)
    save_cache(cache, path)
    return cache


def load_cache(path: str | Path, kb: KnowledgeBase) -> SolutionCache:
    """Load a cache, refusing one whose fingerprint does not match ``kb``."""
    path = Path(path)
    with path.open(encoding="utf-8") as handle:
        header_line = handle.readline()
        try:
            header = json.loads(header_line)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path.name}: invalid cache header ({exc})") from exc
        if header.get("kind") != "solution-cache" or header.get("version") != CACHE_VERSION:
            raise SchemaError(f"{path.name}: not a version-{CACHE_VERSION} solution cache")
        fingerprint = kb.fingerprint()
        if header.get("kb_fingerprint") != fingerprint:
            raise StaleCacheError(
                f"{path.name}: cache fingerprint {header.get('kb_fingerprint')!r} "
                f"does not match the loaded KB ({fingerprint!r})"
            )
        cache = SolutionCache(kb_fingerprint=fingerprint)
        for name in header.get("schemas", []):
            cache.entries[name] = []
        for line_num, line in enumerate(handle, start=2):
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            solution = SchemaSolution(
                schema_name=obj["schema"],
                bindings=tuple(obj["bindings"]),
                var_assignments=tuple(
                    sorted((var, tuple(toks)) for var, toks in obj["vars"].items())
                ),
            )
            cache.entries.setdefault(solution.schema_name, []).append(solution)
    return cache
