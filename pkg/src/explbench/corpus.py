"""Domain types and parsers for the fact knowledge base, questions, and score files.

File contracts:

* Knowledge base: a directory of ``<table>.tsv`` files (UTF-8, header row).
  Columns whose header starts with ``[SKIP]`` are ignored; the column named
  ``UID`` (configurable) is the fact identifier.  A fact's flat ``text`` is
  its non-empty content cells joined with single spaces.
* Questions: JSONL with fields ``id``, ``stem``, ``choices`` (array),
  ``answer_key`` (index into choices), ``gold`` (array of ``{fact, role}``),
  ``split`` (train/dev/test).
* Score files: 3-column TSV ``question_id <TAB> fact_id <TAB> score``.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

from . import normalize

log = logging.getLogger(__name__)

SPLITS = ("train", "dev", "test")


class ParseError(ValueError):
    """Malformed or inconsistent input data."""


@dataclass(frozen=True)
class CorpusConfig:
    """Knobs for knowledge-base ingestion."""

    id_column: str = "UID"
    skip_prefix: str = "[SKIP]"
    # Explicit synonymy table names; when None, any table whose name contains
    # the marker substring is treated as a synonymy table.
    synonymy_tables: tuple[str, ...] | None = None
    synonymy_marker: str = "SYNONYMY"

    def is_synonymy_table(self, table: str) -> bool:
        if self.synonymy_tables is not None:
            return table in self.synonymy_tables
        return self.synonymy_marker in table


@dataclass(frozen=True)
class Fact:
    """One row of a semi-structured table, flattened to a sentence."""

    id: str
    table: str
    cells: tuple[tuple[str, str], ...]  # (column name, cell text), in header order
    text: str
    is_synonymy: bool = False


@dataclass
class KnowledgeBase:
    """Id-indexed fact collection with per-table and per-cell indexes.

    Immutable after construction; safe to share across concurrent readers.
    """

    facts: dict[str, Fact] = field(default_factory=dict)
    tables: dict[str, list[str]] = field(default_factory=dict)
    # (table, column, normalized token sequence) -> fact ids, in insertion order
    column_index: dict[tuple[str, str, tuple[str, ...]], list[str]] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.facts)

    def __contains__(self, fact_id: str) -> bool:
        return fact_id in self.facts

    def fact(self, fact_id: str) -> Fact:
        return self.facts[fact_id]

    def table_columns(self, table: str) -> tuple[str, ...]:
        """Content column names of ``table`` (from its first fact)."""
        rows = self.tables.get(table)
        if not rows:
            return ()
        return tuple(col for col, _ in self.facts[rows[0]].cells)

    def lookup(self, table: str, column: str, toks: tuple[str, ...]) -> list[str]:
        """Fact ids of ``table`` whose ``column`` cell normalizes to ``toks``."""
        return self.column_index.get((table, column, toks), [])

    def add_fact(self, fact: Fact) -> None:
        if fact.id in self.facts:
            raise ParseError(f"duplicate fact id {fact.id!r}")
        self.facts[fact.id] = fact
        self.tables.setdefault(fact.table, []).append(fact.id)
        for column, cell in fact.cells:
            key = (fact.table, column, normalize.tokens(cell))
            self.column_index.setdefault(key, []).append(fact.id)

    def rebuild_column_index(self) -> dict[tuple[str, str, tuple[str, ...]], list[str]]:
        """Recompute the cell index from scratch; must equal ``column_index``."""
        index: dict[tuple[str, str, tuple[str, ...]], list[str]] = {}
        for fact in self.facts.values():
            for column, cell in fact.cells:
                index.setdefault((fact.table, column, normalize.tokens(cell)), []).append(fact.id)
        return index

    def fingerprint(self) -> str:
        """Content hash identifying this KB (used to validate solution caches)."""
        h = hashlib.sha256()
        for fact_id in sorted(self.facts):
            fact = self.facts[fact_id]
            h.update(json.dumps([fact.id, fact.table, list(map(list, fact.cells))]).encode())
            h.update(b"\n")
        return h.hexdigest()


@dataclass(frozen=True)
class Question:
    id: str
    stem: str
    choices: tuple[str, ...]
    correct_choice: int
    gold_explanation: tuple[tuple[str, str], ...]  # (fact id, role)
    split: str

    @property
    def answer_text(self) -> str:
        return self.choices[self.correct_choice]

    @property
    def gold_fact_ids(self) -> tuple[str, ...]:
        return tuple(fact_id for fact_id, _ in self.gold_explanation)

    @property
    def gold_set(self) -> frozenset[str]:
        return frozenset(self.gold_fact_ids)


@dataclass
class ScoreFile:
    """A model's per-question fact scores, stored descending by score.

    Ties are broken by ascending fact id at parse time, so every downstream
    consumer sees the same deterministic order.
    """

    model_name: str
    entries: dict[str, list[tuple[str, float]]] = field(default_factory=dict)

    def ranking(self, question_id: str) -> list[str]:
        return [fact_id for fact_id, _ in self.entries[question_id]]

    def scores(self, question_id: str) -> dict[str, float]:
        return dict(self.entries[question_id])


def _read_table_rows(path: Path) -> list[list[str]]:
    rows = []
    with path.open(encoding="utf-8") as handle:
        for line in handle:
            rows.append(line.rstrip("\r\n").split("\t"))
    return rows


def parse_knowledge_base(dir_path: str | Path, config: CorpusConfig | None = None) -> KnowledgeBase:
    """Load every ``<table>.tsv`` under ``dir_path`` into a KnowledgeBase.

    Raises ParseError on a missing id column, duplicate column names,
    duplicate fact ids (naming both offending rows), or ragged rows.
    Header-only tables are accepted with a warning.
    """
    config = config or CorpusConfig()
    dir_path = Path(dir_path)
    kb = KnowledgeBase()
    seen: dict[str, tuple[str, int]] = {}  # fact id -> (table, row number)
    for path in sorted(dir_path.glob("*.tsv")):
        table = path.stem
        rows = _read_table_rows(path)
        if not rows or rows == [[""]]:
            log.warning("table %s is empty (no header row)", table)
            continue
        header = rows[0]
        if config.id_column not in header:
            raise ParseError(f"table {table}: missing id column {config.id_column!r}")
        keep = [
            (i, name)
            for i, name in enumerate(header)
            if name != config.id_column and not name.startswith(config.skip_prefix)
        ]
        names = [name for _, name in keep]
        if len(set(names)) != len(names):
            raise ParseError(f"table {table}: duplicate column names in header")
        id_pos = header.index(config.id_column)
        if len(rows) == 1:
            log.warning("table %s has a header but no rows", table)
        is_syn = config.is_synonymy_table(table)
        for row_num, row in enumerate(rows[1:], start=2):
            if row == [""]:
                continue  # blank line
            if len(row) > len(header):
                raise ParseError(f"table {table} row {row_num}: more cells than header columns")
            row = row + [""] * (len(header) - len(row))
            fact_id = row[id_pos].strip()
            if not fact_id:
                raise ParseError(f"table {table} row {row_num}: empty id cell")
            if fact_id in seen:
                prev_table, prev_row = seen[fact_id]
                raise ParseError(
                    f"duplicate fact id {fact_id!r}: "
                    f"table {prev_table} row {prev_row} and table {table} row {row_num}"
                )
            seen[fact_id] = (table, row_num)
            cells = tuple((name, row[i]) for i, name in keep)
            text = " ".join(cell for _, cell in cells if cell)
            kb.add_fact(Fact(id=fact_id, table=table, cells=cells, text=text, is_synonymy=is_syn))
        if table not in kb.tables:
            kb.tables[table] = []
    return kb


def write_knowledge_base(kb: KnowledgeBase, dir_path: str | Path, config: CorpusConfig | None = None) -> None:
    """Serialize ``kb`` to one TSV per table (the canonical on-disk form)."""
    config = config or CorpusConfig()
    dir_path = Path(dir_path)
    dir_path.mkdir(parents=True, exist_ok=True)
    for table, fact_ids in kb.tables.items():
        columns = kb.table_columns(table)
        lines = ["\t".join((config.id_column,) + columns)]
        for fact_id in fact_ids:
            fact = kb.facts[fact_id]
            if tuple(col for col, _ in fact.cells) != columns:
                raise ParseError(f"table {table}: fact {fact_id} has mismatched columns")
            lines.append("\t".join((fact.id,) + tuple(cell for _, cell in fact.cells)))
        (dir_path / f"{table}.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")


def parse_questions(path: str | Path, kb: KnowledgeBase) -> list[Question]:
    """Load questions from JSONL, validating every gold fact id against ``kb``."""
    path = Path(path)
    questions: list[Question] = []
    seen: set[str] = set()
    with path.open(encoding="utf-8") as handle:
        for line_num, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path.name} line {line_num}: invalid JSON ({exc})") from exc
            try:
                qid = obj["id"]
                stem = obj["stem"]
                choices = tuple(obj["choices"])
                answer_key = obj["answer_key"]
                gold = obj["gold"]
                split = obj["split"]
            except KeyError as exc:
                raise ParseError(f"{path.name} line {line_num}: missing field {exc}") from exc
            if qid in seen:
                raise ParseError(f"{path.name} line {line_num}: duplicate question id {qid!r}")
            seen.add(qid)
            if not isinstance(answer_key, int) or not 0 <= answer_key < len(choices):
                raise ParseError(f"question {qid}: answer_key {answer_key!r} out of range")
            if split not in SPLITS:
                raise ParseError(f"question {qid}: unknown split {split!r}")
            if not gold:
                raise ParseError(f"question {qid}: empty gold explanation")
            gold_pairs = []
            gold_ids = set()
            for entry in gold:
                fact_id, role = entry["fact"], entry.get("role", "")
                if fact_id not in kb:
                    raise ParseError(f"question {qid}: gold fact {fact_id!r} not in knowledge base")
                if fact_id in gold_ids:
                    raise ParseError(f"question {qid}: gold fact {fact_id!r} listed twice")
                gold_ids.add(fact_id)
                gold_pairs.append((fact_id, role))
            questions.append(
                Question(
                    id=qid,
                    stem=stem,
                    choices=choices,
                    correct_choice=answer_key,
                    gold_explanation=tuple(gold_pairs),
                    split=split,
                )
            )
    return questions


def write_questions(questions: Iterable[Question], path: str | Path) -> None:
    """Serialize questions to canonical JSONL (field order fixed)."""
    with Path(path).open("w", encoding="utf-8") as handle:
        for q in questions:
            obj = {
                "id": q.id,
                "stem": q.stem,
                "choices": list(q.choices),
                "answer_key": q.correct_choice,
                "gold": [{"fact": fact_id, "role": role} for fact_id, role in q.gold_explanation],
                "split": q.split,
            }
            handle.write(json.dumps(obj, ensure_ascii=False) + "\n")


def parse_score_file(path: str | Path, model_name: str | None = None) -> ScoreFile:
    """Parse a 3-column TSV of (question, fact, score) lines.

    Entries are grouped per question and sorted descending by score with
    ties broken by ascending fact id.  Non-numeric or NaN scores and
    duplicate (question, fact) pairs are hard errors naming the line.
    """
    path = Path(path)
    raw: dict[str, list[tuple[str, float]]] = {}
    pairs: set[tuple[str, str]] = set()
    with path.open(encoding="utf-8") as handle:
        for line_num, line in enumerate(handle, start=1):
            line = line.rstrip("\r\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ParseError(f"{path.name} line {line_num}: expected 3 tab-separated fields")
            qid, fact_id, score_text = parts
            try:
                score = float(score_text)
            except ValueError as exc:
                raise ParseError(f"{path.name} line {line_num}: non-numeric score {score_text!r}") from exc
            if math.isnan(score):
                raise ParseError(f"{path.name} line {line_num}: NaN score")
            if (qid, fact_id) in pairs:
                raise ParseError(f"{path.name} line {line_num}: duplicate entry for ({qid}, {fact_id})")
            pairs.add((qid, fact_id))
            raw.setdefault(qid, []).append((fact_id, score))
    entries = {
        qid: sorted(facts, key=lambda fs: (-fs[1], fs[0]))
        for qid, facts in raw.items()
    }
    return ScoreFile(model_name=model_name or path.stem, entries=entries)


def write_score_file(score_file: ScoreFile, path: str | Path) -> None:
    """Serialize to canonical TSV: questions sorted, entries in stored order."""
    with Path(path).open("w", encoding="utf-8") as handle:
        for qid in sorted(score_file.entries):
            for fact_id, score in score_file.entries[qid]:
                handle.write(f"{qid}\t{fact_id}\t{score!r}\n")


def iter_jsonl(path: str | Path) -> Iterator[dict]:
    """Yield JSON objects from a JSONL file, skipping blank lines."""
    with Path(path).open(encoding="utf-8") as handle:
        for line_num, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{Path(path).name} line {line_num}: invalid JSON ({exc})") from exc
