"""Whole-explanation construction (top-k, ensembles) and quality metrics.

Metrics per explanation:

* relevance   - fraction of facts graded >= 1 (manual binary overrides win;
                unrated facts default to irrelevant)
* completeness - fraction of the gold explanation recovered (|G & M| / |G|)
* comp_b      - 1 iff every gold fact graded >= 2 is recovered; vacuously 1
                (and flagged) when no gold fact is graded that high
* f1 / f1_b   - harmonic mean of relevance with completeness / comp_b
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import AbstractSet, Iterable, Mapping, NamedTuple, Sequence

from .corpus import Question, ScoreFile, iter_jsonl
from .ratings import MergedRating

log = logging.getLogger(__name__)

AGGREGATION_MODES = ("per-question", "corpus")


@dataclass(frozen=True)
class ExplFact:
    fact_id: str
    score: float | None = None
    source: str = ""


@dataclass(frozen=True)
class Explanation:
    question_id: str
    facts: tuple[ExplFact, ...]
    model_name: str

    def __post_init__(self) -> None:
        if not self.facts:
            raise ValueError(f"explanation for {self.question_id} is empty")
        ids = [f.fact_id for f in self.facts]
        if len(set(ids)) != len(ids):
            raise ValueError(f"explanation for {self.question_id} repeats a fact")

    @property
    def fact_ids(self) -> tuple[str, ...]:
        return tuple(f.fact_id for f in self.facts)

    @property
    def fact_set(self) -> frozenset[str]:
        return frozenset(self.fact_ids)

    def __len__(self) -> int:
        return len(self.facts)


class CompB(NamedTuple):
    value: int
    vacuous: bool


@dataclass(frozen=True)
class QuestionExpl:
    relevance: float
    completeness: float
    comp_b: int
    comp_b_vacuous: bool
    f1: float
    f1_b: float
    length: int


@dataclass
class ExplReport:
    model_name: str
    aggregation: str
    per_question: dict[str, QuestionExpl] = field(default_factory=dict)
    relevance: float = 0.0
    completeness: float = 0.0
    comp_b: float = 0.0
    f1: float = 0.0
    f1_b: float = 0.0
    mean_length: float = 0.0
    vacuous_count: int = 0
    n_questions: int = 0


def topk_explanation(score_file: ScoreFile, question_id: str, k: int) -> Explanation:
    """The first ``k`` facts of the score file's deterministic order."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    entries = score_file.entries[question_id]
    if len(entries) < k:
        log.warning(
            "question %s has only %d scored facts (k=%d); returning all",
            question_id,
            len(entries),
            k,
        )
    facts = tuple(
        ExplFact(fact_id=fid, score=score, source=score_file.model_name)
        for fid, score in entries[:k]
    )
    return Explanation(question_id=question_id, facts=facts, model_name=score_file.model_name)


def relevance(
    expl: Explanation,
    grades: Mapping[str, int],
    overrides: Mapping[str, int] | None = None,
) -> float:
    """Fraction of the explanation's facts that count as relevant.

    A fact is relevant when its manual binary override says so, or failing
    that when its merged grade is >= 1; unrated facts count as irrelevant.
    """
    overrides = overrides or {}
    relevant = 0
    for fact_id in expl.fact_ids:
        if fact_id in overrides:
            relevant += 1 if overrides[fact_id] else 0
        elif grades.get(fact_id, 0) >= 1:
            relevant += 1
    return relevant / len(expl)


def completeness(facts: AbstractSet[str] | Explanation, gold: AbstractSet[str]) -> float:
    """Fraction of the gold explanation present in the model explanation."""
    if not gold:
        raise ValueError("gold set is empty")
    if isinstance(facts, Explanation):
        facts = facts.fact_set
    return len(gold & facts) / len(gold)


def comp_b(
    facts: AbstractSet[str] | Explanation,
    gold: AbstractSet[str],
    grades: Mapping[str, int],
) -> CompB:
    """Binary completeness over the highly-graded part of the gold explanation.

    Vacuously 1 (flagged) when no gold fact carries a grade >= 2.
    """
    if not gold:
        raise ValueError("gold set is empty")
    if isinstance(facts, Explanation):
        facts = facts.fact_set
    required = {g for g in gold if grades.get(g, 0) >= 2}
    if not required:
        return CompB(value=1, vacuous=True)
    return CompB(value=1 if required <= facts else 0, vacuous=False)


def f1_ex(rel: float, comp: float) -> float:
    """Harmonic mean of relevance and completeness (0 when both are 0)."""
    if rel == 0 and comp == 0:
        return 0.0
    return 2 * rel * comp / (rel + comp)


def evaluate_explanations(
    explanations: Sequence[Explanation],
    questions: Sequence[Question],
    merged: Mapping[tuple[str, str], MergedRating],
    overrides: Mapping[tuple[str, str], int] | None = None,
    aggregation: str = "per-question",
) -> ExplReport:
    """Score one explanation per question and aggregate.

    ``aggregation="per-question"`` macro-averages per-question F1 values;
    ``"corpus"`` recomputes F1 from the mean relevance and completeness.
    """
    if aggregation not in AGGREGATION_MODES:
        raise ValueError(f"unknown aggregation {aggregation!r}; expected one of {AGGREGATION_MODES}")
    overrides = overrides or {}
    question_by_id = {q.id: q for q in questions}
    grades_all: dict[str, dict[str, int]] = {}
    for (qid, fact_id), rating in merged.items():
        grades_all.setdefault(qid, {})[fact_id] = rating.tr

    model_names = {e.model_name for e in explanations}
    report = ExplReport(
        model_name="+".join(sorted(model_names)) if model_names else "",
        aggregation=aggregation,
    )
    seen: set[str] = set()
    for expl in explanations:
        if expl.question_id in seen:
            raise ValueError(f"multiple explanations for question {expl.question_id!r}")
        seen.add(expl.question_id)
        question = question_by_id.get(expl.question_id)
        if question is None:
            raise KeyError(f"explanation references unknown question {expl.question_id!r}")
        grades = grades_all.get(expl.question_id, {})
        q_overrides = {
            fact_id: value
            for (qid, fact_id), value in overrides.items()
            if qid == expl.question_id
        }
        rel = relevance(expl, grades, q_overrides)
        comp = completeness(expl, question.gold_set)
        cb = comp_b(expl, question.gold_set, grades)
        report.per_question[expl.question_id] = QuestionExpl(
            relevance=rel,
            completeness=comp,
            comp_b=cb.value,
            comp_b_vacuous=cb.vacuous,
            f1=f1_ex(rel, comp),
            f1_b=f1_ex(rel, float(cb.value)),
            length=len(expl),
        )
        if cb.vacuous:
            report.vacuous_count += 1

    rows = list(report.per_question.values())
    report.n_questions = len(rows)
    if not rows:
        return report
    n = len(rows)
    report.relevance = sum(r.relevance for r in rows) / n
    report.completeness = sum(r.completeness for r in rows) / n
    report.comp_b = sum(r.comp_b for r in rows) / n
    report.mean_length = sum(r.length for r in rows) / n
    if aggregation == "per-question":
        report.f1 = sum(r.f1 for r in rows) / n
        report.f1_b = sum(r.f1_b for r in rows) / n
    else:
        report.f1 = f1_ex(report.relevance, report.completeness)
        report.f1_b = f1_ex(report.relevance, report.comp_b)
    return report


def ensemble(explanations: Sequence[Explanation]) -> Explanation:
    """Set-union of same-question explanations, ordered by first appearance.

    A fact appearing in several inputs keeps its first score and gets the
    distinct source tags of every input that produced it, joined with '+'.
    """
    if not explanations:
        raise ValueError("nothing to ensemble")
    qids = {e.question_id for e in explanations}
    if len(qids) != 1:
        raise ValueError(f"ensemble inputs span multiple questions: {sorted(qids)}")
    order: list[str] = []
    first: dict[str, ExplFact] = {}
    sources: dict[str, list[str]] = {}
    for expl in explanations:
        for fact in expl.facts:
            if fact.fact_id not in first:
                first[fact.fact_id] = fact
                order.append(fact.fact_id)
                sources[fact.fact_id] = []
            tag = fact.source or expl.model_name
            if tag and tag not in sources[fact.fact_id]:
                sources[fact.fact_id].append(tag)
    facts = tuple(
        ExplFact(fact_id=fid, score=first[fid].score, source="+".join(sources[fid]))
        for fid in order
    )
    return Explanation(
        question_id=explanations[0].question_id,
        facts=facts,
        model_name="+".join(e.model_name for e in explanations),
    )


def load_explanations(path: str | Path) -> list[Explanation]:
    """Read explanations from JSONL ({question, model, facts: [{fact, ...}]})."""
    explanations = []
    for obj in iter_jsonl(path):
        facts = tuple(
            ExplFact(
                fact_id=entry["fact"],
                score=entry.get("score"),
                source=entry.get("source", ""),
            )
            for entry in obj["facts"]
        )
        explanations.append(
            Explanation(question_id=obj["question"], facts=facts, model_name=obj.get("model", ""))
        )
    return explanations


def save_explanations(explanations: Iterable[Explanation], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as handle:
        for expl in explanations:
            obj = {
                "question": expl.question_id,
                "model": expl.model_name,
                "facts": [
                    {
                        "fact": f.fact_id,
                        **({"score": f.score} if f.score is not None else {}),
                        **({"source": f.source} if f.source else {}),
                    }
                    for f in expl.facts
                ],
            }
            handle.write(json.dumps(obj, ensure_ascii=False) + "\n")


def load_overrides(path: str | Path) -> dict[tuple[str, str], int]:
    """Read binary relevance overrides from JSONL.

    Accepts both ``{question, fact, relevant}`` lines and completeness
    judgement lines carrying a ``fact_relevance`` map.  Conflicting entries
    for the same (question, fact) merge as ceil-mean, i.e. any positive
    judgement wins.
    """
    votes: dict[tuple[str, str], list[int]] = {}
    for obj in iter_jsonl(path):
        if "fact_relevance" in obj:
            for fact_id, value in obj["fact_relevance"].items():
                votes.setdefault((obj["question"], fact_id), []).append(1 if value else 0)
        elif "fact" in obj:
            votes.setdefault((obj["question"], obj["fact"]), []).append(
                1 if obj["relevant"] else 0
            )
    return {key: -(-sum(vals) // len(vals)) for key, vals in votes.items()}
