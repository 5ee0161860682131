"""Explanation-as-ranking evaluation: MAP under selectable gold settings, NDCG.

Average precision uses the standard definition with the gold-set size as
denominator; gold facts absent from a ranking simply never contribute.
NDCG uses exponential gain (2^grade - 1) with a log2(rank + 1) discount;
a linear-gain variant is available behind a flag.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import AbstractSet, Mapping, Sequence

from .corpus import Question, ScoreFile
from .ratings import MergedRating

log = logging.getLogger(__name__)


class GoldSetting(Enum):
    """Which facts count as relevant when scoring a ranking."""

    WT2 = "wt2"  # the question's original gold explanation
    TR1 = "tr1"  # every fact with merged rating >= 1 (extra detail or higher)
    TR2 = "tr2"  # every fact with merged rating >= 2 (important or higher)

    @classmethod
    def parse(cls, text: str) -> "GoldSetting":
        try:
            return cls(text.lower())
        except ValueError:
            raise ValueError(f"unknown gold setting {text!r}; expected wt2, tr1 or tr2") from None

    def gold_for(self, question: Question, grades: Mapping[str, int]) -> frozenset[str]:
        if self is GoldSetting.WT2:
            return question.gold_set
        threshold = 1 if self is GoldSetting.TR1 else 2
        return frozenset(fact for fact, tr in grades.items() if tr >= threshold)


@dataclass(frozen=True)
class QuestionRank:
    ap: float | None
    ndcg: float | None


@dataclass
class RankReport:
    model_name: str
    setting: str
    per_question: dict[str, QuestionRank] = field(default_factory=dict)
    map_score: float | None = None
    ndcg_score: float | None = None
    n_map: int = 0
    n_ndcg: int = 0
    skipped_map: int = 0
    skipped_ndcg: int = 0


def average_precision(ranking: Sequence[str], gold: AbstractSet[str]) -> float:
    """AP of ``ranking`` against a gold set; unretrieved gold contributes 0."""
    if not gold:
        raise ValueError("gold set is empty")
    hits = 0
    total = 0.0
    for rank, fact_id in enumerate(ranking, start=1):
        if fact_id in gold:
            hits += 1
            total += hits / rank
    return total / len(gold)


def _gain(grade: int, linear: bool) -> float:
    return float(grade) if linear else float(2**grade - 1)


def ndcg(
    ranking: Sequence[str],
    grades: Mapping[str, int],
    cutoff: int | None = None,
    linear_gain: bool = False,
) -> float:
    """NDCG of ``ranking`` against graded relevance (unlisted facts grade 0).

    The ideal ordering is taken over all grades in ``grades`` (a graded fact
    missing from the ranking still raises the bar).  ``cutoff`` defaults to
    the full ranking length.
    """
    if not any(grades.values()):
        raise ValueError("all grades are zero")
    depth = len(ranking) if cutoff is None else cutoff
    dcg = 0.0
    for rank, fact_id in enumerate(ranking[:depth], start=1):
        grade = grades.get(fact_id, 0)
        if grade:
            dcg += _gain(grade, linear_gain) / math.log2(rank + 1)
    ideal = sorted(grades.values(), reverse=True)[:depth]
    idcg = sum(
        _gain(grade, linear_gain) / math.log2(rank + 1)
        for rank, grade in enumerate(ideal, start=1)
        if grade
    )
    return dcg / idcg


def _evaluate_one(
    ranking: Sequence[str],
    gold: AbstractSet[str],
    grades: Mapping[str, int],
    cutoff: int | None,
    linear_gain: bool,
) -> QuestionRank:
    ap = average_precision(ranking, gold) if gold else None
    score = ndcg(ranking, grades, cutoff, linear_gain) if any(grades.values()) else None
    return QuestionRank(ap=ap, ndcg=score)


def _evaluate_chunk(args) -> list[tuple[str, QuestionRank]]:
    chunk, cutoff, linear_gain = args
    return [
        (qid, _evaluate_one(ranking, gold, grades, cutoff, linear_gain))
        for qid, ranking, gold, grades in chunk
    ]


def evaluate_rankings(
    rankings: Mapping[str, Sequence[str]],
    gold_by_question: Mapping[str, AbstractSet[str]],
    grades_by_question: Mapping[str, Mapping[str, int]],
    model_name: str = "",
    setting: str = "",
    cutoff: int | None = None,
    linear_gain: bool = False,
    workers: int = 1,
) -> RankReport:
    """Score every question's ranking and macro-average the results.

    Questions with an empty gold set are skipped for MAP; questions whose
    grades are all zero are skipped for NDCG.  Both skips are counted in the
    report rather than scored as 0.
    """
    report = RankReport(model_name=model_name, setting=setting)
    items = [
        (qid, rankings[qid], gold_by_question.get(qid, frozenset()), grades_by_question.get(qid, {}))
        for qid in sorted(rankings)
    ]
    if workers > 1 and len(items) > 1:
        chunk_size = (len(items) + workers - 1) // workers
        chunks = [items[i : i + chunk_size] for i in range(0, len(items), chunk_size)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = [
                pair
                for chunk_result in pool.map(
                    _evaluate_chunk, [(chunk, cutoff, linear_gain) for chunk in chunks]
                )
                for pair in chunk_result
            ]
    else:
        results = [
            (qid, _evaluate_one(ranking, gold, grades, cutoff, linear_gain))
            for qid, ranking, gold, grades in items
        ]

    ap_values: list[float] = []
    ndcg_values: list[float] = []
    for qid, qr in results:
        report.per_question[qid] = qr
        if qr.ap is None:
            report.skipped_map += 1
            log.warning("question %s skipped for MAP: empty gold set", qid)
        else:
            ap_values.append(qr.ap)
        if qr.ndcg is None:
            report.skipped_ndcg += 1
        else:
            ndcg_values.append(qr.ndcg)
    report.n_map = len(ap_values)
    report.n_ndcg = len(ndcg_values)
    report.map_score = sum(ap_values) / len(ap_values) if ap_values else None
    report.ndcg_score = sum(ndcg_values) / len(ndcg_values) if ndcg_values else None
    return report


def grades_by_question(
    merged: Mapping[tuple[str, str], MergedRating],
) -> dict[str, dict[str, int]]:
    """Regroup merged ratings into per-question grade maps."""
    grades: dict[str, dict[str, int]] = {}
    for (qid, fact_id), rating in merged.items():
        grades.setdefault(qid, {})[fact_id] = rating.tr
    return grades


def evaluate_ranking(
    score_file: ScoreFile,
    questions: Sequence[Question],
    merged: Mapping[tuple[str, str], MergedRating],
    setting: GoldSetting,
    cutoff: int | None = None,
    linear_gain: bool = False,
    workers: int = 1,
) -> RankReport:
    """Evaluate a score file over ``questions`` under one gold setting.

    Raises KeyError when the score file lacks an entry for a question.
    """
    grades = grades_by_question(merged)
    rankings = {}
    gold_by_q = {}
    grades_by_q = {}
    for question in questions:
        if question.id not in score_file.entries:
            raise KeyError(
                f"score file {score_file.model_name!r} has no entry for question {question.id!r}"
            )
        rankings[question.id] = score_file.ranking(question.id)
        q_grades = grades.get(question.id, {})
        gold_by_q[question.id] = setting.gold_for(question, q_grades)
        grades_by_q[question.id] = q_grades
    return evaluate_rankings(
        rankings,
        gold_by_q,
        grades_by_q,
        model_name=score_file.model_name,
        setting=setting.value,
        cutoff=cutoff,
        linear_gain=linear_gain,
        workers=workers,
    )


@dataclass(frozen=True)
class RankDelta:
    """Difference between a report and a baseline (report minus baseline)."""

    map_delta: float | None
    ndcg_delta: float | None


def delta_report(report: RankReport, baseline: RankReport) -> RankDelta:
    def diff(a: float | None, b: float | None) -> float | None:
        if a is None or b is None:
            return None
        return a - b

    return RankDelta(
        map_delta=diff(report.map_score, baseline.map_score),
        ndcg_delta=diff(report.ndcg_score, baseline.ndcg_score),
    )
