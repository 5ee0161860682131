"""Merging of multi-rater graded relevance ratings and agreement statistics.

Ratings use a 4-point scale per (question, fact) pair; multiple raters are
merged by taking the ceiling of the mean (computed exactly in integer
arithmetic, so boundary values never wobble on floating point).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

from .corpus import Question, iter_jsonl

RATING_SCALE = (0, 1, 2, 3)
RATING_LABELS = {0: "Irrelevant", 1: "Extra Detail", 2: "Important", 3: "Core"}

# Short rubric lines shown to raters next to each grade.
RATING_RUBRIC = {
    3: "Directly states the central knowledge the question is testing.",
    2: "Key supporting knowledge that grounds or connects the core facts.",
    1: "Adds useful detail, but leaving it out creates no gap in the reasoning.",
    0: "Does not belong in an explanation for this question.",
}


@dataclass(frozen=True)
class RatingRecord:
    question_id: str
    fact_id: str
    rater_id: str
    rating: int
    timestamp: str = ""  # ISO-8601; informational only

    def __post_init__(self) -> None:
        if self.rating not in RATING_SCALE:
            raise ValueError(
                f"rating {self.rating!r} for ({self.question_id}, {self.fact_id}) "
                f"is outside {RATING_SCALE}"
            )


@dataclass(frozen=True)
class MergedRating:
    question_id: str
    fact_id: str
    tr: int
    rater_count: int


@dataclass(frozen=True)
class AgreementReport:
    rater_a: str
    rater_b: str
    n_items: int
    cohen_kappa: float
    kappa_defined: bool
    percent_agreement: float
    within_one_fraction: float
    per_pair_counts: tuple[tuple[int, ...], ...]  # rows = rater_a, cols = rater_b
    weights: str = "none"


@dataclass(frozen=True)
class DistributionTable:
    """Counts of merged ratings split by gold membership (2 rows x 4 grades)."""

    gold: tuple[int, int, int, int]
    not_gold: tuple[int, int, int, int]

    @property
    def total(self) -> int:
        return sum(self.gold) + sum(self.not_gold)

    def increase_percent(self, tr: int) -> int | None:
        """Not-gold count as a rounded percentage of the gold count."""
        if self.gold[tr] == 0:
            return None
        return round(100 * self.not_gold[tr] / self.gold[tr])


def merge_ratings(records: Iterable[RatingRecord]) -> dict[tuple[str, str], MergedRating]:
    """Merge per-rater ratings into one grade per (question, fact).

    The merged grade is ceil(mean(ratings)); a duplicate (question, fact,
    rater) triple is a hard error.
    """
    sums: dict[tuple[str, str], int] = {}
    counts: dict[tuple[str, str], int] = {}
    seen: set[tuple[str, str, str]] = set()
    for rec in records:
        triple = (rec.question_id, rec.fact_id, rec.rater_id)
        if triple in seen:
            raise ValueError(f"duplicate rating for {triple}")
        seen.add(triple)
        key = (rec.question_id, rec.fact_id)
        sums[key] = sums.get(key, 0) + rec.rating
        counts[key] = counts.get(key, 0) + 1
    return {
        key: MergedRating(
            question_id=key[0],
            fact_id=key[1],
            tr=-(-sums[key] // counts[key]),  # exact ceil of the mean
            rater_count=counts[key],
        )
        for key in sums
    }


def _kappa_from_counts(counts: list[list[int]], weights: str) -> tuple[float, bool, float]:
    """Return (kappa, defined, percent_agreement) from a KxK confusion matrix."""
    k = len(counts)
    n = sum(sum(row) for row in counts)
    row_marg = [sum(counts[i]) for i in range(k)]
    col_marg = [sum(counts[i][j] for i in range(k)) for j in range(k)]
    p_o = sum(counts[i][i] for i in range(k)) / n
    if weights == "linear":
        # Disagreement-weighted form: kappa_w = 1 - sum(w*obs) / sum(w*exp).
        w = [[abs(i - j) / (k - 1) for j in range(k)] for i in range(k)]
        obs = sum(w[i][j] * counts[i][j] for i in range(k) for j in range(k))
        exp = sum(w[i][j] * row_marg[i] * col_marg[j] / n for i in range(k) for j in range(k))
        if exp == 0:
            return (1.0, True, p_o) if obs == 0 else (float("nan"), False, p_o)
        return 1.0 - obs / exp, True, p_o
    p_e = sum(row_marg[i] * col_marg[i] for i in range(k)) / (n * n)
    if p_e == 1.0:
        # Only reachable when both raters used a single shared category.
        return (1.0, True, p_o) if p_o == 1.0 else (float("nan"), False, p_o)
    return (p_o - p_e) / (1.0 - p_e), True, p_o


def _report_from_pairs(
    pairs: Iterable[tuple[int, int]], rater_a: str, rater_b: str, weights: str
) -> AgreementReport:
    counts = [[0] * 4 for _ in range(4)]
    n = 0
    for a, b in pairs:
        counts[a][b] += 1
        n += 1
    if n == 0:
        raise ValueError(f"raters {rater_a!r} and {rater_b!r} have no co-rated items")
    kappa, defined, p_o = _kappa_from_counts(counts, weights)
    disagreements = sum(counts[i][j] for i in range(4) for j in range(4) if i != j)
    within_one = sum(counts[i][j] for i in range(4) for j in range(4) if abs(i - j) == 1)
    return AgreementReport(
        rater_a=rater_a,
        rater_b=rater_b,
        n_items=n,
        cohen_kappa=kappa,
        kappa_defined=defined,
        percent_agreement=p_o,
        within_one_fraction=within_one / disagreements if disagreements else 1.0,
        per_pair_counts=tuple(tuple(row) for row in counts),
        weights=weights,
    )


def _by_item(records: Iterable[RatingRecord]) -> dict[tuple[str, str], dict[str, int]]:
    items: dict[tuple[str, str], dict[str, int]] = {}
    for rec in records:
        items.setdefault((rec.question_id, rec.fact_id), {})[rec.rater_id] = rec.rating
    return items


def agreement(
    records: Iterable[RatingRecord],
    rater_a: str,
    rater_b: str,
    weights: str = "none",
) -> AgreementReport:
    """Pairwise agreement between two raters over their co-rated items.

    ``weights="linear"`` switches Cohen's kappa to its linear-weighted form.
    Raises ValueError when the raters share no items.
    """
    items = _by_item(records)
    pairs = [
        (ratings[rater_a], ratings[rater_b])
        for ratings in items.values()
        if rater_a in ratings and rater_b in ratings
    ]
    return _report_from_pairs(pairs, rater_a, rater_b, weights)


def pooled_agreement(records: Iterable[RatingRecord], weights: str = "none") -> AgreementReport:
    """Agreement with every co-rating pair from every rater pair pooled together.

    Each unordered rater pair contributes one (low-id rater, high-id rater)
    rating pair per co-rated item.  Labeled "pooled" to distinguish it from
    the strictly pairwise report.
    """
    pairs = []
    for ratings in _by_item(records).values():
        raters = sorted(ratings)
        for i in range(len(raters)):
            for j in range(i + 1, len(raters)):
                pairs.append((ratings[raters[i]], ratings[raters[j]]))
    return _report_from_pairs(pairs, "pooled", "pooled", weights)


def rater_pairs(records: Iterable[RatingRecord]) -> list[tuple[str, str]]:
    """All unordered rater pairs with at least one co-rated item, sorted."""
    found: set[tuple[str, str]] = set()
    for ratings in _by_item(records).values():
        raters = sorted(ratings)
        for i in range(len(raters)):
            for j in range(i + 1, len(raters)):
                found.add((raters[i], raters[j]))
    return sorted(found)


def rating_distribution(
    merged: Mapping[tuple[str, str], MergedRating],
    questions: Iterable[Question],
) -> DistributionTable:
    """Count merged (question, fact) grades split by gold-explanation membership."""
    gold_sets = {q.id: q.gold_set for q in questions}
    gold_row = [0, 0, 0, 0]
    not_gold_row = [0, 0, 0, 0]
    for (qid, fact_id), rating in merged.items():
        if qid not in gold_sets:
            raise ValueError(f"merged rating references unknown question {qid!r}")
        row = gold_row if fact_id in gold_sets[qid] else not_gold_row
        row[rating.tr] += 1
    return DistributionTable(gold=tuple(gold_row), not_gold=tuple(not_gold_row))


def load_ratings(path: str | Path) -> list[RatingRecord]:
    """Read rating records from JSONL ({question, fact, rater, rating, ts})."""
    records = []
    for obj in iter_jsonl(path):
        records.append(
            RatingRecord(
                question_id=obj["question"],
                fact_id=obj["fact"],
                rater_id=obj["rater"],
                rating=int(obj["rating"]),
                timestamp=str(obj.get("ts", "")),
            )
        )
    return records


def save_ratings(records: Iterable[RatingRecord], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as handle:
        for rec in records:
            obj = {
                "question": rec.question_id,
                "fact": rec.fact_id,
                "rater": rec.rater_id,
                "rating": rec.rating,
                "ts": rec.timestamp,
            }
            handle.write(json.dumps(obj, ensure_ascii=False) + "\n")


def save_merged(merged: Mapping[tuple[str, str], MergedRating], path: str | Path) -> None:
    """Write merged ratings as JSONL, sorted by (question, fact)."""
    with Path(path).open("w", encoding="utf-8") as handle:
        for key in sorted(merged):
            rating = merged[key]
            obj = {
                "question": rating.question_id,
                "fact": rating.fact_id,
                "tr": rating.tr,
                "raters": rating.rater_count,
            }
            handle.write(json.dumps(obj, ensure_ascii=False) + "\n")


def load_merged(path: str | Path) -> dict[tuple[str, str], MergedRating]:
    merged = {}
    for obj in iter_jsonl(path):
        rating = MergedRating(
            question_id=obj["question"],
            fact_id=obj["fact"],
            tr=int(obj["tr"]),
            rater_count=int(obj["raters"]),
        )
        merged[(rating.question_id, rating.fact_id)] = rating
    return merged
