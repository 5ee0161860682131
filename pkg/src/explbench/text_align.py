"""Alignment of free-text generated facts onto knowledge-base facts.

Each generated string is scored against every KB fact with a unigram-overlap
F1 (multiset counts over the canonical normalizer's tokens) and mapped to the
best-scoring fact; scores under the rejection threshold are kept in the audit
trail but not accepted.  No stemming is applied, matching the repo-wide
normalizer.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from . import normalize
from .corpus import KnowledgeBase, iter_jsonl
from .expl_eval import ExplFact, Explanation

DEFAULT_SEPARATOR = "[AND]"
DEFAULT_THRESHOLD = 0.70


@dataclass(frozen=True)
class GeneratedOutput:
    """A model's raw generation for one question, split into fact strings."""

    question_id: str
    raw: str
    fact_strings: tuple[str, ...]

    @classmethod
    def from_raw(cls, question_id: str, raw: str, separator: str = DEFAULT_SEPARATOR) -> "GeneratedOutput":
        seen = set()
        strings = []
        for piece in raw.split(separator):
            piece = piece.strip()
            if piece and piece not in seen:
                seen.add(piece)
                strings.append(piece)
        return cls(question_id=question_id, raw=raw, fact_strings=tuple(strings))


@dataclass(frozen=True)
class Alignment:
    generated: str
    best_fact: str | None
    score: float
    accepted: bool


def rouge1(a: str, b: str) -> float:
    """Unigram-overlap F1 between two strings (0 when either side is empty)."""
    count_a = Counter(normalize.tokens(a))
    count_b = Counter(normalize.tokens(b))
    total_a = sum(count_a.values())
    total_b = sum(count_b.values())
    if total_a == 0 or total_b == 0:
        return 0.0
    overlap = sum((count_a & count_b).values())
    if overlap == 0:
        return 0.0
    precision = overlap / total_b
    recall = overlap / total_a
    return 2 * precision * recall / (precision + recall)


def _fact_counters(kb: KnowledgeBase) -> list[tuple[str, Counter, int]]:
    prepared = []
    for fact_id in sorted(kb.facts):
        counts = Counter(normalize.tokens(kb.facts[fact_id].text))
        prepared.append((fact_id, counts, sum(counts.values())))
    return prepared


def align(
    gen: GeneratedOutput,
    kb: KnowledgeBase,
    threshold: float = DEFAULT_THRESHOLD,
) -> list[Alignment]:
    """Map each generated string to its best-scoring KB fact.

    Ties go to the lexicographically smallest fact id; a string is accepted
    only when its best score reaches the threshold.
    """
    if not kb.facts:
        raise ValueError("knowledge base is empty")
    prepared = _fact_counters(kb)
    alignments = []
    for text in gen.fact_strings:
        count_g = Counter(normalize.tokens(text))
        total_g = sum(count_g.values())
        best_id: str | None = None
        best_score = -1.0
        for fact_id, count_f, total_f in prepared:
            if total_g == 0 or total_f == 0:
                score = 0.0
            else:
                overlap = sum((count_g & count_f).values())
                if overlap == 0:
                    score = 0.0
                else:
                    p = overlap / total_f
                    r = overlap / total_g
                    score = 2 * p * r / (p + r)
            if score > best_score:  # fact ids visited ascending, so first max wins ties
                best_score = score
                best_id = fact_id
        accepted = best_id is not None and best_score >= threshold
        alignments.append(
            Alignment(generated=text, best_fact=best_id, score=max(best_score, 0.0), accepted=accepted)
        )
    return alignments


def alignments_to_explanation(
    question_id: str,
    alignments: Sequence[Alignment],
    model_name: str,
) -> Explanation | None:
    """Collect accepted alignments into an explanation (None when none accepted)."""
    seen = set()
    facts = []
    for alignment in alignments:
        if not alignment.accepted or alignment.best_fact in seen:
            continue
        seen.add(alignment.best_fact)
        facts.append(
            ExplFact(fact_id=alignment.best_fact, score=alignment.score, source=model_name)
        )
    if not facts:
        return None
    return Explanation(question_id=question_id, facts=tuple(facts), model_name=model_name)


def load_generated(path: str | Path, separator: str = DEFAULT_SEPARATOR) -> list[GeneratedOutput]:
    """Read raw generations from JSONL ({question, raw})."""
    return [
        GeneratedOutput.from_raw(obj["question"], obj["raw"], separator)
        for obj in iter_jsonl(path)
    ]


def save_audit(
    audits: Iterable[tuple[str, Alignment]],
    path: str | Path,
) -> None:
    """Write the alignment audit TSV: question, string, best fact, score, accepted."""
    with Path(path).open("w", encoding="utf-8") as handle:
        handle.write("question\tgenerated\tbest_fact\tscore\taccepted\n")
        for question_id, alignment in audits:
            handle.write(
                "\t".join(
                    [
                        question_id,
                        json.dumps(alignment.generated, ensure_ascii=False),
                        alignment.best_fact or "",
                        f"{alignment.score:.6f}",
                        "1" if alignment.accepted else "0",
                    ]
                )
                + "\n"
            )
