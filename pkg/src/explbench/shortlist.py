"""Per-question candidate shortlists for the rating loop.

A shortlist is the union of the top-k facts from each ranker's score file
(synonymy facts are filtered out before taking the top-k, so filtering never
shrinks the candidate count) plus any gold-explanation facts the rankers
missed.  Ranked facts are ordered by their best score across rankers;
gold-only facts are appended last in gold order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .corpus import KnowledgeBase, Question, ScoreFile, iter_jsonl

GOLD_SOURCE = "gold"


@dataclass(frozen=True)
class Shortlist:
    question_id: str
    fact_ids: tuple[str, ...]
    provenance: dict[str, frozenset[str]]


def build_shortlist(
    question: Question,
    scores: Sequence[ScoreFile],
    k: int,
    kb: KnowledgeBase,
) -> Shortlist:
    """Assemble the shortlist of candidate facts for one question.

    Synonymy facts are excluded entirely (the exclusion also applies to gold
    facts, so the no-synonymy invariant always wins over gold coverage).
    Raises KeyError when a score file has no entry for the question.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    sources: dict[str, set[str]] = {}
    best_score: dict[str, float] = {}
    for score_file in scores:
        if question.id not in score_file.entries:
            raise KeyError(f"score file {score_file.model_name!r} has no entry for question {question.id!r}")
        label = f"{score_file.model_name}-top{k}"
        kept = 0
        for fact_id, score in score_file.entries[question.id]:
            if kept >= k:
                break
            if fact_id in kb and kb.fact(fact_id).is_synonymy:
                continue
            kept += 1
            sources.setdefault(fact_id, set()).add(label)
            if fact_id not in best_score or score > best_score[fact_id]:
                best_score[fact_id] = score

    ranked = sorted(best_score, key=lambda fid: (-best_score[fid], fid))

    gold_only = []
    for fact_id in question.gold_fact_ids:
        if fact_id in kb and kb.fact(fact_id).is_synonymy:
            continue
        sources.setdefault(fact_id, set()).add(GOLD_SOURCE)
        if fact_id not in best_score:
            gold_only.append(fact_id)

    return Shortlist(
        question_id=question.id,
        fact_ids=tuple(ranked + gold_only),
        provenance={fid: frozenset(src) for fid, src in sources.items()},
    )


def save_shortlists(shortlists: Iterable[Shortlist], path: str | Path) -> None:
    """Emit shortlists as JSONL for the annotation service."""
    with Path(path).open("w", encoding="utf-8") as handle:
        for sl in shortlists:
            obj = {
                "question": sl.question_id,
                "facts": [
                    {"fact": fid, "sources": sorted(sl.provenance[fid])}
                    for fid in sl.fact_ids
                ],
            }
            handle.write(json.dumps(obj, ensure_ascii=False) + "\n")


def load_shortlists(path: str | Path) -> dict[str, Shortlist]:
    shortlists = {}
    for obj in iter_jsonl(path):
        qid = obj["question"]
        fact_ids = tuple(entry["fact"] for entry in obj["facts"])
        provenance = {
            entry["fact"]: frozenset(entry.get("sources", [])) for entry in obj["facts"]
        }
        shortlists[qid] = Shortlist(question_id=qid, fact_ids=fact_ids, provenance=provenance)
    return shortlists
