"""HTTP annotation service hosting the human rating loop.

Tasks come in two kinds: relevance tasks present a question's shortlist for
4-point grading; completeness tasks present a model explanation for a binary
complete/incomplete call plus binary relevance toggles for any facts that
have no merged rating yet.

All submissions are appended to a JSONL event log (flushed and fsynced per
event); every piece of derived state - effective rating records, merged
grades, agreement statistics, the manual-vs-automatic delta table - is a pure
function of the seed ratings plus that log, so replaying the log from empty
always reproduces identical statistics.  An optional snapshot file saves the
reduced state together with the log position it covers; loading it and
replaying the tail is equivalent to a full replay.
"""

from __future__ import annotations

import json
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from fastapi import Depends, FastAPI, Header, HTTPException, Query
from fastapi.responses import PlainTextResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .corpus import KnowledgeBase, Question
from .expl_eval import Explanation, evaluate_explanations, f1_ex, relevance
from .ratings import (
    RATING_LABELS,
    RATING_RUBRIC,
    RatingRecord,
    agreement,
    merge_ratings,
    pooled_agreement,
    rater_pairs,
)
from .shortlist import Shortlist

SNAPSHOT_VERSION = 1


@dataclass(frozen=True)
class Task:
    task_id: str
    kind: str  # "relevance" | "completeness"
    question_id: str
    fact_ids: tuple[str, ...]
    model_name: str = ""  # completeness tasks only


@dataclass
class JudgementEvent:
    seq: int
    task_id: str
    rater_id: str
    payload: dict[str, Any]
    ts: float

    def to_json(self) -> str:
        return json.dumps(
            {
                "seq": self.seq,
                "type": "judgement",
                "task": self.task_id,
                "rater": self.rater_id,
                "payload": self.payload,
                "ts": self.ts,
            },
            ensure_ascii=False,
        )

    @classmethod
    def from_obj(cls, obj: dict) -> "JudgementEvent":
        return cls(
            seq=int(obj["seq"]),
            task_id=obj["task"],
            rater_id=obj["rater"],
            payload=obj["payload"],
            ts=float(obj["ts"]),
        )


@dataclass
class Workspace:
    """Immutable inputs the service is hosting annotation for."""

    kb: KnowledgeBase
    questions: dict[str, Question]
    shortlists: dict[str, Shortlist] = field(default_factory=dict)
    explanations: list[Explanation] = field(default_factory=list)
    seed_records: list[RatingRecord] = field(default_factory=list)


class AnnotationService:
    """Single-writer annotation state over an append-only event log."""

    def __init__(
        self,
        workspace: Workspace,
        raters: dict[str, str],
        coverage: int,
        state_dir: str | Path,
    ) -> None:
        self.workspace = workspace
        self.raters = raters
        self.coverage = coverage
        self.state_dir = Path(state_dir)
        self.state_dir.mkdir(parents=True, exist_ok=True)
        self.log_path = self.state_dir / "events.jsonl"
        self.snapshot_path = self.state_dir / "snapshot.json"
        self._lock = threading.Lock()
        self._last_seq = 0
        # Latest event per (task, rater); resubmission supersedes, the log
        # keeps the full audit trail.
        self._latest: dict[tuple[str, str], JudgementEvent] = {}
        self.tasks = self._build_tasks()
        self._recover()

    # ---------- task construction ----------

    def _build_tasks(self) -> dict[str, Task]:
        tasks: dict[str, Task] = {}
        for qid in sorted(self.workspace.shortlists):
            shortlist = self.workspace.shortlists[qid]
            task_id = f"rel:{qid}"
            tasks[task_id] = Task(
                task_id=task_id,
                kind="relevance",
                question_id=qid,
                fact_ids=shortlist.fact_ids,
            )
        for expl in self.workspace.explanations:
            task_id = f"comp:{expl.model_name}:{expl.question_id}"
            tasks[task_id] = Task(
                task_id=task_id,
                kind="completeness",
                question_id=expl.question_id,
                fact_ids=expl.fact_ids,
                model_name=expl.model_name,
            )
        return tasks

    # ---------- persistence ----------

    def _recover(self) -> None:
        start_seq = 0
        if self.snapshot_path.exists():
            snapshot = json.loads(self.snapshot_path.read_text(encoding="utf-8"))
            if snapshot.get("version") == SNAPSHOT_VERSION:
                start_seq = int(snapshot["last_seq"])
                for entry in snapshot["latest"]:
                    event = JudgementEvent.from_obj(entry)
                    self._latest[(event.task_id, event.rater_id)] = event
                self._last_seq = start_seq
        if self.log_path.exists():
            with self.log_path.open(encoding="utf-8") as handle:
                for line in handle:
                    line = line.strip()
                    if not line:
                        continue
                    event = JudgementEvent.from_obj(json.loads(line))
                    if event.seq <= start_seq:
                        continue
                    self._apply(event)

    def _apply(self, event: JudgementEvent) -> None:
        self._latest[(event.task_id, event.rater_id)] = event
        self._last_seq = max(self._last_seq, event.seq)

    def _append(self, event: JudgementEvent) -> None:
        with self.log_path.open("a", encoding="utf-8") as handle:
            handle.write(event.to_json() + "\n")
            handle.flush()
            os.fsync(handle.fileno())

    def save_snapshot(self) -> None:
        with self._lock:
            payload = {
                "version": SNAPSHOT_VERSION,
                "last_seq": self._last_seq,
                "latest": [
                    json.loads(event.to_json())
                    for _, event in sorted(self._latest.items())
                ],
            }
        tmp = self.snapshot_path.with_suffix(".tmp")
        tmp.write_text(json.dumps(payload, ensure_ascii=False), encoding="utf-8")
        os.replace(tmp, self.snapshot_path)

    # ---------- derived state ----------
    # Submissions are linearized by the writer lock; readers work from a
    # point-in-time copy of the latest-event map so a concurrent submit can
    # never mutate a dict they are iterating.

    def _snapshot_latest(self) -> dict[tuple[str, str], JudgementEvent]:
        with self._lock:
            return dict(self._latest)

    def _submitters(self) -> dict[str, set[str]]:
        by_task: dict[str, set[str]] = {}
        for task_id, rater_id in self._snapshot_latest():
            by_task.setdefault(task_id, set()).add(rater_id)
        return by_task

    def effective_records(self) -> list[RatingRecord]:
        """Seed rating records overlaid with log-derived ones (log wins)."""
        records: dict[tuple[str, str, str], RatingRecord] = {
            (r.question_id, r.fact_id, r.rater_id): r for r in self.workspace.seed_records
        }
        for (task_id, rater_id), event in sorted(self._snapshot_latest().items()):
            task = self.tasks.get(task_id)
            if task is None or task.kind != "relevance":
                continue
            for fact_id, rating in event.payload["ratings"].items():
                record = RatingRecord(
                    question_id=task.question_id,
                    fact_id=fact_id,
                    rater_id=rater_id,
                    rating=int(rating),
                    timestamp=f"{event.ts:.6f}",
                )
                records[(record.question_id, record.fact_id, record.rater_id)] = record
        return [records[key] for key in sorted(records)]

    def merged(self):
        return merge_ratings(self.effective_records())

    def judgements(self) -> list[dict[str, Any]]:
        rows = []
        for (task_id, rater_id), event in sorted(self._snapshot_latest().items()):
            task = self.tasks.get(task_id)
            if task is None or task.kind != "completeness":
                continue
            rows.append(
                {
                    "task": task_id,
                    "model": task.model_name,
                    "question": task.question_id,
                    "rater": rater_id,
                    "complete": int(event.payload["complete"]),
                    "fact_relevance": {
                        fact: int(v) for fact, v in event.payload.get("fact_relevance", {}).items()
                    },
                    "ts": f"{event.ts:.6f}",
                }
            )
        return rows

    # ---------- operations ----------

    def next_task(self, rater_id: str) -> Task | None:
        """Least-annotated open task this rater has not submitted yet."""
        if rater_id not in self.raters:
            raise KeyError(f"unknown rater {rater_id!r}")
        submitters = self._submitters()
        best: Task | None = None
        best_key: tuple[int, str] | None = None
        for task_id in sorted(self.tasks):
            done_by = submitters.get(task_id, set())
            if rater_id in done_by or len(done_by) >= self.coverage:
                continue
            key = (len(done_by), task_id)
            if best_key is None or key < best_key:
                best_key = key
                best = self.tasks[task_id]
        return best

    def unrated_facts(self, task: Task) -> tuple[str, ...]:
        """Explanation facts that currently lack a merged rating."""
        merged = self.merged()
        return tuple(
            fact_id
            for fact_id in task.fact_ids
            if (task.question_id, fact_id) not in merged
        )

    def task_payload(self, task: Task, rater_id: str) -> dict[str, Any]:
        question = self.workspace.questions[task.question_id]
        payload: dict[str, Any] = {
            "task": task.task_id,
            "kind": task.kind,
            "rater": rater_id,
            "question": {
                "id": question.id,
                "stem": question.stem,
                "answer": question.answer_text,
            },
        }
        if task.kind == "relevance":
            shortlist = self.workspace.shortlists[task.question_id]
            payload["scale"] = [
                {"value": value, "label": RATING_LABELS[value], "rubric": RATING_RUBRIC[value]}
                for value in (3, 2, 1, 0)
            ]
            payload["items"] = [
                {
                    "fact": fact_id,
                    "text": self._fact_text(fact_id),
                    "sources": sorted(shortlist.provenance.get(fact_id, ())),
                }
                for fact_id in task.fact_ids
            ]
        else:
            merged = self.merged()
            payload["model"] = task.model_name
            payload["items"] = [
                {
                    "fact": fact_id,
                    "text": self._fact_text(fact_id),
                    "tr": merged[(task.question_id, fact_id)].tr
                    if (task.question_id, fact_id) in merged
                    else None,
                    "needs_judgement": (task.question_id, fact_id) not in merged,
                }
                for fact_id in task.fact_ids
            ]
        return payload

    def _fact_text(self, fact_id: str) -> str:
        if fact_id in self.workspace.kb:
            return self.workspace.kb.fact(fact_id).text
        return fact_id

    def submit(self, rater_id: str, task_id: str, payload: dict[str, Any]) -> int:
        """Validate, append to the log, and apply one judgement event."""
        if rater_id not in self.raters:
            raise KeyError(f"unknown rater {rater_id!r}")
        task = self.tasks.get(task_id)
        if task is None:
            raise KeyError(f"unknown task {task_id!r}")
        clean = self._validate_payload(task, payload)
        with self._lock:
            event = JudgementEvent(
                seq=self._last_seq + 1,
                task_id=task_id,
                rater_id=rater_id,
                payload=clean,
                ts=time.time(),
            )
            self._append(event)
            self._apply(event)
            return event.seq

    def _validate_payload(self, task: Task, payload: dict[str, Any]) -> dict[str, Any]:
        if task.kind == "relevance":
            ratings = payload.get("ratings")
            if not isinstance(ratings, dict):
                raise ValueError("relevance submission must carry a 'ratings' map")
            missing = [f for f in task.fact_ids if f not in ratings]
            if missing:
                raise ValueError(f"missing ratings for facts: {', '.join(missing)}")
            extra = [f for f in ratings if f not in task.fact_ids]
            if extra:
                raise ValueError(f"ratings for facts not in the task: {', '.join(extra)}")
            clean_ratings = {}
            for fact_id, value in ratings.items():
                if not isinstance(value, int) or value not in (0, 1, 2, 3):
                    raise ValueError(f"ratings[{fact_id}]: {value!r} is not in 0..3")
                clean_ratings[fact_id] = value
            return {"ratings": clean_ratings}
        complete = payload.get("complete")
        if complete not in (0, 1):
            raise ValueError(f"complete: {complete!r} is not binary")
        fact_relevance = payload.get("fact_relevance", {})
        if not isinstance(fact_relevance, dict):
            raise ValueError("fact_relevance must be a map")
        needed = set(self.unrated_facts(task))
        missing = sorted(needed - set(fact_relevance))
        if missing:
            raise ValueError(f"missing binary relevance for facts: {', '.join(missing)}")
        extra = [f for f in fact_relevance if f not in task.fact_ids]
        if extra:
            raise ValueError(f"fact_relevance for facts not in the task: {', '.join(extra)}")
        clean_relevance = {}
        for fact_id, value in fact_relevance.items():
            if value not in (0, 1):
                raise ValueError(f"fact_relevance[{fact_id}]: {value!r} is not binary")
            clean_relevance[fact_id] = value
        return {"complete": complete, "fact_relevance": clean_relevance}

    # ---------- statistics ----------

    def stats(self) -> dict[str, Any]:
        latest = self._snapshot_latest()
        submitters: dict[str, set[str]] = {}
        by_rater: dict[str, int] = {name: 0 for name in sorted(self.raters)}
        for task_id, rater_id in latest:
            submitters.setdefault(task_id, set()).add(rater_id)
            by_rater[rater_id] = by_rater.get(rater_id, 0) + 1
        progress = {
            "tasks": len(self.tasks),
            "relevance_tasks": sum(1 for t in self.tasks.values() if t.kind == "relevance"),
            "completeness_tasks": sum(1 for t in self.tasks.values() if t.kind == "completeness"),
            "submissions": len(latest),
            "completed_tasks": sum(
                1 for task_id in self.tasks if len(submitters.get(task_id, ())) >= self.coverage
            ),
            "coverage": self.coverage,
            "by_rater": by_rater,
        }
        result: dict[str, Any] = {"progress": progress}

        records = self.effective_records()
        pairs = rater_pairs(records)
        if pairs:
            pair_reports = []
            for rater_a, rater_b in pairs:
                report = agreement(records, rater_a, rater_b)
                pair_reports.append(
                    {
                        "rater_a": rater_a,
                        "rater_b": rater_b,
                        "n": report.n_items,
                        "kappa": report.cohen_kappa if report.kappa_defined else None,
                        "percent_agreement": report.percent_agreement,
                        "within_one": report.within_one_fraction,
                    }
                )
            pooled = pooled_agreement(records)
            result["agreement"] = {
                "pairs": pair_reports,
                "pooled": {
                    "n": pooled.n_items,
                    "kappa": pooled.cohen_kappa if pooled.kappa_defined else None,
                    "percent_agreement": pooled.percent_agreement,
                    "within_one": pooled.within_one_fraction,
                },
            }

        models = self._model_deltas()
        if models:
            result["models"] = models
        return result

    def _model_deltas(self) -> list[dict[str, Any]]:
        """Manual vs automatic Rel/Comp_B/F1_B per model, over judged questions."""
        judgements = self.judgements()
        if not judgements:
            return []
        merged = self.merged()
        grades_all: dict[str, dict[str, int]] = {}
        for (qid, fact_id), rating in merged.items():
            grades_all.setdefault(qid, {})[fact_id] = rating.tr
        by_model: dict[str, dict[str, list[dict]]] = {}
        for row in judgements:
            by_model.setdefault(row["model"], {}).setdefault(row["question"], []).append(row)

        expl_by_key = {
            (expl.model_name, expl.question_id): expl for expl in self.workspace.explanations
        }
        results = []
        for model_name in sorted(by_model):
            judged = by_model[model_name]
            expls = [expl_by_key[(model_name, qid)] for qid in sorted(judged)]
            questions = [self.workspace.questions[qid] for qid in sorted(judged)]
            auto = evaluate_explanations(expls, questions, merged)

            manual_rel: list[float] = []
            manual_comp: list[float] = []
            manual_f1: list[float] = []
            for qid in sorted(judged):
                expl = expl_by_key[(model_name, qid)]
                grades = grades_all.get(qid, {})
                per_rater_rel = []
                per_rater_comp = []
                per_rater_f1 = []
                for row in judged[qid]:
                    rel = relevance(expl, grades, row["fact_relevance"])
                    comp = float(row["complete"])
                    per_rater_rel.append(rel)
                    per_rater_comp.append(comp)
                    per_rater_f1.append(f1_ex(rel, comp))
                manual_rel.append(sum(per_rater_rel) / len(per_rater_rel))
                manual_comp.append(sum(per_rater_comp) / len(per_rater_comp))
                manual_f1.append(sum(per_rater_f1) / len(per_rater_f1))
            n = len(manual_rel)
            manual = {
                "relevance": sum(manual_rel) / n,
                "comp_b": sum(manual_comp) / n,
                "f1_b": sum(manual_f1) / n,
            }
            automatic = {
                "relevance": auto.relevance,
                "comp_b": auto.comp_b,
                "f1_b": auto.f1_b,
            }
            results.append(
                {
                    "model": model_name,
                    "questions_judged": n,
                    "automatic": automatic,
                    "manual": manual,
                    "delta": {
                        key: manual[key] - automatic[key] for key in ("relevance", "comp_b", "f1_b")
                    },
                }
            )
        return results


# ---------- HTTP layer ----------


class SubmitBody(BaseModel):
    task: str
    payload: dict[str, Any]


def create_app(service: AnnotationService, ui_dir: str | Path = "") -> FastAPI:
    app = FastAPI(title="explbench annotation service")

    def authed_rater(
        rater: str = Query(...),
        x_rater_token: str | None = Header(default=None),
        token: str | None = Query(default=None),
    ) -> str:
        supplied = x_rater_token or token
        expected = service.raters.get(rater)
        if expected is None:
            raise HTTPException(status_code=403, detail=f"unknown rater {rater!r}")
        if supplied != expected:
            raise HTTPException(status_code=403, detail="bad or missing rater token")
        return rater

    @app.get("/api/task")
    def get_task(rater: str = Depends(authed_rater)):
        task = service.next_task(rater)
        if task is None:
            return {"task": None}
        return service.task_payload(task, rater)

    @app.post("/api/submit")
    def post_submit(body: SubmitBody, rater: str = Depends(authed_rater)):
        try:
            seq = service.submit(rater, body.task, body.payload)
        except KeyError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        return {"ok": True, "seq": seq}

    @app.get("/api/stats")
    def get_stats():
        return service.stats()

    @app.get("/api/export/ratings", response_class=PlainTextResponse)
    def export_ratings():
        lines = []
        for rec in service.effective_records():
            lines.append(
                json.dumps(
                    {
                        "question": rec.question_id,
                        "fact": rec.fact_id,
                        "rater": rec.rater_id,
                        "rating": rec.rating,
                        "ts": rec.timestamp,
                    },
                    ensure_ascii=False,
                )
            )
        return "\n".join(lines) + ("\n" if lines else "")

    @app.get("/api/export/judgements", response_class=PlainTextResponse)
    def export_judgements():
        lines = [json.dumps(row, ensure_ascii=False) for row in service.judgements()]
        return "\n".join(lines) + ("\n" if lines else "")

    @app.post("/api/snapshot")
    def post_snapshot():
        service.save_snapshot()
        return {"ok": True, "last_seq": service._last_seq}

    if ui_dir and Path(ui_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
