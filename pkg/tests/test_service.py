from __future__ import annotations

import json

import pytest
from fastapi.testclient import TestClient

from explbench.corpus import Fact, KnowledgeBase, Question, ScoreFile
from explbench.expl_eval import ExplFact, Explanation
from explbench.ratings import RatingRecord
from explbench.service import AnnotationService, Workspace, create_app
from explbench.shortlist import Shortlist, build_shortlist

RATERS = {"alice": "tok-a", "bob": "tok-b"}


def make_workspace(kb, questions, with_explanations=True, seed_records=None):
    score = ScoreFile(
        "ra",
        {
            q.id: [(fid, 1.0 - i * 0.05) for i, fid in enumerate(sorted(kb.facts))]
            for q in questions
        },
    )
    shortlists = {q.id: build_shortlist(q, [score], 4, kb) for q in questions}
    explanations = []
    if with_explanations:
        for q in questions:
            explanations.append(
                Explanation(
                    question_id=q.id,
                    facts=tuple(ExplFact(fact_id=f) for f in q.gold_fact_ids) + (ExplFact("P4"),),
                    model_name="m1",
                )
            )
    return Workspace(
        kb=kb,
        questions={q.id: q for q in questions},
        shortlists=shortlists,
        explanations=explanations,
        seed_records=seed_records or [],
    )


def make_service(kb, questions, tmp_path, **kwargs):
    workspace = make_workspace(kb, questions, **kwargs)
    return AnnotationService(workspace, raters=RATERS, coverage=2, state_dir=tmp_path / "state")


def ratings_for(task):
    return {"ratings": {fid: (3 if i == 0 else 1) for i, fid in enumerate(task.fact_ids)}}


class TestTasks:
    def test_task_inventory(self, kb, questions, tmp_path):
        service = make_service(kb, questions, tmp_path)
        kinds = [t.kind for t in service.tasks.values()]
        assert kinds.count("relevance") == 2
        assert kinds.count("completeness") == 2

    def test_relevance_tasks_keep_shortlist_order(self, kb, questions, tmp_path):
        service = make_service(kb, questions, tmp_path)
        task = service.tasks["rel:Q1"]
        assert task.fact_ids == service.workspace.shortlists["Q1"].fact_ids

    def test_next_task_deterministic_least_annotated(self, kb, questions, tmp_path):
        service = make_service(kb, questions, tmp_path)
        first = service.next_task("alice")
        assert first.task_id == sorted(service.tasks)[0]
        service.submit("alice", first.task_id, self_payload(service, first))
        second = service.next_task("alice")
        assert second.task_id != first.task_id
        # bob is routed to a task with no submissions yet (least annotated)
        assert service.next_task("bob").task_id == sorted(service.tasks)[1]

    def test_coverage_two_serves_every_task_to_both_raters(self, kb, questions, tmp_path):
        service = make_service(kb, questions, tmp_path)
        done = {"alice": set(), "bob": set()}
        for rater in ("alice", "bob"):
            while (task := service.next_task(rater)) is not None:
                service.submit(rater, task.task_id, self_payload(service, task))
                done[rater].add(task.task_id)
        assert done["alice"] == set(service.tasks)
        assert done["bob"] == set(service.tasks)

    def test_exhaustion_returns_none(self, kb, questions, tmp_path):
        service = make_service(kb, questions, tmp_path, with_explanations=False)
        while (task := service.next_task("alice")) is not None:
            service.submit("alice", task.task_id, ratings_for(task))
        assert service.next_task("alice") is None
        # bob's queue is still full
        assert service.next_task("bob") is not None

    def test_unknown_rater(self, kb, questions, tmp_path):
        service = make_service(kb, questions, tmp_path)
        with pytest.raises(KeyError):
            service.next_task("mallory")


def self_payload(service, task):
    if task.kind == "relevance":
        return ratings_for(task)
    return {
        "complete": 1,
        "fact_relevance": {fid: 1 for fid in service.unrated_facts(task)},
    }


class TestSubmit:
    def test_ratings_appear_in_export(self, kb, questions, tmp_path):
        service = make_service(kb, questions, tmp_path, with_explanations=False)
        task = service.tasks["rel:Q1"]
        service.submit("alice", task.task_id, ratings_for(task))
        records = service.effective_records()
        assert len(records) == len(task.fact_ids)
        assert all(r.rater_id == "alice" for r in records)

    def test_out_of_range_rating(self, kb, questions, tmp_path):
        service = make_service(kb, questions, tmp_path)
        task = service.tasks["rel:Q1"]
        payload = ratings_for(task)
        payload["ratings"][task.fact_ids[0]] = 5
        with pytest.raises(ValueError, match="0..3"):
            service.submit("alice", task.task_id, payload)

    def test_missing_fact_rating(self, kb, questions, tmp_path):
        service = make_service(kb, questions, tmp_path)
        task = service.tasks["rel:Q1"]
        payload = ratings_for(task)
        del payload["ratings"][task.fact_ids[0]]
        with pytest.raises(ValueError, match="missing"):
            service.submit("alice", task.task_id, payload)

    def test_unknown_task(self, kb, questions, tmp_path):
        service = make_service(kb, questions, tmp_path)
        with pytest.raises(KeyError, match="task"):
            service.submit("alice", "rel:QX", {"ratings": {}})

    def test_completeness_requires_unrated_judgements(self, kb, questions, tmp_path):
        seed = [RatingRecord("Q1", "K1", "carol", 3), RatingRecord("Q1", "K2", "carol", 2)]
        service = make_service(kb, questions, tmp_path, seed_records=seed)
        task = service.tasks["comp:m1:Q1"]
        assert service.unrated_facts(task) == ("P4",)
        with pytest.raises(ValueError, match="P4"):
            service.submit("alice", task.task_id, {"complete": 1, "fact_relevance": {}})
        seq = service.submit(
            "alice", task.task_id, {"complete": 1, "fact_relevance": {"P4": 0}}
        )
        assert seq == 1

    def test_resubmission_supersedes_with_audit_trail(self, kb, questions, tmp_path):
        service = make_service(kb, questions, tmp_path, with_explanations=False)
        task = service.tasks["rel:Q1"]
        service.submit("alice", task.task_id, ratings_for(task))
        second = ratings_for(task)
        second["ratings"][task.fact_ids[0]] = 0
        service.submit("alice", task.task_id, second)
        records = {r.fact_id: r.rating for r in service.effective_records()}
        assert records[task.fact_ids[0]] == 0
        log_lines = (tmp_path / "state" / "events.jsonl").read_text().splitlines()
        assert len(log_lines) == 2  # full audit trail retained


class TestEventSourcing:
    def fill(self, service):
        for rater in ("alice", "bob"):
            while (task := service.next_task(rater)) is not None:
                service.submit(rater, task.task_id, self_payload(service, task))

    def test_replay_reproduces_stats(self, kb, questions, tmp_path):
        service = make_service(kb, questions, tmp_path)
        self.fill(service)
        before = service.stats()
        reopened = AnnotationService(
            make_workspace(kb, questions), raters=RATERS, coverage=2, state_dir=tmp_path / "state"
        )
        assert reopened.stats() == before

    def test_no_data_loss_after_restart(self, kb, questions, tmp_path):
        service = make_service(kb, questions, tmp_path)
        task = service.tasks["rel:Q1"]
        seq = service.submit("alice", task.task_id, ratings_for(task))
        reopened = AnnotationService(
            make_workspace(kb, questions), raters=RATERS, coverage=2, state_dir=tmp_path / "state"
        )
        assert reopened._last_seq == seq
        assert reopened.effective_records() == service.effective_records()

    def test_snapshot_plus_tail_equals_full_replay(self, kb, questions, tmp_path):
        service = make_service(kb, questions, tmp_path)
        task = service.tasks["rel:Q1"]
        service.submit("alice", task.task_id, ratings_for(task))
        service.save_snapshot()
        task2 = service.tasks["rel:Q2"]
        service.submit("alice", task2.task_id, ratings_for(task2))
        with_snapshot = AnnotationService(
            make_workspace(kb, questions), raters=RATERS, coverage=2, state_dir=tmp_path / "state"
        )
        (tmp_path / "state" / "snapshot.json").unlink()
        full_replay = AnnotationService(
            make_workspace(kb, questions), raters=RATERS, coverage=2, state_dir=tmp_path / "state"
        )
        assert with_snapshot.stats() == full_replay.stats()


class TestStats:
    def test_progress_only_before_any_co_rating(self, kb, questions, tmp_path):
        service = make_service(kb, questions, tmp_path)
        stats = service.stats()
        assert "agreement" not in stats
        assert stats["progress"]["tasks"] == 4
        assert stats["progress"]["submissions"] == 0

    def test_agreement_appears_after_co_rating(self, kb, questions, tmp_path):
        service = make_service(kb, questions, tmp_path, with_explanations=False)
        for rater in ("alice", "bob"):
            task = service.tasks["rel:Q1"]
            service.submit(rater, task.task_id, ratings_for(task))
        stats = service.stats()
        (pair,) = stats["agreement"]["pairs"]
        assert pair["rater_a"] == "alice" and pair["rater_b"] == "bob"
        assert pair["percent_agreement"] == 1.0

    def test_scripted_raters_hit_exact_percent_agreement(self, kb, tmp_path):
        # One relevance task over 100 facts; the two raters are scripted to
        # agree on exactly 61 of them.
        big_kb = KnowledgeBase()
        for i in range(100):
            big_kb.add_fact(
                Fact(id=f"f{i:03d}", table="T", cells=(("A", f"w{i}"),), text=f"w{i}")
            )
        fact_ids = tuple(sorted(big_kb.facts))
        question = Question(
            id="Q1",
            stem="s",
            choices=("a", "b"),
            correct_choice=0,
            gold_explanation=(("f000", "CENTRAL"),),
            split="dev",
        )
        workspace = Workspace(
            kb=big_kb,
            questions={"Q1": question},
            shortlists={
                "Q1": Shortlist(
                    question_id="Q1",
                    fact_ids=fact_ids,
                    provenance={f: frozenset({"gold"}) for f in fact_ids},
                )
            },
        )
        service = AnnotationService(
            workspace, raters=RATERS, coverage=2, state_dir=tmp_path / "state"
        )
        alice = {f: i % 4 for i, f in enumerate(fact_ids)}
        bob = dict(alice)
        disagree = list(fact_ids)[61:]
        for f in disagree:  # move each of the last 39 to a different grade
            bob[f] = (bob[f] + 1) % 4
        service.submit("alice", "rel:Q1", {"ratings": alice})
        service.submit("bob", "rel:Q1", {"ratings": bob})
        (pair,) = service.stats()["agreement"]["pairs"]
        assert pair["n"] == 100
        assert pair["percent_agreement"] == 0.61

    def test_manual_vs_automatic_delta(self, kb, questions, tmp_path):
        # Seed ratings make the gold facts highly rated; explanations carry
        # one unrated fact (P4).  Automatic relevance for Q1's m1 explanation
        # is 2/3; a manual binary judgement rescues P4 and marks it complete.
        seed = [
            RatingRecord("Q1", "K1", "carol", 3),
            RatingRecord("Q1", "K2", "carol", 2),
            RatingRecord("Q2", "K5", "carol", 3),
            RatingRecord("Q2", "P1", "carol", 2),
        ]
        service = make_service(kb, questions, tmp_path, seed_records=seed)
        service.submit("alice", "comp:m1:Q1", {"complete": 1, "fact_relevance": {"P4": 1}})
        stats = service.stats()
        (model,) = stats["models"]
        assert model["model"] == "m1"
        assert model["questions_judged"] == 1
        assert model["automatic"]["relevance"] == pytest.approx(2 / 3)
        assert model["manual"]["relevance"] == pytest.approx(1.0)
        assert model["manual"]["comp_b"] == 1.0
        # comp_b automatic: gold facts K1 (3) and K2 (2) both in explanation -> 1
        assert model["automatic"]["comp_b"] == 1.0
        for key in ("relevance", "comp_b", "f1_b"):
            assert model["delta"][key] == pytest.approx(
                model["manual"][key] - model["automatic"][key]
            )


class TestOverrideExport:
    def test_exported_judgements_dominate_rating_derived_relevance(
        self, kb, questions, tmp_path
    ):
        # carol's seed ratings make K1/K2 relevant and leave P4 unrated; the
        # judgement marks P4 relevant.  Feeding the judgement export into the
        # explanation metrics must flip P4 from 0 to 1.
        seed = [RatingRecord("Q1", "K1", "carol", 3), RatingRecord("Q1", "K2", "carol", 2)]
        service = make_service(kb, questions, tmp_path, seed_records=seed)
        service.submit("alice", "comp:m1:Q1", {"complete": 1, "fact_relevance": {"P4": 1}})

        from explbench.expl_eval import evaluate_explanations, load_overrides

        export_path = tmp_path / "judgements.jsonl"
        export_path.write_text(
            "\n".join(json.dumps(row) for row in service.judgements()) + "\n", encoding="utf-8"
        )
        overrides = load_overrides(export_path)
        assert overrides == {("Q1", "P4"): 1}

        expl = service.workspace.explanations[0]  # K1, K2, P4 for Q1
        merged = service.merged()
        without = evaluate_explanations([expl], questions, merged)
        with_overrides = evaluate_explanations([expl], questions, merged, overrides)
        assert without.per_question["Q1"].relevance == pytest.approx(2 / 3)
        assert with_overrides.per_question["Q1"].relevance == pytest.approx(1.0)


class TestHttp:
    def make_client(self, kb, questions, tmp_path):
        service = make_service(kb, questions, tmp_path)
        return service, TestClient(create_app(service))

    def test_auth_required(self, kb, questions, tmp_path):
        _, client = self.make_client(kb, questions, tmp_path)
        assert client.get("/api/task?rater=alice").status_code == 403
        assert (
            client.get("/api/task?rater=alice", headers={"X-Rater-Token": "wrong"}).status_code
            == 403
        )
        assert client.get("/api/task?rater=mallory&token=tok-a").status_code == 403

    def test_round_trip(self, kb, questions, tmp_path):
        service, client = self.make_client(kb, questions, tmp_path)
        headers = {"X-Rater-Token": "tok-a"}
        task = client.get("/api/task?rater=alice", headers=headers).json()
        assert task["kind"] == "completeness"  # comp:* sorts before rel:*
        payload = {
            "complete": 1,
            "fact_relevance": {
                item["fact"]: 1 for item in task["items"] if item["needs_judgement"]
            },
        }
        response = client.post(
            "/api/submit?rater=alice", json={"task": task["task"], "payload": payload}, headers=headers
        )
        assert response.status_code == 200
        stats = client.get("/api/stats").json()
        assert stats["progress"]["submissions"] == 1
        assert stats["models"][0]["manual"]["comp_b"] == 1.0

    def test_relevance_task_payload_shape(self, kb, questions, tmp_path):
        service, client = self.make_client(kb, questions, tmp_path)
        headers = {"X-Rater-Token": "tok-a"}
        for _ in range(len(service.tasks)):
            task = client.get("/api/task?rater=alice", headers=headers).json()
            if task["kind"] == "relevance":
                break
            payload = {
                "complete": 0,
                "fact_relevance": {
                    item["fact"]: 0 for item in task["items"] if item["needs_judgement"]
                },
            }
            client.post(
                "/api/submit?rater=alice", json={"task": task["task"], "payload": payload}, headers=headers
            )
        assert task["kind"] == "relevance"
        assert [s["value"] for s in task["scale"]] == [3, 2, 1, 0]
        assert all("rubric" in s for s in task["scale"])
        assert all(item["text"] for item in task["items"])

    def test_submit_validation_http_codes(self, kb, questions, tmp_path):
        service, client = self.make_client(kb, questions, tmp_path)
        headers = {"X-Rater-Token": "tok-a"}
        task = service.tasks["rel:Q1"]
        bad = {fid: 9 for fid in task.fact_ids}
        response = client.post(
            "/api/submit?rater=alice", json={"task": task.task_id, "payload": {"ratings": bad}}, headers=headers
        )
        assert response.status_code == 422
        response = client.post(
            "/api/submit?rater=alice", json={"task": "nope", "payload": {"ratings": {}}}, headers=headers
        )
        assert response.status_code == 404

    def test_export_endpoints(self, kb, questions, tmp_path):
        service, client = self.make_client(kb, questions, tmp_path)
        headers = {"X-Rater-Token": "tok-b"}
        task = service.tasks["rel:Q2"]
        client.post(
            "/api/submit?rater=bob",
            json={"task": task.task_id, "payload": ratings_for(task)},
            headers=headers,
        )
        ratings_lines = [
            json.loads(line)
            for line in client.get("/api/export/ratings").text.splitlines()
            if line
        ]
        assert len(ratings_lines) == len(task.fact_ids)
        assert all(line["rater"] == "bob" for line in ratings_lines)
        comp_task = service.tasks["comp:m1:Q1"]
        client.post(
            "/api/submit?rater=bob",
            json={
                "task": comp_task.task_id,
                "payload": {
                    "complete": 0,
                    "fact_relevance": {f: 0 for f in service.unrated_facts(comp_task)},
                },
            },
            headers=headers,
        )
        judgement_lines = [
            json.loads(line)
            for line in client.get("/api/export/judgements").text.splitlines()
            if line
        ]
        assert len(judgement_lines) == 1
        assert judgement_lines[0]["complete"] == 0
        assert judgement_lines[0]["model"] == "m1"
