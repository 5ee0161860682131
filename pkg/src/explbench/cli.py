"""Single command-line entry point wiring all pipelines.

Subcommands: ingest, shortlist, merge, agreement, rank-eval, align, schema
(solve/score/explain), expl-eval, ensemble, serve, report, and pipeline
(the whole chain end to end).  Configuration comes from a key=value file
(``--config`` or ``$EXPLBENCH_CONFIG``) overridden by flags; outputs land in
the configured output directory, each stamped with the artifact version and
the config hash so reruns are byte-identical.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

from . import corpus, expl_eval, ratings, rank_eval, reports, schema_engine, shortlist, text_align
from .config import ConfigError, RunConfig, load_config
from .rank_eval import GoldSetting


def _effective_workers(config: RunConfig, n_items: int) -> int:
    if config.workers > 0:
        return config.workers
    # Process start-up outweighs the work below a few hundred questions.
    if n_items < 200:
        return 1
    return os.cpu_count() or 1


def _load_corpus(config: RunConfig):
    kb = corpus.parse_knowledge_base(config.kb_dir)
    questions = corpus.parse_questions(config.questions, kb)
    return kb, questions


def _load_merged(config: RunConfig):
    if not config.ratings:
        return {}
    return ratings.merge_ratings(ratings.load_ratings(config.ratings))


def _out(config: RunConfig, name: str) -> Path:
    return Path(config.out_dir) / name


def cmd_ingest(config: RunConfig) -> None:
    config.validate(require_paths=("kb_dir", "questions"))
    kb, questions = _load_corpus(config)
    out_dir = Path(config.out_dir)
    corpus.write_knowledge_base(kb, out_dir / "kb")
    corpus.write_questions(questions, out_dir / "questions.jsonl")
    lines = [reports.stamp(config.hash()).rstrip("\n")]
    lines.append("facts\t" + str(len(kb)))
    lines.append("tables\t" + str(len(kb.tables)))
    lines.append("synonymy_facts\t" + str(sum(1 for f in kb.facts.values() if f.is_synonymy)))
    lines.append("questions\t" + str(len(questions)))
    for split in corpus.SPLITS:
        lines.append(f"questions_{split}\t" + str(sum(1 for q in questions if q.split == split)))
    reports.write_text(out_dir / "ingest.tsv", "\n".join(lines) + "\n")
    print(f"ingested {len(kb)} facts, {len(questions)} questions -> {out_dir}")


def cmd_shortlist(config: RunConfig) -> None:
    config.validate(require_paths=("kb_dir", "questions", "scores"))
    kb, questions = _load_corpus(config)
    score_files = [corpus.parse_score_file(path) for path in config.scores]
    shortlists = [
        shortlist.build_shortlist(q, score_files, config.shortlist_k, kb) for q in questions
    ]
    out = _out(config, "shortlists.jsonl")
    out.parent.mkdir(parents=True, exist_ok=True)
    shortlist.save_shortlists(shortlists, out)
    mean_size = sum(len(sl.fact_ids) for sl in shortlists) / len(shortlists)
    print(f"built {len(shortlists)} shortlists (mean size {mean_size:.1f}) -> {out}")


def cmd_merge(config: RunConfig) -> None:
    config.validate(require_paths=("kb_dir", "questions", "ratings"))
    kb, questions = _load_corpus(config)
    records = ratings.load_ratings(config.ratings)
    merged = ratings.merge_ratings(records)
    ratings.save_merged(merged, _make_parent(_out(config, "merged.jsonl")))
    table = ratings.rating_distribution(merged, questions)
    reports.write_text(
        _out(config, "distribution.tsv"), reports.distribution_tsv(table, config.hash())
    )
    reports.write_text(_out(config, "distribution.txt"), reports.distribution_text(table))
    print(f"merged {len(records)} records into {len(merged)} grades")


def cmd_agreement(config: RunConfig, rater_a: str | None, rater_b: str | None, weights: str) -> None:
    config.validate(require_paths=("ratings",))
    records = ratings.load_ratings(config.ratings)
    if rater_a and rater_b:
        pair_list = [(rater_a, rater_b)]
    else:
        pair_list = ratings.rater_pairs(records)
    pair_reports = [ratings.agreement(records, a, b, weights) for a, b in pair_list]
    if len(pair_list) > 1:
        pair_reports.append(ratings.pooled_agreement(records, weights))
    reports.write_text(
        _out(config, "agreement.tsv"), reports.agreement_tsv(pair_reports, config.hash())
    )
    pretty = "".join(reports.agreement_text(report) for report in pair_reports)
    reports.write_text(_out(config, "agreement.txt"), pretty)
    print(pretty, end="")


def cmd_rank_eval(config: RunConfig, baseline_path: str | None, metric: str) -> None:
    config.validate(require_paths=("kb_dir", "questions", "scores"))
    metrics = tuple(m.strip() for m in metric.split(",") if m.strip())
    unknown = set(metrics) - {"map", "ndcg"}
    if unknown:
        raise ConfigError(f"unknown metrics: {', '.join(sorted(unknown))}")
    kb, questions = _load_corpus(config)
    merged = _load_merged(config)
    setting = GoldSetting.parse(config.gold_setting)
    cutoff = config.ndcg_cutoff or None
    baseline = reports.read_rank_report(baseline_path) if baseline_path else None
    for path in config.scores:
        score_file = corpus.parse_score_file(path)
        report = rank_eval.evaluate_ranking(
            score_file,
            questions,
            merged,
            setting,
            cutoff=cutoff,
            linear_gain=config.linear_gain,
            workers=_effective_workers(config, len(questions)),
        )
        out = _out(config, f"rank_{score_file.model_name}_{setting.value}.tsv")
        reports.write_text(out, reports.rank_report_tsv(report, config.hash(), metrics))
        print(reports.rank_summary_text(report, baseline), end="")


def cmd_align(config: RunConfig) -> None:
    config.validate(require_paths=("kb_dir", "generated"))
    kb = corpus.parse_knowledge_base(config.kb_dir)
    generations = text_align.load_generated(config.generated, config.separator)
    explanations = []
    audits = []
    for gen in generations:
        alignments = text_align.align(gen, kb, config.rouge_threshold)
        audits.extend((gen.question_id, a) for a in alignments)
        explanation = text_align.alignments_to_explanation(gen.question_id, alignments, "aligned")
        if explanation is not None:
            explanations.append(explanation)
    expl_eval.save_explanations(explanations, _make_parent(_out(config, "aligned.jsonl")))
    audit_path = _out(config, "align_audit.tsv")
    text_align.save_audit(audits, audit_path)
    print(f"aligned {len(audits)} strings; {len(explanations)} explanations kept")


def cmd_schema(config: RunConfig, action: str, question_id: str | None) -> None:
    config.validate(require_paths=("kb_dir",))
    kb = corpus.parse_knowledge_base(config.kb_dir)
    cache_path = _out(config, "solutions.cache")
    if action == "solve":
        config.validate(require_paths=("schemas",))
        schemas = schema_engine.parse_schema_file(config.schemas)
        cache_path.parent.mkdir(parents=True, exist_ok=True)
        cache = schema_engine.cache_solutions(schemas, kb, cache_path)
        total = sum(len(v) for v in cache.entries.values())
        print(f"solved {len(schemas)} schemas: {total} solutions -> {cache_path}")
        return
    cache = schema_engine.load_cache(cache_path, kb)
    config.validate(require_paths=("scores",))
    score_file = corpus.parse_score_file(config.scores[0])
    if action == "score":
        if not question_id:
            raise ConfigError("schema score needs --question")
        scores = score_file.scores(question_id)
        lines = [reports.stamp(config.hash()).rstrip("\n"), "schema\tbest_score\tbindings"]
        for name in sorted(cache.entries):
            best = schema_engine.best_scored_solution(
                cache.entries[name], scores, config.clip_threshold
            )
            if best is not None:
                lines.append(f"{name}\t{best.score:.6f}\t{','.join(best.bindings)}")
        out = _out(config, f"schema_scores_{question_id}.tsv")
        reports.write_text(out, "\n".join(lines) + "\n")
        print(f"scored {len(cache.entries)} schemas for {question_id} -> {out}")
        return
    if action == "explain":
        explanations = []
        for qid in sorted(score_file.entries):
            explanation = schema_engine.build_schema_explanation(
                qid,
                cache,
                score_file.scores(qid),
                n_schemas=config.n_schemas,
                filter_threshold=config.filter_threshold,
                clip_threshold=config.clip_threshold,
            )
            if explanation is not None:
                explanations.append(explanation)
        out = _make_parent(_out(config, "schema_explanations.jsonl"))
        expl_eval.save_explanations(explanations, out)
        print(f"schema explanations for {len(explanations)} questions -> {out}")
        return
    raise ConfigError(f"unknown schema action {action!r}")


def cmd_expl_eval(config: RunConfig) -> None:
    config.validate(require_paths=("kb_dir", "questions", "explanations"))
    kb, questions = _load_corpus(config)
    merged = _load_merged(config)
    overrides = expl_eval.load_overrides(config.overrides) if config.overrides else {}
    for path in config.explanations:
        explanations = expl_eval.load_explanations(path)
        report = expl_eval.evaluate_explanations(
            explanations, questions, merged, overrides, aggregation=config.aggregation
        )
        out = _out(config, f"expl_{Path(path).stem}.tsv")
        reports.write_text(out, reports.expl_report_tsv(report, config.hash()))
        print(reports.expl_summary_text(report), end="")


def cmd_ensemble(config: RunConfig) -> None:
    config.validate(require_paths=("explanations",))
    by_question: dict[str, list[expl_eval.Explanation]] = {}
    for path in config.explanations:
        for explanation in expl_eval.load_explanations(path):
            by_question.setdefault(explanation.question_id, []).append(explanation)
    combined = [expl_eval.ensemble(group) for _, group in sorted(by_question.items())]
    out = _make_parent(_out(config, "ensemble.jsonl"))
    expl_eval.save_explanations(combined, out)
    print(f"ensembled {len(config.explanations)} inputs over {len(combined)} questions -> {out}")


def cmd_topk(config: RunConfig) -> None:
    config.validate(require_paths=("scores",))
    score_file = corpus.parse_score_file(config.scores[0])
    explanations = [
        expl_eval.topk_explanation(score_file, qid, config.top_k)
        for qid in sorted(score_file.entries)
    ]
    out = _make_parent(_out(config, f"topk_{score_file.model_name}.jsonl"))
    expl_eval.save_explanations(explanations, out)
    print(f"top-{config.top_k} explanations for {len(explanations)} questions -> {out}")


def cmd_serve(config: RunConfig) -> None:
    import uvicorn

    from .service import AnnotationService, Workspace, create_app

    config.validate(require_paths=("kb_dir", "questions"))
    kb, questions = _load_corpus(config)
    workspace = Workspace(
        kb=kb,
        questions={q.id: q for q in questions},
        shortlists=shortlist.load_shortlists(config.shortlists) if config.shortlists else {},
        explanations=[
            explanation
            for path in config.explanations
            for explanation in expl_eval.load_explanations(path)
        ],
        seed_records=ratings.load_ratings(config.ratings) if config.ratings else [],
    )
    service = AnnotationService(
        workspace,
        raters=config.rater_tokens(),
        coverage=config.coverage,
        state_dir=config.state_dir,
    )
    app = create_app(service, ui_dir=config.ui_dir)
    uvicorn.run(app, host=config.host, port=config.port, log_level="warning")


def cmd_report(config: RunConfig) -> None:
    out_dir = Path(config.out_dir)
    sections = []
    for path in sorted(out_dir.glob("*.tsv")):
        sections.append((path.name, path.read_text(encoding="utf-8")))
    text = reports.combined_report(sections, config.hash())
    reports.write_text(out_dir / "report.txt", text)
    print(f"combined {len(sections)} reports -> {out_dir / 'report.txt'}")


def cmd_pipeline(config: RunConfig) -> None:
    """ingest -> shortlist -> merge -> agreement -> rank-eval -> align ->
    schema solve/explain -> top-k -> expl-eval -> ensemble -> report."""
    cmd_ingest(config)
    cmd_shortlist(config)
    cmd_merge(config)
    cmd_agreement(config, None, None, "none")
    cmd_rank_eval(config, None, "map,ndcg")
    cmd_align(config)
    cmd_schema(config, "solve", None)
    cmd_schema(config, "explain", None)
    cmd_topk(config)
    score_stem = Path(config.scores[0]).stem
    eval_config = _replace(
        config,
        explanations=(
            str(_out(config, "aligned.jsonl")),
            str(_out(config, "schema_explanations.jsonl")),
            str(_out(config, f"topk_{score_stem}.jsonl")),
        ),
    )
    cmd_expl_eval(eval_config)
    cmd_ensemble(eval_config)
    ensemble_config = _replace(config, explanations=(str(_out(config, "ensemble.jsonl")),))
    cmd_expl_eval(ensemble_config)
    cmd_report(config)


def _replace(config: RunConfig, **kwargs) -> RunConfig:
    return dataclasses.replace(config, **kwargs)


def _make_parent(path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value config file (or $EXPLBENCH_CONFIG)")
    common.add_argument("--out-dir", dest="out_dir")
    common.add_argument("--kb", dest="kb_dir")
    common.add_argument("--questions")
    common.add_argument("--scores", help="comma-separated score TSV paths")
    common.add_argument("--ratings")
    common.add_argument("--workers", type=int)

    parser = argparse.ArgumentParser(prog="explbench", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("ingest", parents=[common])
    p = sub.add_parser("shortlist", parents=[common])
    p.add_argument("--k", dest="shortlist_k", type=int)

    sub.add_parser("merge", parents=[common])

    p = sub.add_parser("agreement", parents=[common])
    p.add_argument("--rater-a")
    p.add_argument("--rater-b")
    p.add_argument("--weights", choices=["none", "linear"], default="none")

    p = sub.add_parser("rank-eval", parents=[common])
    p.add_argument("--setting", dest="gold_setting", choices=["wt2", "tr1", "tr2"])
    p.add_argument("--metric", default="map,ndcg", help="comma list of map,ndcg")
    p.add_argument("--cutoff", dest="ndcg_cutoff", type=int)
    p.add_argument("--linear-gain", dest="linear_gain", action="store_const", const=True)
    p.add_argument("--baseline", help="previous rank report TSV for delta scores")

    p = sub.add_parser("align", parents=[common])
    p.add_argument("--generated")
    p.add_argument("--threshold", dest="rouge_threshold", type=float)
    p.add_argument("--separator")

    p = sub.add_parser("schema", parents=[common])
    p.add_argument("action", choices=["solve", "score", "explain"])
    p.add_argument("--schemas")
    p.add_argument("--question", help="question id (schema score)")
    p.add_argument("--n-schemas", dest="n_schemas", type=int)
    p.add_argument("--filter", dest="filter_threshold", type=float)
    p.add_argument("--clip", dest="clip_threshold", type=float)

    p = sub.add_parser("expl-eval", parents=[common])
    p.add_argument("--explanations", help="comma-separated explanation JSONL paths")
    p.add_argument("--overrides")
    p.add_argument("--agg", dest="aggregation", choices=["per-question", "corpus"])

    p = sub.add_parser("ensemble", parents=[common])
    p.add_argument("--explanations", help="comma-separated explanation JSONL paths")

    p = sub.add_parser("topk", parents=[common])
    p.add_argument("--k", dest="top_k", type=int)

    p = sub.add_parser("serve", parents=[common])
    p.add_argument("--host")
    p.add_argument("--port", type=int)
    p.add_argument("--state-dir", dest="state_dir")
    p.add_argument("--ui-dir", dest="ui_dir")
    p.add_argument("--raters", help="name:token,name:token")
    p.add_argument("--coverage", type=int)
    p.add_argument("--shortlists")
    p.add_argument("--explanations", help="comma-separated explanation JSONL paths")

    sub.add_parser("report", parents=[common])

    p = sub.add_parser("pipeline", parents=[common])
    p.add_argument("--generated")
    p.add_argument("--schemas")
    p.add_argument("--setting", dest="gold_setting", choices=["wt2", "tr1", "tr2"])

    return parser


_CONFIG_KEYS = {f.name for f in dataclasses.fields(RunConfig)}
_LIST_KEYS = {"scores", "explanations"}


def _flag_values(args: argparse.Namespace) -> dict[str, object]:
    values: dict[str, object] = {}
    for key, value in vars(args).items():
        if key not in _CONFIG_KEYS or value is None:
            continue
        if key in _LIST_KEYS and isinstance(value, str):
            value = tuple(part.strip() for part in value.split(",") if part.strip())
        values[key] = value
    return values


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config, _flag_values(args))
        config.validate()
        if args.command == "ingest":
            cmd_ingest(config)
        elif args.command == "shortlist":
            cmd_shortlist(config)
        elif args.command == "merge":
            cmd_merge(config)
        elif args.command == "agreement":
            cmd_agreement(config, args.rater_a, args.rater_b, args.weights)
        elif args.command == "rank-eval":
            cmd_rank_eval(config, args.baseline, args.metric)
        elif args.command == "align":
            cmd_align(config)
        elif args.command == "schema":
            cmd_schema(config, args.action, args.question)
        elif args.command == "expl-eval":
            cmd_expl_eval(config)
        elif args.command == "ensemble":
            cmd_ensemble(config)
        elif args.command == "topk":
            cmd_topk(config)
        elif args.command == "serve":
            cmd_serve(config)
        elif args.command == "report":
            cmd_report(config)
        elif args.command == "pipeline":
            cmd_pipeline(config)
        else:  # pragma: no cover
            raise ConfigError(f"unknown command {args.command!r}")
    except (
        ConfigError,
        corpus.ParseError,
        schema_engine.StaleCacheError,
        ValueError,
        KeyError,
        OSError,
    ) as exc:
        print(
            json.dumps({"error": type(exc).__name__, "message": str(exc)}),
            file=sys.stderr,
        )
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
