"""Report rendering: TSV and pretty-text emission, stamped and deterministic.

Every report starts with two comment lines carrying the artifact version and
the effective config hash, so identical inputs and configuration produce
byte-identical files.
"""

from __future__ import annotations

import os
from pathlib import Path
from typing import Iterable, Sequence

from . import __version__
from .expl_eval import ExplReport
from .rank_eval import QuestionRank, RankReport
from .ratings import AgreementReport, DistributionTable, RATING_LABELS


def stamp(config_hash: str) -> str:
    return f"# explbench {__version__}\n# config {config_hash}\n"


def write_text(path: str | Path, text: str) -> Path:
    """Atomic write: a report either exists complete or not at all."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)
    return path


def _fmt(value: float | None) -> str:
    return "" if value is None else f"{value:.6f}"


def distribution_tsv(table: DistributionTable, config_hash: str) -> str:
    lines = [stamp(config_hash).rstrip("\n")]
    lines.append("row\t" + "\t".join(f"tr{tr}" for tr in range(4)))
    lines.append("gold\t" + "\t".join(str(n) for n in table.gold))
    lines.append("not_gold\t" + "\t".join(str(n) for n in table.not_gold))
    lines.append(
        "increase_pct\t"
        + "\t".join(
            "" if table.increase_percent(tr) is None else str(table.increase_percent(tr))
            for tr in range(4)
        )
    )
    return "\n".join(lines) + "\n"


def distribution_text(table: DistributionTable) -> str:
    header = f"{'':>10}" + "".join(f"{RATING_LABELS[tr]:>14}" for tr in range(4))
    gold = f"{'gold':>10}" + "".join(f"{table.gold[tr]:>14}" for tr in range(4))
    not_gold = f"{'not gold':>10}" + "".join(f"{table.not_gold[tr]:>14}" for tr in range(4))
    inc_cells = []
    for tr in range(4):
        pct = table.increase_percent(tr)
        inc_cells.append(f"{'--' if pct is None else str(pct) + '%':>14}")
    increase = f"{'increase':>10}" + "".join(inc_cells)
    return "\n".join([header, gold, not_gold, increase, f"total {table.total}"]) + "\n"


def agreement_tsv(reports: Sequence[AgreementReport], config_hash: str) -> str:
    lines = [stamp(config_hash).rstrip("\n")]
    lines.append("rater_a\trater_b\tn\tkappa\tkappa_defined\tpercent_agreement\twithin_one\tweights")
    for report in reports:
        kappa = _fmt(report.cohen_kappa) if report.kappa_defined else "undefined"
        lines.append(
            "\t".join(
                [
                    report.rater_a,
                    report.rater_b,
                    str(report.n_items),
                    kappa,
                    "1" if report.kappa_defined else "0",
                    _fmt(report.percent_agreement),
                    _fmt(report.within_one_fraction),
                    report.weights,
                ]
            )
        )
    return "\n".join(lines) + "\n"


def agreement_text(report: AgreementReport) -> str:
    kappa = f"{report.cohen_kappa:.3f}" if report.kappa_defined else "undefined"
    lines = [
        f"raters {report.rater_a} vs {report.rater_b} over {report.n_items} items",
        f"  kappa            {kappa}",
        f"  percent agree    {report.percent_agreement:.3f}",
        f"  within-one frac  {report.within_one_fraction:.3f}",
        "  confusion (rows = first rater):",
    ]
    for row in report.per_pair_counts:
        lines.append("    " + " ".join(f"{n:>5}" for n in row))
    return "\n".join(lines) + "\n"


def rank_report_tsv(
    report: RankReport, config_hash: str, metrics: tuple[str, ...] = ("map", "ndcg")
) -> str:
    lines = [stamp(config_hash).rstrip("\n")]
    lines.append(f"# model {report.model_name}")
    lines.append(f"# setting {report.setting}")
    columns = [m for m in ("map", "ndcg") if m in metrics]
    lines.append("question\t" + "\t".join("ap" if m == "map" else "ndcg" for m in columns))

    def cells(ap: float | None, ndcg_value: float | None) -> str:
        values = {"map": _fmt(ap), "ndcg": _fmt(ndcg_value)}
        return "\t".join(values[m] for m in columns)

    for qid in sorted(report.per_question):
        qr = report.per_question[qid]
        lines.append(f"{qid}\t" + cells(qr.ap, qr.ndcg))
    lines.append("summary\t" + cells(report.map_score, report.ndcg_score))
    if "map" in metrics:
        lines.append(f"# evaluated map={report.n_map} skipped={report.skipped_map}")
    if "ndcg" in metrics:
        lines.append(f"# evaluated ndcg={report.n_ndcg} skipped={report.skipped_ndcg}")
    return "\n".join(lines) + "\n"


def read_rank_report(path: str | Path) -> RankReport:
    """Parse a rank_report_tsv file back (used for baseline deltas)."""
    report = RankReport(model_name="", setting="")
    columns: list[str] = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.startswith("# model "):
            report.model_name = line[len("# model ") :]
            continue
        if line.startswith("# setting "):
            report.setting = line[len("# setting ") :]
            continue
        if line.startswith("question\t"):
            columns = line.split("\t")[1:]
            continue
        if line.startswith("#") or not line.strip():
            continue
        parts = line.split("\t")
        qid = parts[0]
        values = {name: (float(text) if text else None) for name, text in zip(columns, parts[1:])}
        ap = values.get("ap")
        ndcg_value = values.get("ndcg")
        if qid == "summary":
            report.map_score = ap
            report.ndcg_score = ndcg_value
        else:
            report.per_question[qid] = QuestionRank(ap=ap, ndcg=ndcg_value)
    return report


def rank_summary_text(report: RankReport, baseline: RankReport | None = None) -> str:
    lines = [
        f"model {report.model_name} under setting {report.setting}",
        f"  MAP   {_fmt(report.map_score) or 'n/a'}  over {report.n_map} questions"
        + (f" ({report.skipped_map} skipped)" if report.skipped_map else ""),
        f"  NDCG  {_fmt(report.ndcg_score) or 'n/a'}  over {report.n_ndcg} questions"
        + (f" ({report.skipped_ndcg} skipped)" if report.skipped_ndcg else ""),
    ]
    if baseline is not None:
        from .rank_eval import delta_report

        delta = delta_report(report, baseline)
        lines.append(
            f"  delta vs baseline  MAP {_fmt(delta.map_delta) or 'n/a'}"
            f"  NDCG {_fmt(delta.ndcg_delta) or 'n/a'}"
        )
    return "\n".join(lines) + "\n"


def expl_report_tsv(report: ExplReport, config_hash: str) -> str:
    lines = [stamp(config_hash).rstrip("\n")]
    lines.append(f"# model {report.model_name}")
    lines.append(f"# aggregation {report.aggregation}")
    lines.append("question\trelevance\tcompleteness\tcomp_b\tvacuous\tf1\tf1_b\tlength")
    for qid in sorted(report.per_question):
        row = report.per_question[qid]
        lines.append(
            "\t".join(
                [
                    qid,
                    _fmt(row.relevance),
                    _fmt(row.completeness),
                    str(row.comp_b),
                    "1" if row.comp_b_vacuous else "0",
                    _fmt(row.f1),
                    _fmt(row.f1_b),
                    str(row.length),
                ]
            )
        )
    lines.append(
        "\t".join(
            [
                "summary",
                _fmt(report.relevance),
                _fmt(report.completeness),
                _fmt(report.comp_b),
                str(report.vacuous_count),
                _fmt(report.f1),
                _fmt(report.f1_b),
                _fmt(report.mean_length),
            ]
        )
    )
    lines.append(f"# questions {report.n_questions}")
    return "\n".join(lines) + "\n"


def expl_summary_text(report: ExplReport) -> str:
    return (
        f"model {report.model_name} ({report.aggregation}, {report.n_questions} questions)\n"
        f"  relevance     {report.relevance:.3f}\n"
        f"  completeness  {report.completeness:.3f}\n"
        f"  comp_b        {report.comp_b:.3f}  (vacuous on {report.vacuous_count})\n"
        f"  f1            {report.f1:.3f}\n"
        f"  f1_b          {report.f1_b:.3f}\n"
        f"  mean length   {report.mean_length:.2f}\n"
    )


def combined_report(sections: Iterable[tuple[str, str]], config_hash: str) -> str:
    parts = [stamp(config_hash)]
    for title, body in sections:
        parts.append(f"== {title} ==\n{body}")
    return "\n".join(parts)
