"""Rendering of anomaly reports: CSV, per-stage score histograms (SVG),
and a plain-text summary for batch review."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .detector import AnomalyReport

_CSV_FIELDS = (
    "msg_id", "s_sem", "s_topo", "s_temp",
    "r_sem", "r_topo", "r_temp", "combined", "verdict", "attribution",
)

_STAGE_SCORES = {
    "semantic": "s_sem",
    "topological": "s_topo",
    "temporal": "s_temp",
}

TOP_N = 20
HIST_BINS = 30


def write_csv(reports: list[AnomalyReport], path: Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(_CSV_FIELDS)
        for rep in reports:
            row = rep.to_dict()
            row["attribution"] = ";".join(row["attribution"])
            row["verdict"] = int(row["verdict"])
            writer.writerow([row[k] for k in _CSV_FIELDS])


def score_histogram(scores: list[float], bins: int = HIST_BINS):
    """Bin counts + edges; counts always sum to len(scores)."""
    if not scores:
        return np.zeros(bins, dtype=int), np.linspace(0.0, 1.0, bins + 1)
    counts, edges = np.histogram(np.asarray(scores), bins=bins)
    return counts, edges


def _render_histogram(stage: str, scores: list[float], path: Path) -> np.ndarray:
    counts, edges = score_histogram(scores)
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.stairs(counts, edges, fill=True, color="#456990")
    ax.set_xlabel(f"{stage} score")
    ax.set_ylabel("messages")
    ax.set_title(f"{stage} score distribution (n={len(scores)})")
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
    return counts


def write_summary(reports: list[AnomalyReport], path: Path) -> None:
    lines = [f"{len(reports)} messages scored"]
    anomalous = [r for r in reports if r.verdict]
    lines.append(f"{len(anomalous)} anomalous, {len(reports) - len(anomalous)} normal")
    stage_counts: dict[str, int] = {}
    for rep in anomalous:
        if rep.attribution:
            top = rep.attribution[0]
            stage_counts[top] = stage_counts.get(top, 0) + 1
    for stage in sorted(stage_counts):
        lines.append(f"  attributed to {stage}: {stage_counts[stage]}")
    lines.append("")
    lines.append(f"top {TOP_N} anomalies by combined ratio:")
    ranked = sorted(reports, key=lambda r: -r.combined)[:TOP_N]
    for rep in ranked:
        attribution = ";".join(rep.attribution) if rep.attribution else "-"
        lines.append(
            f"  msg_id={rep.msg_id} combined={rep.combined:.4f} attribution={attribution}"
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def render_reports(reports: list[AnomalyReport], out_dir: str | Path) -> dict:
    """Write CSV + SVG histograms + summary; returns paths and bin counts."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "reports.csv"
    write_csv(reports, csv_path)

    histograms = {}
    svg_paths = {}
    for stage, attr in _STAGE_SCORES.items():
        scores = [getattr(r, attr) for r in reports]
        svg_path = out / f"hist_{stage}.svg"
        histograms[stage] = _render_histogram(stage, scores, svg_path)
        svg_paths[stage] = svg_path

    summary_path = out / "summary.txt"
    write_summary(reports, summary_path)
    return {
        "csv": csv_path,
        "summary": summary_path,
        "histograms": svg_paths,
        "bin_counts": histograms,
    }
