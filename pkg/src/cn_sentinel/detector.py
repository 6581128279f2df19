"""Threshold calibration, per-message verdicts, and evaluation.

Each stage score is normalized by a threshold calibrated as a high
quantile of benign scores; the verdict is driven by the max ratio so an
alert always names the stage (or stages) that raised it.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .core_types import ControlMessage, LabelKind
from .graph import build_graph, iter_windows, neighborhood
from .pipeline import PipelineModel, message_vectors
from .temporal import SequenceBuffer, temporal_score

STAGES = ("semantic", "topological", "temporal")

#: stage each attack class is expected to surface in
EXPECTED_STAGE = {
    LabelKind.PARAM_TAMPER: "semantic",
    LabelKind.DDOS_COORD: "topological",
    LabelKind.REPLAY_DOS: "temporal",
    LabelKind.SEQ_VIOLATION: "temporal",
}


@dataclass(frozen=True)
class Thresholds:
    tau_sem: float
    tau_topo: float
    tau_temp: float
    q: float
    corpus_digest: str = ""

    def __post_init__(self):
        if not (self.tau_sem > 0 and self.tau_topo > 0 and self.tau_temp > 0):
            raise ValueError("thresholds must be positive")
        if not 0 < self.q < 1:
            raise ValueError("quantile must be in (0, 1)")


@dataclass
class StageScores:
    """Raw per-stage scores (pre-threshold); calibration input."""

    msg_id: int
    s_sem: float
    s_topo: float
    s_temp: float


@dataclass
class AnomalyReport:
    msg_id: int
    s_sem: float
    s_topo: float
    s_temp: float
    r_sem: float
    r_topo: float
    r_temp: float
    combined: float
    verdict: bool
    attribution: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "msg_id": self.msg_id,
            "s_sem": self.s_sem, "s_topo": self.s_topo, "s_temp": self.s_temp,
            "r_sem": self.r_sem, "r_topo": self.r_topo, "r_temp": self.r_temp,
            "combined": self.combined,
            "verdict": self.verdict,
            "attribution": list(self.attribution),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "AnomalyReport":
        return cls(
            data["msg_id"], data["s_sem"], data["s_topo"], data["s_temp"],
            data["r_sem"], data["r_topo"], data["r_temp"],
            data["combined"], data["verdict"], list(data["attribution"]),
        )


def nearest_rank_quantile(values, q: float) -> float:
    """The ceil(q*n)-th order statistic (1-based); exact and portable."""
    ordered = sorted(values)
    if not ordered:
        raise ValueError("quantile of empty sample")
    rank = max(1, math.ceil(q * len(ordered)))
    return float(ordered[rank - 1])


def calibrate(scores: list, q: float = 0.995, corpus_digest: str = "",
              min_samples: int = 200) -> Thresholds:
    """Per-stage nearest-rank quantiles of benign scores.

    Accepts anything with s_sem/s_topo/s_temp fields.  Zero-valued
    thresholds are floored at 1e-12 so ratios stay finite.
    """
    if len(scores) < min_samples:
        raise ValueError(f"calibration needs >= {min_samples} benign scores, got {len(scores)}")
    if not 0 < q < 1:
        raise ValueError("quantile must be in (0, 1)")
    floor = 1e-12
    return Thresholds(
        tau_sem=max(floor, nearest_rank_quantile([s.s_sem for s in scores], q)),
        tau_topo=max(floor, nearest_rank_quantile([s.s_topo for s in scores], q)),
        tau_temp=max(floor, nearest_rank_quantile([s.s_temp for s in scores], q)),
        q=q,
        corpus_digest=corpus_digest,
    )


def build_report(msg_id: int, s_sem: float, s_topo: float, s_temp: float,
                 thresholds: Thresholds) -> AnomalyReport:
    r_sem = s_sem / thresholds.tau_sem
    r_topo = s_topo / thresholds.tau_topo
    r_temp = s_temp / thresholds.tau_temp
    ratios = {"semantic": r_sem, "topological": r_topo, "temporal": r_temp}
    attribution = sorted(
        (name for name, r in ratios.items() if r > 1.0),
        key=lambda name: -ratios[name],
    )
    combined = max(ratios.values())
    return AnomalyReport(
        msg_id, s_sem, s_topo, s_temp, r_sem, r_topo, r_temp,
        combined, combined > 1.0, attribution,
    )


def score_message(
    model: PipelineModel,
    thresholds: Thresholds,
    graph,
    buffers: dict,
    msg: ControlMessage,
) -> AnomalyReport:
    """Score one message against its window graph, then insert its y
    into the receiver's buffer (a replay must not meet itself)."""
    nb = neighborhood(graph, msg)
    s_sem, s_topo, y = message_vectors(model, nb)
    buf = buffers.setdefault(msg.recv.key, SequenceBuffer(model.config.seq_len))
    s_temp = temporal_score(model.gru, buf.history(), y)
    report = build_report(msg.msg_id, s_sem, s_topo, s_temp, thresholds)
    buf.push(msg.ts, msg.msg_id, y)
    return report


def score_stream(
    model: PipelineModel,
    messages: list[ControlMessage],
    thresholds: Thresholds | None = None,
) -> list:
    """Score a dataset in time order (tumbling window graphs, per-entity
    buffers).  Without thresholds, returns raw StageScores for
    calibration; with thresholds, full AnomalyReports."""
    buffers: dict[str, SequenceBuffer] = {}
    out = []
    for t0, t1, window in iter_windows(messages, model.config.window):
        graph = build_graph(window, t0, t1)
        for msg in window:
            nb = neighborhood(graph, msg)
            s_sem, s_topo, y = message_vectors(model, nb)
            buf = buffers.setdefault(msg.recv.key, SequenceBuffer(model.config.seq_len))
            s_temp = temporal_score(model.gru, buf.history(), y)
            if thresholds is None:
                out.append(StageScores(msg.msg_id, s_sem, s_topo, s_temp))
            else:
                out.append(build_report(msg.msg_id, s_sem, s_topo, s_temp, thresholds))
            buf.push(msg.ts, msg.msg_id, y)
    return out


@dataclass
class Metrics:
    precision: float
    recall: float
    f1: float
    auc: float
    n_messages: int
    n_positives: int
    per_kind_recall: dict = field(default_factory=dict)
    per_kind_modal_stage: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "precision": self.precision, "recall": self.recall, "f1": self.f1,
            "auc": self.auc,
            "n_messages": self.n_messages, "n_positives": self.n_positives,
            "per_kind_recall": dict(self.per_kind_recall),
            "per_kind_modal_stage": dict(self.per_kind_modal_stage),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def roc_auc(scores: np.ndarray, labels: np.ndarray) -> float:
    """Trapezoidal ROC area over all score thresholds (ties grouped)."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    pos = labels.sum()
    neg = len(labels) - pos
    if pos == 0 or neg == 0:
        return float("nan")
    order = np.argsort(-scores, kind="stable")
    s_sorted = scores[order]
    l_sorted = labels[order]
    tps = np.cumsum(l_sorted)
    fps = np.cumsum(1.0 - l_sorted)
    boundary = np.nonzero(np.diff(s_sorted))[0]
    idx = np.concatenate([boundary, [len(s_sorted) - 1]])
    tpr = np.concatenate([[0.0], tps[idx] / pos])
    fpr = np.concatenate([[0.0], fps[idx] / neg])
    return float(np.trapezoid(tpr, fpr))


def evaluate(reports: list[AnomalyReport], messages: list[ControlMessage]) -> Metrics:
    """Precision/recall/F1 at the verdict, AUC over the combined score,
    and per-attack-kind breakdowns.  Positives: any non-benign label."""
    labels_by_id: dict[int, LabelKind] = {}
    for msg in messages:
        labels_by_id[msg.msg_id] = msg.label.kind if msg.label else LabelKind.BENIGN

    tp = fp = fn = 0
    scores = np.empty(len(reports))
    truth = np.empty(len(reports))
    kind_total: dict[str, int] = {}
    kind_detected: dict[str, int] = {}
    kind_stages: dict[str, dict[str, int]] = {}
    for i, rep in enumerate(reports):
        if rep.msg_id not in labels_by_id:
            raise ValueError(f"report msg_id {rep.msg_id} has no matching message")
        kind = labels_by_id[rep.msg_id]
        positive = kind is not LabelKind.BENIGN
        scores[i] = rep.combined
        truth[i] = 1.0 if positive else 0.0
        if positive:
            name = kind.value
            kind_total[name] = kind_total.get(name, 0) + 1
            if rep.verdict:
                tp += 1
                kind_detected[name] = kind_detected.get(name, 0) + 1
                top = rep.attribution[0]
                stage_counts = kind_stages.setdefault(name, {})
                stage_counts[top] = stage_counts.get(top, 0) + 1
            else:
                fn += 1
        elif rep.verdict:
            fp += 1

    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    auc = roc_auc(scores, truth)
    per_kind_recall = {
        name: kind_detected.get(name, 0) / total for name, total in sorted(kind_total.items())
    }
    per_kind_modal = {}
    for name, stage_counts in sorted(kind_stages.items()):
        per_kind_modal[name] = max(sorted(stage_counts), key=lambda s: stage_counts[s])
    return Metrics(
        precision, recall, f1, auc, len(reports), int(truth.sum()),
        per_kind_recall, per_kind_modal,
    )


def write_reports_jsonl(reports: list[AnomalyReport], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for rep in reports:
            f.write(json.dumps(rep.to_dict(), separators=(",", ":")))
            f.write("\n")


def read_reports_jsonl(path) -> list[AnomalyReport]:
    out = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                out.append(AnomalyReport.from_dict(json.loads(line)))
    return out
