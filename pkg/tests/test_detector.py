import numpy as np
import pytest

from cn_sentinel.core_types import (
    Attribute,
    ControlMessage,
    EntityRef,
    Label,
    LabelKind,
    NetworkFunctionKind,
    Protocol,
)
from cn_sentinel.detector import (
    AnomalyReport,
    StageScores,
    Thresholds,
    build_report,
    calibrate,
    evaluate,
    nearest_rank_quantile,
    read_reports_jsonl,
    roc_auc,
    score_message,
    score_stream,
    write_reports_jsonl,
)
from cn_sentinel.graph import build_graph
from cn_sentinel.rng import SplitMix64
from cn_sentinel.temporal import SequenceBuffer

K = NetworkFunctionKind


def _scores(triples):
    return [StageScores(i, a, b, c) for i, (a, b, c) in enumerate(triples)]


def test_nearest_rank_quantile_examples():
    assert nearest_rank_quantile(range(1, 101), 0.95) == 95
    assert nearest_rank_quantile([7.0] * 10, 0.5) == 7.0
    assert nearest_rank_quantile([3.0, 1.0, 2.0], 0.5) == 2.0  # ceil(1.5)=2nd


def test_calibrate_quantiles():
    scores = _scores([(i, 2 * i, 3 * i) for i in range(1, 201)])
    thr = calibrate(scores, q=0.95)
    assert thr.tau_sem == 190.0  # ceil(0.95*200)=190th order stat
    assert thr.tau_topo == 380.0
    assert thr.tau_temp == 570.0
    assert thr.q == 0.95


def test_calibrate_all_equal_scores():
    thr = calibrate(_scores([(5.0, 5.0, 5.0)] * 250), q=0.995)
    assert thr.tau_sem == thr.tau_topo == thr.tau_temp == 5.0


def test_calibrate_zero_floor():
    thr = calibrate(_scores([(0.0, 1.0, 1.0)] * 250), q=0.9)
    assert thr.tau_sem == 1e-12


def test_calibrate_requires_enough_samples():
    with pytest.raises(ValueError, match=">= 200"):
        calibrate(_scores([(1.0, 1.0, 1.0)] * 199))
    with pytest.raises(ValueError, match="quantile"):
        calibrate(_scores([(1.0, 1.0, 1.0)] * 200), q=1.0)


def test_report_rule_and_attribution():
    thr = Thresholds(1.0, 1.0, 1.0, q=0.995)
    rep = build_report(1, 1.2, 0.3, 0.4, thr)
    assert rep.verdict
    assert rep.attribution == ["semantic"]
    assert rep.combined == pytest.approx(1.2)

    rep = build_report(2, 0.5, 1.0, 0.9, thr)  # ratios all <= 1
    assert not rep.verdict
    assert rep.attribution == []

    rep = build_report(3, 1.5, 2.5, 1.1, thr)
    assert rep.attribution == ["topological", "semantic", "temporal"]


def test_verdict_iff_attribution_nonempty_fuzz():
    rng = SplitMix64(4)
    thr = Thresholds(0.3, 0.7, 1.3, q=0.99)
    for _ in range(500):
        rep = build_report(0, rng.random() * 2, rng.random() * 2, rng.random() * 2, thr)
        assert rep.verdict == bool(rep.attribution)
        assert rep.combined >= 0
        for stage in rep.attribution:
            assert {"semantic": rep.r_sem, "topological": rep.r_topo,
                    "temporal": rep.r_temp}[stage] > 1.0


def test_monotonicity_raising_score_never_clears_verdict():
    rng = SplitMix64(5)
    thr = Thresholds(0.5, 0.5, 0.5, q=0.99)
    for _ in range(300):
        s = [rng.random(), rng.random(), rng.random()]
        base = build_report(0, *s, thr)
        for i in range(3):
            bumped = list(s)
            bumped[i] += rng.random()
            rep = build_report(0, *bumped, thr)
            if base.verdict:
                assert rep.verdict


def test_threshold_scale_equivariance():
    rng = SplitMix64(6)
    for trial in range(50):
        benign = [(rng.random(), rng.random(), rng.random()) for _ in range(220)]
        test = [(rng.random() * 2, rng.random() * 2, rng.random() * 2) for _ in range(50)]
        c = 0.01 + rng.random() * 100
        thr1 = calibrate(_scores(benign), q=0.9)
        scaled_benign = [(a * c, b, t) for a, b, t in benign]
        thr2 = calibrate(_scores(scaled_benign), q=0.9)
        for a, b, t in test:
            r1 = build_report(0, a, b, t, thr1)
            r2 = build_report(0, a * c, b, t, thr2)
            assert r1.verdict == r2.verdict
            assert r1.attribution == r2.attribution


def _labeled_msgs(labels):
    out = []
    for i, kind in enumerate(labels):
        out.append(ControlMessage(
            i, float(i), EntityRef("a", K.AMF), EntityRef("b", K.UE), Protocol.NAS,
            (), Label(kind, "x"),
        ))
    return out


def _reports_from(scores, thr):
    return [build_report(i, s, 0.0, 0.0, thr) for i, s in enumerate(scores)]


def test_evaluate_perfect_separation():
    labels = [LabelKind.BENIGN] * 50 + [LabelKind.PARAM_TAMPER] * 50
    scores = [0.1] * 50 + [5.0] * 50
    msgs = _labeled_msgs(labels)
    reports = _reports_from(scores, Thresholds(1.0, 1.0, 1.0, q=0.9))
    m = evaluate(reports, msgs)
    assert m.auc == pytest.approx(1.0)
    assert m.recall == 1.0 and m.precision == 1.0 and m.f1 == 1.0
    assert m.per_kind_recall == {"param_tamper": 1.0}
    assert m.per_kind_modal_stage == {"param_tamper": "semantic"}


def test_evaluate_all_normal_verdicts_zero_recall():
    labels = [LabelKind.BENIGN] * 30 + [LabelKind.REPLAY_DOS] * 10
    msgs = _labeled_msgs(labels)
    reports = _reports_from([0.2] * 40, Thresholds(1.0, 1.0, 1.0, q=0.9))
    m = evaluate(reports, msgs)
    assert m.recall == 0.0
    assert m.per_kind_recall == {"replay_dos": 0.0}
    assert m.per_kind_modal_stage == {}


def test_evaluate_random_scores_auc_half():
    rng = SplitMix64(12)
    n = 10_000
    labels = [LabelKind.BENIGN if i % 2 == 0 else LabelKind.DDOS_COORD for i in range(n)]
    msgs = _labeled_msgs(labels)
    reports = _reports_from([rng.random() for _ in range(n)], Thresholds(10, 10, 10, q=0.9))
    m = evaluate(reports, msgs)
    assert abs(m.auc - 0.5) < 0.02


def test_evaluate_unmatched_msg_id():
    msgs = _labeled_msgs([LabelKind.BENIGN])
    reports = _reports_from([0.1, 0.2], Thresholds(1, 1, 1, q=0.9))
    with pytest.raises(ValueError, match="no matching message"):
        evaluate(reports, msgs)


def test_roc_auc_tie_handling():
    # all scores equal -> area is the diagonal
    assert roc_auc(np.ones(10), np.array([1, 0] * 5)) == pytest.approx(0.5)


def test_score_message_score_then_insert(tiny_model):
    thr = Thresholds(1.0, 1.0, 1.0, q=0.9)
    msg = ControlMessage(
        0, 0.5, EntityRef("amf-1", K.AMF), EntityRef("ue-1", K.UE), Protocol.NAS,
        (Attribute("a", "x"),),
    )
    g = build_graph([msg], 0.0, 10.0)
    buffers = {}
    rep = score_message(tiny_model, thr, g, buffers, msg)
    assert isinstance(rep, AnomalyReport)
    assert rep.s_temp == 0.0  # buffer was empty at scoring time
    assert len(buffers["amf-1|AMF"]) == 1  # inserted after scoring


def test_score_stream_shapes(tiny_model, small_corpus):
    raw = score_stream(tiny_model, small_corpus[:120])
    assert len(raw) == 120
    assert all(isinstance(s, StageScores) for s in raw)
    thr = calibrate(score_stream(tiny_model, small_corpus[:250]), q=0.99)
    reports = score_stream(tiny_model, small_corpus[:120], thr)
    assert all(isinstance(r, AnomalyReport) for r in reports)
    ids = [r.msg_id for r in reports]
    assert ids == sorted(ids)


def test_reports_jsonl_round_trip(tmp_path):
    thr = Thresholds(1.0, 2.0, 3.0, q=0.99)
    reports = [build_report(i, i * 0.5, i * 0.25, 0.1, thr) for i in range(10)]
    path = tmp_path / "reports.jsonl"
    write_reports_jsonl(reports, path)
    loaded = read_reports_jsonl(path)
    assert loaded == reports
    # wire field names are fixed
    import json

    first = json.loads(path.read_text().splitlines()[0])
    assert set(first) == {
        "msg_id", "s_sem", "s_topo", "s_temp",
        "r_sem", "r_topo", "r_temp", "combined", "verdict", "attribution",
    }


def test_thresholds_validation():
    with pytest.raises(ValueError):
        Thresholds(0.0, 1.0, 1.0, q=0.9)
    with pytest.raises(ValueError):
        Thresholds(1.0, 1.0, 1.0, q=1.5)
