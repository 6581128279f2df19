import json

import numpy as np
import pytest

from cn_sentinel.core_types import strip_labels
from cn_sentinel.nn_core import init_mlp, max_relative_error
from cn_sentinel.pipeline import (
    FORMAT_VERSION,
    ModelVersionError,
    NodeAutoencoder,
    PipelineConfig,
    TripletAutoencoder,
    _collect_features,
    _harmonize_inputs,
    _mean_triplet_error,
    aggregate,
    encode_node,
    encode_triplet,
    load_model,
    message_vectors,
    model_digest,
    model_from_dict,
    model_json,
    model_to_dict,
    save_model,
    semantic_score,
    topo_score,
    train_pipeline,
    triplet_ae_loss_and_grads,
)
from cn_sentinel.graph import build_graph, iter_windows, neighborhood
from cn_sentinel.rng import SplitMix64, fill_gauss
from cn_sentinel.semantic import EmbeddingParams
from cn_sentinel.traffic_gen import ScenarioConfig, generate_scenario
from cn_sentinel.detector import score_stream


def test_aggregate_contracts():
    assert np.array_equal(aggregate([], "mean", 5), np.zeros(5))
    x = np.arange(4.0)
    np.testing.assert_array_equal(aggregate([x], "mean", 4), x)
    np.testing.assert_array_equal(aggregate([x, x], "mean", 4), x)
    np.testing.assert_array_equal(aggregate([x, x], "sum", 4), 2 * x)


def test_encode_triplet_contracts(tiny_model):
    d = tiny_model.config.d
    u = fill_gauss(1, d) * 0.1
    e = fill_gauss(2, d) * 0.1
    v = fill_gauss(3, d) * 0.1
    topo = np.array([0.7, 0.7])
    x1, err1 = encode_triplet(tiny_model, u, e, v, topo)
    x2, err2 = encode_triplet(tiny_model, u, e, v, topo)
    assert err1 >= 0.0
    assert x1.shape == (d,)
    np.testing.assert_array_equal(x1, x2)
    assert err1 == err2


def test_encode_node_contracts(tiny_model):
    d = tiny_model.config.d
    u = fill_gauss(4, d) * 0.1
    agg = fill_gauss(5, d) * 0.1
    y, err = encode_node(tiny_model, u, agg)
    assert err >= 0.0
    assert y.shape == (d,)
    # zero-attribute message: aggregate is the zero vector, y still defined
    y0, err0 = encode_node(tiny_model, u, np.zeros(d))
    assert np.isfinite(y0).all() and err0 >= 0.0


def test_scores_nonnegative_and_order_free(tiny_model, small_corpus):
    windows = iter_windows(small_corpus[:40], tiny_model.config.window)
    t0, t1, msgs = windows[0]
    g = build_graph(msgs, t0, t1)
    msg = max(msgs, key=lambda m: len(m.attrs))
    nb = neighborhood(g, msg)
    s_sem = semantic_score(tiny_model, nb)
    s_topo = topo_score(tiny_model, nb)
    assert s_sem >= 0.0 and s_topo >= 0.0
    # max over triplets is order-free
    reversed_nb = type(nb)(nb.u, nb.triplets[::-1], nb.topo[::-1])
    assert semantic_score(tiny_model, reversed_nb) == pytest.approx(s_sem)


def test_message_without_attrs_scores_zero_semantic(tiny_model):
    from cn_sentinel.core_types import ControlMessage, EntityRef, NetworkFunctionKind, Protocol

    m = ControlMessage(
        0, 0.5, EntityRef("amf-1", NetworkFunctionKind.AMF),
        EntityRef("ue-1", NetworkFunctionKind.UE), Protocol.NAS, (),
    )
    g = build_graph([m], 0.0, 10.0)
    nb = neighborhood(g, m)
    s_sem, s_topo, y = message_vectors(tiny_model, nb)
    assert s_sem == 0.0
    assert s_topo >= 0.0
    assert y.shape == (tiny_model.config.d,)


def test_training_reduces_triplet_error(small_corpus, tiny_model):
    cfg = tiny_model.config
    feats = _collect_features(
        sorted(strip_labels(small_corpus), key=lambda m: (m.ts, m.msg_id)),
        tiny_model.encoder, cfg,
    )
    # against a fresh untrained AE with any seed, trained error must be lower
    fresh = TripletAutoencoder(
        e1=init_mlp([cfg.triplet_dim, cfg.ae_hidden, cfg.d], ["tanh", "identity"], 999),
        d1=init_mlp([cfg.d, cfg.ae_hidden, cfg.triplet_dim], ["tanh", "identity"], 998),
    )
    trained_err = _mean_triplet_error(feats, tiny_model.encoder.harmonizer, tiny_model.triplet_ae)
    fresh_err = _mean_triplet_error(feats, tiny_model.encoder.harmonizer, fresh)
    assert trained_err < fresh_err


def test_composite_gradient_check(small_corpus, small_encoder):
    # harmonizer + E1/D1 joint loss vs central finite differences
    cfg = PipelineConfig(embed=EmbeddingParams(epochs=1))
    msgs = sorted(strip_labels(small_corpus[:30]), key=lambda m: (m.ts, m.msg_id))
    feats = _collect_features(msgs, small_encoder, cfg)
    ae = TripletAutoencoder(
        e1=init_mlp([cfg.triplet_dim, cfg.ae_hidden, cfg.d], ["tanh", "identity"], 5),
        d1=init_mlp([cfg.d, cfg.ae_hidden, cfg.triplet_dim], ["tanh", "identity"], 6),
    )
    h = small_encoder.harmonizer
    sel = np.arange(10)

    def loss_fn():
        inp = _harmonize_inputs(feats, h, sel)
        from cn_sentinel.nn_core import forward

        x, _ = forward(ae.e1, inp)
        out, _ = forward(ae.d1, x)
        return float(np.mean((out - inp) ** 2))

    _, analytic = triplet_ae_loss_and_grads(feats, sel, h, ae, cfg.d)
    params = [h.text.W, h.text.b, h.numeric.W, h.numeric.b]
    params += ae.e1.parameters() + ae.d1.parameters()
    eps = 1e-5
    numeric = []
    for p in params:
        g = np.zeros_like(p)
        flat_p = p.reshape(-1)
        flat_g = g.reshape(-1)
        for i in range(flat_p.size):
            orig = flat_p[i]
            flat_p[i] = orig + eps
            hi = loss_fn()
            flat_p[i] = orig - eps
            lo = loss_fn()
            flat_p[i] = orig
            flat_g[i] = (hi - lo) / (2 * eps)
        numeric.append(g)
    assert max_relative_error(analytic, numeric) < 1e-4


def test_train_deterministic_and_label_blind(small_corpus, tiny_pipeline_config):
    subset = small_corpus[:220]
    m1 = train_pipeline(subset, tiny_pipeline_config, seed=9)
    m2 = train_pipeline(subset, tiny_pipeline_config, seed=9)
    assert model_json(m1) == model_json(m2)
    m3 = train_pipeline(strip_labels(subset), tiny_pipeline_config, seed=9)
    assert model_digest(m1) == model_digest(m3)


def test_train_empty_corpus_rejected(tiny_pipeline_config):
    with pytest.raises(ValueError, match="empty corpus"):
        train_pipeline([], tiny_pipeline_config, seed=0)


def test_persistence_round_trip_exact_scores(tiny_model, small_corpus, tmp_path):
    path = tmp_path / "model.json"
    save_model(tiny_model, path)
    loaded = load_model(path)
    assert model_digest(loaded) == model_digest(tiny_model)

    raw_a = score_stream(tiny_model, small_corpus[:300])
    raw_b = score_stream(loaded, small_corpus[:300])
    for a, b in zip(raw_a, raw_b):
        assert a.s_sem == b.s_sem
        assert a.s_topo == b.s_topo
        assert a.s_temp == b.s_temp


def test_version_mismatch_fails_loudly(tiny_model, tmp_path):
    doc = model_to_dict(tiny_model)
    doc["format_version"] = "cn-sentinel-model/999"
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(doc))
    with pytest.raises(ModelVersionError):
        load_model(path)


def test_model_json_canonical(tiny_model):
    # canonical serialization: key order cannot depend on dict history
    doc = model_to_dict(tiny_model)
    scrambled = json.loads(json.dumps(doc))
    a = json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    b = json.dumps(scrambled, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    assert a == b == model_json(model_from_dict(json.loads(a)))


def test_sum_aggregation_mode(small_corpus):
    cfg = PipelineConfig(
        agg="sum", embed=EmbeddingParams(epochs=1), ae_epochs=2, gru_epochs=2
    )
    model = train_pipeline(small_corpus[:200], cfg, seed=3)
    assert model.config.agg == "sum"
    raw = score_stream(model, small_corpus[:100])
    assert all(np.isfinite([s.s_sem, s.s_topo, s.s_temp]).all() for s in raw)


def test_config_validation():
    with pytest.raises(ValueError):
        PipelineConfig(agg="median")
    with pytest.raises(ValueError):
        PipelineConfig(d_t=16)  # embed default d_t=32 mismatch
    with pytest.raises(ValueError):
        NodeAutoencoder(init_mlp([64, 32], ["identity"], 1), init_mlp([32, 60], ["identity"], 2))
