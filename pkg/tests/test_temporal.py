import numpy as np
import pytest

from cn_sentinel.nn_core import max_relative_error
from cn_sentinel.rng import SplitMix64, fill_gauss
from cn_sentinel.temporal import (
    GruCell,
    SequenceBuffer,
    TemporalTrainConfig,
    _batched_backward,
    _batched_forward,
    gru_step,
    predict_next,
    temporal_score,
    train_temporal,
    training_samples,
)


def _zero_cell(in_dim=4, hidden=4):
    z = lambda *s: np.zeros(s)
    return GruCell(
        wz=z(hidden, in_dim), uz=z(hidden, hidden), bz=z(hidden),
        wr=z(hidden, in_dim), ur=z(hidden, hidden), br=z(hidden),
        wh=z(hidden, in_dim), uh=z(hidden, hidden), bh=z(hidden),
        w_out=z(in_dim, hidden), b_out=z(in_dim),
    )


def test_gru_step_zero_parameters_halves_state():
    cell = _zero_cell()
    h = np.array([0.4, -0.8, 1.0, 0.0])
    x = np.ones(4)
    np.testing.assert_allclose(gru_step(cell, h, x), 0.5 * h, atol=1e-15)


def test_gru_step_zero_state_zero_parameters():
    cell = _zero_cell()
    out = gru_step(cell, np.zeros(4), np.ones(4))
    np.testing.assert_array_equal(out, np.zeros(4))


def test_gru_unrolled_gradient_check():
    # 3-step unrolled GRU + readout vs central finite differences
    cell = GruCell.init(in_dim=3, hidden=4, seed=11)
    xs = fill_gauss(5, 9).reshape(1, 3, 3)
    target = fill_gauss(6, 3).reshape(1, 3)

    def loss_fn():
        h, _ = _batched_forward(cell, xs)
        pred = h @ cell.w_out.T + cell.b_out
        diff = pred - target
        return float(np.mean(diff * diff))

    h, cache = _batched_forward(cell, xs)
    pred = h @ cell.w_out.T + cell.b_out
    diff = pred - target
    dpred = (2.0 / diff.size) * diff
    grads = _batched_backward(cell, cache, dpred @ cell.w_out)
    grads[9] = dpred.T @ h
    grads[10] = dpred.sum(axis=0)

    params = cell.parameters()
    eps = 1e-5
    numeric = []
    for p in params:
        g = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        while not it.finished:
            idx = it.multi_index
            orig = p[idx]
            p[idx] = orig + eps
            hi = loss_fn()
            p[idx] = orig - eps
            lo = loss_fn()
            p[idx] = orig
            g[idx] = (hi - lo) / (2 * eps)
            it.iternext()
        numeric.append(g)
    assert max_relative_error(grads, numeric) < 1e-4


def test_temporal_score_cold_start():
    cell = GruCell.init(3, 4, seed=0)
    y = np.ones(3)
    assert temporal_score(cell, [], y) == 0.0
    assert temporal_score(cell, [y], y) == 0.0
    assert temporal_score(cell, [y, y], y) > 0.0 or temporal_score(cell, [y, y], y) == 0.0


def test_temporal_score_deterministic():
    cell = GruCell.init(3, 4, seed=1)
    hist = [fill_gauss(i, 3) for i in range(4)]
    y = fill_gauss(9, 3)
    assert temporal_score(cell, hist, y) == temporal_score(cell, hist, y)


def test_predict_next_matches_stepwise():
    cell = GruCell.init(3, 4, seed=2)
    hist = [fill_gauss(i, 3) for i in range(5)]
    h = np.zeros(4)
    for x in hist:
        h = gru_step(cell, h, x)
    np.testing.assert_allclose(predict_next(cell, hist), h @ cell.w_out.T + cell.b_out)


def test_training_samples_windowing():
    seq = [np.full(2, float(i)) for i in range(20)]
    samples = training_samples([seq], seq_len=16)
    assert len(samples) == 18  # targets at positions 2..19
    lengths = {len(h) for h, _ in samples}
    assert max(lengths) == 15  # history capped at seq_len - 1
    assert min(lengths) == 2


def test_train_loss_decreases_and_deterministic(small_corpus):
    rng = SplitMix64(17)
    # noisy two-cluster alternation: learnable transition structure
    a = fill_gauss(1, 8)
    b = fill_gauss(2, 8) + 2.0
    seqs = []
    for s in range(8):
        seq = []
        for i in range(30):
            base = a if i % 2 == 0 else b
            seq.append(base + 0.05 * fill_gauss(rng.next_u64(), 8))
        seqs.append(seq)
    cfg = TemporalTrainConfig(hidden=8, seq_len=8, epochs=10, lr=3e-3)
    cell1, losses = train_temporal(seqs, cfg, seed=5, return_losses=True)
    assert losses[-1] < losses[0]
    cell2 = train_temporal(seqs, cfg, seed=5)
    for p1, p2 in zip(cell1.parameters(), cell2.parameters()):
        np.testing.assert_array_equal(p1, p2)


def test_train_constant_sequences_converge():
    c = np.array([0.3, -0.2, 0.5, 0.1])
    seqs = [[c.copy() for _ in range(25)] for _ in range(6)]
    cfg = TemporalTrainConfig(hidden=8, seq_len=8, epochs=60, lr=1e-2)
    cell, losses = train_temporal(seqs, cfg, seed=3, return_losses=True)
    assert losses[-1] < 1e-3


def test_train_requires_length_three():
    with pytest.raises(ValueError, match="length >= 3"):
        train_temporal([[np.zeros(2)], [np.zeros(2), np.zeros(2)]],
                       TemporalTrainConfig(), seed=0)


def test_buffer_ordering_under_fuzz():
    rng = SplitMix64(23)
    buf = SequenceBuffer(capacity=16)
    for i in range(10_000):
        buf.push(rng.random() * 100, i, np.zeros(1))
        keys = [(it[0], it[1]) for it in buf.items]
        assert keys == sorted(keys)
        assert len(buf) <= 16


def test_buffer_tie_break_by_msg_id():
    buf = SequenceBuffer(capacity=4)
    buf.push(1.0, 5, np.array([5.0]))
    buf.push(1.0, 2, np.array([2.0]))
    buf.push(1.0, 9, np.array([9.0]))
    assert [it[1] for it in buf.items] == [2, 5, 9]


def test_buffer_drops_oldest():
    buf = SequenceBuffer(capacity=3)
    for i in range(6):
        buf.push(float(i), i, np.array([float(i)]))
    assert [it[1] for it in buf.items] == [3, 4, 5]
    # an out-of-order push older than everything in a full buffer is dropped
    buf.push(0.5, 99, np.array([99.0]))
    assert [it[1] for it in buf.items] == [3, 4, 5]


def test_hidden_state_bounded():
    rng = SplitMix64(31)
    cell = GruCell.init(4, 6, seed=rng.next_u64())
    h = np.zeros(6)
    for i in range(500):
        x = fill_gauss(rng.next_u64(), 4) * 10
        h = gru_step(cell, h, x)
        assert np.max(np.abs(h)) <= 1.0 + 1e-12
