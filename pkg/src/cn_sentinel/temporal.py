"""Per-receiver-entity sequence model.

Each entity's incoming stream of node representations y is kept in a
small ring buffer; a GRU consumes the history and predicts the next y,
and the prediction error is the temporal anomaly score.  Training is
teacher-forced next-vector prediction with manual backprop through
time, batched by history length.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field

import numpy as np

from .nn_core import AdamState, adam_step, xavier_uniform
from .rng import SplitMix64, derive_seed, permutation


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-np.clip(x, -60.0, 60.0)))


@dataclass
class GruCell:
    """Gated recurrence (update gate z, reset gate r, candidate state)
    plus an affine readout predicting the next input vector."""

    wz: np.ndarray
    uz: np.ndarray
    bz: np.ndarray
    wr: np.ndarray
    ur: np.ndarray
    br: np.ndarray
    wh: np.ndarray
    uh: np.ndarray
    bh: np.ndarray
    w_out: np.ndarray
    b_out: np.ndarray

    def __post_init__(self):
        hidden, in_dim = self.wz.shape
        expect = {
            "wz": (hidden, in_dim), "uz": (hidden, hidden), "bz": (hidden,),
            "wr": (hidden, in_dim), "ur": (hidden, hidden), "br": (hidden,),
            "wh": (hidden, in_dim), "uh": (hidden, hidden), "bh": (hidden,),
            "w_out": (in_dim, hidden), "b_out": (in_dim,),
        }
        for name, shape in expect.items():
            arr = getattr(self, name)
            if arr.shape != shape:
                raise ValueError(f"{name} has shape {arr.shape}, expected {shape}")
            if not np.isfinite(arr).all():
                raise ValueError(f"{name} contains non-finite values")

    @property
    def hidden_dim(self) -> int:
        return self.wz.shape[0]

    @property
    def in_dim(self) -> int:
        return self.wz.shape[1]

    def parameters(self) -> list[np.ndarray]:
        return [self.wz, self.uz, self.bz, self.wr, self.ur, self.br,
                self.wh, self.uh, self.bh, self.w_out, self.b_out]

    @classmethod
    def init(cls, in_dim: int, hidden: int, seed: int) -> "GruCell":
        s = SplitMix64(seed)
        return cls(
            wz=xavier_uniform(hidden, in_dim, s.next_u64()),
            uz=xavier_uniform(hidden, hidden, s.next_u64()),
            bz=np.zeros(hidden),
            wr=xavier_uniform(hidden, in_dim, s.next_u64()),
            ur=xavier_uniform(hidden, hidden, s.next_u64()),
            br=np.zeros(hidden),
            wh=xavier_uniform(hidden, in_dim, s.next_u64()),
            uh=xavier_uniform(hidden, hidden, s.next_u64()),
            bh=np.zeros(hidden),
            w_out=xavier_uniform(in_dim, hidden, s.next_u64()),
            b_out=np.zeros(in_dim),
        )


def gru_step(cell: GruCell, h: np.ndarray, x: np.ndarray) -> np.ndarray:
    """One recurrence step; h and x may be vectors or (batch, dim)."""
    z = _sigmoid(x @ cell.wz.T + h @ cell.uz.T + cell.bz)
    r = _sigmoid(x @ cell.wr.T + h @ cell.ur.T + cell.br)
    cand = np.tanh(x @ cell.wh.T + (r * h) @ cell.uh.T + cell.bh)
    return (1.0 - z) * h + z * cand


def predict_next(cell: GruCell, history: list[np.ndarray]) -> np.ndarray:
    """Run the GRU over the history (oldest first, h0 = 0) and read out."""
    h = np.zeros(cell.hidden_dim)
    for x in history:
        h = gru_step(cell, h, x)
    return h @ cell.w_out.T + cell.b_out


def temporal_score(cell: GruCell, history: list[np.ndarray], y_new: np.ndarray) -> float:
    """Next-step prediction error; 0 while the history is uninformative."""
    if len(history) < 2:
        return 0.0
    diff = predict_next(cell, history) - y_new
    return float(np.mean(diff * diff))


@dataclass
class SequenceBuffer:
    """Ring buffer of the last `capacity` (ts, msg_id, y) per entity,
    kept strictly ordered by (ts, msg_id) under out-of-order pushes."""

    capacity: int = 16
    items: list = field(default_factory=list)

    def push(self, ts: float, msg_id: int, y: np.ndarray) -> None:
        bisect.insort(self.items, (ts, msg_id, y), key=lambda it: (it[0], it[1]))
        if len(self.items) > self.capacity:
            self.items.pop(0)

    def history(self) -> list[np.ndarray]:
        return [it[2] for it in self.items]

    def __len__(self) -> int:
        return len(self.items)


def _batched_forward(cell: GruCell, xs: np.ndarray):
    """xs: (batch, steps, dim). Returns per-step caches for BPTT."""
    b, steps, _ = xs.shape
    h = np.zeros((b, cell.hidden_dim))
    cache = []
    for t in range(steps):
        x = xs[:, t, :]
        z = _sigmoid(x @ cell.wz.T + h @ cell.uz.T + cell.bz)
        r = _sigmoid(x @ cell.wr.T + h @ cell.ur.T + cell.br)
        cand = np.tanh(x @ cell.wh.T + (r * h) @ cell.uh.T + cell.bh)
        h_new = (1.0 - z) * h + z * cand
        cache.append((x, h, z, r, cand))
        h = h_new
    return h, cache


def _batched_backward(cell: GruCell, cache, dh: np.ndarray) -> list[np.ndarray]:
    """Gradients w.r.t. all cell parameters given dL/dh_final."""
    grads = [np.zeros_like(p) for p in cell.parameters()]
    gwz, guz, gbz, gwr, gur, gbr, gwh, guh, gbh = grads[:9]
    for x, h_prev, z, r, cand in reversed(cache):
        dz = dh * (cand - h_prev)
        dcand = dh * z
        dh_prev = dh * (1.0 - z)

        da_c = dcand * (1.0 - cand * cand)
        gwh += da_c.T @ x
        guh += da_c.T @ (r * h_prev)
        gbh += da_c.sum(axis=0)
        d_rh = da_c @ cell.uh
        dr = d_rh * h_prev
        dh_prev += d_rh * r

        da_z = dz * z * (1.0 - z)
        gwz += da_z.T @ x
        guz += da_z.T @ h_prev
        gbz += da_z.sum(axis=0)
        dh_prev += da_z @ cell.uz

        da_r = dr * r * (1.0 - r)
        gwr += da_r.T @ x
        gur += da_r.T @ h_prev
        gbr += da_r.sum(axis=0)
        dh_prev += da_r @ cell.ur

        dh = dh_prev
    return grads


@dataclass(frozen=True)
class TemporalTrainConfig:
    hidden: int = 32
    seq_len: int = 16    # history window incl. target
    epochs: int = 20
    lr: float = 1e-3
    batch: int = 64


def training_samples(sequences: list[list[np.ndarray]], seq_len: int):
    """(history, target) pairs: every length>=3 window of size <= seq_len."""
    samples = []
    for seq in sequences:
        for j in range(2, len(seq)):
            lo = max(0, j - (seq_len - 1))
            samples.append((seq[lo:j], seq[j]))
    return samples


def train_temporal(
    sequences: list[list[np.ndarray]],
    config: TemporalTrainConfig,
    seed: int,
    return_losses: bool = False,
):
    """Teacher-forced next-vector prediction with Adam.

    Batches group windows of equal history length so BPTT vectorizes.
    Deterministic for fixed (sequences, config, seed).
    """
    samples = training_samples(sequences, config.seq_len)
    if not samples:
        raise ValueError("no sequence of length >= 3 to train on")
    in_dim = samples[0][1].shape[0]
    cell = GruCell.init(in_dim, config.hidden, derive_seed(seed, 1))
    params = cell.parameters()
    state = AdamState.for_params(params)

    by_len: dict[int, list[int]] = {}
    for i, (hist, _) in enumerate(samples):
        by_len.setdefault(len(hist), []).append(i)
    groups = {
        length: (
            np.stack([np.stack(samples[i][0]) for i in idxs]),
            np.stack([samples[i][1] for i in idxs]),
        )
        for length, idxs in sorted(by_len.items())
    }

    losses = []
    for epoch in range(config.epochs):
        total = 0.0
        count = 0
        for length in sorted(groups):
            xs_all, tgt_all = groups[length]
            order = permutation(derive_seed(seed, 2, epoch, length), len(xs_all))
            for start in range(0, len(xs_all), config.batch):
                sel = order[start : start + config.batch]
                xs = xs_all[sel]
                tgt = tgt_all[sel]
                h, cache = _batched_forward(cell, xs)
                pred = h @ cell.w_out.T + cell.b_out
                diff = pred - tgt
                n = diff.size
                loss = float(np.mean(diff * diff))
                total += loss * len(sel)
                count += len(sel)

                dpred = (2.0 / n) * diff
                g_wout = dpred.T @ h
                g_bout = dpred.sum(axis=0)
                dh = dpred @ cell.w_out
                grads = _batched_backward(cell, cache, dh)
                grads[9] = g_wout
                grads[10] = g_bout
                adam_step(params, grads, state, lr=config.lr)
        losses.append(total / count)
    return (cell, losses) if return_losses else cell
