"""Dense neural-network kernel: affine layers, tanh, MSE, Adam, backprop.

Everything is float64 numpy with explicit reverse-mode gradients so the
whole stack stays checkable against finite differences.  Inputs may be
single vectors (d,) or batches (n, d); outputs match.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .rng import SplitMix64, fill_uniform

_ACTIVATIONS = ("tanh", "identity")


@dataclass
class DenseLayer:
    W: np.ndarray  # (out, in)
    b: np.ndarray  # (out,)
    activation: str = "identity"

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64)
        if self.W.ndim != 2 or self.b.ndim != 1 or self.W.shape[0] != self.b.shape[0]:
            raise ValueError(f"inconsistent layer shapes {self.W.shape} / {self.b.shape}")
        if not (np.isfinite(self.W).all() and np.isfinite(self.b).all()):
            raise ValueError("layer parameters must be finite")
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def in_dim(self) -> int:
        return self.W.shape[1]

    @property
    def out_dim(self) -> int:
        return self.W.shape[0]


@dataclass
class Mlp:
    layers: list[DenseLayer] = field(default_factory=list)

    def __post_init__(self):
        for a, b in zip(self.layers, self.layers[1:]):
            if a.out_dim != b.in_dim:
                raise ValueError(f"layer dims do not chain: {a.out_dim} -> {b.in_dim}")

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim

    def parameters(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            out.append(layer.W)
            out.append(layer.b)
        return out


def xavier_uniform(out_dim: int, in_dim: int, seed: int) -> np.ndarray:
    """Uniform in +-sqrt(6/(in+out)); pure function of (shape, seed)."""
    limit = np.sqrt(6.0 / (in_dim + out_dim))
    u = fill_uniform(seed, out_dim * in_dim).reshape(out_dim, in_dim)
    return (2.0 * u - 1.0) * limit


def init_dense(out_dim: int, in_dim: int, activation: str, seed: int) -> DenseLayer:
    return DenseLayer(xavier_uniform(out_dim, in_dim, seed), np.zeros(out_dim), activation)


def init_mlp(dims: list[int], activations: list[str], seed: int) -> Mlp:
    if len(activations) != len(dims) - 1:
        raise ValueError("need one activation per layer")
    stream = SplitMix64(seed)
    layers = [
        init_dense(dims[i + 1], dims[i], activations[i], stream.next_u64())
        for i in range(len(dims) - 1)
    ]
    return Mlp(layers)


def forward(net: Mlp, x: np.ndarray) -> tuple[np.ndarray, list]:
    """Returns (output, cache). Cache feeds backward()."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    h = x[None, :] if single else x
    if h.shape[1] != net.in_dim:
        raise ValueError(f"input dim {h.shape[1]} does not match net in_dim {net.in_dim}")
    cache = [("single", single)]
    for layer in net.layers:
        z = h @ layer.W.T + layer.b
        a = np.tanh(z) if layer.activation == "tanh" else z
        cache.append((h, a))
        h = a
    return (h[0] if single else h), cache


def backward(net: Mlp, cache: list, dy: np.ndarray) -> tuple[list[np.ndarray], np.ndarray]:
    """Exact reverse-mode gradients.

    Returns (grads, dx) where grads aligns with net.parameters():
    [dW0, db0, dW1, db1, ...].
    """
    tag, single = cache[0]
    if tag != "single" or len(cache) - 1 != len(net.layers):
        raise ValueError("stale or mismatched forward cache")
    dy = np.asarray(dy, dtype=np.float64)
    g = dy[None, :] if single else dy
    if g.shape[1] != net.out_dim:
        raise ValueError("gradient dim does not match net out_dim")
    grads: list[np.ndarray] = [None] * (2 * len(net.layers))
    for k in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[k]
        x_in, a_out = cache[k + 1]
        if x_in.shape[1] != layer.in_dim:
            raise ValueError("stale forward cache (shape mismatch)")
        da = g * (1.0 - a_out * a_out) if layer.activation == "tanh" else g
        grads[2 * k] = da.T @ x_in
        grads[2 * k + 1] = da.sum(axis=0)
        g = da @ layer.W
    return grads, (g[0] if single else g)


def mse_loss(y: np.ndarray, t: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean of squared componentwise differences and its gradient w.r.t. y."""
    y = np.asarray(y, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    if y.shape != t.shape:
        raise ValueError(f"shape mismatch {y.shape} vs {t.shape}")
    diff = y - t
    n = diff.size
    return float(np.mean(diff * diff)), (2.0 / n) * diff


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0

    @classmethod
    def for_params(cls, params: list[np.ndarray]) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params], 0)


def adam_step(
    params: list[np.ndarray],
    grads: list[np.ndarray],
    state: AdamState,
    lr: float = 1e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """Bias-corrected Adam update, applied to params in place."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params/grads/state length mismatch")
    state.t += 1
    b1t = 1.0 - beta1 ** state.t
    b2t = 1.0 - beta2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise ValueError("gradient shape mismatch")
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        p -= lr * (m / b1t) / (np.sqrt(v / b2t) + eps)


def finite_difference_grads(loss_fn, params: list[np.ndarray], eps: float = 1e-5) -> list[np.ndarray]:
    """Central-difference gradients of loss_fn() w.r.t. each param entry."""
    out = []
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
            flat_g[i] = (hi - lo) / (2.0 * eps)
        out.append(g)
    return out


def max_relative_error(analytic: list[np.ndarray], numeric: list[np.ndarray]) -> float:
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.abs(a) + np.abs(n), 1e-8)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst
