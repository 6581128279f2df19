"""Encoder stack over message neighborhoods and its stage-wise training.

Per message: every attribute triplet (receiver vector, name vector,
value vector) plus its two window-degree features goes through the
triplet autoencoder E1/D1, producing a condensed x_i and a
reconstruction error.  The x_i aggregate into one vector, are
re-encoded with the receiver vector by the node autoencoder E2/D2 into
the node representation y, and the stage errors become the semantic and
topological anomaly scores.  Training is staged: embeddings, GMMs,
harmonizer jointly with E1/D1, then E2/D2, then the GRU, each stage
frozen before the next.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .core_types import ControlMessage, strip_labels
from .graph import build_graph, iter_windows, neighborhood
from .nn_core import AdamState, DenseLayer, Mlp, adam_step, backward, forward, init_mlp
from .rng import derive_seed, permutation
from .semantic import (
    EmbeddingMatrix,
    EmbeddingParams,
    GmmModel,
    Harmonizer,
    SemanticEncoder,
    SubwordVocab,
    fit_semantic_encoder,
)
from .temporal import GruCell, TemporalTrainConfig, train_temporal

logger = logging.getLogger(__name__)

FORMAT_VERSION = "cn-sentinel-model/1"


class ModelVersionError(ValueError):
    pass


@dataclass(frozen=True)
class PipelineConfig:
    d: int = 32
    d_t: int = 32
    k_max: int = 4
    window: float = 10.0
    agg: str = "mean"          # "mean" or "sum"
    ae_hidden: int = 48
    ae_epochs: int = 20
    ae_batch: int = 64
    ae_lr: float = 1e-3
    gru_hidden: int = 32
    seq_len: int = 16
    gru_epochs: int = 20
    gru_lr: float = 1e-3
    embed: EmbeddingParams = field(default_factory=EmbeddingParams)

    def __post_init__(self):
        if self.agg not in ("mean", "sum"):
            raise ValueError(f"unknown aggregation mode {self.agg!r}")
        if self.embed.d_t != self.d_t:
            raise ValueError("embed.d_t must match d_t")

    @property
    def triplet_dim(self) -> int:
        return 3 * self.d + 2


@dataclass
class TripletAutoencoder:
    e1: Mlp
    d1: Mlp

    def __post_init__(self):
        if self.d1.out_dim != self.e1.in_dim:
            raise ValueError("D1 output dim must equal E1 input dim")


@dataclass
class NodeAutoencoder:
    e2: Mlp
    d2: Mlp

    def __post_init__(self):
        if self.d2.out_dim != self.e2.in_dim:
            raise ValueError("D2 output dim must equal E2 input dim")


@dataclass
class PipelineModel:
    version: str
    config: PipelineConfig
    encoder: SemanticEncoder
    triplet_ae: TripletAutoencoder
    node_ae: NodeAutoencoder
    gru: GruCell
    thresholds: object | None = None
    meta: dict = field(default_factory=dict)


def encode_triplet(model: PipelineModel, u_vec, e_vec, v_vec, topo) -> tuple[np.ndarray, float]:
    """Condense one encoded triplet; error is the E1/D1 round trip MSE."""
    inp = np.concatenate([u_vec, e_vec, v_vec, topo])
    x, _ = forward(model.triplet_ae.e1, inp)
    out, _ = forward(model.triplet_ae.d1, x)
    diff = out - inp
    return x, float(np.mean(diff * diff))


def aggregate(xs, mode: str = "mean", dim: int = 32) -> np.ndarray:
    """Componentwise sum of the condensed triplets, divided by
    max(1, count) in mean mode (the default) or left raw in sum mode."""
    xs = list(xs)
    if not xs:
        return np.zeros(dim)
    total = np.sum(xs, axis=0)
    if mode == "sum":
        return total
    return total / max(1, len(xs))


def encode_node(model: PipelineModel, u_vec, agg) -> tuple[np.ndarray, float]:
    """Node representation y and the E2/D2 reconstruction error."""
    inp = np.concatenate([u_vec, agg])
    y, _ = forward(model.node_ae.e2, inp)
    out, _ = forward(model.node_ae.d2, y)
    diff = out - inp
    return y, float(np.mean(diff * diff))


def message_vectors(model: PipelineModel, nbhd) -> tuple[float, float, np.ndarray]:
    """(semantic score, topological score, y) for one neighborhood."""
    enc = model.encoder
    h = enc.harmonizer
    cfg = model.config
    u_vec = enc.encode_entity(nbhd.u)
    n = len(nbhd.triplets)
    if n:
        inp = np.empty((n, cfg.triplet_dim))
        for i, (name, _vkey, value) in enumerate(nbhd.triplets):
            e_vec = h.map_text(enc.name_raw(name))
            if isinstance(value, str):
                v_vec = h.map_text(enc.token_vec(value))
            else:
                v_vec = h.map_numeric(enc.numeric_raw(name, value))
            inp[i, : cfg.d] = u_vec
            inp[i, cfg.d : 2 * cfg.d] = e_vec
            inp[i, 2 * cfg.d : 3 * cfg.d] = v_vec
            inp[i, 3 * cfg.d :] = nbhd.topo[i]
        x, _ = forward(model.triplet_ae.e1, inp)
        out, _ = forward(model.triplet_ae.d1, x)
        errs = np.mean((out - inp) ** 2, axis=1)
        s_sem = float(errs.max())
        agg = aggregate(list(x), cfg.agg, cfg.d)
    else:
        s_sem = 0.0
        agg = np.zeros(cfg.d)
    y, s_topo = encode_node(model, u_vec, agg)
    return s_sem, s_topo, y


def semantic_score(model: PipelineModel, nbhd) -> float:
    """Max triplet reconstruction error (0 for attribute-less messages)."""
    return message_vectors(model, nbhd)[0]


def topo_score(model: PipelineModel, nbhd) -> float:
    """Node reconstruction error with window-degree features in play."""
    return message_vectors(model, nbhd)[1]


# ---------------------------------------------------------------------------
# training


@dataclass
class _TripletFeatures:
    """Raw (pre-harmonizer) features for every triplet in the corpus."""

    u: np.ndarray        # (n_t, d_t)
    e: np.ndarray        # (n_t, d_t)
    v_text: np.ndarray   # (n_t, d_t), zero on numeric rows
    v_num: np.ndarray    # (n_t, k_max+2), zero on text rows
    text_mask: np.ndarray
    topo: np.ndarray     # (n_t, 2)
    msg_index: np.ndarray
    n_messages: int
    u_msg: np.ndarray    # (n_msgs, d_t) receiver-kind vectors per message


def _collect_features(messages, encoder: SemanticEncoder, cfg: PipelineConfig) -> _TripletFeatures:
    u_l, e_l, vt_l, vn_l, mask_l, topo_l, midx_l = [], [], [], [], [], [], []
    u_msg = np.empty((len(messages), cfg.d_t))
    num_dim = cfg.k_max + 2
    mi = 0
    for t0, t1, window in iter_windows(messages, cfg.window):
        graph = build_graph(window, t0, t1)
        for msg in window:
            nb = neighborhood(graph, msg)
            u_raw = encoder.token_vec(msg.recv.kind.value)
            u_msg[mi] = u_raw
            for i, (name, _vkey, value) in enumerate(nb.triplets):
                u_l.append(u_raw)
                e_l.append(encoder.name_raw(name))
                if isinstance(value, str):
                    vt_l.append(encoder.token_vec(value))
                    vn_l.append(np.zeros(num_dim))
                    mask_l.append(True)
                else:
                    vt_l.append(np.zeros(cfg.d_t))
                    vn_l.append(encoder.numeric_raw(name, value))
                    mask_l.append(False)
                topo_l.append(nb.topo[i])
                midx_l.append(mi)
            mi += 1
    n_t = len(u_l)
    shape2 = lambda lst, dim: (
        np.asarray(lst) if lst else np.zeros((0, dim))
    )
    return _TripletFeatures(
        u=shape2(u_l, cfg.d_t),
        e=shape2(e_l, cfg.d_t),
        v_text=shape2(vt_l, cfg.d_t),
        v_num=shape2(vn_l, num_dim),
        text_mask=np.asarray(mask_l, dtype=bool) if n_t else np.zeros(0, dtype=bool),
        topo=shape2(topo_l, 2),
        msg_index=np.asarray(midx_l, dtype=np.int64) if n_t else np.zeros(0, dtype=np.int64),
        n_messages=len(messages),
        u_msg=u_msg,
    )


def _harmonize_inputs(feats: _TripletFeatures, h: Harmonizer, sel=None) -> np.ndarray:
    if sel is None:
        sel = slice(None)
    u = feats.u[sel] @ h.text.W.T + h.text.b
    e = feats.e[sel] @ h.text.W.T + h.text.b
    v_t = feats.v_text[sel] @ h.text.W.T + h.text.b
    v_n = feats.v_num[sel] @ h.numeric.W.T + h.numeric.b
    mask = feats.text_mask[sel][:, None]
    v = np.where(mask, v_t, v_n)
    return np.concatenate([u, e, v, feats.topo[sel]], axis=1)


def triplet_ae_loss_and_grads(
    feats: _TripletFeatures, sel, h: Harmonizer, ae: TripletAutoencoder, d: int
):
    """Joint reconstruction loss; gradients for harmonizer + E1 + D1.

    The reconstruction target is itself a function of the harmonizer,
    so its gradient has both the encoder-path and the target-path term.
    """
    inp = _harmonize_inputs(feats, h, sel)
    x, cache_e = forward(ae.e1, inp)
    out, cache_d = forward(ae.d1, x)
    diff = out - inp
    n = diff.size
    loss = float(np.mean(diff * diff))
    dout = (2.0 / n) * diff

    grads_d1, dx = backward(ae.d1, cache_d, dout)
    grads_e1, din = backward(ae.e1, cache_e, dx)
    din = din - dout  # target path: dL/d(inp) direct term

    d_u = din[:, :d]
    d_e = din[:, d : 2 * d]
    d_v = din[:, 2 * d : 3 * d]
    mask = feats.text_mask[sel][:, None]
    d_v_text = d_v * mask
    d_v_num = d_v * ~mask

    g_wt = d_u.T @ feats.u[sel] + d_e.T @ feats.e[sel] + d_v_text.T @ feats.v_text[sel]
    g_bt = d_u.sum(axis=0) + d_e.sum(axis=0) + d_v_text.sum(axis=0)
    g_wn = d_v_num.T @ feats.v_num[sel]
    g_bn = d_v_num.sum(axis=0)
    return loss, [g_wt, g_bt, g_wn, g_bn] + grads_e1 + grads_d1


def _mean_triplet_error(feats: _TripletFeatures, h: Harmonizer, ae: TripletAutoencoder) -> float:
    total = 0.0
    n = len(feats.u)
    for start in range(0, n, 8192):
        sel = slice(start, min(start + 8192, n))
        inp = _harmonize_inputs(feats, h, sel)
        x, _ = forward(ae.e1, inp)
        out, _ = forward(ae.d1, x)
        total += float(np.sum(np.mean((out - inp) ** 2, axis=1)))
    return total / max(1, n)


def _train_triplet_stage(
    feats: _TripletFeatures, encoder: SemanticEncoder, cfg: PipelineConfig, seed: int
) -> TripletAutoencoder:
    ae = TripletAutoencoder(
        e1=init_mlp([cfg.triplet_dim, cfg.ae_hidden, cfg.d], ["tanh", "identity"],
                    derive_seed(seed, 1)),
        d1=init_mlp([cfg.d, cfg.ae_hidden, cfg.triplet_dim], ["tanh", "identity"],
                    derive_seed(seed, 2)),
    )
    h = encoder.harmonizer
    params = [h.text.W, h.text.b, h.numeric.W, h.numeric.b]
    params += ae.e1.parameters() + ae.d1.parameters()
    state = AdamState.for_params(params)
    n_t = len(feats.u)
    before = _mean_triplet_error(feats, h, ae)
    for epoch in range(cfg.ae_epochs):
        order = permutation(derive_seed(seed, 3, epoch), n_t)
        for start in range(0, n_t, cfg.ae_batch):
            sel = order[start : start + cfg.ae_batch]
            _, grads = triplet_ae_loss_and_grads(feats, sel, h, ae, cfg.d)
            adam_step(params, grads, state, lr=cfg.ae_lr)
    after = _mean_triplet_error(feats, h, ae)
    logger.info("triplet AE: mean reconstruction error %.6f -> %.6f", before, after)
    return ae


def _node_inputs(feats: _TripletFeatures, h: Harmonizer, ae: TripletAutoencoder,
                 cfg: PipelineConfig) -> np.ndarray:
    n_t = len(feats.u)
    sums = np.zeros((feats.n_messages, cfg.d))
    counts = np.zeros(feats.n_messages)
    for start in range(0, n_t, 8192):
        sel = slice(start, min(start + 8192, n_t))
        inp = _harmonize_inputs(feats, h, sel)
        x, _ = forward(ae.e1, inp)
        np.add.at(sums, feats.msg_index[sel], x)
    np.add.at(counts, feats.msg_index, 1.0)
    agg = sums if cfg.agg == "sum" else sums / np.maximum(1.0, counts)[:, None]
    u_msg = feats.u_msg @ h.text.W.T + h.text.b
    return np.concatenate([u_msg, agg], axis=1)


def _train_node_stage(node_in: np.ndarray, cfg: PipelineConfig, seed: int) -> NodeAutoencoder:
    ae = NodeAutoencoder(
        e2=init_mlp([2 * cfg.d, cfg.d], ["identity"], derive_seed(seed, 1)),
        d2=init_mlp([cfg.d, 2 * cfg.d], ["identity"], derive_seed(seed, 2)),
    )
    params = ae.e2.parameters() + ae.d2.parameters()
    state = AdamState.for_params(params)
    n = len(node_in)
    for epoch in range(cfg.ae_epochs):
        order = permutation(derive_seed(seed, 3, epoch), n)
        for start in range(0, n, cfg.ae_batch):
            sel = order[start : start + cfg.ae_batch]
            inp = node_in[sel]
            y, cache_e = forward(ae.e2, inp)
            out, cache_d = forward(ae.d2, y)
            diff = out - inp
            dout = (2.0 / diff.size) * diff
            grads_d2, dy = backward(ae.d2, cache_d, dout)
            grads_e2, _ = backward(ae.e2, cache_e, dy)
            adam_step(params, grads_e2 + grads_d2, state, lr=cfg.ae_lr)
    return ae


def corpus_digest(messages: list[ControlMessage]) -> str:
    """Digest over the label-stripped serialization (labels are ignored
    by training, so they must not influence the trained artifact)."""
    from .traffic_gen import dataset_digest

    return dataset_digest(strip_labels(messages))


def train_pipeline(
    messages: list[ControlMessage], config: PipelineConfig | None = None, seed: int = 0
) -> PipelineModel:
    """Full stage-wise training on benign (or unlabeled) traffic."""
    if not messages:
        raise ValueError("cannot train on an empty corpus")
    config = config or PipelineConfig()
    messages = sorted(strip_labels(messages), key=lambda m: (m.ts, m.msg_id))

    logger.info("stage 1+2: embeddings and GMMs on %d messages", len(messages))
    encoder = fit_semantic_encoder(
        messages, derive_seed(seed, 101), config.embed, d=config.d, k_max=config.k_max
    )
    logger.info("collecting triplet features")
    feats = _collect_features(messages, encoder, config)
    logger.info("stage 3: harmonizer + E1/D1 on %d triplets", len(feats.u))
    triplet_ae = _train_triplet_stage(feats, encoder, config, derive_seed(seed, 102))
    logger.info("stage 4: E2/D2")
    node_in = _node_inputs(feats, encoder.harmonizer, triplet_ae, config)
    node_ae = _train_node_stage(node_in, config, derive_seed(seed, 103))

    logger.info("stage 5: GRU over per-entity sequences")
    y_all, _ = forward(node_ae.e2, node_in)
    order: list[str] = []
    groups: dict[str, list[int]] = {}
    for i, msg in enumerate(messages):
        key = msg.recv.key
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append(i)
    sequences = [[y_all[i] for i in groups[key]] for key in order]
    gru = train_temporal(
        sequences,
        TemporalTrainConfig(
            hidden=config.gru_hidden, seq_len=config.seq_len,
            epochs=config.gru_epochs, lr=config.gru_lr,
        ),
        derive_seed(seed, 104),
    )

    meta = {
        "seed": seed,
        "n_messages": len(messages),
        "corpus_digest": corpus_digest(messages),
    }
    return PipelineModel(FORMAT_VERSION, config, encoder, triplet_ae, node_ae, gru, None, meta)


# ---------------------------------------------------------------------------
# persistence


def _layer_to_dict(layer: DenseLayer) -> dict:
    return {"w": layer.W.tolist(), "b": layer.b.tolist(), "activation": layer.activation}


def _layer_from_dict(data: dict) -> DenseLayer:
    return DenseLayer(np.array(data["w"], dtype=np.float64),
                      np.array(data["b"], dtype=np.float64), data["activation"])


def _mlp_to_dict(net: Mlp) -> dict:
    return {"layers": [_layer_to_dict(l) for l in net.layers]}


def _mlp_from_dict(data: dict) -> Mlp:
    return Mlp([_layer_from_dict(l) for l in data["layers"]])


def _gmm_to_dict(model: GmmModel | None) -> dict | None:
    if model is None:
        return None
    return {
        "attr_name": model.attr_name,
        "weights": model.weights.tolist(),
        "means": model.means.tolist(),
        "variances": model.variances.tolist(),
        "n": model.n,
        "data_mean": model.data_mean,
        "data_var": model.data_var,
    }


def _gmm_from_dict(data: dict | None) -> GmmModel | None:
    if data is None:
        return None
    return GmmModel(
        data["attr_name"],
        np.array(data["weights"], dtype=np.float64),
        np.array(data["means"], dtype=np.float64),
        np.array(data["variances"], dtype=np.float64),
        data["n"], data["data_mean"], data["data_var"],
    )


def model_to_dict(model: PipelineModel) -> dict:
    enc = model.encoder
    cfg = asdict(model.config)
    thresholds = None
    if model.thresholds is not None:
        t = model.thresholds
        thresholds = {
            "tau_sem": t.tau_sem, "tau_topo": t.tau_topo, "tau_temp": t.tau_temp,
            "q": t.q, "corpus_digest": t.corpus_digest,
        }
    return {
        "format_version": model.version,
        "config": cfg,
        "semantic": {
            "d_t": enc.d_t,
            "d": enc.d,
            "k_max": enc.k_max,
            "vocab": {
                "nmin": enc.vocab.nmin,
                "nmax": enc.vocab.nmax,
                "bucket_count": enc.vocab.bucket_count,
                "ngram_index": enc.vocab.ngram_index,
                "word_index": enc.vocab.word_index,
            },
            "matrix": {
                "rows": enc.matrix.rows.tolist(),
                "bucket_seed": enc.matrix.bucket_seed,
                "bucket_count": enc.matrix.bucket_count,
                "bucket_scale": enc.matrix.bucket_scale,
            },
            "gmms": {name: _gmm_to_dict(g) for name, g in sorted(enc.gmms.items())},
            "global_gmm": _gmm_to_dict(enc.global_gmm),
            "harmonizer": {
                "text": _layer_to_dict(enc.harmonizer.text),
                "numeric": _layer_to_dict(enc.harmonizer.numeric),
            },
        },
        "triplet_ae": {"e1": _mlp_to_dict(model.triplet_ae.e1),
                       "d1": _mlp_to_dict(model.triplet_ae.d1)},
        "node_ae": {"e2": _mlp_to_dict(model.node_ae.e2),
                    "d2": _mlp_to_dict(model.node_ae.d2)},
        "gru": {name: getattr(model.gru, name).tolist()
                for name in ("wz", "uz", "bz", "wr", "ur", "br", "wh", "uh", "bh",
                             "w_out", "b_out")},
        "thresholds": thresholds,
        "meta": model.meta,
    }


def model_from_dict(data: dict) -> PipelineModel:
    version = data.get("format_version")
    if version != FORMAT_VERSION:
        raise ModelVersionError(
            f"model format {version!r} not supported (expected {FORMAT_VERSION!r})"
        )
    cfg_data = dict(data["config"])
    cfg_data["embed"] = EmbeddingParams(**cfg_data["embed"])
    config = PipelineConfig(**cfg_data)

    sem = data["semantic"]
    vocab = SubwordVocab(
        sem["vocab"]["nmin"], sem["vocab"]["nmax"], sem["vocab"]["bucket_count"],
        dict(sem["vocab"]["ngram_index"]), dict(sem["vocab"]["word_index"]),
    )
    matrix = EmbeddingMatrix(
        np.array(sem["matrix"]["rows"], dtype=np.float64),
        sem["matrix"]["bucket_seed"], sem["matrix"]["bucket_count"],
        sem["matrix"]["bucket_scale"],
    )
    encoder = SemanticEncoder(
        sem["d_t"], sem["d"], sem["k_max"], vocab, matrix,
        {name: _gmm_from_dict(g) for name, g in sem["gmms"].items()},
        _gmm_from_dict(sem["global_gmm"]),
        Harmonizer(_layer_from_dict(sem["harmonizer"]["text"]),
                   _layer_from_dict(sem["harmonizer"]["numeric"])),
    )
    triplet_ae = TripletAutoencoder(_mlp_from_dict(data["triplet_ae"]["e1"]),
                                    _mlp_from_dict(data["triplet_ae"]["d1"]))
    node_ae = NodeAutoencoder(_mlp_from_dict(data["node_ae"]["e2"]),
                              _mlp_from_dict(data["node_ae"]["d2"]))
    gru = GruCell(**{k: np.array(v, dtype=np.float64) for k, v in data["gru"].items()})

    thresholds = None
    if data.get("thresholds") is not None:
        from .detector import Thresholds

        thresholds = Thresholds(**data["thresholds"])
    return PipelineModel(version, config, encoder, triplet_ae, node_ae, gru,
                         thresholds, dict(data.get("meta", {})))


def model_json(model: PipelineModel) -> str:
    return json.dumps(model_to_dict(model), sort_keys=True, separators=(",", ":"),
                      ensure_ascii=False)


def save_model(model: PipelineModel, path: str | Path) -> None:
    Path(path).write_text(model_json(model), encoding="utf-8")


def load_model(path: str | Path) -> PipelineModel:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ValueError(f"model file {path} is not valid JSON: {e.msg}") from None
    return model_from_dict(data)


def model_digest(model: PipelineModel) -> str:
    return hashlib.sha256(model_json(model).encode("utf-8")).hexdigest()
