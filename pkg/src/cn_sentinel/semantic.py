"""Semantic projection of attribute names and values into one vector space.

Text (names, textual values) goes through subword n-gram embeddings
trained with skip-gram negative sampling on the message corpus, so that
morphological cousins like nfType / targetNfType land close together
and unseen tokens still embed via hashed n-gram buckets.  Numeric
values go through per-attribute Gaussian mixtures (with a global
fallback) summarized as responsibilities, a z-score, and the total log
density.  A pair of affine maps (the harmonizer) brings both paths to
the shared dimension d; its weights are trained later, jointly with the
triplet autoencoder.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core_types import ControlMessage
from .nn_core import DenseLayer, init_dense
from .rng import SplitMix64, derive_seed, fill_uniform, permutation

_MASK64 = (1 << 64) - 1


class CorpusError(ValueError):
    pass


def fnv1a64(s: str) -> int:
    h = 0xCBF29CE484222325
    for byte in s.encode("utf-8"):
        h ^= byte
        h = (h * 0x100000001B3) & _MASK64
    return h


def extract_ngrams(word: str, nmin: int = 3, nmax: int = 5) -> tuple[str, ...]:
    """Character n-grams of '<word>', deduplicated, in generation order.

    The whole-word token is handled separately (its own namespace); no
    camelCase or punctuation pre-splitting, subwords subsume it.
    """
    if not word:
        raise ValueError("cannot extract n-grams of an empty word")
    padded = f"<{word}>"
    seen: dict[str, None] = {}
    for n in range(nmin, nmax + 1):
        for i in range(len(padded) - n + 1):
            seen.setdefault(padded[i : i + n], None)
    return tuple(seen)


@dataclass
class SubwordVocab:
    """Row index assignment: n-grams, then whole words, then hash buckets."""

    nmin: int = 3
    nmax: int = 5
    bucket_count: int = 1 << 17
    ngram_index: dict = field(default_factory=dict)
    word_index: dict = field(default_factory=dict)

    @property
    def n_ngrams(self) -> int:
        return len(self.ngram_index)

    @property
    def table_size(self) -> int:
        return len(self.ngram_index) + len(self.word_index)

    def add_word(self, word: str) -> None:
        for g in extract_ngrams(word, self.nmin, self.nmax):
            if g not in self.ngram_index:
                self.ngram_index[g] = len(self.ngram_index)
        if word not in self.word_index:
            self.word_index[word] = len(self.word_index)

    def row_ids(self, word: str) -> np.ndarray:
        """Input-matrix rows for a word; unknown pieces hash into buckets."""
        table = self.table_size
        ids = []
        for g in extract_ngrams(word, self.nmin, self.nmax):
            idx = self.ngram_index.get(g)
            ids.append(idx if idx is not None else table + fnv1a64(g) % self.bucket_count)
        widx = self.word_index.get(word)
        if widx is not None:
            ids.append(self.n_ngrams + widx)
        else:
            ids.append(table + fnv1a64("w#" + word) % self.bucket_count)
        return np.asarray(ids, dtype=np.int64)


@dataclass
class EmbeddingMatrix:
    """Trained input rows plus virtual hash-bucket rows.

    Bucket rows never receive gradients (training only touches corpus
    n-grams), so they are materialized on demand from bucket_seed
    instead of being stored.  bucket_scale sets their magnitude: large
    enough that a fully-novel token embeds at the scale of trained
    tokens (in a random direction) instead of collapsing to zero.
    """

    rows: np.ndarray  # (table_size, d_t)
    bucket_seed: int
    bucket_count: int
    bucket_scale: float = 1.0

    @property
    def d_t(self) -> int:
        return self.rows.shape[1]

    def _bucket_row(self, j: int) -> np.ndarray:
        u = fill_uniform(derive_seed(self.bucket_seed, j), self.d_t)
        return (u - 0.5) * (self.bucket_scale / np.sqrt(self.d_t))

    def gather(self, ids: np.ndarray) -> np.ndarray:
        table = self.rows.shape[0]
        out = np.empty((len(ids), self.d_t))
        for i, idx in enumerate(ids):
            out[i] = self.rows[idx] if idx < table else self._bucket_row(int(idx) - table)
        return out


def embed_token(vocab: SubwordVocab, matrix: EmbeddingMatrix, word: str) -> np.ndarray:
    """Mean of the word's n-gram rows and whole-word row; never OOV."""
    ids = vocab.row_ids(word)
    return matrix.gather(ids).mean(axis=0)


def message_sentence(msg: ControlMessage) -> list[str]:
    """Receiver-kind token, attribute path segments, textual values."""
    tokens = [msg.recv.kind.value]
    for attr in msg.attrs:
        tokens.extend(attr.name.split("."))
        if not attr.is_numeric:
            tokens.append(attr.value)
    return tokens


@dataclass(frozen=True)
class EmbeddingParams:
    d_t: int = 32
    nmin: int = 3
    nmax: int = 5
    bucket_count: int = 1 << 17
    bucket_scale: float = 40.0
    epochs: int = 5
    lr: float = 0.05
    negatives: int = 5
    batch: int = 512
    min_corpus: int = 100


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-np.clip(x, -60.0, 60.0)))


def train_embeddings(
    corpus: list[ControlMessage], params: EmbeddingParams, seed: int
) -> tuple[SubwordVocab, EmbeddingMatrix, np.ndarray]:
    """Skip-gram with negative sampling over per-message sentences.

    Window is the whole sentence; 5 negatives per positive drawn from
    the unigram^0.75 distribution; SGD with linearly decayed lr.
    Deterministic for a fixed (corpus, params, seed).  Returns the
    vocabulary, the trained input matrix, and the context matrix.
    """
    if len(corpus) < params.min_corpus:
        raise CorpusError(f"corpus too small: {len(corpus)} < {params.min_corpus} messages")

    sentences_tok = [message_sentence(m) for m in corpus]
    vocab = SubwordVocab(params.nmin, params.nmax, params.bucket_count)
    counts: dict[str, int] = {}
    for sent in sentences_tok:
        for w in sent:
            if w not in counts:
                vocab.add_word(w)
                counts[w] = 0
            counts[w] += 1
    words = list(counts.keys())
    n_words = len(words)
    word_id = {w: i for i, w in enumerate(words)}

    # padded subword-row lookup per word; pad slot points at an extra zero row
    row_lists = [vocab.row_ids(w) for w in words]
    kmax = max(len(r) for r in row_lists)
    table = vocab.table_size
    pad_row = table
    word_rows = np.full((n_words, kmax), pad_row, dtype=np.int64)
    word_k = np.empty(n_words)
    for i, r in enumerate(row_lists):
        word_rows[i, : len(r)] = r
        word_k[i] = len(r)

    d = params.d_t
    rows = np.empty((table + 1, d))
    rows[:table] = (fill_uniform(derive_seed(seed, 1), table * d).reshape(table, d) - 0.5) / d
    rows[pad_row] = 0.0
    ctx = np.zeros((n_words, d))

    centers_l: list[int] = []
    contexts_l: list[int] = []
    for sent in sentences_tok:
        ids = [word_id[w] for w in sent]
        for i, c in enumerate(ids):
            for j, o in enumerate(ids):
                if i != j:
                    centers_l.append(c)
                    contexts_l.append(o)
    centers = np.asarray(centers_l, dtype=np.int64)
    contexts = np.asarray(contexts_l, dtype=np.int64)
    n_pairs = len(centers)
    if n_pairs == 0:
        raise CorpusError("corpus produced no training pairs")

    freq = np.array([counts[w] for w in words], dtype=np.float64) ** 0.75
    noise_cdf = np.cumsum(freq / freq.sum())

    neg = params.negatives
    total_steps = params.epochs * n_pairs
    step = 0
    for epoch in range(params.epochs):
        order = permutation(derive_seed(seed, 2, epoch), n_pairs)
        neg_u = fill_uniform(derive_seed(seed, 3, epoch), n_pairs * neg)
        neg_ids_all = np.searchsorted(noise_cdf, neg_u).reshape(n_pairs, neg)
        neg_ids_all = np.minimum(neg_ids_all, n_words - 1)
        for start in range(0, n_pairs, params.batch):
            sel = order[start : start + params.batch]
            b = len(sel)
            lr = params.lr * max(1e-4, 1.0 - step / total_steps)
            step += b

            c_ids = centers[sel]
            o_ids = contexts[sel]
            n_ids = neg_ids_all[sel]

            gathered = rows[word_rows[c_ids]]          # (b, kmax, d)
            center_vec = gathered.sum(axis=1) / word_k[c_ids, None]
            ctx_pos = ctx[o_ids]                       # (b, d)
            ctx_neg = ctx[n_ids]                       # (b, neg, d)

            g_pos = 1.0 - _sigmoid(np.einsum("bd,bd->b", center_vec, ctx_pos))
            g_neg = -_sigmoid(np.einsum("bkd,bd->bk", ctx_neg, center_vec))

            d_center = lr * (
                g_pos[:, None] * ctx_pos + np.einsum("bk,bkd->bd", g_neg, ctx_neg)
            )
            np.add.at(ctx, o_ids, lr * g_pos[:, None] * center_vec)
            np.add.at(
                ctx,
                n_ids.reshape(-1),
                (lr * g_neg[..., None] * center_vec[:, None, :]).reshape(b * neg, d),
            )
            d_rows = np.broadcast_to(
                (d_center / word_k[c_ids, None])[:, None, :], (b, kmax, d)
            )
            np.add.at(rows, word_rows[c_ids].reshape(-1), d_rows.reshape(b * kmax, d))
            rows[pad_row] = 0.0

    matrix = EmbeddingMatrix(rows[:table].copy(), derive_seed(seed, 4), params.bucket_count,
                             params.bucket_scale)
    return vocab, matrix, ctx


_VAR_FLOOR = 1e-6
_EM_TOL = 1e-6
_EM_MAX_ITER = 200


@dataclass
class GmmModel:
    """1-D Gaussian mixture for one attribute name (or the GLOBAL pool)."""

    attr_name: str
    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    n: int
    data_mean: float
    data_var: float
    ll_history: list = field(default_factory=list, compare=False, repr=False)

    @property
    def k(self) -> int:
        return len(self.weights)


def _log_components(model_w, model_mu, model_var, x: np.ndarray) -> np.ndarray:
    # (n, K) log of weight * normal density
    diff = x[:, None] - model_mu[None, :]
    return (
        np.log(model_w)[None, :]
        - 0.5 * np.log(2.0 * np.pi * model_var)[None, :]
        - 0.5 * diff * diff / model_var[None, :]
    )


def _logsumexp(a: np.ndarray, axis: int = -1) -> np.ndarray:
    hi = np.max(a, axis=axis, keepdims=True)
    return (hi + np.log(np.sum(np.exp(a - hi), axis=axis, keepdims=True))).squeeze(axis)


def _kmeanspp_centers(x: np.ndarray, k: int, rng: SplitMix64) -> np.ndarray:
    centers = [x[rng.randint(len(x))]]
    for _ in range(1, k):
        d2 = np.min((x[:, None] - np.asarray(centers)[None, :]) ** 2, axis=1)
        total = d2.sum()
        if total <= 0.0:
            remaining = np.setdiff1d(np.unique(x), np.asarray(centers))
            centers.append(remaining[rng.randint(len(remaining))])
            continue
        target = rng.random() * total
        centers.append(x[int(np.searchsorted(np.cumsum(d2), target))])
    return np.asarray(centers)


def gmm_fit(values, k: int, seed: int, attr_name: str = "GLOBAL") -> GmmModel:
    """EM with k-means++ initialization.

    Stops when the log-likelihood gain drops below 1e-6 or after 200
    iterations; variances floored at 1e-6 every M-step.  Components are
    returned sorted by mean.  If the data has fewer than k distinct
    values, k shrinks to that count.
    """
    x = np.asarray(list(values), dtype=np.float64)
    if x.size == 0:
        raise ValueError("cannot fit GMM on empty input")
    n = x.size
    k_eff = int(min(k, len(np.unique(x))))
    rng = SplitMix64(seed)

    mu = _kmeanspp_centers(x, k_eff, rng)
    assign = np.argmin(np.abs(x[:, None] - mu[None, :]), axis=1)
    w = np.empty(k_eff)
    var = np.empty(k_eff)
    for j in range(k_eff):
        members = x[assign == j]
        w[j] = max(len(members), 1) / n
        mu[j] = members.mean() if len(members) else mu[j]
        var[j] = max(members.var() if len(members) else 0.0, _VAR_FLOOR)
    w = w / w.sum()

    history: list[float] = []
    prev_ll = -np.inf
    for _ in range(_EM_MAX_ITER):
        log_comp = _log_components(w, mu, var, x)
        lse = _logsumexp(log_comp, axis=1)
        ll = float(lse.sum())
        history.append(ll)
        resp = np.exp(log_comp - lse[:, None])
        nk = np.maximum(resp.sum(axis=0), 1e-12)
        w = nk / n
        mu = (resp * x[:, None]).sum(axis=0) / nk
        var = np.maximum(
            (resp * (x[:, None] - mu[None, :]) ** 2).sum(axis=0) / nk, _VAR_FLOOR
        )
        if ll - prev_ll < _EM_TOL and np.isfinite(prev_ll):
            break
        prev_ll = ll

    order = np.argsort(mu, kind="stable")
    return GmmModel(
        attr_name, w[order], mu[order], var[order], n,
        float(x.mean()), float(x.var()), history,
    )


def fit_best_gmm(values, k_range, seed: int, attr_name: str = "GLOBAL") -> GmmModel:
    """Pick the component count by BIC (ties favor the smaller model)."""
    x = list(values)
    best = None
    best_bic = np.inf
    for k in k_range:
        model = gmm_fit(x, k, derive_seed(seed, k), attr_name)
        ll = model.ll_history[-1] if model.ll_history else 0.0
        n_params = 3 * model.k - 1
        bic = -2.0 * ll + n_params * math.log(model.n)
        if bic < best_bic - 1e-12:
            best = model
            best_bic = bic
    return best


def gmm_features(model: GmmModel, x: float) -> np.ndarray:
    """K responsibilities, z-score of the dominant component, and the
    total log density; log-space, so extreme x saturates without NaN."""
    xv = np.asarray([float(x)])
    log_comp = _log_components(model.weights, model.means, model.variances, xv)[0]
    lse = float(_logsumexp(log_comp[None, :], axis=1)[0])
    resp = np.exp(log_comp - lse)
    kstar = int(np.argmax(resp))
    z = abs(float(x) - model.means[kstar]) / math.sqrt(model.variances[kstar])
    return np.concatenate([resp, [z, lse]])


@dataclass
class Harmonizer:
    """Affine maps that bring the text and numeric paths to dimension d."""

    text: DenseLayer
    numeric: DenseLayer

    def __post_init__(self):
        if self.text.out_dim != self.numeric.out_dim:
            raise ValueError("harmonizer paths must share the output dimension")

    @property
    def d(self) -> int:
        return self.text.out_dim

    def map_text(self, x: np.ndarray) -> np.ndarray:
        return x @ self.text.W.T + self.text.b

    def map_numeric(self, x: np.ndarray) -> np.ndarray:
        return x @ self.numeric.W.T + self.numeric.b


@dataclass
class SemanticEncoder:
    """Trained semantic stage: embeddings + GMMs + harmonizer."""

    d_t: int
    d: int
    k_max: int
    vocab: SubwordVocab
    matrix: EmbeddingMatrix
    gmms: dict
    global_gmm: GmmModel | None
    harmonizer: Harmonizer
    _token_cache: dict = field(default_factory=dict, repr=False, compare=False)

    def token_vec(self, word: str) -> np.ndarray:
        """Raw d_t embedding of one token (cached)."""
        vec = self._token_cache.get(word)
        if vec is None:
            vec = embed_token(self.vocab, self.matrix, word)
            self._token_cache[word] = vec
        return vec

    def name_raw(self, name: str) -> np.ndarray:
        segs = name.split(".")
        return np.mean([self.token_vec(s) for s in segs], axis=0)

    def numeric_raw(self, name: str, x: float) -> np.ndarray:
        """Padded (k_max+2) GMM feature vector for a numeric value."""
        model = self.gmms.get(name, self.global_gmm)
        out = np.zeros(self.k_max + 2)
        if model is None:
            return out
        feats = gmm_features(model, x)
        out[: model.k] = feats[: model.k]
        out[self.k_max] = feats[model.k]
        out[self.k_max + 1] = feats[model.k + 1]
        return out

    def encode_attribute(self, attr) -> tuple[np.ndarray, np.ndarray]:
        e_vec = self.harmonizer.map_text(self.name_raw(attr.name))
        if attr.is_numeric:
            v_vec = self.harmonizer.map_numeric(self.numeric_raw(attr.name, attr.value))
        else:
            v_vec = self.harmonizer.map_text(self.token_vec(attr.value))
        return e_vec, v_vec

    def encode_entity(self, entity) -> np.ndarray:
        """Kind token only; entity identity is the topology's business."""
        return self.harmonizer.map_text(self.token_vec(entity.kind.value))


def fit_semantic_encoder(
    corpus: list[ControlMessage],
    seed: int,
    params: EmbeddingParams | None = None,
    d: int = 32,
    k_max: int = 4,
    min_gmm_points: int = 4,
) -> SemanticEncoder:
    """Train embeddings and fit per-attribute GMMs; harmonizer starts at
    its seeded initialization and is trained with the triplet AE."""
    params = params or EmbeddingParams()
    vocab, matrix, _ = train_embeddings(corpus, params, derive_seed(seed, 10))

    by_name: dict[str, list[float]] = {}
    pooled: list[float] = []
    for msg in corpus:
        for attr in msg.attrs:
            if attr.is_numeric:
                by_name.setdefault(attr.name, []).append(attr.value)
                pooled.append(attr.value)
    gmms = {}
    k_range = range(1, k_max + 1)
    for name in sorted(by_name):
        values = by_name[name]
        if len(values) >= min_gmm_points:
            gmms[name] = fit_best_gmm(values, k_range, derive_seed(seed, 20, fnv1a64(name)), name)
    global_gmm = fit_best_gmm(pooled, k_range, derive_seed(seed, 21), "GLOBAL") if pooled else None

    harmonizer = Harmonizer(
        text=init_dense(d, params.d_t, "identity", derive_seed(seed, 30)),
        numeric=init_dense(d, k_max + 2, "identity", derive_seed(seed, 31)),
    )
    return SemanticEncoder(params.d_t, d, k_max, vocab, matrix, gmms, global_gmm, harmonizer)
