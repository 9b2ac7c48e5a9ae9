"""Bag encoder: word-position embeddings, piecewise CNN, selectors, heads.

A sentence is embedded token by token (word embedding plus two relative
position embeddings), convolved with a bank of window kernels, max-pooled
over the three segments induced by the entity positions, and passed through
ReLU and (in training) inverted dropout. A selector reduces the per-sentence
vectors of a bag to one encoding -- the column mean, the column max, or one
attention-weighted sum per relation -- and a per-relation sigmoid head turns
the encoding into independent label probabilities.

``backward`` produces exact gradients of the soft-target cross-entropy

    L = -sum_r [ q_r log p_r + (1 - q_r) log(1 - p_r) ]

with respect to every parameter tensor via reverse accumulation through the
identical forward computation (sharing its dropout masks). The trainer runs
the same code over whole minibatches: per-bag index arrays are precomputed
once, embeddings are gathered in one lookup, and a single fused kernel call
handles the convolution/pooling of all sentences in the batch.
"""

import json
from dataclasses import dataclass, replace

import numpy as np

from . import kernels as _kernels
from ._pykernels import convolve_sentence, pool_segments
from .channel import PROB_FLOOR
from .data import Bag, Sentence
from .seeding import as_generator

SELECTORS = ("mean", "max", "attention")
PARAM_NAMES = (
    "word_emb",
    "pos_head",
    "pos_tail",
    "kernels",
    "conv_bias",
    "rel_emb",
    "head_bias",
    "attn_diag",
)

CHECKPOINT_MAGIC = b"NEMCKPT1\n"


class EncoderError(ValueError):
    """Invalid encoder configuration or input."""


class CheckpointError(ValueError):
    """Unreadable or incompatible parameter checkpoint."""


@dataclass(frozen=True)
class EncoderConfig:
    vocab_size: int
    n_relations: int
    word_dim: int = 50
    pos_dim: int = 5
    win: int = 3
    n_kernels: int = 230
    max_len: int = 120
    dropout: float = 0.5

    def __post_init__(self):
        if self.vocab_size < 3 or self.n_relations < 2:
            raise EncoderError("vocab_size and n_relations too small")
        if min(self.word_dim, self.pos_dim, self.win, self.n_kernels, self.max_len) < 1:
            raise EncoderError("encoder dimensions must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise EncoderError("dropout must lie in [0, 1)")

    @property
    def token_dim(self) -> int:
        return self.word_dim + 2 * self.pos_dim

    @property
    def feature_dim(self) -> int:
        # bag encodings and relation embeddings share this size
        return 3 * self.n_kernels

    @property
    def n_positions(self) -> int:
        return 2 * self.max_len + 1

    def to_json(self) -> dict:
        return {
            "vocab_size": self.vocab_size,
            "n_relations": self.n_relations,
            "word_dim": self.word_dim,
            "pos_dim": self.pos_dim,
            "win": self.win,
            "n_kernels": self.n_kernels,
            "max_len": self.max_len,
            "dropout": self.dropout,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "EncoderConfig":
        return cls(**obj)


@dataclass
class EncoderParams:
    config: EncoderConfig
    catalog_hash: str
    word_emb: np.ndarray
    pos_head: np.ndarray
    pos_tail: np.ndarray
    kernels: np.ndarray
    conv_bias: np.ndarray
    rel_emb: np.ndarray
    head_bias: np.ndarray
    attn_diag: np.ndarray

    def tensors(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in PARAM_NAMES}

    def copy(self) -> "EncoderParams":
        return replace(self, **{n: getattr(self, n).copy() for n in PARAM_NAMES})


def _glorot(rng, shape, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def init_params(config: EncoderConfig, rng, catalog_hash: str = "") -> EncoderParams:
    """Seeded uniform initialization; biases zero, attention diagonal one."""
    rng = as_generator(rng)
    c = config
    d_e = c.token_dim
    d_r = c.feature_dim
    return EncoderParams(
        config=c,
        catalog_hash=catalog_hash,
        word_emb=_glorot(rng, (c.vocab_size, c.word_dim), c.vocab_size, c.word_dim),
        pos_head=_glorot(rng, (c.n_positions, c.pos_dim), c.n_positions, c.pos_dim),
        pos_tail=_glorot(rng, (c.n_positions, c.pos_dim), c.n_positions, c.pos_dim),
        kernels=_glorot(rng, (c.n_kernels, c.win, d_e), c.win * d_e, c.n_kernels),
        conv_bias=np.zeros(c.n_kernels),
        rel_emb=_glorot(rng, (c.n_relations, d_r), d_r, c.n_relations),
        head_bias=np.zeros(c.n_relations),
        attn_diag=np.ones(d_r),
    )


def zero_grads(params: EncoderParams) -> dict[str, np.ndarray]:
    return {name: np.zeros_like(getattr(params, name)) for name in PARAM_NAMES}


# ---------------------------------------------------------------------------
# checkpoint format: magic line, JSON header line, raw row-major float64 bytes


def save_params(params: EncoderParams, path, selector: str | None = None) -> None:
    header = {
        "catalog_hash": params.catalog_hash,
        "config": params.config.to_json(),
        "selector": selector,
        "arrays": [
            {"name": n, "shape": list(getattr(params, n).shape)} for n in PARAM_NAMES
        ],
    }
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(json.dumps(header, sort_keys=True, separators=(",", ":")).encode())
        fh.write(b"\n")
        for name in PARAM_NAMES:
            fh.write(np.ascontiguousarray(getattr(params, name), dtype=np.float64).tobytes())


def load_params(path, expected_catalog_hash: str | None = None) -> tuple[EncoderParams, str | None]:
    with open(path, "rb") as fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise CheckpointError(f"{path}: not a parameter checkpoint")
        header = json.loads(fh.readline().decode())
        if expected_catalog_hash is not None and header["catalog_hash"] != expected_catalog_hash:
            raise CheckpointError(
                f"{path}: checkpoint was trained against a different relation catalog"
            )
        config = EncoderConfig.from_json(header["config"])
        arrays = {}
        for entry in header["arrays"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            buf = fh.read(count * 8)
            if len(buf) != count * 8:
                raise CheckpointError(f"{path}: truncated array {entry['name']}")
            arrays[entry["name"]] = np.frombuffer(buf, dtype=np.float64).reshape(shape).copy()
    missing = set(PARAM_NAMES) - set(arrays)
    if missing:
        raise CheckpointError(f"{path}: missing arrays {sorted(missing)}")
    params = EncoderParams(config=config, catalog_hash=header["catalog_hash"], **arrays)
    _check_shapes(params)
    return params, header.get("selector")


def _check_shapes(params: EncoderParams) -> None:
    c = params.config
    expected = {
        "word_emb": (c.vocab_size, c.word_dim),
        "pos_head": (c.n_positions, c.pos_dim),
        "pos_tail": (c.n_positions, c.pos_dim),
        "kernels": (c.n_kernels, c.win, c.token_dim),
        "conv_bias": (c.n_kernels,),
        "rel_emb": (c.n_relations, c.feature_dim),
        "head_bias": (c.n_relations,),
        "attn_diag": (c.feature_dim,),
    }
    for name, shape in expected.items():
        got = getattr(params, name).shape
        if got != shape:
            raise CheckpointError(f"array {name}: shape {got} != expected {shape}")


# ---------------------------------------------------------------------------
# embedding and bag indexing


def _position_indices(m: int, anchor: int, max_len: int) -> np.ndarray:
    offsets = np.clip(np.arange(m) - anchor, -max_len, max_len)
    return offsets + max_len


@dataclass(frozen=True)
class BagIndex:
    """Precomputed lookup indices for one bag; fixed across training."""

    tok: np.ndarray  # (sum_m,) token ids of all sentences back to back
    hp: np.ndarray  # (sum_m,) head-relative position table rows
    tp: np.ndarray  # (sum_m,) tail-relative position table rows
    offsets: np.ndarray  # (n+1,) sentence row offsets within the bag block
    heads: np.ndarray  # (n,) head token position per sentence
    tails: np.ndarray  # (n,) tail token position per sentence


def bag_index(config: EncoderConfig, bag: Bag) -> BagIndex:
    toks, hps, tps, heads, tails = [], [], [], [], []
    offsets = [0]
    for s in bag.sentences:
        m = len(s)
        toks.append(s.tokens)
        hps.append(_position_indices(m, s.head_pos, config.max_len))
        tps.append(_position_indices(m, s.tail_pos, config.max_len))
        heads.append(s.head_pos)
        tails.append(s.tail_pos)
        offsets.append(offsets[-1] + m)
    tok = np.concatenate(toks)
    if tok.min() < 0 or tok.max() >= config.vocab_size:
        raise EncoderError(f"bag {bag.id}: token id outside vocabulary")
    return BagIndex(
        tok=tok,
        hp=np.concatenate(hps),
        tp=np.concatenate(tps),
        offsets=np.asarray(offsets, dtype=np.int64),
        heads=np.asarray(heads, dtype=np.int64),
        tails=np.asarray(tails, dtype=np.int64),
    )


def embed_sentence(params: EncoderParams, s: Sentence) -> np.ndarray:
    """Rows concatenate word embedding and the two relative-position embeddings."""
    c = params.config
    tokens = s.tokens
    if tokens.min() < 0 or tokens.max() >= c.vocab_size:
        raise EncoderError(f"token id outside vocabulary of size {c.vocab_size}")
    hp = _position_indices(len(s), s.head_pos, c.max_len)
    tp = _position_indices(len(s), s.tail_pos, c.max_len)
    return np.concatenate(
        [params.word_emb[tokens], params.pos_head[hp], params.pos_tail[tp]], axis=1
    )


# ---------------------------------------------------------------------------
# single-sentence reference ops (composed by forward; kept callable for tests)


def convolve(params: EncoderParams, E: np.ndarray) -> np.ndarray:
    """Wide convolution of one embedded sentence: (n_kernels, m + win - 1)."""
    return convolve_sentence(np.asarray(E, dtype=np.float64), params.kernels, params.conv_bias)


def piecewise_maxpool(U: np.ndarray, s: Sentence) -> np.ndarray:
    """Three-segment max pooling of a conv output; empty segments pool to 0.

    The window length is implied by the column count (m + win - 1).
    """
    m = len(s)
    win = U.shape[1] - m + 1
    if win < 1:
        raise EncoderError(f"conv output has {U.shape[1]} columns for {m} tokens")
    g, _ = pool_segments(U, m, win, s.head_pos, s.tail_pos)
    return g


def encode_sentence(params: EncoderParams, s: Sentence, mode: str = "eval", rng_seed: int = 0):
    """ReLU(pooled conv features), with inverted dropout in train mode."""
    g = piecewise_maxpool(convolve(params, embed_sentence(params, s)), s)
    v = np.maximum(g, 0.0)
    c = params.config
    if mode == "train" and c.dropout > 0.0:
        keep = 1.0 - c.dropout
        mask = (as_generator(rng_seed).random(c.feature_dim) < keep) / keep
        v = v * mask
    return v


# ---------------------------------------------------------------------------
# selectors


def select_mean(V: np.ndarray) -> np.ndarray:
    if V.shape[0] < 1:
        raise EncoderError("empty bag")
    return V.mean(axis=0)


def select_max(V: np.ndarray) -> np.ndarray:
    if V.shape[0] < 1:
        raise EncoderError("empty bag")
    return V.max(axis=0)


def _softmax_columns(scores: np.ndarray) -> np.ndarray:
    shifted = scores - scores.max(axis=0, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=0, keepdims=True)


def select_attention(params: EncoderParams, V: np.ndarray) -> np.ndarray:
    """One weighted sum per relation; weights softmax diagonal-bilinear scores."""
    if V.shape[0] < 1:
        raise EncoderError("empty bag")
    if V.shape[1] != params.rel_emb.shape[1]:
        raise EncoderError(
            f"sentence vectors ({V.shape[1]}) and relation embeddings "
            f"({params.rel_emb.shape[1]}) are not dot-product compatible"
        )
    scores = V @ (params.attn_diag * params.rel_emb).T  # (n, R)
    alpha = _softmax_columns(scores)
    return alpha.T @ V  # (R, feature_dim)


def classify(params: EncoderParams, enc: np.ndarray) -> np.ndarray:
    """Per-relation sigmoid of rel_emb . encoding + bias."""
    if enc.ndim == 1:
        logits = params.rel_emb @ enc + params.head_bias
    else:
        logits = np.einsum("rd,rd->r", params.rel_emb, enc) + params.head_bias
    return _sigmoid(logits)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def soft_cross_entropy(probs: np.ndarray, targets: np.ndarray) -> float:
    p = np.clip(probs, PROB_FLOOR, 1.0 - PROB_FLOOR)
    return float(-np.sum(targets * np.log(p) + (1.0 - targets) * np.log(1.0 - p)))


# ---------------------------------------------------------------------------
# batched pipeline (forward and reverse accumulation)


def run_batch(
    params: EncoderParams,
    indices: list[BagIndex],
    selector: str,
    mode: str = "eval",
    rng=None,
    targets: np.ndarray | None = None,
    grads: dict[str, np.ndarray] | None = None,
):
    """Forward (and optionally backward) over a batch of bags.

    Returns (probs, loss_sum): probs has one row per bag; loss_sum is the
    summed soft-target cross-entropy when ``targets`` is given, else None.
    When ``grads`` is passed, parameter gradients of the summed loss are
    accumulated into it in place. Dropout masks are drawn from ``rng`` one
    sentence at a time, in bag order.
    """
    if selector not in SELECTORS:
        raise EncoderError(f"unknown selector {selector!r}")
    c = params.config
    B = len(indices)
    R = c.n_relations
    D = c.feature_dim

    # stitch the per-bag index arrays into one batch block
    tok = np.concatenate([ix.tok for ix in indices])
    hp = np.concatenate([ix.hp for ix in indices])
    tp = np.concatenate([ix.tp for ix in indices])
    heads = np.concatenate([ix.heads for ix in indices])
    tails = np.concatenate([ix.tails for ix in indices])
    sent_counts = [len(ix.heads) for ix in indices]
    offsets_list = []
    row_base = 0
    for ix in indices:
        offsets_list.append(ix.offsets[:-1] + row_base)
        row_base += int(ix.offsets[-1])
    offsets = np.concatenate(offsets_list + [np.asarray([row_base], dtype=np.int64)])

    E = np.ascontiguousarray(
        np.concatenate(
            [params.word_emb[tok], params.pos_head[hp], params.pos_tail[tp]], axis=1
        )
    )
    G, ARG = _kernels.conv_pool_forward(E, offsets, heads, tails, params.kernels,
                                        params.conv_bias)
    relu = np.maximum(G, 0.0)
    if mode == "train" and c.dropout > 0.0:
        keep = 1.0 - c.dropout
        mask = (as_generator(rng if rng is not None else 0).random(G.shape) < keep) / keep
        V = relu * mask
    else:
        mask = None
        V = relu

    probs = np.empty((B, R))
    want_grads = grads is not None
    dV = np.zeros_like(V) if want_grads else None
    loss_sum = 0.0 if targets is not None else None

    s0 = 0
    for b in range(B):
        s1 = s0 + sent_counts[b]
        Vb = V[s0:s1]
        n = Vb.shape[0]
        if selector == "mean":
            enc_b = Vb.mean(axis=0)
            logits = params.rel_emb @ enc_b + params.head_bias
        elif selector == "max":
            max_idx = np.argmax(Vb, axis=0)
            enc_b = Vb[max_idx, np.arange(D)]
            logits = params.rel_emb @ enc_b + params.head_bias
        else:
            scores = Vb @ (params.attn_diag * params.rel_emb).T  # (n, R)
            alpha = _softmax_columns(scores)
            enc_b = alpha.T @ Vb  # (R, D)
            logits = np.einsum("rd,rd->r", params.rel_emb, enc_b) + params.head_bias
        p = _sigmoid(logits)
        probs[b] = p

        if targets is not None:
            q = targets[b]
            loss_sum += soft_cross_entropy(p, q)
            if want_grads:
                delta = p - q  # dL/dlogit
                grads["head_bias"] += delta
                if selector == "mean":
                    grads["rel_emb"] += np.outer(delta, enc_b)
                    dV[s0:s1] += (params.rel_emb.T @ delta) / n
                elif selector == "max":
                    grads["rel_emb"] += np.outer(delta, enc_b)
                    dV[s0 + max_idx, np.arange(D)] += params.rel_emb.T @ delta
                else:
                    grads["rel_emb"] += delta[:, None] * enc_b
                    d_enc = delta[:, None] * params.rel_emb  # (R, D)
                    d_alpha = Vb @ d_enc.T  # (n, R)
                    d_scores = alpha * (
                        d_alpha - np.sum(alpha * d_alpha, axis=0, keepdims=True)
                    )
                    dV[s0:s1] += alpha @ d_enc + d_scores @ (params.attn_diag * params.rel_emb)
                    vtds = Vb.T @ d_scores  # (D, R)
                    grads["attn_diag"] += np.sum(vtds.T * params.rel_emb, axis=0)
                    grads["rel_emb"] += vtds.T * params.attn_diag
        s0 = s1

    if want_grads:
        dG = dV if mask is None else dV * mask
        dG *= G > 0.0
        dK, db, dE = _kernels.conv_pool_backward(
            E, offsets, params.kernels, ARG, np.ascontiguousarray(dG)
        )
        grads["kernels"] += dK
        grads["conv_bias"] += db
        wd = c.word_dim
        pd = c.pos_dim
        np.add.at(grads["word_emb"], tok, dE[:, :wd])
        np.add.at(grads["pos_head"], hp, dE[:, wd : wd + pd])
        np.add.at(grads["pos_tail"], tp, dE[:, wd + pd :])

    return probs, loss_sum


def forward(
    params: EncoderParams, bag: Bag, selector: str, mode: str = "eval", rng_seed: int = 0
) -> np.ndarray:
    """Per-relation probabilities p(label r applies | bag)."""
    probs, _ = run_batch(
        params, [bag_index(params.config, bag)], selector, mode, as_generator(rng_seed)
    )
    return probs[0]


def backward(
    params: EncoderParams,
    bag: Bag,
    selector: str,
    soft_targets,
    mode: str = "eval",
    rng_seed: int = 0,
) -> dict[str, np.ndarray]:
    """Exact gradients of the soft-target cross-entropy for one bag.

    Shares its dropout masks with the forward pass of the same rng_seed.
    """
    grads = zero_grads(params)
    targets = np.asarray(soft_targets, dtype=np.float64)[None, :]
    run_batch(
        params,
        [bag_index(params.config, bag)],
        selector,
        mode,
        as_generator(rng_seed),
        targets=targets,
        grads=grads,
    )
    return grads
