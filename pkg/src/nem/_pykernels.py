"""Pure-numpy convolution/pooling kernels.

Reference implementation of the hot path: wide 1-D convolution over token
embeddings followed by three-way max pooling split at the entity positions.
``nem.kernels`` prefers the compiled extension and falls back to this module.

Indexing convention (0-based): the convolution output for a sentence of m
tokens has ``cols = m + win - 1`` columns; column c covers tokens
``[c - win + 1, c]`` with zero padding outside the sentence. With entity
positions a <= b the pooling segments are ``[0, a)``, ``[a, b + win)`` and
``[b + win, cols)``, so every column whose window touches an entity lands in
the middle segment; an empty outer segment pools to 0.
"""

import numpy as np

BACKEND = "python"


def conv_columns(E: np.ndarray, win: int) -> np.ndarray:
    """im2col: stacked windows, shape (m + win - 1, win * d_e)."""
    m, d_e = E.shape
    padded = np.zeros((m + 2 * (win - 1), d_e), dtype=np.float64)
    padded[win - 1 : win - 1 + m] = E
    windows = np.lib.stride_tricks.sliding_window_view(padded, (win, d_e))[:, 0]
    return windows.reshape(m + win - 1, win * d_e)


def convolve_sentence(E: np.ndarray, kernels: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Wide convolution; returns (n_kernels, m + win - 1)."""
    n_ker, win, d_e = kernels.shape
    cols = conv_columns(np.asarray(E, dtype=np.float64), win)
    return kernels.reshape(n_ker, win * d_e) @ cols.T + bias[:, None]


def segment_bounds(m: int, win: int, e1: int, e2: int) -> list[tuple[int, int]]:
    """Half-open column ranges of the three pooling segments."""
    a, b = (e1, e2) if e1 <= e2 else (e2, e1)
    cols = m + win - 1
    return [(0, a), (a, b + win), (b + win, cols)]


def pool_segments(U: np.ndarray, m: int, win: int, e1: int, e2: int):
    """Per-segment max of each kernel row.

    Returns (g, arg) of length 3 * n_kernels in [left | middle | right]
    block order; ``arg`` holds the winning column or -1 for empty segments.
    """
    n_ker = U.shape[0]
    g = np.zeros(3 * n_ker, dtype=np.float64)
    arg = np.full(3 * n_ker, -1, dtype=np.int64)
    for p, (lo, hi) in enumerate(segment_bounds(m, win, e1, e2)):
        if hi > lo:
            seg = U[:, lo:hi]
            idx = np.argmax(seg, axis=1)
            g[p * n_ker : (p + 1) * n_ker] = seg[np.arange(n_ker), idx]
            arg[p * n_ker : (p + 1) * n_ker] = lo + idx
    return g, arg


def conv_pool_forward(E_cat, offsets, heads, tails, kernels, bias):
    """Fused conv+pool over the concatenated sentences of a bag or batch.

    E_cat: (sum_m, d_e) embeddings of all sentences back to back;
    offsets: (n+1,) row offsets of each sentence; heads/tails: (n,) entity
    token positions within each sentence. Returns (G, ARG) of shape
    (n, 3 * n_kernels).
    """
    n = len(offsets) - 1
    n_ker, win, _ = kernels.shape
    G = np.zeros((n, 3 * n_ker), dtype=np.float64)
    ARG = np.full((n, 3 * n_ker), -1, dtype=np.int64)
    for k in range(n):
        E = E_cat[offsets[k] : offsets[k + 1]]
        U = convolve_sentence(E, kernels, bias)
        G[k], ARG[k] = pool_segments(U, E.shape[0], win, int(heads[k]), int(tails[k]))
    return G, ARG


def conv_pool_backward(E_cat, offsets, kernels, ARG, dG):
    """Gradients of the fused forward w.r.t. kernels, bias, and embeddings.

    Only the argmax column of each (sentence, segment, kernel) cell carries
    gradient, so the backward pass scatters dG through those columns: for a
    winning column c of kernel i in sentence k, window row w touches token
    t = c - win + 1 + w, adding dG * E[t] to dK[i, w] and dG * K[i, w] to
    dE[t] (positions outside the sentence were zero padding).
    """
    n_ker, win, d_e = kernels.shape
    dK = np.zeros_like(kernels)
    db = np.zeros(n_ker, dtype=np.float64)
    dE = np.zeros_like(E_cat)

    sent, slot = np.nonzero((ARG >= 0) & (dG != 0.0))
    if sent.size == 0:
        return dK, db, dE
    kern = slot % n_ker
    col = ARG[sent, slot]
    gval = dG[sent, slot]
    np.add.at(db, kern, gval)

    start = np.asarray(offsets)[sent]
    length = np.asarray(offsets)[sent + 1] - start
    for w in range(win):
        t = col - win + 1 + w
        valid = (t >= 0) & (t < length)
        if not valid.any():
            continue
        rows = (start + t)[valid]
        np.add.at(dK, (kern[valid], w), gval[valid, None] * E_cat[rows])
        np.add.at(dE, rows, gval[valid, None] * kernels[kern[valid], w])
    return dK, db, dE
