"""Brute-force reference implementations used only by the tests.

Everything here recomputes results from first principles: enumeration over
all label vectors, direct-loop convolution/pooling/attention, and central
finite differences. No computational code is shared with the library; only
its data types are consumed (plain arrays and parameter containers).
"""

import numpy as np

DEFAULT_MAX_RELATIONS = 10


class EnumerationBudgetError(ValueError):
    """Requested enumeration exceeds the exhaustive-search budget."""


def all_label_vectors(n: int, max_relations: int = DEFAULT_MAX_RELATIONS) -> np.ndarray:
    """All 2^n label vectors as a (2^n, n) array, ordered by integer value."""
    if n > max_relations:
        raise EnumerationBudgetError(f"{n} relations exceed budget {max_relations}")
    grid = np.arange(2**n)
    return ((grid[:, None] >> np.arange(n)[None, :]) & 1).astype(np.uint8)


def _channel_entry(phi0, phi1, r, y_bit, z_bit) -> float:
    if y_bit == 0:
        return phi0[r] if z_bit == 1 else 1.0 - phi0[r]
    return phi1[r] if z_bit == 0 else 1.0 - phi1[r]


def exact_marginal(channel, prior, z, max_relations: int = DEFAULT_MAX_RELATIONS) -> float:
    """p(z | bag) by summing the joint over every possible label vector."""
    phi0 = np.asarray(channel.phi0, dtype=float)
    phi1 = np.asarray(channel.phi1, dtype=float)
    prior = np.asarray(prior, dtype=float)
    z = np.asarray(z)
    n = len(prior)
    total = 0.0
    for y in all_label_vectors(n, max_relations):
        p = 1.0
        for r in range(n):
            p_y = prior[r] if y[r] == 1 else 1.0 - prior[r]
            p *= p_y * _channel_entry(phi0, phi1, r, int(y[r]), int(z[r]))
        total += p
    return total


def exact_posterior(channel, prior, z, max_relations: int = DEFAULT_MAX_RELATIONS) -> np.ndarray:
    """p(y | bag, z) over all 2^n label vectors, in all_label_vectors order."""
    phi0 = np.asarray(channel.phi0, dtype=float)
    phi1 = np.asarray(channel.phi1, dtype=float)
    prior = np.asarray(prior, dtype=float)
    z = np.asarray(z)
    n = len(prior)
    joint = np.empty(2**n)
    for i, y in enumerate(all_label_vectors(n, max_relations)):
        p = 1.0
        for r in range(n):
            p_y = prior[r] if y[r] == 1 else 1.0 - prior[r]
            p *= p_y * _channel_entry(phi0, phi1, r, int(y[r]), int(z[r]))
        joint[i] = p
    total = joint.sum()
    if total <= 0.0:
        raise ZeroDivisionError("all label vectors have probability zero")
    return joint / total


def posterior_marginals(posterior: np.ndarray, n: int) -> np.ndarray:
    """P(y_r = 1) per relation from an exact joint posterior."""
    vectors = all_label_vectors(n)
    return np.array([posterior[vectors[:, r] == 1].sum() for r in range(n)])


def fd_gradient(f, x: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar function of a 1-D array."""
    if step <= 0:
        raise ValueError("step must be positive")
    x = np.asarray(x, dtype=float)
    grad = np.empty_like(x)
    for i in range(x.size):
        hi = x.copy()
        lo = x.copy()
        hi[i] += step
        lo[i] -= step
        f_hi = f(hi)
        f_lo = f(lo)
        if not (np.isfinite(f_hi) and np.isfinite(f_lo)):
            raise FloatingPointError(f"non-finite loss at coordinate {i}")
        grad[i] = (f_hi - f_lo) / (2.0 * step)
    return grad


def fd_param_gradient(loss_fn, params, name: str, flat_index: int, step: float = 1e-5) -> float:
    """Central difference w.r.t. one coordinate of one parameter tensor."""
    plus = params.copy()
    minus = params.copy()
    getattr(plus, name).flat[flat_index] += step
    getattr(minus, name).flat[flat_index] -= step
    return (loss_fn(plus) - loss_fn(minus)) / (2.0 * step)


# ---------------------------------------------------------------------------
# straight-line re-implementation of the encoder pipeline


def pipeline_probs(params, bag, selector: str) -> np.ndarray:
    """Re-derive forward() output with explicit loops (eval mode only)."""
    c = params.config
    V = []
    for s in bag.sentences:
        m = len(s)
        E = np.zeros((m, c.token_dim))
        for j in range(m):
            off_h = min(max(j - s.head_pos, -c.max_len), c.max_len) + c.max_len
            off_t = min(max(j - s.tail_pos, -c.max_len), c.max_len) + c.max_len
            E[j] = np.concatenate(
                [
                    params.word_emb[int(s.tokens[j])],
                    params.pos_head[off_h],
                    params.pos_tail[off_t],
                ]
            )
        cols = m + c.win - 1
        U = np.zeros((c.n_kernels, cols))
        for i in range(c.n_kernels):
            for col in range(cols):
                acc = params.conv_bias[i]
                for w in range(c.win):
                    t = col - c.win + 1 + w
                    if 0 <= t < m:
                        acc += float(np.dot(params.kernels[i, w], E[t]))
                U[i, col] = acc
        first = min(s.head_pos, s.tail_pos)
        second = max(s.head_pos, s.tail_pos)
        segments = [
            range(0, first),
            range(first, second + c.win),
            range(second + c.win, cols),
        ]
        g = np.zeros(3 * c.n_kernels)
        for p, seg in enumerate(segments):
            for i in range(c.n_kernels):
                g[p * c.n_kernels + i] = max((U[i, col] for col in seg), default=0.0)
        V.append(np.maximum(g, 0.0))
    V = np.stack(V)
    n = V.shape[0]

    def head(x_bar, r):
        logit = float(np.dot(params.rel_emb[r], x_bar)) + params.head_bias[r]
        return 1.0 / (1.0 + np.exp(-logit))

    R = c.n_relations
    out = np.zeros(R)
    if selector == "mean":
        x_bar = V.sum(axis=0) / n
        for r in range(R):
            out[r] = head(x_bar, r)
    elif selector == "max":
        x_bar = np.array([max(V[k, j] for k in range(n)) for j in range(V.shape[1])])
        for r in range(R):
            out[r] = head(x_bar, r)
    else:
        for r in range(R):
            scores = np.array(
                [float(np.dot(V[k], params.attn_diag * params.rel_emb[r])) for k in range(n)]
            )
            e = np.exp(scores - scores.max())
            alpha = e / e.sum()
            x_bar_r = sum(alpha[k] * V[k] for k in range(n))
            out[r] = head(x_bar_r, r)
    return out
