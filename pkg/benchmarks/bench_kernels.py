"""Benchmark the compiled convolution/pooling kernels against the numpy fallback.

Times the fused forward and backward passes on synthetic batches shaped like
the training workload (variable-length sentences, desk-scale kernel bank) and
reports the per-call speedup. Run as::

    python benchmarks/bench_kernels.py [--repeats 50]
"""

import argparse
import time

import numpy as np

from nem import _pykernels
from nem import kernels as selected


def make_batch(rng, n_sentences, d_e, win, n_ker, min_len=6, max_len=16):
    lengths = rng.integers(min_len, max_len + 1, size=n_sentences)
    offsets = np.concatenate([[0], np.cumsum(lengths)]).astype(np.int64)
    E = rng.standard_normal((int(offsets[-1]), d_e))
    heads = np.array([rng.integers(0, m) for m in lengths], dtype=np.int64)
    tails = np.array(
        [rng.choice([i for i in range(m) if i != h] or [h]) for m, h in zip(lengths, heads)],
        dtype=np.int64,
    )
    kernels = rng.standard_normal((n_ker, win, d_e))
    bias = rng.standard_normal(n_ker)
    return E, offsets, heads, tails, kernels, bias


def time_backend(impl, batch, repeats):
    E, offsets, heads, tails, kernels, bias = batch
    G, ARG = impl.conv_pool_forward(E, offsets, heads, tails, kernels, bias)
    dG = np.sign(G) * 0.1

    start = time.perf_counter()
    for _ in range(repeats):
        impl.conv_pool_forward(E, offsets, heads, tails, kernels, bias)
    fwd = (time.perf_counter() - start) / repeats

    start = time.perf_counter()
    for _ in range(repeats):
        impl.conv_pool_backward(E, offsets, kernels, ARG, dG)
    bwd = (time.perf_counter() - start) / repeats
    return fwd, bwd, G


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=50)
    parser.add_argument("--sentences", type=int, default=192, help="sentences per batch")
    parser.add_argument("--kernels", type=int, default=32)
    parser.add_argument("--token-dim", type=int, default=24)
    parser.add_argument("--win", type=int, default=3)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    batch = make_batch(rng, args.sentences, args.token_dim, args.win, args.kernels)

    backends = [("python", _pykernels)]
    if selected.BACKEND == "cython":
        backends.append(("cython", selected))
    else:
        print("compiled extension not available; timing the fallback only")

    results = {}
    reference = None
    for name, impl in backends:
        fwd, bwd, G = time_backend(impl, batch, args.repeats)
        results[name] = (fwd, bwd)
        if reference is None:
            reference = G
        else:
            err = float(np.max(np.abs(G - reference)))
            assert err < 1e-9, f"backend outputs diverge: {err}"
        print(f"{name:>7}: forward {fwd * 1e3:8.3f} ms   backward {bwd * 1e3:8.3f} ms")

    if len(results) == 2:
        f_py, b_py = results["python"]
        f_cy, b_cy = results["cython"]
        print(f"speedup: forward {f_py / f_cy:5.1f}x   backward {b_py / b_cy:5.1f}x")


if __name__ == "__main__":
    main()
