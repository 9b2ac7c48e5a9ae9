# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled convolution/pooling kernels; semantics match nem._pykernels."""

import numpy as np

cimport numpy as cnp

cnp.import_array()

BACKEND = "cython"


def conv_pool_forward(
    double[:, ::1] E_cat,
    long[::1] offsets,
    long[::1] heads,
    long[::1] tails,
    double[:, :, ::1] kernels,
    double[::1] bias,
):
    cdef Py_ssize_t n = offsets.shape[0] - 1
    cdef Py_ssize_t n_ker = kernels.shape[0]
    cdef Py_ssize_t win = kernels.shape[1]
    cdef Py_ssize_t d_e = kernels.shape[2]

    G_arr = np.zeros((n, 3 * n_ker), dtype=np.float64)
    ARG_arr = np.full((n, 3 * n_ker), -1, dtype=np.int64)
    cdef double[:, ::1] G = G_arr
    cdef long[:, ::1] ARG = ARG_arr

    cdef Py_ssize_t k, lo, hi, m, cols, c, w, t, i, p, q, seg_lo, seg_hi, a, b
    cdef double acc, best
    cdef Py_ssize_t best_c
    # scratch for one sentence's conv output, reallocated on growth only
    cdef Py_ssize_t cap = 0
    U_arr = np.zeros((n_ker, 1), dtype=np.float64)
    cdef double[:, ::1] U = U_arr

    for k in range(n):
        lo = offsets[k]
        hi = offsets[k + 1]
        m = hi - lo
        cols = m + win - 1
        if cols > cap:
            cap = cols
            U_arr = np.zeros((n_ker, cap), dtype=np.float64)
            U = U_arr

        for i in range(n_ker):
            for c in range(cols):
                acc = bias[i]
                for w in range(win):
                    t = c - win + 1 + w
                    if 0 <= t < m:
                        for q in range(d_e):
                            acc += kernels[i, w, q] * E_cat[lo + t, q]
                U[i, c] = acc

        a = heads[k] if heads[k] <= tails[k] else tails[k]
        b = tails[k] if heads[k] <= tails[k] else heads[k]
        for p in range(3):
            if p == 0:
                seg_lo = 0
                seg_hi = a
            elif p == 1:
                seg_lo = a
                seg_hi = b + win
            else:
                seg_lo = b + win
                seg_hi = cols
            if seg_hi <= seg_lo:
                continue
            for i in range(n_ker):
                best = U[i, seg_lo]
                best_c = seg_lo
                for c in range(seg_lo + 1, seg_hi):
                    if U[i, c] > best:
                        best = U[i, c]
                        best_c = c
                G[k, p * n_ker + i] = best
                ARG[k, p * n_ker + i] = best_c
    return G_arr, ARG_arr


def conv_pool_backward(
    double[:, ::1] E_cat,
    long[::1] offsets,
    double[:, :, ::1] kernels,
    long[:, ::1] ARG,
    double[:, ::1] dG,
):
    cdef Py_ssize_t n = offsets.shape[0] - 1
    cdef Py_ssize_t n_ker = kernels.shape[0]
    cdef Py_ssize_t win = kernels.shape[1]
    cdef Py_ssize_t d_e = kernels.shape[2]

    dK_arr = np.zeros((n_ker, win, d_e), dtype=np.float64)
    db_arr = np.zeros(n_ker, dtype=np.float64)
    dE_arr = np.zeros((E_cat.shape[0], d_e), dtype=np.float64)
    cdef double[:, :, ::1] dK = dK_arr
    cdef double[::1] db = db_arr
    cdef double[:, ::1] dE = dE_arr

    cdef Py_ssize_t k, lo, m, p, base, i, c, w, t, q
    cdef double gval

    for k in range(n):
        lo = offsets[k]
        m = offsets[k + 1] - lo
        for p in range(3):
            base = p * n_ker
            for i in range(n_ker):
                gval = dG[k, base + i]
                if gval == 0.0:
                    continue
                c = ARG[k, base + i]
                if c < 0:
                    continue
                db[i] += gval
                for w in range(win):
                    t = c - win + 1 + w
                    if 0 <= t < m:
                        for q in range(d_e):
                            dK[i, w, q] += gval * E_cat[lo + t, q]
                            dE[lo + t, q] += gval * kernels[i, w, q]
    return dK_arr, db_arr, dE_arr
