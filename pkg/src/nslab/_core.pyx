# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled numerical kernels.

Bit-identical twins of the functions in ``_core_py``; see there for the
contracts. Build with floating-point contraction disabled.
"""
import numpy as np
cimport numpy as cnp

cnp.import_array()

cdef enum:
    MODE_MAX = 0
    MODE_MIN = 1
    MODE_CLOSEST = 2


def ordered_matmul(a, b):
    cdef const double[:, :] av = np.ascontiguousarray(a, dtype=np.float64)
    cdef const double[:, :] bv = np.ascontiguousarray(b, dtype=np.float64)
    if av.ndim != 2 or bv.ndim != 2 or av.shape[1] != bv.shape[0]:
        raise ValueError(f"shape mismatch: {np.shape(a)} @ {np.shape(b)}")
    cdef Py_ssize_t n = av.shape[0], k = av.shape[1], m = bv.shape[1]
    out = np.zeros((n, m))
    cdef double[:, :] ov = out
    cdef Py_ssize_t i, j, p
    cdef double aip
    with nogil:
        # p-middle loop order keeps per-entry accumulation ascending in p
        for i in range(n):
            for p in range(k):
                aip = av[i, p]
                for j in range(m):
                    ov[i, j] = ov[i, j] + aip * bv[p, j]
    return out


def segment_mean(rows, offsets):
    cdef const double[:, :] rv = np.ascontiguousarray(rows, dtype=np.float64)
    cdef const cnp.int64_t[:] ov = np.ascontiguousarray(offsets, dtype=np.int64)
    cdef Py_ssize_t ns = ov.shape[0] - 1, d = rv.shape[1]
    cdef Py_ssize_t s, r, c
    for s in range(ns):
        if ov[s + 1] - ov[s] < 1:
            raise ValueError("empty segment")
    out = np.zeros((ns, d))
    cdef double[:, :] outv = out
    cdef double length
    with nogil:
        for s in range(ns):
            for r in range(ov[s], ov[s + 1]):
                for c in range(d):
                    outv[s, c] = outv[s, c] + rv[r, c]
            length = <double>(ov[s + 1] - ov[s])
            for c in range(d):
                outv[s, c] = outv[s, c] / length
    return out


def scatter_add_rows(double[:, :] target, indices, values):
    cdef const cnp.int64_t[:] iv = np.ascontiguousarray(indices, dtype=np.int64)
    cdef const double[:, :] vv = np.ascontiguousarray(values, dtype=np.float64)
    cdef Py_ssize_t m, c, row, d = target.shape[1], nrows = target.shape[0]
    for m in range(iv.shape[0]):
        if iv[m] < 0 or iv[m] >= nrows:
            raise IndexError(f"row index {iv[m]} out of range")
    with nogil:
        for m in range(iv.shape[0]):
            row = iv[m]
            for c in range(d):
                target[row, c] = target[row, c] + vv[m, c]


def row_select(m, int mode):
    cdef const double[:, :] mv = np.ascontiguousarray(m, dtype=np.float64)
    cdef Py_ssize_t n = mv.shape[0]
    if mv.shape[1] != n or n < 2:
        raise ValueError(f"need a square matrix with n >= 2, got {np.shape(m)}")
    if mode not in (MODE_MAX, MODE_MIN, MODE_CLOSEST):
        raise ValueError(f"unknown selection mode {mode}")
    out = np.empty(n, dtype=np.int64)
    cdef cnp.int64_t[:] res = out
    cdef Py_ssize_t i, c, best_c
    cdef double best, val, diag
    with nogil:
        for i in range(n):
            best_c = -1
            best = 0.0
            diag = mv[i, i]
            for c in range(n):
                if c == i:
                    continue
                if mode == MODE_CLOSEST:
                    val = mv[i, c] - diag
                    if val < 0:
                        val = -val
                else:
                    val = mv[i, c]
                if best_c < 0:
                    best_c = c
                    best = val
                elif mode == MODE_MAX:
                    if val > best:
                        best_c = c
                        best = val
                elif val < best:
                    best_c = c
                    best = val
            res[i] = best_c
    return out


def mean_max_scores(a_rows, a_off, b_rows, b_off):
    cdef const double[:, :] av = np.ascontiguousarray(a_rows, dtype=np.float64)
    cdef const double[:, :] bv = np.ascontiguousarray(b_rows, dtype=np.float64)
    cdef const cnp.int64_t[:] aoff = np.ascontiguousarray(a_off, dtype=np.int64)
    cdef const cnp.int64_t[:] boff = np.ascontiguousarray(b_off, dtype=np.int64)
    cdef Py_ssize_t na = aoff.shape[0] - 1, nb = boff.shape[0] - 1
    cdef Py_ssize_t nw = bv.shape[0], d = av.shape[1]
    if bv.shape[1] != d:
        raise ValueError("dimension mismatch")
    cdef Py_ssize_t i, j, t, w, c, best_t
    for i in range(na):
        if aoff[i + 1] - aoff[i] < 1:
            raise ValueError("empty segment")
    for j in range(nb):
        if boff[j + 1] - boff[j] < 1:
            raise ValueError("empty segment")
    scores = np.zeros((na, nb))
    arg = np.empty((na, nw), dtype=np.int64)
    cdef double[:, :] sv = scores
    cdef cnp.int64_t[:, :] argv = arg
    cdef double acc, best, total
    with nogil:
        for i in range(na):
            for j in range(nb):
                total = 0.0
                for w in range(boff[j], boff[j + 1]):
                    best_t = -1
                    best = 0.0
                    for t in range(aoff[i], aoff[i + 1]):
                        acc = 0.0
                        for c in range(d):
                            acc = acc + av[t, c] * bv[w, c]
                        if best_t < 0 or acc > best:
                            best_t = t
                            best = acc
                    argv[i, w] = best_t
                    total = total + best
                sv[i, j] = total / <double>(boff[j + 1] - boff[j])
    return scores, arg


def mean_max_backward(d_scores, arg, a_rows, a_off, b_rows, b_off):
    cdef const double[:, :] dsv = np.ascontiguousarray(d_scores, dtype=np.float64)
    cdef const cnp.int64_t[:, :] argv = np.ascontiguousarray(arg, dtype=np.int64)
    cdef const double[:, :] av = np.ascontiguousarray(a_rows, dtype=np.float64)
    cdef const double[:, :] bv = np.ascontiguousarray(b_rows, dtype=np.float64)
    cdef const cnp.int64_t[:] boff = np.ascontiguousarray(b_off, dtype=np.int64)
    cdef Py_ssize_t na = dsv.shape[0], nb = boff.shape[0] - 1, d = av.shape[1]
    d_a = np.zeros((av.shape[0], d))
    d_b = np.zeros((bv.shape[0], d))
    cdef double[:, :] dav = d_a
    cdef double[:, :] dbv = d_b
    cdef Py_ssize_t i, j, w, t, c
    cdef double coef
    with nogil:
        for i in range(na):
            for j in range(nb):
                for w in range(boff[j], boff[j + 1]):
                    coef = dsv[i, j] / <double>(boff[j + 1] - boff[j])
                    t = argv[i, w]
                    for c in range(d):
                        dbv[w, c] = dbv[w, c] + coef * av[t, c]
                        dav[t, c] = dav[t, c] + coef * bv[w, c]
    return d_a, d_b


def relevant_ranks(scores, cand_ids, relevant):
    cdef const double[:, :] sv = np.ascontiguousarray(scores, dtype=np.float64)
    cdef const cnp.int64_t[:] idv = np.ascontiguousarray(cand_ids, dtype=np.int64)
    cdef const cnp.int64_t[:, :] relv = np.ascontiguousarray(relevant, dtype=np.int64)
    cdef Py_ssize_t nq = relv.shape[0], nr = relv.shape[1], nc = sv.shape[1]
    out = np.empty((nq, nr), dtype=np.int64)
    cdef cnp.int64_t[:, :] ov = out
    cdef Py_ssize_t q, r, c, rel
    cdef cnp.int64_t ahead, rel_id
    cdef double rel_s
    with nogil:
        for q in range(nq):
            for r in range(nr):
                rel = relv[q, r]
                rel_s = sv[q, rel]
                rel_id = idv[rel]
                ahead = 0
                for c in range(nc):
                    if sv[q, c] > rel_s or (sv[q, c] == rel_s and idv[c] < rel_id):
                        ahead += 1
                ov[q, r] = ahead + 1
    return out
