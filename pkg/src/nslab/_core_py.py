"""Numpy reference implementation of the numerical kernels.

Each function fixes its floating-point accumulation order (ascending inner
index, plain add, no fused multiply-add) so that the compiled core in
``_core.pyx`` reproduces it bit for bit.
"""
from __future__ import annotations

import numpy as np

MODE_MAX = 0
MODE_MIN = 1
MODE_CLOSEST = 2


def ordered_matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``a @ b`` accumulated over the inner index in ascending order."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError(f"shape mismatch: {a.shape} @ {b.shape}")
    out = np.zeros((a.shape[0], b.shape[1]))
    for p in range(a.shape[1]):
        out += a[:, p, None] * b[None, p, :]
    return out


def segment_mean(rows: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    """Mean of each row segment ``rows[offsets[s]:offsets[s+1]]``.

    Rows are summed in ascending order, then divided by the segment length.
    Every segment must be non-empty.
    """
    rows = np.asarray(rows, dtype=np.float64)
    offsets = np.asarray(offsets, dtype=np.int64)
    starts = offsets[:-1]
    lengths = offsets[1:] - starts
    if np.any(lengths < 1):
        raise ValueError("empty segment")
    out = np.zeros((len(starts), rows.shape[1]))
    for p in range(int(lengths.max())):
        live = lengths > p
        out[live] += rows[starts[live] + p]
    return out / lengths[:, None].astype(np.float64)


def scatter_add_rows(target: np.ndarray, indices: np.ndarray, values: np.ndarray) -> None:
    """In place ``target[indices[m]] += values[m]`` for m ascending."""
    np.add.at(target, np.asarray(indices, dtype=np.int64), values)


def row_select(m: np.ndarray, mode: int) -> np.ndarray:
    """Per row i, the column c != i that is best under ``mode``.

    MODE_MAX picks the largest entry, MODE_MIN the smallest and MODE_CLOSEST
    the entry nearest to the diagonal value ``m[i, i]``. Ties go to the lowest
    column index.
    """
    m = np.asarray(m, dtype=np.float64)
    n = m.shape[0]
    if m.ndim != 2 or m.shape[1] != n or n < 2:
        raise ValueError(f"need a square matrix with n >= 2, got {m.shape}")
    diag = np.eye(n, dtype=bool)
    if mode == MODE_MAX:
        work = np.where(diag, -np.inf, m)
        return np.argmax(work, axis=1).astype(np.int64)
    if mode == MODE_MIN:
        work = np.where(diag, np.inf, m)
        return np.argmin(work, axis=1).astype(np.int64)
    if mode == MODE_CLOSEST:
        work = np.abs(m - np.diag(m)[:, None])
        work[diag] = np.inf
        return np.argmin(work, axis=1).astype(np.int64)
    raise ValueError(f"unknown selection mode {mode}")


def mean_max_scores(a_rows, a_off, b_rows, b_off):
    """Alignment scores between row-sequence sets A and B.

    ``scores[i, j]`` is the mean over rows w of B_j of the max over rows t of
    A_i of ``a_t . b_w``. Also returns ``arg[i, w]``, the global index in
    ``a_rows`` of the maximizing row of A_i for global row w of ``b_rows``.
    """
    a_rows = np.asarray(a_rows, dtype=np.float64)
    b_rows = np.asarray(b_rows, dtype=np.float64)
    a_off = np.asarray(a_off, dtype=np.int64)
    b_off = np.asarray(b_off, dtype=np.int64)
    prods = ordered_matmul(a_rows, b_rows.T)
    na = len(a_off) - 1
    best = np.empty((na, b_rows.shape[0]))
    arg = np.empty((na, b_rows.shape[0]), dtype=np.int64)
    for i in range(na):
        seg = prods[a_off[i] : a_off[i + 1]]
        if seg.shape[0] == 0:
            raise ValueError("empty segment")
        local = np.argmax(seg, axis=0)
        arg[i] = local + a_off[i]
        best[i] = seg[local, np.arange(seg.shape[1])]
    scores = segment_mean(best.T, b_off).T
    return np.ascontiguousarray(scores), arg


def mean_max_backward(d_scores, arg, a_rows, a_off, b_rows, b_off):
    """Gradients of ``sum(d_scores * mean_max_scores(...))`` w.r.t. A and B rows."""
    d_scores = np.asarray(d_scores, dtype=np.float64)
    a_rows = np.asarray(a_rows, dtype=np.float64)
    b_rows = np.asarray(b_rows, dtype=np.float64)
    b_off = np.asarray(b_off, dtype=np.int64)
    lengths = np.diff(b_off)
    owner = np.repeat(np.arange(len(lengths)), lengths)
    coef = d_scores[:, owner] / lengths[owner].astype(np.float64)
    d_a = np.zeros_like(a_rows)
    d_b = np.zeros_like(b_rows)
    for i in range(d_scores.shape[0]):
        d_b += coef[i][:, None] * a_rows[arg[i]]
        np.add.at(d_a, arg[i], coef[i][:, None] * b_rows)
    return d_a, d_b


def relevant_ranks(scores, cand_ids, relevant):
    """1-based rank of each relevant candidate in each query's ranking.

    Candidates are ranked by descending score, ties by ascending id.
    ``relevant`` is a (Q, R) array of candidate column indices.
    """
    scores = np.asarray(scores, dtype=np.float64)
    cand_ids = np.asarray(cand_ids, dtype=np.int64)
    relevant = np.asarray(relevant, dtype=np.int64)
    rows = np.arange(scores.shape[0])[:, None]
    rel_scores = scores[rows, relevant][:, :, None]
    rel_ids = cand_ids[relevant][:, :, None]
    s = scores[:, None, :]
    ahead = (s > rel_scores) | ((s == rel_scores) & (cand_ids[None, None, :] < rel_ids))
    return 1 + ahead.sum(axis=2).astype(np.int64)
