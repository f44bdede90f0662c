"""Relevance scores between audio and text embeddings.

Three score functions are supported:

``dot``
    dot product of pooled embeddings.
``cosine``
    dot product of L2-normalized pooled embeddings. A zero vector scores 0
    and marks the result as collapse-suspect instead of raising.
``mean_max_align``
    for ``F(a, b)``: mean over the rows of ``b`` of the max over the rows of
    ``a`` of the row dot products. For cross-modality scores ``a`` holds
    frame embeddings and ``b`` word embeddings.

All dot products accumulate over the embedding dimension in ascending order,
so a matrix entry equals the matching :func:`score_pair` call exactly.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from nslab import kernels
from nslab.encoders import Embeddings
from nslab.errors import ConfigError, ShapeError

SCORE_FNS = ("dot", "cosine", "mean_max_align")


class CollapseSuspectWarning(RuntimeWarning):
    """A cosine score met a zero embedding."""


@dataclass
class ScoreMatrix:
    """Cross-modality scores; rows are audio items, columns text items."""

    values: np.ndarray
    fn: str = "dot"
    collapse_suspect: bool = False
    _cache: dict[str, Any] = field(default_factory=dict, repr=False)

    @property
    def n(self) -> int:
        return self.values.shape[0]


@dataclass
class WithinModalityMatrix:
    values: np.ndarray
    modality: str
    fn: str = "dot"
    collapse_suspect: bool = False


def check_score_fn(fn: str) -> str:
    if fn not in SCORE_FNS:
        raise ConfigError(f"unknown score function {fn!r}; expected one of {', '.join(SCORE_FNS)}")
    return fn


def row_norms(x: np.ndarray) -> np.ndarray:
    sq = np.zeros(x.shape[0])
    for d in range(x.shape[1]):
        sq += x[:, d] * x[:, d]
    return np.sqrt(sq)


def _normalize(x: np.ndarray) -> tuple[np.ndarray, np.ndarray, bool]:
    norms = row_norms(x)
    zero = norms == 0.0
    safe = np.where(zero, 1.0, norms)
    return x / safe[:, None], norms, bool(zero.any())


def _pooled(x) -> np.ndarray:
    if isinstance(x, Embeddings):
        return x.pooled
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"expected (n, D) pooled embeddings, got shape {arr.shape}")
    return arr


def _sequences(x) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(x, Embeddings):
        if x.rows is None:
            raise ShapeError("mean_max_align needs sequence embeddings")
        return x.rows, x.offsets
    seqs = [np.asarray(s, dtype=np.float64) for s in x]
    if any(s.ndim != 2 or s.shape[0] < 1 for s in seqs):
        raise ShapeError("mean_max_align needs non-empty (rows, D) sequences")
    offsets = np.concatenate([[0], np.cumsum([s.shape[0] for s in seqs])]).astype(np.int64)
    return np.concatenate(seqs, axis=0), offsets


def score_pair(fn: str, a, b) -> float:
    """Relevance of one pair.

    ``a`` and ``b`` are pooled D-vectors for dot and cosine (sequences are
    mean-pooled first) and (rows, D) sequences for mean_max_align.
    """
    check_score_fn(fn)
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if fn == "mean_max_align":
        if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
            raise ShapeError("mean_max_align needs two (rows, D) arrays of equal D")
        scores, _ = kernels.mean_max_scores(a, [0, a.shape[0]], b, [0, b.shape[0]])
        return float(scores[0, 0])
    if a.ndim == 2:
        a = kernels.segment_mean(a, [0, a.shape[0]])[0]
    if b.ndim == 2:
        b = kernels.segment_mean(b, [0, b.shape[0]])[0]
    if a.shape != b.shape:
        raise ShapeError(f"dimension mismatch: {a.shape} vs {b.shape}")
    if fn == "cosine":
        a_n, _, za = _normalize(a[None, :])
        b_n, _, zb = _normalize(b[None, :])
        if za or zb:
            warnings.warn("cosine score with a zero embedding; scored as 0", CollapseSuspectWarning, stacklevel=2)
        return float(kernels.ordered_matmul(a_n, b_n.T)[0, 0])
    return float(kernels.ordered_matmul(a[None, :], b[:, None])[0, 0])


def _pair_matrix(fn: str, left, right) -> tuple[np.ndarray, bool, dict]:
    if fn == "mean_max_align":
        l_rows, l_off = _sequences(left)
        r_rows, r_off = _sequences(right)
        if l_rows.shape[1] != r_rows.shape[1]:
            raise ShapeError("embedding dimensions differ")
        values, arg = kernels.mean_max_scores(l_rows, l_off, r_rows, r_off)
        cache = {"arg": arg, "l_rows": l_rows, "l_off": l_off, "r_rows": r_rows, "r_off": r_off}
        return values, False, cache
    lp, rp = _pooled(left), _pooled(right)
    if lp.shape[1] != rp.shape[1]:
        raise ShapeError("embedding dimensions differ")
    if fn == "cosine":
        l_n, l_norm, zl = _normalize(lp)
        r_n, r_norm, zr = _normalize(rp)
        values = kernels.ordered_matmul(l_n, r_n.T)
        return values, zl or zr, {"l_n": l_n, "l_norm": l_norm, "r_n": r_n, "r_norm": r_norm}
    return kernels.ordered_matmul(lp, rp.T), False, {"l": lp, "r": rp}


def pairwise_scores(fn: str, left, right) -> np.ndarray:
    """``F(left_i, right_j)`` for all pairs; the sets may differ in size."""
    check_score_fn(fn)
    return _pair_matrix(fn, left, right)[0]


def cross_modality_matrix(fn: str, audio, text) -> ScoreMatrix:
    """``S[i, j] = F(f_i, g_j)`` for a batch of audio and text embeddings."""
    check_score_fn(fn)
    n_audio = len(audio) if not isinstance(audio, np.ndarray) else audio.shape[0]
    n_text = len(text) if not isinstance(text, np.ndarray) else text.shape[0]
    if n_audio != n_text:
        raise ShapeError(f"batch sizes differ: {n_audio} audio vs {n_text} text")
    if n_audio < 2:
        raise ShapeError("a score matrix needs N >= 2")
    values, suspect, cache = _pair_matrix(fn, audio, text)
    return ScoreMatrix(values, fn, suspect, cache)


def within_modality_matrix(fn: str, embeddings, modality: str) -> WithinModalityMatrix:
    """``W[i, j] = F(e_i, e_j)`` over one modality; row i is the anchor."""
    check_score_fn(fn)
    if modality not in ("text", "audio"):
        raise ValueError(f"modality must be 'text' or 'audio', got {modality!r}")
    n = len(embeddings) if not isinstance(embeddings, np.ndarray) else embeddings.shape[0]
    if n < 2:
        raise ShapeError("a within-modality matrix needs N >= 2")
    values, suspect, _ = _pair_matrix(fn, embeddings, embeddings)
    if fn == "mean_max_align":
        # row item is the query: average over its rows of the best match in the column item
        values = np.ascontiguousarray(values.T)
    return WithinModalityMatrix(values, modality, fn, suspect)


@dataclass
class EmbeddingGrads:
    audio_pooled: np.ndarray | None = None
    text_pooled: np.ndarray | None = None
    audio_rows: np.ndarray | None = None
    text_rows: np.ndarray | None = None


def score_backward(scores: ScoreMatrix, d_values: np.ndarray) -> EmbeddingGrads:
    """Pull ``dL/dS`` back to the embeddings that produced ``scores``."""
    d_values = np.asarray(d_values, dtype=np.float64)
    if d_values.shape != scores.values.shape:
        raise ShapeError(f"gradient shape {d_values.shape} != score shape {scores.values.shape}")
    c = scores._cache
    if scores.fn == "dot":
        return EmbeddingGrads(
            audio_pooled=kernels.ordered_matmul(d_values, c["r"]),
            text_pooled=kernels.ordered_matmul(d_values.T, c["l"]),
        )
    if scores.fn == "cosine":
        s = scores.values
        l_n, r_n = c["l_n"], c["r_n"]
        l_norm = np.where(c["l_norm"] == 0.0, np.inf, c["l_norm"])
        r_norm = np.where(c["r_norm"] == 0.0, np.inf, c["r_norm"])
        # d cos(a, b) / da = (b_hat - cos * a_hat) / |a|
        d_a = kernels.ordered_matmul(d_values, r_n) - (d_values * s).sum(axis=1)[:, None] * l_n
        d_b = kernels.ordered_matmul(d_values.T, l_n) - (d_values * s).sum(axis=0)[:, None] * r_n
        return EmbeddingGrads(audio_pooled=d_a / l_norm[:, None], text_pooled=d_b / r_norm[:, None])
    d_l, d_r = kernels.mean_max_backward(d_values, c["arg"], c["l_rows"], c["l_off"], c["r_rows"], c["r_off"])
    return EmbeddingGrads(audio_rows=d_l, text_rows=d_r)

