"""Instance-based triplet ranking loss and its full-mini-batch variant.

Both return the loss value together with ``dL/dS``. A hinge whose argument is
exactly zero counts as inactive, so zero-loss states are fixed points.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from nslab.errors import ConfigError, ShapeError
from nslab.sampling import NegativeSelection


@dataclass(frozen=True)
class LossConfig:
    margin: float = 1.0

    def __post_init__(self):
        if self.margin < 0:
            raise ConfigError("margin must be non-negative")


@dataclass
class LossResult:
    value: float
    grad_s: np.ndarray


def _ordered_sum(terms) -> float:
    total = 0.0
    for t in terms:
        total += float(t)
    return total


def _square(s) -> np.ndarray:
    s = np.asarray(getattr(s, "values", s), dtype=np.float64)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise ShapeError(f"score matrix must be square, got {s.shape}")
    if s.shape[0] < 2:
        raise ShapeError("loss needs N >= 2")
    return s


def triplet_loss(scores, sel: NegativeSelection, cfg: LossConfig = LossConfig()) -> LossResult:
    """Mean over anchors of the caption hinge plus the clip hinge."""
    s = _square(scores)
    n = s.shape[0]
    if not sel.is_singleton:
        raise ConfigError("triplet_loss takes one negative per anchor; use full_batch_loss for full_mini_batch")
    if sel.n != n:
        raise ShapeError(f"selection covers {sel.n} anchors, scores have {n}")
    idx = np.arange(n)
    j, k = sel.j, sel.k
    if np.any(j == idx) or np.any(k == idx):
        raise ValueError("an anchor cannot be its own negative")
    pos = s[idx, idx]
    h_text = s[idx, j] - pos + cfg.margin
    h_audio = s[k, idx] - pos + cfg.margin
    on_text = h_text > 0.0
    on_audio = h_audio > 0.0
    terms = np.where(on_text, h_text, 0.0) + np.where(on_audio, h_audio, 0.0)

    grad = np.zeros_like(s)
    w = 1.0 / n
    np.add.at(grad, (idx[on_text], j[on_text]), w)
    np.add.at(grad, (k[on_audio], idx[on_audio]), w)
    np.add.at(grad, (idx, idx), -w * (on_text.astype(np.float64) + on_audio.astype(np.float64)))
    return LossResult(_ordered_sum(terms) / n, grad)


def full_batch_loss(scores, cfg: LossConfig = LossConfig()) -> LossResult:
    """Triplet loss with each negative score replaced by its mean over all negatives."""
    s = _square(scores)
    n = s.shape[0]
    idx = np.arange(n)
    off = ~np.eye(n, dtype=bool)
    pos = s[idx, idx]
    mean_text = np.array([_ordered_sum(s[i, off[i]]) for i in range(n)]) / (n - 1)
    mean_audio = np.array([_ordered_sum(s[off[:, i], i]) for i in range(n)]) / (n - 1)
    h_text = mean_text - pos + cfg.margin
    h_audio = mean_audio - pos + cfg.margin
    on_text = h_text > 0.0
    on_audio = h_audio > 0.0
    terms = np.where(on_text, h_text, 0.0) + np.where(on_audio, h_audio, 0.0)

    w = 1.0 / (n * (n - 1))
    # row i gets the caption hinge of anchor i, column i the clip hinge
    grad = w * (on_text[:, None].astype(np.float64) + on_audio[None, :].astype(np.float64))
    grad[idx, idx] = -(on_text.astype(np.float64) + on_audio.astype(np.float64)) / n
    return LossResult(_ordered_sum(terms) / n, grad)
