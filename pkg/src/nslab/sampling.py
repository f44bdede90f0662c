"""Mini-batch negative sampling strategies.

For a positive pair (x_i, y_i) every strategy picks negative caption indices
j != i and negative clip indices k != i inside the batch. Score-based
strategies break ties toward the lowest index.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from nslab import kernels
from nslab.errors import ConfigError, ShapeError
from nslab.relevance import ScoreMatrix, WithinModalityMatrix
from nslab.rng import SplitMix64

STRATEGIES = (
    "random",
    "full_mini_batch",
    "text_hard",
    "text_easy",
    "audio_hard",
    "audio_easy",
    "cross_hard",
    "cross_semi_hard",
)
NEEDS_TEXT_WITHIN = {"text_hard", "text_easy"}
NEEDS_AUDIO_WITHIN = {"audio_hard", "audio_easy"}


def check_strategy(strategy: str) -> str:
    if strategy not in STRATEGIES:
        raise ConfigError(f"unknown strategy {strategy!r}; valid strategies: {', '.join(STRATEGIES)}")
    return strategy


@dataclass(frozen=True)
class NegativeSelection:
    """Negatives per anchor: ``text[i]`` caption indices, ``audio[i]`` clip indices.

    Both arrays are (N, m) with m = 1 for single-negative strategies and
    m = N - 1 for full_mini_batch.
    """

    text: np.ndarray
    audio: np.ndarray

    @property
    def n(self) -> int:
        return self.text.shape[0]

    @property
    def is_singleton(self) -> bool:
        return self.text.shape[1] == 1 and self.audio.shape[1] == 1

    @property
    def j(self) -> np.ndarray:
        if not self.is_singleton:
            raise ValueError("selection holds several negatives per anchor")
        return self.text[:, 0]

    @property
    def k(self) -> np.ndarray:
        if not self.is_singleton:
            raise ValueError("selection holds several negatives per anchor")
        return self.audio[:, 0]

    @classmethod
    def singletons(cls, j, k) -> NegativeSelection:
        return cls(np.asarray(j, dtype=np.int64)[:, None], np.asarray(k, dtype=np.int64)[:, None])


def _values(m) -> np.ndarray:
    arr = np.asarray(getattr(m, "values", m), dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] < 2:
        raise ShapeError(f"expected an N x N matrix with N >= 2, got {arr.shape}")
    return arr


def sample_cross_hard(i: int, s) -> tuple[int, int]:
    """Highest-scoring caption in row i and clip in column i."""
    s = _values(s)
    return int(kernels.row_select(s, kernels.MODE_MAX)[i]), int(kernels.row_select(s.T, kernels.MODE_MAX)[i])


def sample_cross_semi_hard(i: int, s) -> tuple[int, int]:
    """Caption and clip whose score is closest to the positive score S[i, i]."""
    s = _values(s)
    return (
        int(kernels.row_select(s, kernels.MODE_CLOSEST)[i]),
        int(kernels.row_select(s.T, kernels.MODE_CLOSEST)[i]),
    )


def sample_within_modality(i: int, w, mode: str) -> tuple[int, int]:
    """Hard (max) or easy (min) neighbor under a within-modality matrix.

    The chosen item comes with its paired counterpart, so j == k.
    """
    if mode not in ("hard", "easy"):
        raise ValueError(f"mode must be 'hard' or 'easy', got {mode!r}")
    idx = int(kernels.row_select(_values(w), kernels.MODE_MAX if mode == "hard" else kernels.MODE_MIN)[i])
    return idx, idx


def sample_random(i: int, n: int, rng: SplitMix64) -> tuple[int, int]:
    """Independent uniform draws of j and k from {0..n-1} without i."""
    if n < 2:
        raise ShapeError("random sampling needs N >= 2")
    j = rng.choice_excluding(n, i)
    k = rng.choice_excluding(n, i)
    return j, k


def full_batch_selection(n: int) -> NegativeSelection:
    others = np.array([[c for c in range(n) if c != i] for i in range(n)], dtype=np.int64)
    return NegativeSelection(others, others.copy())


def select_negatives(
    strategy: str,
    scores: ScoreMatrix | np.ndarray,
    w_text: WithinModalityMatrix | np.ndarray | None = None,
    w_audio: WithinModalityMatrix | np.ndarray | None = None,
    rng: SplitMix64 | None = None,
) -> NegativeSelection:
    """Negatives for every anchor of a batch.

    ``random`` draws anchor i's pair from ``rng.child("anchor", i)``.
    """
    check_strategy(strategy)
    s = _values(scores)
    n = s.shape[0]
    if strategy == "full_mini_batch":
        return full_batch_selection(n)
    if strategy == "random":
        if rng is None:
            raise ConfigError("strategy 'random' needs an rng stream")
        draws = [sample_random(i, n, rng.child("anchor", i)) for i in range(n)]
        return NegativeSelection.singletons([d[0] for d in draws], [d[1] for d in draws])
    if strategy == "cross_hard":
        return NegativeSelection.singletons(
            kernels.row_select(s, kernels.MODE_MAX), kernels.row_select(s.T, kernels.MODE_MAX)
        )
    if strategy == "cross_semi_hard":
        return NegativeSelection.singletons(
            kernels.row_select(s, kernels.MODE_CLOSEST), kernels.row_select(s.T, kernels.MODE_CLOSEST)
        )
    if strategy in NEEDS_TEXT_WITHIN:
        w = w_text
    else:
        w = w_audio
    if w is None:
        raise ConfigError(f"strategy {strategy!r} needs a {'text' if strategy in NEEDS_TEXT_WITHIN else 'audio'} within-modality matrix")
    w = _values(w)
    if w.shape != s.shape:
        raise ShapeError(f"within-modality matrix {w.shape} does not match scores {s.shape}")
    mode = kernels.MODE_MAX if strategy.endswith("_hard") else kernels.MODE_MIN
    idx = kernels.row_select(w, mode)
    return NegativeSelection.singletons(idx, idx.copy())
