"""Linear dual encoders with hand-derived gradients.

The audio encoder projects every frame with ``audio_proj`` (optionally
followed by a ReLU) and mean-pools over frames. The text encoder looks up one
row of ``token_table`` per token and mean-pools over words.
"""
from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from nslab import kernels
from nslab.data import Caption, Clip
from nslab.errors import ShapeError
from nslab.rng import SplitMix64

CHECKPOINT_FORMAT = "NSLAB-CKPT"
INIT_RANGE = 0.05


@dataclass
class ModelParameters:
    token_table: np.ndarray  # (vocab_size, D)
    audio_proj: np.ndarray  # (d_in, D)
    relu: bool = False

    @property
    def dim(self) -> int:
        return self.token_table.shape[1]

    @property
    def d_in(self) -> int:
        return self.audio_proj.shape[0]

    @property
    def vocab_size(self) -> int:
        return self.token_table.shape[0]

    def arrays(self) -> dict[str, np.ndarray]:
        return {"token_table": self.token_table, "audio_proj": self.audio_proj}

    def copy(self) -> ModelParameters:
        return ModelParameters(self.token_table.copy(), self.audio_proj.copy(), self.relu)

    def scaled(self, factor: float) -> ModelParameters:
        return ModelParameters(self.token_table * factor, self.audio_proj * factor, self.relu)

    def __eq__(self, other):
        if not isinstance(other, ModelParameters):
            return NotImplemented
        return (
            self.relu == other.relu
            and np.array_equal(self.token_table, other.token_table)
            and np.array_equal(self.audio_proj, other.audio_proj)
        )


@dataclass
class ModelGradients:
    token_table: np.ndarray
    audio_proj: np.ndarray

    def arrays(self) -> dict[str, np.ndarray]:
        return {"token_table": self.token_table, "audio_proj": self.audio_proj}


def init_parameters(dim: int, d_in: int, vocab_size: int, seed: int, relu: bool = False) -> ModelParameters:
    """Uniform(-0.05, 0.05) entries, token table first, both row-major."""
    if min(dim, d_in, vocab_size) < 1:
        raise ShapeError("dimensions must be at least 1")
    rng = SplitMix64(seed).child("init")
    table = np.array([rng.uniform(-INIT_RANGE, INIT_RANGE) for _ in range(vocab_size * dim)]).reshape(vocab_size, dim)
    proj = np.array([rng.uniform(-INIT_RANGE, INIT_RANGE) for _ in range(d_in * dim)]).reshape(d_in, dim)
    return ModelParameters(table, proj, relu)


# ---------------------------------------------------------------------------
# batched inputs


@dataclass(frozen=True)
class AudioInputs:
    frames: np.ndarray  # (total_frames, d_in), clips concatenated
    offsets: np.ndarray  # (n + 1,)
    mean_frames: np.ndarray  # (n, d_in)

    @classmethod
    def from_clips(cls, clips: Sequence[Clip]) -> AudioInputs:
        frames = np.concatenate([c.frames for c in clips], axis=0)
        offsets = np.concatenate([[0], np.cumsum([c.frames.shape[0] for c in clips])]).astype(np.int64)
        return cls(frames, offsets, kernels.segment_mean(frames, offsets))

    def __len__(self):
        return len(self.offsets) - 1

    def take(self, index: Sequence[int]) -> AudioInputs:
        index = np.asarray(index, dtype=np.int64)
        parts = [self.frames[self.offsets[i] : self.offsets[i + 1]] for i in index]
        lengths = self.offsets[index + 1] - self.offsets[index]
        offsets = np.concatenate([[0], np.cumsum(lengths)]).astype(np.int64)
        return AudioInputs(np.concatenate(parts, axis=0), offsets, self.mean_frames[index])


@dataclass(frozen=True)
class TextInputs:
    tokens: np.ndarray  # (total_words,)
    offsets: np.ndarray  # (n + 1,)

    @classmethod
    def from_captions(cls, captions: Sequence[Caption]) -> TextInputs:
        tokens = np.concatenate([np.asarray(c.tokens, dtype=np.int64) for c in captions])
        offsets = np.concatenate([[0], np.cumsum([len(c.tokens) for c in captions])]).astype(np.int64)
        return cls(tokens, offsets)

    def __len__(self):
        return len(self.offsets) - 1

    def take(self, index: Sequence[int]) -> TextInputs:
        index = np.asarray(index, dtype=np.int64)
        parts = [self.tokens[self.offsets[i] : self.offsets[i + 1]] for i in index]
        lengths = self.offsets[index + 1] - self.offsets[index]
        offsets = np.concatenate([[0], np.cumsum(lengths)]).astype(np.int64)
        return TextInputs(np.concatenate(parts), offsets)


@dataclass
class Embeddings:
    """Pooled (n, D) embeddings plus the optional row sequences behind them."""

    pooled: np.ndarray
    rows: np.ndarray | None = None  # (total_rows, D)
    offsets: np.ndarray | None = None
    # audio with ReLU keeps the pre-activation for the backward pass
    pre_activation: np.ndarray | None = None

    def __len__(self):
        return self.pooled.shape[0]

    def sequence(self, i: int) -> np.ndarray:
        return self.rows[self.offsets[i] : self.offsets[i + 1]]


def encode_audio_batch(params: ModelParameters, audio: AudioInputs, sequences: bool = False) -> Embeddings:
    if audio.frames.shape[1] != params.d_in:
        raise ShapeError(f"frame dimension {audio.frames.shape[1]} != audio_proj rows {params.d_in}")
    if not params.relu and not sequences:
        # linear: mean of projected frames == projection of mean frame
        return Embeddings(kernels.ordered_matmul(audio.mean_frames, params.audio_proj))
    pre = kernels.ordered_matmul(audio.frames, params.audio_proj)
    rows = np.maximum(pre, 0.0) if params.relu else pre
    return Embeddings(kernels.segment_mean(rows, audio.offsets), rows, audio.offsets, pre if params.relu else None)


def encode_text_batch(params: ModelParameters, text: TextInputs, sequences: bool = False) -> Embeddings:
    if text.tokens.size and (text.tokens.min() < 0 or text.tokens.max() >= params.vocab_size):
        raise IndexError("token id out of vocabulary range")
    rows = params.token_table[text.tokens]
    pooled = kernels.segment_mean(rows, text.offsets)
    if sequences:
        return Embeddings(pooled, rows, text.offsets)
    return Embeddings(pooled)


def encode_audio(params: ModelParameters, clip: Clip, pooled: bool = True) -> np.ndarray:
    """Pooled D-vector, or the (T, D) frame embeddings when ``pooled`` is False."""
    if clip.frames.shape[1] != params.d_in:
        raise ShapeError(f"clip {clip.clip_id}: frame dimension {clip.frames.shape[1]} != {params.d_in}")
    emb = encode_audio_batch(params, AudioInputs.from_clips([clip]), sequences=True)
    return emb.pooled[0] if pooled else emb.rows


def encode_text(params: ModelParameters, caption: Caption, pooled: bool = True) -> np.ndarray:
    """Pooled D-vector, or the (L, D) word embeddings when ``pooled`` is False."""
    emb = encode_text_batch(params, TextInputs.from_captions([caption]), sequences=True)
    return emb.pooled[0] if pooled else emb.rows


def _expand_pooled(d_pooled: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    lengths = np.diff(offsets)
    owner = np.repeat(np.arange(len(lengths)), lengths)
    return d_pooled[owner] / lengths[owner, None].astype(np.float64)


def backpropagate(
    params: ModelParameters,
    audio: AudioInputs,
    text: TextInputs,
    d_audio_pooled: np.ndarray | None = None,
    d_text_pooled: np.ndarray | None = None,
    d_audio_frames: np.ndarray | None = None,
    d_text_words: np.ndarray | None = None,
) -> ModelGradients:
    """Exact parameter gradients given upstream gradients on the embeddings.

    Pooled gradients are spread as upstream / T over frames (or / L over
    words). Sequence gradients may be given alongside and are added.
    """
    dim = params.dim
    n_audio, n_text = len(audio), len(text)
    _check_shape(d_audio_pooled, (n_audio, dim), "audio pooled")
    _check_shape(d_text_pooled, (n_text, dim), "text pooled")
    _check_shape(d_audio_frames, (audio.frames.shape[0], dim), "audio frames")
    _check_shape(d_text_words, (text.tokens.shape[0], dim), "text words")

    d_proj = np.zeros_like(params.audio_proj)
    if params.relu:
        d_rows = np.zeros((audio.frames.shape[0], dim))
        if d_audio_pooled is not None:
            d_rows += _expand_pooled(d_audio_pooled, audio.offsets)
        if d_audio_frames is not None:
            d_rows += d_audio_frames
        if d_audio_pooled is not None or d_audio_frames is not None:
            pre = kernels.ordered_matmul(audio.frames, params.audio_proj)
            d_proj = kernels.ordered_matmul(audio.frames.T, d_rows * (pre > 0.0))
    else:
        if d_audio_pooled is not None:
            d_proj = d_proj + kernels.ordered_matmul(audio.mean_frames.T, d_audio_pooled)
        if d_audio_frames is not None:
            d_proj = d_proj + kernels.ordered_matmul(audio.frames.T, d_audio_frames)

    d_table = np.zeros_like(params.token_table)
    if d_text_pooled is not None or d_text_words is not None:
        d_words = np.zeros((text.tokens.shape[0], dim))
        if d_text_pooled is not None:
            d_words += _expand_pooled(d_text_pooled, text.offsets)
        if d_text_words is not None:
            d_words += d_text_words
        kernels.scatter_add_rows(d_table, text.tokens, d_words)
    return ModelGradients(d_table, d_proj)


def _check_shape(arr, shape, name):
    if arr is not None and tuple(arr.shape) != shape:
        raise ShapeError(f"{name} gradient has shape {tuple(arr.shape)}, expected {shape}")


# ---------------------------------------------------------------------------
# checkpoints


def dump_checkpoint(params: ModelParameters, seed: int | None = None, config: dict | None = None) -> str:
    header = {
        "format": CHECKPOINT_FORMAT,
        "version": 1,
        "dim": params.dim,
        "d_in": params.d_in,
        "vocab_size": params.vocab_size,
        "relu": params.relu,
        "seed": seed,
        "config": config or {},
    }
    lines = [json.dumps(header, sort_keys=True)]
    for name, mat in params.arrays().items():
        for i, row in enumerate(mat):
            values = ",".join(repr(float(v)) for v in row)
            lines.append(f'{{"type": "row", "matrix": "{name}", "index": {i}, "values": [{values}]}}')
    return "\n".join(lines) + "\n"


def save_checkpoint(params: ModelParameters, path: str | Path, seed: int | None = None, config: dict | None = None):
    """Atomic write: temp file in the target directory, then rename."""
    path = Path(path)
    text = dump_checkpoint(params, seed, config)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_checkpoint(path: str | Path) -> tuple[ModelParameters, dict]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    header = json.loads(lines[0])
    if header.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not an {CHECKPOINT_FORMAT} file")
    mats = {
        "token_table": np.full((header["vocab_size"], header["dim"]), np.nan),
        "audio_proj": np.full((header["d_in"], header["dim"]), np.nan),
    }
    for line in lines[1:]:
        rec = json.loads(line)
        mats[rec["matrix"]][rec["index"]] = rec["values"]
    if any(np.isnan(m).any() for m in mats.values()):
        raise ValueError(f"{path}: missing matrix rows")
    return ModelParameters(mats["token_table"], mats["audio_proj"], bool(header["relu"])), header
