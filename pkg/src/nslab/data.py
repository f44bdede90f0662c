"""Paired audio-caption datasets, synthetic generation, NSLAB-JL files, batching."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from nslab.errors import ConfigError, FeatureParseError
from nslab.rng import SplitMix64

SPLIT_TAGS = ("dev", "val", "eval", "all")
# dev/val/eval clip proportions of Clotho v2 (3839 / 1045 / 1045 clips)
CLOTHO_FRACTIONS = (3839 / 5929, 1045 / 5929, 1045 / 5929)
FORMAT_NAME = "NSLAB-JL"
FORMAT_VERSION = 1


def _float9(x: float) -> float:
    """Round to the 9 significant digits the feature file stores."""
    return float(format(x, ".9g"))


@dataclass(frozen=True, eq=False)
class Clip:
    clip_id: int
    frames: np.ndarray  # (T, d_in)

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float64)
        if frames.ndim != 2 or frames.shape[0] < 1:
            raise ValueError(f"clip {self.clip_id}: frames must be a non-empty (T, d_in) array")
        frames.setflags(write=False)
        object.__setattr__(self, "frames", frames)

    def __eq__(self, other):
        if not isinstance(other, Clip):
            return NotImplemented
        return self.clip_id == other.clip_id and np.array_equal(self.frames, other.frames)

    __hash__ = None


@dataclass(frozen=True)
class Caption:
    caption_id: int
    clip_id: int
    tokens: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(int(t) for t in self.tokens))
        if not self.tokens:
            raise ValueError(f"caption {self.caption_id}: empty token list")


@dataclass(frozen=True)
class PairedDataset:
    """Clips, captions and the (clip_id, caption_id) positive pairing.

    Each caption belongs to exactly one pair. Pairs are ordered by caption.
    """

    clips: tuple[Clip, ...]
    captions: tuple[Caption, ...]
    pairs: tuple[tuple[int, int], ...]
    d_in: int
    vocab_size: int
    split_tag: str = "all"
    _clip_pos: dict = field(default=None, init=False, repr=False, compare=False)
    _caption_pos: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "clips", tuple(self.clips))
        object.__setattr__(self, "captions", tuple(self.captions))
        object.__setattr__(self, "pairs", tuple((int(a), int(b)) for a, b in self.pairs))
        if self.split_tag not in SPLIT_TAGS:
            raise ValueError(f"unknown split tag {self.split_tag!r}")
        clip_pos = {c.clip_id: i for i, c in enumerate(self.clips)}
        cap_pos = {c.caption_id: i for i, c in enumerate(self.captions)}
        if len(clip_pos) != len(self.clips) or len(cap_pos) != len(self.captions):
            raise ValueError("duplicate clip or caption ids")
        for clip in self.clips:
            if clip.frames.shape[1] != self.d_in:
                raise ValueError(f"clip {clip.clip_id}: frame dimension {clip.frames.shape[1]} != {self.d_in}")
        seen = set()
        for clip_id, cap_id in self.pairs:
            if clip_id not in clip_pos or cap_id not in cap_pos:
                raise ValueError(f"pair ({clip_id}, {cap_id}) references unknown items")
            if self.captions[cap_pos[cap_id]].clip_id != clip_id:
                raise ValueError(f"pair ({clip_id}, {cap_id}) disagrees with caption owner")
            if cap_id in seen:
                raise ValueError(f"caption {cap_id} appears in more than one pair")
            seen.add(cap_id)
        if len(seen) != len(self.captions):
            raise ValueError("every caption must appear in exactly one pair")
        if {c for c, _ in self.pairs} != set(clip_pos):
            raise ValueError("every clip must be referenced by at least one pair")
        for cap in self.captions:
            if min(cap.tokens) < 0 or max(cap.tokens) >= self.vocab_size:
                raise ValueError(f"caption {cap.caption_id}: token id out of vocabulary")
        object.__setattr__(self, "_clip_pos", clip_pos)
        object.__setattr__(self, "_caption_pos", cap_pos)

    def clip(self, clip_id: int) -> Clip:
        return self.clips[self._clip_pos[clip_id]]

    def caption(self, caption_id: int) -> Caption:
        return self.captions[self._caption_pos[caption_id]]

    def clip_index(self, clip_id: int) -> int:
        return self._clip_pos[clip_id]

    def caption_index(self, caption_id: int) -> int:
        return self._caption_pos[caption_id]

    def __len__(self):
        return len(self.pairs)


@dataclass(frozen=True)
class MiniBatch:
    pair_indices: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "pair_indices", tuple(int(p) for p in self.pair_indices))
        if len(self.pair_indices) < 2:
            raise ValueError("a mini-batch needs at least 2 pairs")
        if len(set(self.pair_indices)) != len(self.pair_indices):
            raise ValueError("mini-batch pair indices must be distinct")

    @property
    def size(self) -> int:
        return len(self.pair_indices)


@dataclass(frozen=True)
class SynthConfig:
    n_clips: int = 200
    captions_per_clip: int = 5
    n_topics: int = 16
    d_in: int = 16
    vocab_size: int = 200
    frames_range: tuple[int, int] = (5, 15)
    tokens_range: tuple[int, int] = (8, 20)
    noise_scale: float = 0.3
    prototype_scale: float = 1.0
    topic_token_fraction: float = 0.8

    def validate(self) -> None:
        if self.n_clips < 1:
            raise ConfigError("n_clips must be at least 1")
        if self.captions_per_clip < 1:
            raise ConfigError("captions_per_clip must be at least 1")
        if self.n_topics < 1:
            raise ConfigError("n_topics must be at least 1")
        if self.d_in < 1:
            raise ConfigError("d_in must be at least 1")
        if self.vocab_size < self.n_topics + 1:
            raise ConfigError("vocab_size must cover one token pool per topic plus a shared pool")
        for name in ("frames_range", "tokens_range"):
            lo, hi = getattr(self, name)
            if lo < 1 or hi < lo:
                raise ConfigError(f"{name} must satisfy 1 <= low <= high")
        if self.noise_scale < 0:
            raise ConfigError("noise_scale must be non-negative")
        if not 0.0 <= self.topic_token_fraction <= 1.0:
            raise ConfigError("topic_token_fraction must lie in [0, 1]")


def token_pools(vocab_size: int, n_topics: int) -> tuple[list[range], range]:
    """Partition the vocabulary into per-topic pools and a trailing shared pool."""
    bounds = [round(k * vocab_size / (n_topics + 1)) for k in range(n_topics + 2)]
    pools = [range(bounds[k], bounds[k + 1]) for k in range(n_topics + 1)]
    return pools[:-1], pools[-1]


def generate_synthetic(cfg: SynthConfig, seed: int) -> PairedDataset:
    """Topic-structured synthetic clips and captions.

    Each clip draws a latent topic; its frames are the topic prototype plus
    Gaussian noise, and its captions draw tokens from the topic's pool with
    probability ``topic_token_fraction``, otherwise from the shared pool.
    Frame values are rounded to 9 significant digits so the dataset survives
    a round trip through an NSLAB-JL file unchanged.
    """
    cfg.validate()
    root = SplitMix64(seed)
    proto_rng = root.child("synth", "prototypes")
    prototypes = [
        [cfg.prototype_scale * proto_rng.normal() for _ in range(cfg.d_in)] for _ in range(cfg.n_topics)
    ]
    topic_pools, shared_pool = token_pools(cfg.vocab_size, cfg.n_topics)

    clips, captions, pairs = [], [], []
    for clip_id in range(cfg.n_clips):
        rng = root.child("synth", "clip", clip_id)
        topic = rng.randbelow(cfg.n_topics)
        n_frames = rng.randint(*cfg.frames_range)
        frames = [
            [_float9(p + cfg.noise_scale * rng.normal()) for p in prototypes[topic]] for _ in range(n_frames)
        ]
        clips.append(Clip(clip_id, np.array(frames)))
        pool = topic_pools[topic]
        for c in range(cfg.captions_per_clip):
            cap_id = clip_id * cfg.captions_per_clip + c
            length = rng.randint(*cfg.tokens_range)
            tokens = []
            for _ in range(length):
                source = pool if rng.random() < cfg.topic_token_fraction else shared_pool
                tokens.append(source[rng.randbelow(len(source))])
            captions.append(Caption(cap_id, clip_id, tuple(tokens)))
            pairs.append((clip_id, cap_id))
    return PairedDataset(clips, captions, pairs, d_in=cfg.d_in, vocab_size=cfg.vocab_size)


def split_counts(n: int, fractions: Sequence[float]) -> list[int]:
    """Largest-remainder allocation of n items to the given fractions."""
    raw = [n * f for f in fractions]
    counts = [math.floor(r + 1e-9) for r in raw]
    remainders = sorted(range(len(raw)), key=lambda k: (-(raw[k] - counts[k]), k))
    for k in remainders[: n - sum(counts)]:
        counts[k] += 1
    return counts


def subset(ds: PairedDataset, clip_ids: Iterable[int], split_tag: str) -> PairedDataset:
    keep = set(clip_ids)
    clips = [c for c in ds.clips if c.clip_id in keep]
    captions = [c for c in ds.captions if c.clip_id in keep]
    pairs = [p for p in ds.pairs if p[0] in keep]
    return PairedDataset(clips, captions, pairs, d_in=ds.d_in, vocab_size=ds.vocab_size, split_tag=split_tag)


def split_dataset(
    ds: PairedDataset, fractions: Sequence[float] = CLOTHO_FRACTIONS, seed: int = 0
) -> tuple[PairedDataset, PairedDataset, PairedDataset]:
    """Split by clip into (dev, val, eval); captions follow their clip."""
    if len(fractions) != 3 or any(f < 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
        raise ConfigError("split fractions must be three non-negative numbers summing to 1")
    counts = split_counts(len(ds.clips), fractions)
    if min(counts) < 1:
        raise ConfigError(f"split sizes {counts} leave a split without clips")
    order = SplitMix64(seed).child("split").permutation(len(ds.clips))
    ids = [ds.clips[k].clip_id for k in order]
    a, b = counts[0], counts[0] + counts[1]
    return (
        subset(ds, ids[:a], "dev"),
        subset(ds, ids[a:b], "val"),
        subset(ds, ids[b:], "eval"),
    )


def make_batches(ds: PairedDataset, batch_size: int = 32, seed: int = 0, epoch: int = 0) -> list[MiniBatch]:
    """Shuffle pairs with the (seed, epoch) stream and cut into mini-batches.

    A trailing batch is kept when it has at least 2 pairs.
    """
    if batch_size < 2:
        raise ConfigError("batch_size must be at least 2")
    if len(ds.pairs) < 2:
        raise ConfigError("need at least 2 pairs to form a batch")
    order = SplitMix64(seed).child("epoch", epoch, "shuffle").permutation(len(ds.pairs))
    batches = []
    for start in range(0, len(order), batch_size):
        chunk = order[start : start + batch_size]
        if len(chunk) >= 2:
            batches.append(MiniBatch(tuple(chunk)))
    return batches


def _fmt_float(x: float) -> str:
    return format(float(x), ".9g")


def dump_features(ds: PairedDataset) -> str:
    """Serialize to NSLAB-JL text."""
    lines = [
        json.dumps({"format": FORMAT_NAME, "version": FORMAT_VERSION, "d_in": ds.d_in, "vocab_size": ds.vocab_size})
    ]
    for clip in ds.clips:
        rows = ",".join("[" + ",".join(_fmt_float(v) for v in row) + "]" for row in clip.frames)
        lines.append(f'{{"type": "clip", "clip_id": {clip.clip_id}, "frames": [{rows}]}}')
    for cap in ds.captions:
        lines.append(
            json.dumps({"type": "caption", "caption_id": cap.caption_id, "clip_id": cap.clip_id, "tokens": list(cap.tokens)})
        )
    return "\n".join(lines) + "\n"


def save_features(ds: PairedDataset, path: str | Path) -> None:
    Path(path).write_text(dump_features(ds), encoding="utf-8")


def parse_features(text: str, source: str = "<string>") -> PairedDataset:
    lines = text.splitlines()
    if not lines:
        raise FeatureParseError(source, 1, "empty file")

    def record(lineno: int, line: str) -> dict:
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise FeatureParseError(source, lineno, f"invalid JSON ({exc.msg})") from None
        if not isinstance(obj, dict):
            raise FeatureParseError(source, lineno, "record is not a JSON object")
        return obj

    header = record(1, lines[0])
    if header.get("format") != FORMAT_NAME or header.get("version") != FORMAT_VERSION:
        raise FeatureParseError(source, 1, f"expected {FORMAT_NAME} version {FORMAT_VERSION} header")
    try:
        d_in, vocab_size = int(header["d_in"]), int(header["vocab_size"])
    except (KeyError, TypeError, ValueError):
        raise FeatureParseError(source, 1, "header needs integer d_in and vocab_size") from None

    clips, captions, caption_lines = [], [], {}
    clip_ids = set()
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        obj = record(lineno, line)
        kind = obj.get("type")
        try:
            if kind == "clip":
                frames = np.array(obj["frames"], dtype=np.float64)
                if frames.ndim != 2 or frames.shape[0] < 1:
                    raise FeatureParseError(source, lineno, "frames must be a non-empty list of vectors")
                if frames.shape[1] != d_in:
                    raise FeatureParseError(source, lineno, f"frame dimension {frames.shape[1]} != d_in {d_in}")
                clip_id = int(obj["clip_id"])
                if clip_id in clip_ids:
                    raise FeatureParseError(source, lineno, f"duplicate clip_id {clip_id}")
                clip_ids.add(clip_id)
                clips.append(Clip(clip_id, frames))
            elif kind == "caption":
                tokens = [int(t) for t in obj["tokens"]]
                if not tokens or min(tokens) < 0 or max(tokens) >= vocab_size:
                    raise FeatureParseError(source, lineno, "tokens must be a non-empty list of ids below vocab_size")
                cap = Caption(int(obj["caption_id"]), int(obj["clip_id"]), tuple(tokens))
                if cap.caption_id in caption_lines:
                    raise FeatureParseError(source, lineno, f"duplicate caption_id {cap.caption_id}")
                caption_lines[cap.caption_id] = lineno
                captions.append(cap)
            else:
                raise FeatureParseError(source, lineno, f"unknown record type {kind!r}")
        except (KeyError, TypeError, ValueError) as exc:
            raise FeatureParseError(source, lineno, f"malformed {kind} record ({exc})") from None

    for cap in captions:
        if cap.clip_id not in clip_ids:
            raise FeatureParseError(
                source, caption_lines[cap.caption_id], f"caption {cap.caption_id} references missing clip_id {cap.clip_id}"
            )
    pairs = [(cap.clip_id, cap.caption_id) for cap in captions]
    try:
        return PairedDataset(clips, captions, pairs, d_in=d_in, vocab_size=vocab_size)
    except ValueError as exc:
        raise FeatureParseError(source, len(lines), str(exc)) from None


def load_features(path: str | Path) -> PairedDataset:
    path = Path(path)
    return parse_features(path.read_text(encoding="utf-8"), source=str(path))
