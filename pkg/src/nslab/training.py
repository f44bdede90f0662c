"""Contrastive training loop with Adam, plateau LR decay and early stopping."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from nslab.data import PairedDataset, make_batches
from nslab.encoders import (
    AudioInputs,
    ModelGradients,
    ModelParameters,
    TextInputs,
    backpropagate,
    encode_audio_batch,
    encode_text_batch,
    init_parameters,
)
from nslab.errors import ConfigError, ShapeError
from nslab.objective import LossConfig, full_batch_loss, triplet_loss
from nslab.relevance import check_score_fn, cross_modality_matrix, score_backward, within_modality_matrix
from nslab.rng import SplitMix64
from nslab.sampling import NEEDS_AUDIO_WITHIN, NEEDS_TEXT_WITHIN, check_strategy, select_negatives


@dataclass(frozen=True)
class TrainConfig:
    strategy: str = "random"
    score_fn: str = "dot"
    batch_size: int = 32
    max_epochs: int = 120
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    plateau_factor: float = 0.1
    plateau_patience: int = 5
    early_stop_patience: int = 10
    margin: float = 1.0
    dim: int = 32
    relu: bool = False
    collapse_threshold: float = 1e-3
    seed: int = 0

    def validate(self) -> None:
        check_strategy(self.strategy)
        check_score_fn(self.score_fn)
        if self.batch_size < 2:
            raise ConfigError("batch_size must be at least 2")
        if self.max_epochs < 0:
            raise ConfigError("max_epochs must be non-negative")
        if self.plateau_patience < 1 or self.early_stop_patience < 1:
            raise ConfigError("patience values must be at least 1")
        if not 0.0 < self.plateau_factor < 1.0:
            raise ConfigError("plateau_factor must lie in (0, 1)")
        if self.lr < 0 or self.margin < 0:
            raise ConfigError("lr and margin must be non-negative")
        if self.dim < 2:
            raise ConfigError("embedding dimension must be at least 2")


# ---------------------------------------------------------------------------
# optimizer and schedules


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0


def adam_step(
    params: ModelParameters,
    grads: ModelGradients,
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> tuple[ModelParameters, AdamState]:
    """Bias-corrected Adam update; returns new parameters and state."""
    p_arrays, g_arrays = params.arrays(), grads.arrays()
    for name, p in p_arrays.items():
        if g_arrays[name].shape != p.shape:
            raise ShapeError(f"{name}: gradient shape {g_arrays[name].shape} != parameter shape {p.shape}")
    t = state.step + 1
    new_m, new_v, new_p = {}, {}, {}
    for name, p in p_arrays.items():
        g = g_arrays[name]
        m = state.m.get(name, np.zeros_like(p))
        v = state.v.get(name, np.zeros_like(p))
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * (g * g)
        m_hat = m / (1.0 - beta1**t)
        v_hat = v / (1.0 - beta2**t)
        new_p[name] = p - lr * m_hat / (np.sqrt(v_hat) + eps)
        new_m[name], new_v[name] = m, v
    return (
        ModelParameters(new_p["token_table"], new_p["audio_proj"], params.relu),
        AdamState(new_m, new_v, t),
    )


@dataclass
class PlateauState:
    lr: float
    factor: float = 0.1
    patience: int = 5
    best: float = math.inf
    bad_epochs: int = 0


def plateau_scheduler_update(state: PlateauState, val_loss: float) -> tuple[float | None, PlateauState]:
    """Returns the reduced lr when a reduction fires, else None."""
    if val_loss < state.best:
        state.best = val_loss
        state.bad_epochs = 0
        return None, state
    state.bad_epochs += 1
    if state.bad_epochs >= state.patience:
        state.lr = state.lr * state.factor
        state.bad_epochs = 0
        return state.lr, state
    return None, state


@dataclass
class EarlyStopState:
    patience: int = 10
    best: float = math.inf
    bad_epochs: int = 0


def early_stop_check(state: EarlyStopState, val_loss: float) -> bool:
    if val_loss < state.best:
        state.best = val_loss
        state.bad_epochs = 0
        return False
    state.bad_epochs += 1
    return state.bad_epochs >= state.patience


@dataclass(frozen=True)
class CollapseReport:
    mean_audio_norm: float
    mean_text_norm: float
    flagged: bool


def collapse_check(audio_embeddings, text_embeddings, threshold: float = 1e-3) -> CollapseReport:
    """Flag when either modality's mean pooled-embedding L2 norm is below ``threshold``."""
    a = np.asarray(getattr(audio_embeddings, "pooled", audio_embeddings), dtype=np.float64)
    t = np.asarray(getattr(text_embeddings, "pooled", text_embeddings), dtype=np.float64)
    if a.shape[0] < 1 or t.shape[0] < 1:
        raise ShapeError("collapse_check needs at least one embedding per modality")
    a_norm = float(np.mean(np.linalg.norm(a, axis=1)))
    t_norm = float(np.mean(np.linalg.norm(t, axis=1)))
    return CollapseReport(a_norm, t_norm, a_norm < threshold or t_norm < threshold)


# ---------------------------------------------------------------------------
# training loop


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    lr: float
    collapse_flag: bool
    mean_audio_norm: float
    mean_text_norm: float


@dataclass
class TrainingHistory:
    records: list[EpochRecord] = field(default_factory=list)
    stopped_epoch: int = 0
    best_epoch: int = 0

    @property
    def collapsed(self) -> bool:
        return any(r.collapse_flag for r in self.records)

    def to_jsonl(self) -> str:
        return "".join(json.dumps(asdict(r), sort_keys=True) + "\n" for r in self.records)


class _PairTensors:
    """Per-pair encoder inputs of a dataset, indexable by mini-batch."""

    def __init__(self, ds: PairedDataset):
        self.audio = AudioInputs.from_clips(ds.clips)
        self.text = TextInputs.from_captions(ds.captions)
        self.clip_of_pair = np.array([ds.clip_index(c) for c, _ in ds.pairs], dtype=np.int64)
        self.caption_of_pair = np.array([ds.caption_index(c) for _, c in ds.pairs], dtype=np.int64)

    def batch(self, pair_indices) -> tuple[AudioInputs, TextInputs]:
        p = np.asarray(pair_indices, dtype=np.int64)
        return self.audio.take(self.clip_of_pair[p]), self.text.take(self.caption_of_pair[p])


def batch_loss(
    params: ModelParameters,
    audio: AudioInputs,
    text: TextInputs,
    strategy: str,
    score_fn: str,
    loss_cfg: LossConfig,
    rng: SplitMix64 | None = None,
    with_grads: bool = True,
) -> tuple[float, ModelGradients | None]:
    """Forward pass, negative selection and loss for one batch; optional gradients."""
    seq = score_fn == "mean_max_align"
    a_emb = encode_audio_batch(params, audio, sequences=seq)
    t_emb = encode_text_batch(params, text, sequences=seq)
    s = cross_modality_matrix(score_fn, a_emb, t_emb)
    w_text = within_modality_matrix(score_fn, t_emb, "text") if strategy in NEEDS_TEXT_WITHIN else None
    w_audio = within_modality_matrix(score_fn, a_emb, "audio") if strategy in NEEDS_AUDIO_WITHIN else None
    sel = select_negatives(strategy, s, w_text, w_audio, rng=rng)
    result = full_batch_loss(s, loss_cfg) if strategy == "full_mini_batch" else triplet_loss(s, sel, loss_cfg)
    if not with_grads:
        return result.value, None
    up = score_backward(s, result.grad_s)
    grads = backpropagate(
        params,
        audio,
        text,
        d_audio_pooled=up.audio_pooled,
        d_text_pooled=up.text_pooled,
        d_audio_frames=up.audio_rows,
        d_text_words=up.text_rows,
    )
    return result.value, grads


def _weighted_mean(values: list[float], weights: list[int]) -> float:
    total = 0.0
    for v, w in zip(values, weights):
        total += v * w
    return total / sum(weights)


def validation_loss(
    params: ModelParameters, val: _PairTensors, val_batches, cfg: TrainConfig, loss_cfg: LossConfig
) -> float:
    """Triplet loss on the validation split with fixed random negatives."""
    root = SplitMix64(cfg.seed).child("validation", "negatives")
    values, sizes = [], []
    for b, mb in enumerate(val_batches):
        audio, text = val.batch(mb.pair_indices)
        v, _ = batch_loss(params, audio, text, "random", cfg.score_fn, loss_cfg, rng=root.child(b), with_grads=False)
        values.append(v)
        sizes.append(mb.size)
    return _weighted_mean(values, sizes)


def train(
    cfg: TrainConfig,
    dev: PairedDataset,
    val: PairedDataset,
    params: ModelParameters | None = None,
    log_path: str | Path | None = None,
) -> tuple[ModelParameters, TrainingHistory]:
    """Train on ``dev``, monitor the loss on ``val``; return best-epoch parameters."""
    cfg.validate()
    if len(dev.pairs) < 2 or len(val.pairs) < 2:
        raise ConfigError("dev and val splits need at least 2 pairs each")
    if dev.d_in != val.d_in or dev.vocab_size != val.vocab_size:
        raise ConfigError("dev and val splits disagree on d_in or vocab_size")
    if params is None:
        params = init_parameters(cfg.dim, dev.d_in, dev.vocab_size, cfg.seed, relu=cfg.relu)
    loss_cfg = LossConfig(cfg.margin)
    history = TrainingHistory()
    if cfg.max_epochs == 0:
        return params, history

    dev_t, val_t = _PairTensors(dev), _PairTensors(val)
    val_batches = make_batches(val, cfg.batch_size, seed=SplitMix64(cfg.seed).child("validation", "batches").seed)
    val_audio_all = AudioInputs.from_clips(val.clips)
    val_text_all = TextInputs.from_captions(val.captions)
    root = SplitMix64(cfg.seed)

    adam = AdamState()
    sched = PlateauState(lr=cfg.lr, factor=cfg.plateau_factor, patience=cfg.plateau_patience)
    stopper = EarlyStopState(patience=cfg.early_stop_patience)
    best_params, best_val = params.copy(), math.inf
    log = open(log_path, "w", encoding="utf-8") if log_path else None
    try:
        for epoch in range(1, cfg.max_epochs + 1):
            lr = sched.lr
            losses, sizes = [], []
            for b, mb in enumerate(make_batches(dev, cfg.batch_size, seed=cfg.seed, epoch=epoch)):
                audio, text = dev_t.batch(mb.pair_indices)
                rng = root.child("epoch", epoch, "batch", b, "negatives")
                value, grads = batch_loss(params, audio, text, cfg.strategy, cfg.score_fn, loss_cfg, rng=rng)
                params, adam = adam_step(params, grads, adam, lr, cfg.beta1, cfg.beta2, cfg.eps)
                losses.append(value)
                sizes.append(mb.size)
            train_loss = _weighted_mean(losses, sizes)
            val_loss = validation_loss(params, val_t, val_batches, cfg, loss_cfg)
            report = collapse_check(
                encode_audio_batch(params, val_audio_all),
                encode_text_batch(params, val_text_all),
                cfg.collapse_threshold,
            )
            record = EpochRecord(
                epoch, train_loss, val_loss, lr, report.flagged, report.mean_audio_norm, report.mean_text_norm
            )
            history.records.append(record)
            history.stopped_epoch = epoch
            if log:
                log.write(json.dumps(asdict(record), sort_keys=True) + "\n")
                log.flush()
            if val_loss < best_val:
                best_val, best_params, history.best_epoch = val_loss, params.copy(), epoch
            plateau_scheduler_update(sched, val_loss)
            if early_stop_check(stopper, val_loss):
                break
    finally:
        if log:
            log.close()
    return best_params, history
