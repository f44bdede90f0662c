"""Bidirectional retrieval metrics: mAP, recall at k, and query-level recall at k.

Two recall definitions are reported. ``r_at`` is the fraction of a query's
relevant items found in the top k, averaged over queries. ``r_at_query`` is
the fraction of queries with at least one relevant item in the top k.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Collection, Sequence

import numpy as np

from nslab import kernels
from nslab.data import PairedDataset
from nslab.encoders import AudioInputs, ModelParameters, TextInputs, encode_audio_batch, encode_text_batch
from nslab.relevance import check_score_fn, pairwise_scores

DIRECTIONS = ("text_to_audio", "audio_to_text")
DEFAULT_KS = (5, 10)


@dataclass(frozen=True)
class RetrievalMetrics:
    map: float
    r_at: dict[int, float] = field(default_factory=dict)
    r_at_query: dict[int, float] = field(default_factory=dict)


def _mean(values) -> float:
    total = 0.0
    count = 0
    for v in values:
        total += v
        count += 1
    return total / count


def ap_from_ranks(ranks: Sequence[int], total_relevant: int) -> float:
    """AP given the 1-based ranks at which relevant items were retrieved."""
    if total_relevant < 1:
        raise ValueError("total_relevant must be at least 1")
    total = 0.0
    for hits, r in enumerate(sorted(ranks), start=1):
        total += hits / r
    return total / total_relevant


def average_precision(ranked_ids: Sequence[int], relevant: Collection[int], total_relevant: int | None = None) -> float:
    """Mean of precision@p over the positions p holding relevant items.

    Relevant items missing from ``ranked_ids`` contribute zero.
    """
    if total_relevant is None:
        total_relevant = len(relevant)
    if len(set(ranked_ids)) != len(ranked_ids):
        raise ValueError("ranked list contains duplicates")
    relevant = set(relevant)
    ranks = [p for p, item in enumerate(ranked_ids, start=1) if item in relevant]
    return ap_from_ranks(ranks, total_relevant)


def recall_at_k_items(ranked_ids: Sequence[int], relevant: Collection[int], k: int) -> float:
    """|relevant in top k| / |relevant|."""
    if k < 1:
        raise ValueError("k must be at least 1")
    relevant = set(relevant)
    if not relevant:
        raise ValueError("empty relevant set")
    return len(relevant.intersection(ranked_ids[:k])) / len(relevant)


def recall_at_k_query(
    ranked_lists: Sequence[Sequence[int]], relevant_sets: Sequence[Collection[int]], k: int
) -> float:
    """Fraction of queries with at least one relevant item in the top k."""
    if not ranked_lists or len(ranked_lists) != len(relevant_sets):
        raise ValueError("need one relevant set per query and at least one query")
    hits = [1.0 if set(rel).intersection(ranked[:k]) else 0.0 for ranked, rel in zip(ranked_lists, relevant_sets)]
    return _mean(hits)


def metrics_from_ranks(rank_lists: Sequence[Sequence[int]], ks: Sequence[int] = DEFAULT_KS) -> RetrievalMetrics:
    """Aggregate metrics from each query's relevant-item ranks (all relevant items ranked)."""
    aps = [ap_from_ranks(r, len(r)) for r in rank_lists]
    r_at = {k: _mean(sum(1 for x in r if x <= k) / len(r) for r in rank_lists) for k in ks}
    r_q = {k: _mean(1.0 if min(r) <= k else 0.0 for r in rank_lists) for k in ks}
    return RetrievalMetrics(_mean(aps), r_at, r_q)


def rank_relevant(scores: np.ndarray, cand_ids: Sequence[int], relevant: Sequence[Sequence[int]]) -> list[list[int]]:
    """Ranks of relevant candidates (column indices) per query row of ``scores``."""
    width = max(len(r) for r in relevant)
    padded = np.array([list(r) + [r[0]] * (width - len(r)) for r in relevant], dtype=np.int64)
    ranks = kernels.relevant_ranks(scores, np.asarray(cand_ids, dtype=np.int64), padded)
    return [ranks[q, : len(r)].tolist() for q, r in enumerate(relevant)]


def score_all(params: ModelParameters, ds: PairedDataset, fn: str) -> np.ndarray:
    """Scores of every clip (rows) against every caption (columns)."""
    seq = fn == "mean_max_align"
    audio = encode_audio_batch(params, AudioInputs.from_clips(ds.clips), sequences=seq)
    text = encode_text_batch(params, TextInputs.from_captions(ds.captions), sequences=seq)
    return pairwise_scores(fn, audio, text)


def evaluate_retrieval(
    params: ModelParameters, ds: PairedDataset, fn: str = "dot", direction: str = "text_to_audio",
    ks: Sequence[int] = DEFAULT_KS,
) -> RetrievalMetrics:
    """Rank every candidate of the other modality for every query.

    Text-to-audio: captions query all clips, one relevant clip each.
    Audio-to-text: clips query all captions, relevant = all of the clip's captions.
    Ties are broken by ascending item id.
    """
    check_score_fn(fn)
    if direction not in DIRECTIONS:
        raise ValueError(f"direction must be one of {DIRECTIONS}")
    if not ds.pairs:
        raise ValueError("empty evaluation split")
    s = score_all(params, ds, fn)
    if direction == "text_to_audio":
        cand_ids = [c.clip_id for c in ds.clips]
        relevant = [[ds.clip_index(cap.clip_id)] for cap in ds.captions]
        ranks = rank_relevant(np.ascontiguousarray(s.T), cand_ids, relevant)
    else:
        cand_ids = [c.caption_id for c in ds.captions]
        owned: dict[int, list[int]] = {c.clip_id: [] for c in ds.clips}
        for col, cap in enumerate(ds.captions):
            owned[cap.clip_id].append(col)
        relevant = [owned[c.clip_id] for c in ds.clips]
        ranks = rank_relevant(s, cand_ids, relevant)
    return metrics_from_ranks(ranks, ks)
