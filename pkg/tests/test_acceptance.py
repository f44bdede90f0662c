"""Acceptance criteria, one verdict line each (see the terminal summary)."""
import time
from dataclasses import replace

import numpy as np
import pytest

from gradcheck import fd_compare, random_instance
from oracles import (
    fd_grad,
    kink_free_instance,
    metrics_oracle,
    random_oracle,
    random_score_matrix,
    select_oracle,
)
from nslab.data import SynthConfig
from nslab.evaluation import DIRECTIONS, average_precision, metrics_from_ranks, rank_relevant, recall_at_k_items, recall_at_k_query
from nslab.experiment import ExperimentConfig, report_csv, report_json, report_markdown, run_experiment
from nslab.objective import full_batch_loss, triplet_loss
from nslab.rng import SplitMix64
from nslab.sampling import STRATEGIES, NegativeSelection, select_negatives
from nslab.training import EarlyStopState, PlateauState, early_stop_check, plateau_scheduler_update

pytestmark = pytest.mark.acceptance


def test_c1_sampling_oracle(report_line):
    gen = np.random.default_rng(2023)
    t0 = time.perf_counter()
    mismatches = 0
    for m in range(1000):
        n = int(gen.integers(2, 9))
        s, wt, wa = (random_score_matrix(gen, n) for _ in range(3))
        for strategy in STRATEGIES:
            if strategy == "full_mini_batch":
                sel = select_negatives(strategy, s)
                want = [[c for c in range(n) if c != i] for i in range(n)]
                ok = sel.text.tolist() == want and sel.audio.tolist() == want
            elif strategy == "random":
                sel = select_negatives(strategy, s, rng=SplitMix64(m))
                ok = (sel.j.tolist(), sel.k.tolist()) == random_oracle(n, SplitMix64(m))
            else:
                sel = select_negatives(strategy, s, wt, wa)
                ok = (sel.j.tolist(), sel.k.tolist()) == select_oracle(strategy, s, wt, wa)
            mismatches += not ok
    elapsed = time.perf_counter() - t0
    ok = report_line("1 sampling oracle", mismatches == 0 and elapsed < 10, f"mismatches={mismatches} time={elapsed:.2f}s")
    assert ok


def _rel_ok(analytic, fd):
    mask = np.abs(fd) > 1e-9
    rel = np.abs(analytic[mask] - fd[mask]) / np.abs(fd[mask])
    flat = np.abs(analytic[~mask]) <= 1e-9
    return (rel.max() if rel.size else 0.0), bool(np.all(rel <= 1e-6) and np.all(flat))


def test_c2_loss_gradients(report_line):
    gen = np.random.default_rng(77)
    t0 = time.perf_counter()
    worst, all_ok = 0.0, True
    for _ in range(100):
        n = int(gen.integers(2, 9))
        s, js, ks = kink_free_instance(gen, n)
        sel = NegativeSelection.singletons(js, ks)
        for f in (lambda m: triplet_loss(m, sel), full_batch_loss):
            r, ok = _rel_ok(f(s).grad_s, fd_grad(lambda m: f(m).value, s, 1e-6))
            worst, all_ok = max(worst, r), all_ok and ok
    example = triplet_loss(np.array([[3.0, 2.5], [1.0, 4.0]]), NegativeSelection.singletons([1, 0], [1, 0])).value
    elapsed = time.perf_counter() - t0
    ok = all_ok and example == 0.25 and elapsed < 10
    assert report_line("2 loss gradients", ok, f"worst_rel={worst:.2e} example={example!r} time={elapsed:.2f}s")


def test_c3_end_to_end_gradients(report_line):
    t0 = time.perf_counter()
    worst, checked = 0.0, 0
    cases = [
        (seed, n, dim, strategy, fn)
        for seed, (n, dim) in enumerate([(2, 3), (3, 8), (4, 5), (4, 8)])
        for strategy in ("random", "full_mini_batch", "cross_hard", "cross_semi_hard", "text_easy", "audio_hard")
        for fn in ("dot", "cosine", "mean_max_align")
    ]
    for seed, n, dim, strategy, fn in cases:
        params, audio, text, sel = random_instance(seed, n, dim, strategy, fn)
        w, c = fd_compare(params, audio, text, sel, strategy, fn, h=1e-5, rel_tol=1e-4)
        worst, checked = max(worst, w), checked + c
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-4 and elapsed < 30
    assert report_line("3 end-to-end gradients", ok, f"worst_rel={worst:.2e} coords={checked} time={elapsed:.2f}s")


def test_c4_metrics_oracle(report_line):
    gen = np.random.default_rng(404)
    t0 = time.perf_counter()
    bad = 0
    for _ in range(200):
        n_items = int(gen.integers(1, 21))
        n_queries = int(gen.integers(1, 6))
        scores = gen.integers(-3, 4, size=(n_queries, n_items)).astype(float)
        ids = [int(x) for x in gen.permutation(1000)[:n_items]]
        relevant = [
            sorted(gen.choice(n_items, size=int(gen.integers(1, n_items + 1)), replace=False).tolist())
            for _ in range(n_queries)
        ]
        got = metrics_from_ranks(rank_relevant(scores, ids, relevant))
        want = metrics_oracle(scores, ids, relevant)
        bad += not (
            abs(got.map - want[0]) < 1e-12
            and all(abs(got.r_at[k] - want[1][k]) < 1e-12 for k in (5, 10))
            and all(abs(got.r_at_query[k] - want[2][k]) < 1e-12 for k in (5, 10))
        )
    ap = average_precision([0, 1, 2, 3, 4], {0, 2}, 2)
    ranked = list(range(25))
    one_of_five = {0, 10, 11, 12, 13}
    divergence = (recall_at_k_items(ranked, one_of_five, 5), recall_at_k_query([ranked], [one_of_five], 5))
    all_five = (recall_at_k_items(ranked, {0, 1, 2, 3, 4}, 5), recall_at_k_query([ranked], [{0, 1, 2, 3, 4}], 5))
    elapsed = time.perf_counter() - t0
    ok = bad == 0 and ap == (1 + 2 / 3) / 2 and divergence == (0.2, 1.0) and all_five == (1.0, 1.0) and elapsed < 10
    assert report_line("4 metrics oracle", ok, f"mismatches={bad} ap={ap!r} r@5={divergence} time={elapsed:.2f}s")


def _trace(losses):
    sched, stopper = PlateauState(lr=1e-3), EarlyStopState()
    drops, stop = [], None
    for epoch, v in enumerate(losses, start=1):
        if plateau_scheduler_update(sched, v)[0] is not None:
            drops.append(epoch)
        if early_stop_check(stopper, v):
            stop = epoch
            break
    return drops, stop


def test_c5_schedule_traces(report_line):
    t0 = time.perf_counter()
    drops_a, stop_a = _trace([1.0, 0.9, 0.9, 0.9, 0.9, 0.9, 0.9])
    best_epoch = 2
    drops_b, stop_b = _trace([1.0, 0.9] + [0.9] * 20)
    elapsed = time.perf_counter() - t0
    ok = drops_a == [7] and stop_a is None and stop_b == best_epoch + 10 and elapsed < 1
    assert report_line("5 schedule traces", ok, f"lr_drop_epochs={drops_a} stop_epoch={stop_b} (best {best_epoch})")


@pytest.fixture(scope="module")
def table_report():
    t0 = time.perf_counter()
    report = run_experiment(ExperimentConfig())
    return report, time.perf_counter() - t0


def _maps(report, strategy):
    return tuple(report.aggregate(strategy, d).map for d in DIRECTIONS)


def _fmt(pair):
    return "/".join(f"{x:.4f}" for x in pair)


def test_c6a_semi_hard_beats_random(table_report, report_line):
    report, elapsed = table_report
    semi, rand = _maps(report, "cross_semi_hard"), _maps(report, "random")
    ok = all(a > b for a, b in zip(semi, rand)) and elapsed < 900
    assert report_line(
        "6a cross_semi_hard > random (t2a/a2t mAP)", ok, f"{_fmt(semi)} vs {_fmt(rand)} grid_time={elapsed:.0f}s"
    )


def test_c6b_hard_beats_easy(table_report, report_line):
    report, _ = table_report
    pairs = {m: (_maps(report, f"{m}_hard"), _maps(report, f"{m}_easy")) for m in ("text", "audio")}
    ok = all(h > e for hard, easy in pairs.values() for h, e in zip(hard, easy))
    detail = " ".join(f"{m}: {_fmt(h)} vs {_fmt(e)}" for m, (h, e) in pairs.items())
    assert report_line("6b within-modality hard > easy", ok, detail)


def test_c6c_cross_hard_degrades(table_report, report_line):
    report, _ = table_report
    hard, rand = _maps(report, "cross_hard"), _maps(report, "random")
    collapsed = any(report.aggregate("cross_hard", d).collapsed for d in DIRECTIONS)
    below = all(h < r for h, r in zip(hard, rand))
    detail = f"collapsed={collapsed} mAP {_fmt(hard)} vs random {_fmt(rand)}"
    assert report_line("6c cross_hard collapses or trails random", collapsed or below, detail)


def test_c7_audio_to_text_harder(table_report, report_line):
    report, _ = table_report
    worst = []
    for s in STRATEGIES:
        t2a, a2t = report.aggregate(s, "text_to_audio"), report.aggregate(s, "audio_to_text")
        for name in ("map", "r_at_5", "r_at_10"):
            if getattr(a2t, name) > getattr(t2a, name):
                worst.append(f"{s}.{name}")
    assert report_line("7 audio-to-text <= text-to-audio", not worst, f"violations={worst or 'none'}")


def test_c8_determinism(report_line):
    cfg = ExperimentConfig(
        seeds=(0, 1), train=replace(ExperimentConfig().train, max_epochs=8), synth=SynthConfig(n_clips=60)
    )
    first = run_experiment(cfg)
    second = run_experiment(cfg)
    parallel = run_experiment(replace(cfg, jobs=2))
    same = all(w(first) == w(second) == w(parallel) for w in (report_csv, report_json, report_markdown))
    assert report_line("8 byte-identical reruns", same, "csv/json/markdown, serial and 2 workers")
