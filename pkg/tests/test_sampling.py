from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import random_oracle, random_score_matrix, select_oracle
from nslab.errors import ConfigError, ShapeError
from nslab.rng import SplitMix64
from nslab.sampling import (
    STRATEGIES,
    check_strategy,
    full_batch_selection,
    sample_cross_hard,
    sample_cross_semi_hard,
    sample_random,
    sample_within_modality,
    select_negatives,
)

S = np.array([[5.0, 9.0, 4.5], [2.0, 6.0, 4.0], [0.0, 2.0, 7.0]])
W = np.array([[1.0, 0.2, 0.8], [0.2, 1.0, 0.5], [0.8, 0.5, 1.0]])
SCORE_BASED = ("cross_hard", "cross_semi_hard", "text_hard", "text_easy", "audio_hard", "audio_easy")


def test_cross_hard_example():
    assert sample_cross_hard(0, S) == (1, 1)


def test_cross_semi_hard_example():
    assert sample_cross_semi_hard(0, S) == (2, 1)


def test_within_examples():
    assert sample_within_modality(0, W, "hard") == (2, 2)
    assert sample_within_modality(0, W, "easy") == (1, 1)


def test_constant_row_takes_lowest_index():
    s = np.full((4, 4), 3.0)
    assert sample_cross_hard(2, s) == (0, 0)
    assert sample_cross_semi_hard(0, s) == (1, 1)


def test_semi_hard_exact_match_and_tie():
    s = np.array([[2.0, 1.0, 2.0, 3.0], [0, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0]])
    assert sample_cross_semi_hard(0, s)[0] == 2
    s[0, 2] = 5.0  # now 1.0 and 3.0 are equidistant from 2.0
    assert sample_cross_semi_hard(0, s)[0] == 1


def test_n2_forced():
    s = np.array([[0.0, -5.0], [7.0, 1.0]])
    for i in range(2):
        assert sample_cross_hard(i, s) == (1 - i, 1 - i)
        assert sample_cross_semi_hard(i, s) == (1 - i, 1 - i)
        assert sample_random(i, 2, SplitMix64(i)) == (1 - i, 1 - i)


def test_full_batch_lists():
    sel = select_negatives("full_mini_batch", np.zeros((3, 3)))
    assert sel.text.tolist() == [[1, 2], [0, 2], [0, 1]]
    assert sel.audio.tolist() == sel.text.tolist()
    assert not sel.is_singleton
    assert full_batch_selection(3).text.tolist() == sel.text.tolist()


def test_random_uniform_over_100k_draws():
    rng = SplitMix64(2024)
    counts = Counter()
    for _ in range(100_000):
        counts[sample_random(2, 5, rng)[0]] += 1
    assert set(counts) == {0, 1, 3, 4}
    for c in counts.values():
        assert abs(c / 100_000 - 0.25) <= 0.02


def test_random_determinism():
    a = select_negatives("random", np.zeros((6, 6)), rng=SplitMix64(3))
    b = select_negatives("random", np.zeros((6, 6)), rng=SplitMix64(3))
    assert a.j.tolist() == b.j.tolist() and a.k.tolist() == b.k.tolist()


def test_random_matches_oracle():
    for n in range(2, 9):
        sel = select_negatives("random", np.zeros((n, n)), rng=SplitMix64(n))
        assert (sel.j.tolist(), sel.k.tolist()) == random_oracle(n, SplitMix64(n))


def test_brute_force_oracle_suite():
    gen = np.random.default_rng(99)
    for _ in range(300):
        n = int(gen.integers(2, 9))
        s, wt, wa = (random_score_matrix(gen, n) for _ in range(3))
        for strategy in SCORE_BASED:
            sel = select_negatives(strategy, s, wt, wa)
            assert (sel.j.tolist(), sel.k.tolist()) == select_oracle(strategy, s, wt, wa), strategy


@settings(max_examples=80, deadline=None)
@given(st.integers(2, 8).flatmap(lambda n: arrays(np.float64, (n, n), elements=st.floats(-5, 5, allow_nan=False))))
def test_self_exclusion(s):
    n = s.shape[0]
    for strategy in STRATEGIES:
        sel = select_negatives(strategy, s, s, s.T.copy(), rng=SplitMix64(1))
        for i in range(n):
            assert i not in sel.text[i] and i not in sel.audio[i]


@settings(max_examples=60, deadline=None)
@given(arrays(np.int64, (5, 5), elements=st.integers(-6, 6)))
def test_hard_selection_invariant_under_monotone_map(s):
    # integer grid so the transform stays strictly increasing in floating point
    s = s.astype(np.float64)
    t = np.exp(s / 5.0) * 3 + 1
    for strategy in ("cross_hard", "text_hard", "text_easy", "audio_hard", "audio_easy"):
        a = select_negatives(strategy, s, s, s)
        b = select_negatives(strategy, t, t, t)
        assert a.j.tolist() == b.j.tolist() and a.k.tolist() == b.k.tolist()


def test_missing_inputs():
    with pytest.raises(ConfigError):
        select_negatives("text_hard", np.zeros((3, 3)))
    with pytest.raises(ConfigError):
        select_negatives("audio_easy", np.zeros((3, 3)), w_text=np.zeros((3, 3)))
    with pytest.raises(ConfigError):
        select_negatives("random", np.zeros((3, 3)))
    with pytest.raises(ShapeError):
        select_negatives("text_hard", np.zeros((3, 3)), w_text=np.zeros((4, 4)))


def test_unknown_strategy_lists_spellings():
    with pytest.raises(ConfigError, match="cross_semi_hard"):
        check_strategy("semi_hard")
