import math
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gar.analytics import entropy_from_top_logprobs, histogram_table, profile, split_summary
from gar.errors import NoTokensError

LN2 = math.log(2)


class TestProfile:
    def test_zeros_and_ln2(self):
        p = profile([0, 0, LN2], 1e-9)
        assert abs(p.mean_entropy - LN2 / 3) <= 1e-15
        assert p.filtered_mean_entropy == LN2
        assert p.zero_fraction == 2 / 3
        assert abs(p.mean_entropy - 0.231049) < 1e-6

    def test_no_zeros(self):
        p = profile([0.5, 0.5])
        assert p.mean_entropy == p.filtered_mean_entropy == 0.5 and p.zero_fraction == 0

    def test_all_zero(self):
        p = profile([0, 0])
        assert p.filtered_mean_entropy is None and p.zero_fraction == 1

    def test_errors(self):
        with pytest.raises(NoTokensError):
            profile([])
        with pytest.raises(ValueError):
            profile([0.1, -0.1])


def mk(mean, correct):
    return profile([mean], correct=correct)


class TestSplitSummary:
    def test_all_correct(self):
        s = split_summary([mk(0.3, 1), mk(0.4, 1)])
        assert s["wrong"].n == 0 and s["wrong"].mean is None
        assert s["correct"].n == 2

    def test_shift_reproduced(self):
        base = [0.1, 0.4, 0.25, 0.7, 0.5]
        s = split_summary([mk(v, 1) for v in base] + [mk(v + 0.1, 0) for v in base])
        for q in ("mean", "p25", "p50", "p75"):
            assert abs(getattr(s["wrong"], q) - getattr(s["correct"], q) - 0.1) <= 1e-12

    def test_single(self):
        st_ = split_summary([mk(0.42, 0)])["wrong"]
        assert st_.p25 == st_.p50 == st_.p75 == 0.42

    def test_linear_quantiles(self):
        s = split_summary([mk(v, 1) for v in (0.0, 1.0, 2.0, 3.0)])["correct"]
        assert (s.p25, s.p50, s.p75) == (0.75, 1.5, 2.25)

    def test_filtered_skips_empty(self):
        profiles = [profile([0.0], correct=1), profile([0.0, 0.6], correct=1)]
        assert split_summary(profiles, filtered=True)["correct"].n == 1

    def test_empty(self):
        with pytest.raises(ValueError):
            split_summary([])


class TestTopLogprobs:
    def test_uniform_complete(self):
        assert abs(entropy_from_top_logprobs([math.log(0.25)] * 4) - math.log(4)) <= 1e-12

    def test_tail_lumped(self):
        h = entropy_from_top_logprobs([math.log(0.5)])
        assert abs(h - LN2) <= 1e-12

    def test_deterministic_token(self):
        assert entropy_from_top_logprobs([0.0]) == 0.0


def test_histogram_counts():
    table = histogram_table([mk(0.1, 1), mk(0.2, 0), mk(0.9, 0)], bins=2)
    rows = table.strip().split("\n")
    assert len(rows) == 3
    assert rows[1].split()[-2:] == ["1", "1"] and rows[2].split()[-2:] == ["0", "1"]


entropy_lists = st.lists(st.one_of(st.just(0.0), st.floats(0, 10)), min_size=1, max_size=50)


@settings(max_examples=500, deadline=None)
@given(entropy_lists)
def test_filtered_at_least_unfiltered(hs):
    p = profile(hs)
    assert 0 <= p.zero_fraction <= 1
    if p.filtered_mean_entropy is not None:
        assert p.filtered_mean_entropy >= p.mean_entropy
        if p.zero_fraction == 0:
            assert p.filtered_mean_entropy == p.mean_entropy
        else:
            assert p.filtered_mean_entropy > p.mean_entropy or p.mean_entropy == 0


@settings(max_examples=300, deadline=None)
@given(entropy_lists, st.integers(0, 2**31))
def test_profile_permutation_invariant(hs, seed):
    before = profile(hs)
    random.Random(seed).shuffle(hs)
    assert profile(hs) == before


@settings(max_examples=200, deadline=None)
@given(st.integers(2, 64))
def test_uniform_distribution_entropy(v):
    h = entropy_from_top_logprobs(list(np.full(v, -math.log(v))))
    assert abs(h - math.log(v)) <= 1e-12
