import math

import numpy as np
import pytest
from hypothesis import given
import hypothesis.strategies as st

from jlforge.combinatorics import exact_tail_probability, q_distribution
from jlforge.core import EmbeddingSpec, InvalidArgument, Kind
from jlforge.estimator import (
    Z95,
    SweepRow,
    allpairs_experiment,
    candidate_ks,
    estimate_tail,
    fit_log_tail,
    hard_tail,
    min_m_for,
    norm_preserved,
    pair_preserved,
    scaling_sweep,
    sweep_k,
    wilson_interval,
)
from jlforge.instances import hard_family, hard_vector, shift_vector
from jlforge.transforms import embed


def overlap(a, b):
    return a.ci_low <= b.ci_high and b.ci_low <= a.ci_high


class TestWilson:
    def test_zero_failures(self):
        lo, hi = wilson_interval(0, 10)
        assert lo == 0
        assert hi == pytest.approx(Z95**2 / (10 + Z95**2), rel=1e-12)

    def test_half(self):
        lo, hi = wilson_interval(50, 100)
        half = Z95 * math.sqrt(0.25 / 100 + Z95**2 / 40000) / (1 + Z95**2 / 100)
        assert (lo, hi) == pytest.approx((0.5 - half, 0.5 + half), rel=1e-12)

    @given(st.integers(1, 10**6), st.data())
    def test_contains_estimate(self, n, data):
        f = data.draw(st.integers(0, n))
        lo, hi = wilson_interval(f, n)
        assert 0 <= lo <= f / n <= hi <= 1

    def test_width_shrinks_like_root_two(self):
        w1 = np.subtract(*wilson_interval(2000, 20000)[::-1])
        w2 = np.subtract(*wilson_interval(4000, 40000)[::-1])
        assert w2 / w1 == pytest.approx(1 / math.sqrt(2), rel=0.01)


class TestEstimateTail:
    def test_degenerate_never_fails(self):
        est = estimate_tail(np.eye(6)[0], 1, 0.01, 5000, 3)
        assert est.failures == 0 and est.p_hat == 0

    def test_reproducible_and_thread_independent(self):
        x = hard_vector(2, 40).x
        a = estimate_tail(x, 32, 0.5, 20000, 9, workers=1)
        b = estimate_tail(x, 32, 0.5, 20000, 9, workers=4)
        assert a == b

    def test_agrees_with_exact_oracle(self):
        # m = 4, s = 8: 2**19 sign assignments enumerated exactly
        p = float(exact_tail_probability(4, 8, 0.5, q_distribution(4, 8)))
        est = hard_tail(2, 4, 0.5, 20000, 1)
        assert est.ci_low <= p <= est.ci_high

    def test_failure_count_matches_embed(self):
        x = hard_vector(2, 24).x
        est = estimate_tail(x, 16, 0.3, 300, 5)
        direct = sum(abs(np.sum(embed(EmbeddingSpec(24, 16, Kind.TOEPLITZ, 5, i), x) ** 2) - 1) > 0.3 for i in range(300))
        assert est.failures == direct

    @pytest.mark.parametrize("eps", [0.0, 1.0, -0.2])
    def test_bad_epsilon(self, eps):
        with pytest.raises(InvalidArgument):
            estimate_tail(np.eye(4)[0], 2, eps, 10, 0)

    def test_non_unit(self):
        with pytest.raises(InvalidArgument):
            estimate_tail(np.ones(4), 2, 0.5, 10, 0)

    def test_sign_pattern_irrelevant(self):
        a = hard_tail(2, 16, 0.5, 100_000, 4, sign_seed=0)
        b = hard_tail(2, 16, 0.5, 100_000, 4, sign_seed=12345)
        assert overlap(a, b)

    def test_doubling_trials_narrows_interval(self):
        a = hard_tail(2, 16, 0.5, 50_000, 2)
        b = hard_tail(2, 16, 0.5, 100_000, 2)
        ratio = (b.ci_high - b.ci_low) / (a.ci_high - a.ci_low)
        assert ratio == pytest.approx(1 / math.sqrt(2), rel=0.05)


class TestMinM:
    def test_vacuous(self):
        assert min_m_for(0.25, 1.0) == 1

    def test_needs_resolvable_delta(self):
        with pytest.raises(InvalidArgument):
            min_m_for(0.5, 0.01, trials=9999)

    def test_candidate_ks(self):
        assert candidate_ks(64) == [2, 4, 6, 8]
        assert candidate_ks(16) == [2]
        assert candidate_ks(3) == [2]

    def test_monotone_in_delta(self):
        loose = min_m_for(0.5, 0.1, trials=10_000, seed=3)
        tight = min_m_for(0.5, 0.01, trials=10_000, seed=3)
        assert tight >= loose

    def test_not_found(self):
        assert min_m_for(0.5, 0.01, trials=10_000, m_max=16) is None

    def test_dense_close_to_grid_oracle(self):
        eps, delta = 0.5, 0.01
        found = min_m_for(eps, delta, Kind.DENSE, trials=10_000, seed=0)

        def passes(m):
            return all(hard_tail(k, m, eps, 100_000, 1, Kind.DENSE).ci_high <= delta for k in candidate_ks(m))

        oracle = next(m for m in range(4, 257, 4) if passes(m))
        assert oracle / 4 <= found <= 4 * oracle


class TestSweep:
    def test_rows(self):
        rows = scaling_sweep(Kind.TOEPLITZ, 0.5, [8, 16, 64, 256], 4000, 1, c0_grid=(1.0, 2.0))
        assert [(r.m, r.c0) for r in rows] == [(m, c) for m in (8, 16, 64, 256) for c in (1.0, 2.0)]
        for r in rows:
            assert r.k_used % 2 == 0 and r.k_used >= 2
            assert r.skipped == (4 * r.k_used >= r.m)
            assert r.wall_time == 0.0
        live = [r for r in rows if not r.skipped and r.c0 == 1.0]
        for a, b in zip(live, live[1:]):
            assert b.p_hat <= a.p_hat or b.ci_low <= a.ci_high

    def test_k_choice(self):
        assert sweep_k(0.5, 64) == 4
        assert sweep_k(0.5, 100) == 4
        assert sweep_k(0.5, 4) == 2
        assert sweep_k(0.5, 1024, c0=0.5) == 8

    def test_grid_must_increase(self):
        with pytest.raises(InvalidArgument):
            scaling_sweep(Kind.DENSE, 0.5, [64, 64], 10, 0)

    def test_timing_flag(self):
        (row,) = scaling_sweep(Kind.DENSE, 0.5, [64], 100, 0, timing=True)
        assert row.wall_time > 0


def _row(m, p, failures=100):
    return SweepRow("toeplitz", 0.5, m, 2, 10**6, failures, p, p, p, 0)


class TestFit:
    def test_exact_line(self):
        rows = [_row(m, 2.0 ** -(0.5 * math.sqrt(m) + 1)) for m in (16, 64, 144)]
        fit = fit_log_tail(rows, "sqrt")
        assert fit.slope == pytest.approx(0.5) and fit.intercept == pytest.approx(1.0)
        assert fit.r_squared == pytest.approx(1.0) and fit.points == 3

    def test_drops_rare_rows(self):
        rows = [_row(16, 0.1), _row(64, 0.01), _row(256, 1e-6, failures=1)]
        assert fit_log_tail(rows).points == 2
        assert fit_log_tail(rows[1:]) is None


class TestPairs:
    def test_pair_with_zero_is_norm_condition(self):
        x = hard_vector(2, 24).x
        for i in range(200):
            spec = EmbeddingSpec(24, 16, Kind.TOEPLITZ, 8, i)
            fx, f0 = embed(spec, x), embed(spec, np.zeros(24))
            assert pair_preserved(fx, f0, x, np.zeros(24), 0.4) == norm_preserved(fx, x, 0.4)


class TestAllPairs:
    def test_single_member(self):
        fam = hard_family(2, 100, 16, N=1)
        res = allpairs_experiment(fam, 0.5, 20_000, 6)
        single = hard_tail(2, 16, 0.5, 20_000, 6)
        assert res.successes == 20_000 - single.failures
        assert res.success_fraction == 1 - single.p_hat

    def test_huge_epsilon(self):
        res = allpairs_experiment(hard_family(2, 100, 16, N=3), 8.0, 2000, 1)
        assert res.successes == 2000

    def test_overlapping_family_rejected(self):
        fam = hard_family(2, 100, 16, C=0.5, N=3)
        with pytest.raises(InvalidArgument):
            allpairs_experiment(fam, 0.5, 10, 0)

    def test_members_match_their_own_tails(self):
        fam = hard_family(2, 200, 16, N=4)
        res = allpairs_experiment(fam, 0.5, 5000, 2)
        for v, f in zip(fam.members, res.member_failures):
            assert estimate_tail(v, 16, 0.5, 5000, 2).failures == f

    def test_independence(self):
        fam = hard_family(2, 400, 16, N=8)
        res = allpairs_experiment(fam, 0.5, 30_000, 11)
        assert abs(res.deviation) <= 4 * res.stderr


def test_shifted_member_equals_shift_vector():
    x = hard_vector(2, 60).x
    fam = hard_family(2, 60, 16, N=2)
    assert np.array_equal(fam.members[1], shift_vector(x, fam.spacing))
