"""Core moment engine: pmf, certified sums, variance oracles, sampling."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from poissonlab.poisson_core import (
    CappedFunctional,
    ORACLE_POINTS,
    TruncationError,
    expectation,
    fourth_central_moment,
    functional_value,
    log_pmf,
    monte_carlo_moments,
    plain_indicator_moments,
    pmf,
    variance,
    variance_pairwise,
)

# Frozen reference values, computed independently with 40-digit arithmetic
# (mpmath) by direct summation over a very wide window.
EXPECTATION_ORACLE = {
    (10.0, 3.0, 7.0): 45.351376662859243,
    (0.5, 2.0, 2.0): 0.014387677966970687,
    (100.0, 10.0, 50.0): 2236.0679772603437,
    (2.0, 0.5, 4.0): 0.91449719453797162,
}
VARIANCE_ORACLE = {
    (10.0, 3.0, 7.0): 236.4133468352628,
    (0.5, 2.0, 2.0): 0.11877236108770998,
    (100.0, 10.0, 50.0): 50000.000570997985,
    (2.0, 0.5, 4.0): 5.2089424187712208,
}
PLAIN_EXPECTATION_ORACLE = {
    0.5: 0.0071938389834853433,
    4.0: 3.0475867777858226,
    10.0: 9.9723060428448842,
}


class TestLogPmf:
    def test_matches_closed_form_small(self):
        for lam in (0.3, 1.0, 5.0, 20.0):
            for x in range(0, 40):
                direct = lam**x * math.exp(-lam) / math.factorial(x)
                assert pmf(lam, x) == pytest.approx(direct, rel=1e-12)

    def test_matches_mpmath_large(self):
        mp = pytest.importorskip("mpmath")
        mp.mp.dps = 40
        for lam, x in [(1e4, 10000), (1e4, 9500), (5000.0, 5200), (1e4, 10450)]:
            ref = float(
                mp.e ** (x * mp.log(lam) - lam - mp.loggamma(x + 1))
            )
            # log-space evaluation cancels O(lam log lam) magnitudes, so the
            # achievable relative accuracy degrades with lam
            assert pmf(lam, x) == pytest.approx(ref, rel=1e-10)

    def test_degenerate_rate(self):
        assert log_pmf(0.0, 0) == 0.0
        assert log_pmf(0.0, 3) == -math.inf

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            log_pmf(-1.0, 0)
        with pytest.raises(ValueError):
            log_pmf(1.0, -1)


class TestFunctionalValue:
    def test_below_threshold_is_zero(self):
        f = CappedFunctional(5.0, 2.0, 2.0)
        for x in range(0, 4):
            assert functional_value(x, f) == 0.0

    def test_at_threshold(self):
        # x=4, caps 2 and 2: 4 * sqrt(2*2) = 8
        f = CappedFunctional(5.0, 2.0, 2.0)
        assert functional_value(4, f) == pytest.approx(8.0)

    def test_uncapped_region(self):
        # x=5 below both caps: 5 * sqrt(4*9) ... min(5,4)=4, min(5,9)=5
        f = CappedFunctional(5.0, 4.0, 9.0)
        assert functional_value(5, f) == pytest.approx(5.0 * math.sqrt(20.0))

    def test_vectorized_matches_scalar(self):
        f = CappedFunctional(5.0, 3.0, 7.0)
        xs = np.arange(0, 30)
        vec = functional_value(xs, f)
        for x in xs:
            assert vec[x] == functional_value(int(x), f)

    def test_cap_swap_is_transparent(self):
        # constructor normalizes to cap_a <= cap_b; values are symmetric
        f1 = CappedFunctional(5.0, 7.0, 3.0)
        f2 = CappedFunctional(5.0, 3.0, 7.0)
        assert f1.cap_a == 3.0 and f1.cap_b == 7.0
        for x in range(0, 20):
            assert functional_value(x, f1) == functional_value(x, f2)


class TestExpectation:
    @pytest.mark.parametrize("point", sorted(EXPECTATION_ORACLE))
    def test_frozen_oracle(self, point):
        lam, a, b = point
        est = expectation(CappedFunctional(lam, a, b))
        assert est.value == pytest.approx(EXPECTATION_ORACLE[point], abs=1e-9)
        assert abs(est.value - EXPECTATION_ORACLE[point]) <= est.tail_bound

    def test_zero_rate(self):
        est = expectation(CappedFunctional(0.0, 2.0, 2.0))
        assert est.value == 0.0

    def test_zero_cap(self):
        est = expectation(CappedFunctional(10.0, 0.0, 5.0))
        assert est.value == 0.0

    def test_closed_form_complement_squared(self):
        # With both caps at +inf the functional is x^2 * 1(x >= 4);
        # E[X^2] = lam + lam^2, so subtract the four head terms.
        lam = 10.0
        head = sum(x * x * pmf(lam, x) for x in range(4))
        est = expectation(CappedFunctional(lam, math.inf, math.inf))
        assert est.value == pytest.approx(lam + lam * lam - head, rel=1e-12)

    def test_tail_bound_is_small(self):
        est = expectation(CappedFunctional(50.0, 10.0, 10.0), tol=1e-10)
        assert est.tail_bound < 1e-6

    def test_rejects_bad_tol(self):
        with pytest.raises(ValueError):
            expectation(CappedFunctional(5.0, 2.0, 2.0), tol=0.0)


class TestVariance:
    @pytest.mark.parametrize("point", sorted(VARIANCE_ORACLE))
    def test_frozen_oracle(self, point):
        lam, a, b = point
        est = variance(CappedFunctional(lam, a, b))
        assert est.value == pytest.approx(VARIANCE_ORACLE[point], rel=1e-8)

    def test_clt_regime(self):
        # For lam far above both caps, Var ~ lam * a * b and E ~ lam*sqrt(ab)
        f = CappedFunctional(1e4, 100.0, 100.0)
        var = variance(f).value
        mean = expectation(f).value
        assert var == pytest.approx(1e8, rel=0.05)
        assert mean == pytest.approx(1e6, rel=0.01)

    def test_pairwise_triangle(self):
        for lam, a, b in ORACLE_POINTS:
            f = CappedFunctional(lam, a, b)
            direct = variance(f)
            pair = variance_pairwise(f)
            gap = abs(direct.value - pair.value)
            assert gap <= direct.tail_bound + pair.tail_bound, (lam, a, b)

    def test_nonnegative(self):
        for lam, a, b in ORACLE_POINTS:
            assert variance(CappedFunctional(lam, a, b)).value >= 0.0


class TestPlainIndicator:
    @pytest.mark.parametrize("lam", sorted(PLAIN_EXPECTATION_ORACLE))
    def test_frozen_oracle(self, lam):
        est, _var = plain_indicator_moments(lam)
        assert est.value == pytest.approx(PLAIN_EXPECTATION_ORACLE[lam], rel=1e-11)

    def test_complement_identity(self):
        # E[X 1(X>=4)] = lam - sum_{x<4} x p(x)
        lam = 7.0
        head = sum(x * pmf(lam, x) for x in range(4))
        est, _ = plain_indicator_moments(lam)
        assert est.value == pytest.approx(lam - head, rel=1e-12)

    def test_variance_positive(self):
        _, var = plain_indicator_moments(3.0)
        assert var.value > 0.0


class TestFourthCentralMoment:
    def test_gaussian_limit(self):
        # At large lam the functional is approximately Gaussian, so the
        # kurtosis ratio mu4 / var^2 approaches 3.
        f = CappedFunctional(2000.0, 10.0, 10.0)
        mu4 = fourth_central_moment(f).value
        var = variance(f).value
        assert mu4 / var**2 == pytest.approx(3.0, rel=0.05)

    def test_exceeds_squared_variance(self):
        for lam, a, b in [(2.0, 2.0, 2.0), (10.0, 3.0, 7.0), (50.0, 8.0, 8.0)]:
            f = CappedFunctional(lam, a, b)
            assert fourth_central_moment(f).value >= variance(f).value ** 2 * (1 - 1e-9)


class TestMonteCarlo:
    def test_deterministic(self):
        f = CappedFunctional(10.0, 3.0, 7.0)
        r1 = monte_carlo_moments(f, 10_000, seed=42)
        r2 = monte_carlo_moments(f, 10_000, seed=42)
        assert r1.mean == r2.mean and r1.variance == r2.variance

    def test_seed_changes_stream(self):
        f = CappedFunctional(10.0, 3.0, 7.0)
        assert (
            monte_carlo_moments(f, 10_000, seed=1).mean
            != monte_carlo_moments(f, 10_000, seed=2).mean
        )

    def test_agrees_with_exact(self):
        f = CappedFunctional(10.0, 3.0, 7.0)
        draws = 200_000
        mc = monte_carlo_moments(f, draws, seed=7)
        exact_mean = expectation(f).value
        exact_var = variance(f).value
        mu4 = fourth_central_moment(f).value
        se_mean = math.sqrt(exact_var / draws)
        se_var = math.sqrt((mu4 - exact_var**2) / draws)
        assert abs(mc.mean - exact_mean) <= 4 * se_mean
        assert abs(mc.variance - exact_var) <= 4 * se_var

    def test_rejects_tiny_sample(self):
        with pytest.raises(ValueError):
            monte_carlo_moments(CappedFunctional(1.0, 1.0, 1.0), 1, seed=0)


class TestInvariants:
    @settings(max_examples=25, deadline=None)
    @given(
        lam=st.floats(0.01, 500.0),
        a=st.floats(0.1, 64.0),
        b=st.floats(0.1, 64.0),
    )
    def test_expectation_monotone_in_caps(self, lam, a, b):
        small = expectation(CappedFunctional(lam, a, b)).value
        large = expectation(CappedFunctional(lam, 2 * a, 2 * b)).value
        assert large >= small - 1e-9 * max(1.0, large)

    @settings(max_examples=25, deadline=None)
    @given(lam=st.floats(0.01, 500.0))
    def test_mass_identity(self, lam):
        # With unit caps, f(x) = x for x >= 4, so adding back the four head
        # terms must recover E[X] = lam to within the certified bound.
        est, _ = plain_indicator_moments(lam)
        head = sum(x * pmf(lam, x) for x in range(4))
        assert est.value + head == pytest.approx(lam, rel=1e-9, abs=1e-11)

    @settings(max_examples=25, deadline=None)
    @given(
        lam=st.floats(0.01, 200.0),
        a=st.floats(0.1, 32.0),
        b=st.floats(0.1, 32.0),
    )
    def test_variance_oracles_agree(self, lam, a, b):
        f = CappedFunctional(lam, a, b)
        direct = variance(f)
        pair = variance_pairwise(f)
        assert abs(direct.value - pair.value) <= direct.tail_bound + pair.tail_bound


def test_truncation_error_carries_diagnostics():
    err = TruncationError("no convergence", best_bound=0.5, terms_used=99)
    assert err.best_bound == 0.5
    assert err.terms_used == 99


def test_truncation_raised_for_huge_rate():
    # the window for lam this large exceeds the term budget
    with pytest.raises(TruncationError):
        expectation(CappedFunctional(1e9, 2.0, 2.0))
