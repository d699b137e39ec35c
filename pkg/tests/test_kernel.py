import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from gfbm.errors import DegenerateDistributionError, DomainError, ParameterError
from gfbm.kernel import (
    GfbmParams,
    Regime,
    covariance,
    fbm_covariance,
    increment_bounds,
    increment_char_function,
    increment_density,
    increment_second_moment,
    markov_residual,
    r_b,
    r_z,
    rz_asymptote,
    sfbm_covariance,
    variance,
)

R2 = 1 / math.sqrt(2)

coef = st.floats(-3, 3, allow_nan=False).filter(lambda x: abs(x) > 1e-3)
hurst = st.floats(0.02, 0.98)
time = st.floats(1e-3, 10)
two_sided = st.floats(-10, 10).filter(lambda x: x == 0 or abs(x) > 1e-6)


class TestParams:
    @pytest.mark.parametrize("H", [0.0, 1.0, -0.1, 1.5, float("nan")])
    def test_bad_hurst(self, H):
        with pytest.raises(ParameterError):
            GfbmParams(1, 0, H)

    def test_zero_coefficients(self):
        with pytest.raises(ParameterError):
            GfbmParams(0, 0, 0.5)

    def test_variance_coefficient_positive_on_grid(self):
        # the quadratic form a^2 + b^2 - (2^{2H}-2) ab has |2^{2H}-2| < 2 on (0, 1)
        for H in np.linspace(0.01, 0.99, 50):
            for a in np.linspace(-3, 3, 13):
                for b in np.linspace(-3, 3, 13):
                    if a == 0 and b == 0:
                        continue
                    assert GfbmParams(a, b, H).variance_coefficient > 0


class TestFbmCovariance:
    def test_brownian(self):
        assert fbm_covariance(0.5, 2, 1) == pytest.approx(1.0, abs=1e-15)

    @pytest.mark.parametrize("H", [0.1, 0.5, 0.9])
    def test_origin(self, H):
        assert fbm_covariance(H, 0, 5) == 0.0

    def test_two_sided(self):
        assert fbm_covariance(0.75, 1, -1) == pytest.approx(0.5 * (2 - 2**1.5), rel=1e-14)
        assert fbm_covariance(0.75, 1, -1) == pytest.approx(-0.414214, abs=1e-6)

    def test_two_sided_monte_carlo(self):
        # bivariate Gaussian (B_1, B_{-1}): independent routes through Var and the
        # variance of the difference, E(B_1 - B_{-1})^2 = 2^{2H}
        H = 0.75
        rng = np.random.default_rng(11)
        n = 10**6
        var_diff = 2.0 ** (2 * H)
        cov = 0.5 * (1 + 1 - var_diff)
        L = np.linalg.cholesky(np.array([[1.0, cov], [cov, 1.0]]))
        x = rng.standard_normal((n, 2)) @ L.T
        prod = x[:, 0] * x[:, 1]
        se = prod.std(ddof=1) / math.sqrt(n)
        assert abs(prod.mean() - fbm_covariance(H, 1, -1)) < 3 * se

    def test_negative_hurst_rejected(self):
        with pytest.raises(ParameterError):
            fbm_covariance(1.2, 1, 1)

    @settings(max_examples=200, deadline=None)
    @given(hurst, two_sided, two_sided)
    def test_matches_mpmath(self, H, t, s):
        ref = float(oracles.fbm_cov(H, t, s))
        got = fbm_covariance(H, t, s)
        scale = max(abs(t), abs(s)) ** (2 * H)
        assert abs(got - ref) <= 1e-12 * abs(ref) + 1e-15 * scale
        assert got == fbm_covariance(H, s, t)


class TestSfbmCovariance:
    def test_brownian_diagonal(self):
        assert sfbm_covariance(0.5, 3, 3) == pytest.approx(3.0, rel=1e-15)

    def test_diagonal(self):
        assert sfbm_covariance(0.75, 1, 1) == pytest.approx(2 - 2**0.5, rel=1e-14)

    def test_starts_at_zero(self):
        assert sfbm_covariance(0.3, 0, 1) == 0.0

    def test_negative_time(self):
        with pytest.raises(DomainError):
            sfbm_covariance(0.3, -1, 1)

    @settings(max_examples=200, deadline=None)
    @given(hurst, time, time)
    def test_matches_mpmath(self, H, t, s):
        assert sfbm_covariance(H, t, s) == pytest.approx(float(oracles.sfbm_cov(H, t, s)), rel=1e-12)


class TestCovariance:
    def test_brownian(self):
        assert covariance(GfbmParams(1, 0, 0.5), 2, 1) == pytest.approx(1.0, rel=1e-15)

    def test_reduces_to_sfbm(self):
        p = GfbmParams(R2, R2, 0.75)
        assert covariance(p, 1, 1) == pytest.approx(sfbm_covariance(0.75, 1, 1), rel=1e-14)
        assert covariance(p, 1, 1) == pytest.approx(0.585786, abs=1e-6)

    def test_mixed_example(self):
        # cross-checked by the Monte Carlo test in test_samplers
        assert covariance(GfbmParams(2, -1, 0.3), 2, 1) == pytest.approx(2.624222, abs=1e-6)
        ref = float(oracles.gfbm_cov(2, -1, 0.3, 2, 1))
        assert covariance(GfbmParams(2, -1, 0.3), 2, 1) == pytest.approx(ref, rel=1e-13)

    def test_monte_carlo_four_point(self):
        # sample (B_2, B_{-2}, B_1, B_{-1}) from the two-sided fBm law
        H, a, b = 0.3, 2.0, -1.0
        times = np.array([2.0, -2.0, 1.0, -1.0])
        C = np.array([[fbm_covariance(H, x, y) for y in times] for x in times])
        rng = np.random.default_rng(5)
        n = 10**6
        B = rng.standard_normal((n, 4)) @ np.linalg.cholesky(C).T
        z2 = a * B[:, 0] + b * B[:, 1]
        z1 = a * B[:, 2] + b * B[:, 3]
        prod = z2 * z1
        se = prod.std(ddof=1) / math.sqrt(n)
        assert abs(prod.mean() - covariance(GfbmParams(a, b, H), 2, 1)) < 3 * se

    def test_negative_time(self):
        with pytest.raises(DomainError):
            covariance(GfbmParams(1, 1, 0.5), -1, 1)

    @settings(max_examples=300, deadline=None)
    @given(coef, coef, hurst, time, time)
    def test_matches_definition(self, a, b, H, t, s):
        p = GfbmParams(a, b, H)
        ref = float(oracles.gfbm_cov(a, b, H, t, s))
        scale = float(oracles.gfbm_cov(a, b, H, max(t, s), max(t, s)))
        assert abs(covariance(p, t, s) - ref) <= 1e-12 * abs(ref) + 1e-14 * scale

    @settings(max_examples=200, deadline=None)
    @given(coef, coef, hurst, time, time)
    def test_symmetric(self, a, b, H, t, s):
        p = GfbmParams(a, b, H)
        assert covariance(p, t, s) == covariance(p, s, t)

    @settings(max_examples=200, deadline=None)
    @given(coef, coef, hurst, time, time, st.floats(1e-3, 100))
    def test_self_similar(self, a, b, H, t, s, h):
        p = GfbmParams(a, b, H)
        lhs = covariance(p, h * t, h * s)
        rhs = h ** (2 * H) * covariance(p, t, s)
        scale = h ** (2 * H) * variance(p, max(t, s))
        assert abs(lhs - rhs) <= 1e-12 * abs(rhs) + 1e-13 * scale

    def test_reduction_random_grid(self):
        rng = np.random.default_rng(0)
        t = rng.uniform(0, 10, 2000)
        s = rng.uniform(0, 10, 2000)
        for H in (0.1, 0.3, 0.5, 0.75, 0.9, 0.99):
            fbm = covariance(GfbmParams(1, 0, H), t, s)
            assert np.max(np.abs(fbm / fbm_covariance(H, t, s) - 1)) < 1e-12
            sub = covariance(GfbmParams(R2, R2, H), t, s)
            assert np.max(np.abs(sub / sfbm_covariance(H, t, s) - 1)) < 1e-12

    @pytest.mark.parametrize("a,b,H", [(1, 0, 0.3), (1, 1, 0.75), (2, -1, 0.5), (R2, R2, 0.25), (1, -2, 0.9)])
    def test_positive_semidefinite(self, a, b, H):
        rng = np.random.default_rng(3)
        p = GfbmParams(a, b, H)
        for size in (2, 16, 64):
            pts = np.sort(rng.uniform(0.01, 10, size))
            C = covariance(p, pts[:, None], pts[None, :])
            assert np.linalg.eigvalsh(C).min() >= -1e-8 * np.trace(C)


class TestVariance:
    @pytest.mark.parametrize("H", [0.2, 0.5, 0.8])
    def test_fbm_unit(self, H):
        assert variance(GfbmParams(1, 0, H), 1) == pytest.approx(1.0, rel=1e-15)

    def test_example(self):
        assert variance(GfbmParams(1, 1, 0.75), 1) == pytest.approx(2 - (2**1.5 - 2), rel=1e-14)
        assert variance(GfbmParams(1, 1, 0.75), 1) == pytest.approx(1.171573, abs=1e-6)

    def test_zero(self):
        assert variance(GfbmParams(3, -1, 0.4), 0) == 0.0

    @settings(max_examples=100, deadline=None)
    @given(coef, coef, hurst, time)
    def test_equals_diagonal_covariance(self, a, b, H, t):
        p = GfbmParams(a, b, H)
        assert variance(p, t) == pytest.approx(covariance(p, t, t), rel=1e-13)


class TestIncrementSecondMoment:
    def test_degenerate(self):
        assert increment_second_moment(GfbmParams(1, 2, 0.3), 2.5, 2.5) == 0.0

    def test_fbm_stationary(self):
        assert increment_second_moment(GfbmParams(1, 0, 0.7), 1, 3) == pytest.approx(2**1.4, rel=1e-14)
        assert increment_second_moment(GfbmParams(1, 0, 0.7), 1, 3) == pytest.approx(2.639016, abs=1e-6)

    def test_example(self):
        # (a^2+b^2) - 2^{1.5}(2^{1.5} + 1) + 2 * 3^{1.5}
        expected = 2 - 2**1.5 * (2**1.5 + 1) + 2 * 3**1.5
        got = increment_second_moment(GfbmParams(1, 1, 0.75), 1, 2)
        assert got == pytest.approx(expected, rel=1e-13)
        assert got == pytest.approx(1.563878, abs=1e-6)
        assert got == pytest.approx(float(oracles.gfbm_incr(1, 1, 0.75, 1, 2)), rel=1e-13)

    def test_order_insensitive(self):
        p = GfbmParams(1, -0.5, 0.35)
        assert increment_second_moment(p, 3, 1) == increment_second_moment(p, 1, 3)

    @settings(max_examples=300, deadline=None)
    @given(coef, coef, hurst, time, st.floats(1e-12, 1.0))
    def test_matches_mpmath_near_diagonal(self, a, b, H, t, frac):
        p = GfbmParams(a, b, H)
        s = t * (1 - frac)
        ref = float(oracles.gfbm_incr(a, b, H, s, t))
        assert increment_second_moment(p, s, t) == pytest.approx(ref, rel=1e-10)

    def test_consistency_with_covariance(self):
        rng = np.random.default_rng(1)
        for a, b, H in [(1, 1, 0.75), (2, -1, 0.3), (R2, R2, 0.9), (1, -2, 0.1)]:
            p = GfbmParams(a, b, H)
            s = rng.uniform(0, 10, 1000)
            t = rng.uniform(0, 10, 1000)
            keep = np.abs(t - s) > 1e-2 * np.maximum(t, s)
            s, t = s[keep], t[keep]
            via_cov = variance(p, t) + variance(p, s) - 2 * covariance(p, s, t)
            direct = increment_second_moment(p, s, t)
            assert np.max(np.abs(via_cov / direct - 1)) < 1e-10


class TestIncrementBounds:
    def test_regime_c(self):
        bounds = increment_bounds(GfbmParams(1, 1, 0.75))
        assert bounds.regime is Regime.C
        assert bounds.gamma == pytest.approx(4 - 2 * math.sqrt(2), rel=1e-14)
        assert bounds.nu == 2.0

    def test_regime_d(self):
        bounds = increment_bounds(GfbmParams(1, -1, 0.75))
        assert bounds.regime is Regime.D
        assert bounds.gamma == 2.0
        assert bounds.nu == pytest.approx(2 + 2 * (2**0.5 - 1), rel=1e-14)

    @pytest.mark.parametrize("H", [0.2, 0.5, 0.8])
    def test_fbm_collapses(self, H):
        bounds = increment_bounds(GfbmParams(1, 0, H))
        assert bounds.gamma == bounds.nu == 1.0
        assert bounds.regime is Regime.C

    def test_brownian_tie_is_c(self):
        bounds = increment_bounds(GfbmParams(1, 1, 0.5))
        assert bounds.regime is Regime.C
        assert bounds.gamma == bounds.nu

    @pytest.mark.parametrize(
        "a,b,H,regime",
        [(1, 1, 0.7, "C"), (1, -1, 0.3, "C"), (1, -1, 0.7, "D"), (1, 1, 0.3, "D"), (-2, -1, 0.6, "C")],
    )
    def test_regimes(self, a, b, H, regime):
        bounds = increment_bounds(GfbmParams(a, b, H))
        assert bounds.regime.value == regime
        assert bounds.gamma <= bounds.nu
        pair = sorted([a * a + b * b, a * a + b * b - 2 * a * b * (2 ** (2 * H - 1) - 1)])
        assert [bounds.gamma, bounds.nu] == pytest.approx(pair)

    @settings(max_examples=300, deadline=None)
    @given(coef, coef, hurst, st.floats(0, 10), st.floats(1e-9, 10))
    def test_bounds_hold(self, a, b, H, s, gap):
        p = GfbmParams(a, b, H)
        bounds = increment_bounds(p)
        t = s + gap
        ratio = increment_second_moment(p, s, t) / (t - s) ** (2 * H)
        assert bounds.gamma * (1 - 1e-10) <= ratio <= bounds.nu * (1 + 1e-10)


class TestMarkovResidual:
    def test_brownian_gfbm(self):
        assert markov_residual(GfbmParams(3, 2, 0.5), 1, 2, 4) == pytest.approx(0.0, abs=1e-12)

    def test_brownian(self):
        assert markov_residual(GfbmParams(1, 0, 0.5), 1, 2, 3) == pytest.approx(0.0, abs=1e-14)

    def test_regression_fixture(self):
        ref = float(oracles.markov(1, 1, 0.7, 1, 2, 4))
        got = markov_residual(GfbmParams(1, 1, 0.7), 1, 2, 4)
        assert got == pytest.approx(ref, rel=1e-12)
        assert got == pytest.approx(-0.6438116649450265, rel=1e-12)

    def test_unordered(self):
        with pytest.raises(DomainError):
            markov_residual(GfbmParams(1, 1, 0.7), 2, 1, 4)
        with pytest.raises(DomainError):
            markov_residual(GfbmParams(1, 1, 0.7), 0, 1, 4)

    def test_vanishes_at_half_on_random_triples(self):
        rng = np.random.default_rng(2)
        trip = np.sort(rng.uniform(1e-3, 10, (2000, 3)), axis=1)
        for a, b in [(1, 1), (2, -1), (0.3, 4)]:
            res = markov_residual(GfbmParams(a, b, 0.5), *trip.T)
            assert np.max(np.abs(res)) < 1e-10

    @pytest.mark.parametrize("H", [0.25, 0.75])
    @pytest.mark.parametrize("a,b", [(1, 1), (1, -1), (2, 1), (-1, 3)])
    def test_nonzero_on_proof_family(self, H, a, b):
        p = GfbmParams(a, b, H)
        t = np.array([4.0, 16.0, 64.0])
        res = markov_residual(p, np.sqrt(t), t, t**2) / variance(p, t) ** 2
        assert np.max(np.abs(res)) > 1e-6


class TestIncrementAutocovariance:
    def test_rb_brownian(self):
        assert r_b(0.5, 1) == pytest.approx(0.0, abs=1e-16)

    def test_rb_examples(self):
        assert r_b(0.75, 1) == pytest.approx(0.5 * (2**1.5 - 2), rel=1e-14)
        assert r_b(0.25, 2) == pytest.approx(0.5 * (3**0.5 - 2 * 2**0.5 + 1), rel=1e-13)
        assert r_b(0.25, 2) == pytest.approx(-0.048188, abs=1e-6)

    @pytest.mark.parametrize("H", [0.2, 0.45, 0.55, 0.9])
    def test_rb_sign(self, H):
        n = np.arange(1, 1000)
        assert np.all(np.sign(r_b(H, n)) == np.sign(H - 0.5))

    def test_rb_domain(self):
        with pytest.raises(DomainError):
            r_b(0.5, 0)
        with pytest.raises(DomainError):
            r_b(0.5, 1.5)

    def test_rz_fbm_is_stationary(self):
        p = GfbmParams(1, 0, 0.75)
        for q in (0, 1, 7, 1000):
            assert r_z(p, q, 1) == pytest.approx(r_b(0.75, 1), rel=1e-13)

    def test_rz_example(self):
        f11 = 5**1.5 - 2 * 4**1.5 + 3**1.5
        assert f11 == pytest.approx(0.376492, abs=1e-6)
        got = r_z(GfbmParams(1, 1, 0.75), 1, 1)
        assert got == pytest.approx(2 * r_b(0.75, 1) - f11, rel=1e-13)
        assert got == pytest.approx(0.451935, abs=1e-6)

    def test_rz_limit(self):
        got = r_z(GfbmParams(1, 1, 0.75), 10**6, 1)
        assert got == pytest.approx(2 * r_b(0.75, 1), rel=1e-3)

    @pytest.mark.parametrize("a,b,H,p,n", [(1, 1, 0.75, 1, 1), (2, -1, 0.3, 0, 3), (1, -2, 0.9, 5, 40), (R2, R2, 0.2, 3, 7)])
    def test_rz_matches_covariance_definition(self, a, b, H, p, n):
        ref = float(oracles.gfbm_rz(a, b, H, p, n))
        assert r_z(GfbmParams(a, b, H), p, n) == pytest.approx(ref, rel=1e-11, abs=1e-15)

    @pytest.mark.parametrize("a,b,H", [(1, 1, 0.75), (2, -1, 0.3), (1, 1, 0.9), (1, -1, 0.1)])
    def test_rz_gap_decreases_in_p(self, a, b, H):
        p = GfbmParams(a, b, H)
        for n in (1, 5):
            base = (a * a + b * b) * r_b(H, n)
            gaps = [abs(r_z(p, q, n) - base) for q in (10, 10**2, 10**3, 10**4)]
            assert all(x > y for x, y in zip(gaps, gaps[1:]))

    @pytest.mark.parametrize("a,b,H", [(2, -1, 0.3), (1, -1, 0.1), (1, 1, 0.6)])
    def test_rz_gap_small_at_large_p(self, a, b, H):
        p = GfbmParams(a, b, H)
        for n in (1, 5):
            base = (a * a + b * b) * r_b(H, n)
            assert abs(r_z(p, 10**6, n) - base) < 1e-3 * abs(r_b(H, n)) + 1e-9

    @pytest.mark.parametrize("a,b,H", [(1, 1, 0.75), (1, 1, 0.9), (2, -1, 0.3)])
    def test_rz_gap_follows_power_law(self, a, b, H):
        # the gap decays like p^{2H-2}, too slowly near H = 1 for a fixed 1e-3 bound
        p = GfbmParams(a, b, H)
        q = 10**6
        gap = abs(r_z(p, q, 1) - (a * a + b * b) * r_b(H, 1))
        predicted = abs(a * b) * 2 ** (2 * H - 1) * H * abs(2 * H - 1) * q ** (2 * H - 2)
        assert gap == pytest.approx(predicted, rel=1e-3)

    def test_asymptote_trivial_cases(self):
        assert rz_asymptote(GfbmParams(1, 0, 0.3), 9, 2) == r_b(0.3, 2)
        assert rz_asymptote(GfbmParams(1, 1, 0.5), 9, 1) == pytest.approx(0.0, abs=1e-16)

    def test_asymptote_gap_shrinks(self):
        p = GfbmParams(1, 1, 0.75)
        correction = 2 ** 0.5 * 0.75 * 0.5 * 100 ** (-0.5)
        assert abs(r_z(p, 100, 1) - rz_asymptote(p, 100, 1)) / correction < 0.1


class TestIncrementLaw:
    def test_char_function_trivial(self):
        p = GfbmParams(1, 2, 0.3)
        assert increment_char_function(p, 1, 2, 0) == 1.0
        assert increment_char_function(p, 2, 2, 5.0) == 1.0

    def test_char_function_normal(self):
        assert increment_char_function(GfbmParams(1, 0, 0.5), 0, 1, 1) == pytest.approx(math.exp(-0.5), rel=1e-14)

    def test_density_standard_normal(self):
        assert increment_density(GfbmParams(1, 0, 0.5), 0, 1, 0) == pytest.approx(1 / math.sqrt(2 * math.pi), rel=1e-14)

    def test_density_example(self):
        p = GfbmParams(1, 1, 0.75)
        m2 = increment_second_moment(p, 1, 2)
        assert increment_density(p, 1, 2, 0) == pytest.approx(1 / math.sqrt(2 * math.pi * m2), rel=1e-14)
        assert increment_density(p, 1, 2, 0) == pytest.approx(0.319013, abs=1e-6)

    def test_density_degenerate(self):
        with pytest.raises(DegenerateDistributionError):
            increment_density(GfbmParams(1, 0, 0.5), 1, 1, 0.0)

    @pytest.mark.parametrize("a,b,H,s,t", [(1, 1, 0.75, 1, 2), (2, -1, 0.2, 0, 0.01), (1, 0, 0.5, 3, 9)])
    def test_density_integrates_to_one(self, a, b, H, s, t):
        p = GfbmParams(a, b, H)
        sigma = math.sqrt(increment_second_moment(p, s, t))
        n = 10**4
        width = 20 * sigma / n
        x = -10 * sigma + (np.arange(n) + 0.5) * width
        assert abs(np.sum(increment_density(p, s, t, x)) * width - 1) < 1e-6
