import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.optimize import brentq

from splitpop import (
    Regime,
    birth_death,
    build_scale_grid,
    centering,
    constants,
    joint_limit_pmf,
    limit_cdf_extreme,
    limit_expectation,
    mixed_poisson_pmf,
    solve_t_n,
    yule,
)
from splitpop.limits import (
    LARGEST_SIZE,
    OLDEST_AGE,
    limit_law,
    supercritical_window_expectation,
)

LN2 = math.log(2.0)


@pytest.fixture(scope="module")
def sub_cons():
    params = yule(theta=2.0)
    return constants(params, build_scale_grid(params, t_max=2.0))


@pytest.fixture(scope="module")
def crit_cons():
    params = yule(theta=1.0)
    return constants(params, build_scale_grid(params, t_max=20.0))


@pytest.fixture(scope="module")
def sup_cons():
    params = yule(theta=0.5)
    return constants(params, build_scale_grid(params, t_max=2.0))


class TestConstants:
    def test_subcritical_yule(self, sub_cons):
        assert sub_cons.regime is Regime.SUBCRITICAL_CLONES
        assert sub_cons.phi_theta == pytest.approx(0.5, abs=1e-15)
        assert sub_cons.a_theta == pytest.approx((2 * LN2) ** 2, rel=1e-9)
        assert sub_cons.b_sub == pytest.approx(0.5, rel=1e-12)

    def test_critical_yule(self, crit_cons):
        assert crit_cons.regime is Regime.CRITICAL_CLONES
        assert crit_cons.b_crit == pytest.approx(1.0, abs=1e-6)
        assert crit_cons.phi_theta == pytest.approx(1.0, abs=1e-12)

    def test_critical_birth_death(self):
        # W is known in closed form, so the tail integral can be checked:
        # psi'(a) W(y) e^{-a y} - 1 = -(d/b) e^{-a y} exp-integrates to d/(b a)
        params = birth_death(2.0, 1.0, theta=1.0)
        cons = constants(params, build_scale_grid(params, t_max=30.0, h=1e-3))
        expect = 1.0 - 1.0 * (1.0 / 2.0)  # 1 + alpha * (-d/(b alpha))
        assert cons.b_crit == pytest.approx(expect, rel=1e-6)

    def test_supercritical_fields_absent(self, sup_cons):
        assert sup_cons.a_theta is None and sup_cons.b_crit is None


class TestCentering:
    def test_subcritical_size(self, sub_cons):
        expect = (12.0 - 2.0 * math.log(12.0)) / LN2
        assert centering(sub_cons, LARGEST_SIZE, 12.0, 0.0) == pytest.approx(expect, rel=1e-12)
        assert expect == pytest.approx(10.1424, abs=1e-4)

    def test_critical_size(self, crit_cons):
        got = centering(crit_cons, LARGEST_SIZE, math.e, 0.0)
        assert got == pytest.approx((math.e - 0.5) ** 2 / 4.0, rel=1e-12)

    def test_critical_size_expanded_form(self, crit_cons):
        # at offset 0 the conventions differ by exactly the dropped
        # (log t)^2 / (16 psi'(alpha)) term of the expansion of the square
        t = 9.0
        squared = centering(crit_cons, LARGEST_SIZE, t, 0.0)
        expanded = centering(crit_cons, LARGEST_SIZE, t, 0.0, expanded_critical=True)
        dropped = math.log(t) ** 2 / (16.0 * crit_cons.psi_prime_alpha)
        assert squared - expanded == pytest.approx(dropped, rel=1e-12)

    def test_subcritical_age(self, sub_cons):
        assert centering(sub_cons, OLDEST_AGE, 10.0, 0.0) == pytest.approx(5.0, rel=1e-14)

    def test_critical_age(self, crit_cons):
        assert centering(crit_cons, OLDEST_AGE, 10.0, 0.5) == pytest.approx(
            10.0 - math.log(10.0) + 0.5, rel=1e-14
        )

    def test_supercritical(self, sup_cons):
        assert centering(sup_cons, LARGEST_SIZE, 10.0, 1.0) == pytest.approx(
            math.exp(5.0), rel=1e-12
        )
        assert centering(sup_cons, OLDEST_AGE, 10.0, 2.0) == 8.0


class TestLimitExpectation:
    def test_subcritical_ages(self, sub_cons):
        assert limit_expectation(sub_cons, OLDEST_AGE, 0.0) == pytest.approx(0.5, rel=1e-12)

    def test_critical_ages(self, crit_cons):
        assert limit_expectation(crit_cons, OLDEST_AGE, 0.0) == pytest.approx(1.0, rel=1e-12)

    def test_supercritical_full_window(self, sup_cons):
        got = limit_expectation(sup_cons, LARGEST_SIZE, 1.0)
        assert got == pytest.approx(3.5 * math.exp(-0.5), rel=1e-8)

    def test_supercritical_quadrature_oracle(self, sup_cons):
        # independent quadrature of the window integral at c = 0.7, ages (t-3, t]
        c, a1 = 0.7, 3.0
        val = quad(lambda y: math.exp(y - 0.5 * c * math.exp(0.5 * y)), 0, a1)[0]
        expect = 0.5 * (math.exp(-0.5 * c) + 0.5 * val)
        got = supercritical_window_expectation(sup_cons, c, 0.0, a1)
        assert got == pytest.approx(expect, rel=1e-9)

    def test_supercritical_divergence(self, sup_cons):
        with pytest.raises(ValueError):
            limit_expectation(sup_cons, LARGEST_SIZE, 0.0)

    def test_subcritical_sizes_need_t_for_fraction(self, sub_cons):
        lattice = limit_expectation(sub_cons, LARGEST_SIZE, 0.0)
        assert lattice == pytest.approx(sub_cons.a_theta / sub_cons.phi_theta, rel=1e-12)
        at_t = limit_expectation(sub_cons, LARGEST_SIZE, 0.0, t=12.0)
        assert at_t == pytest.approx(2.1212030725609985, rel=1e-9)

    def test_critical_sizes(self, crit_cons):
        got = limit_expectation(crit_cons, LARGEST_SIZE, 0.0)
        expect = math.sqrt(2 * math.pi) * math.exp(crit_cons.b_crit - 0.5)
        assert got == pytest.approx(expect, rel=1e-9)


class TestLimitCdf:
    def test_subcritical_ages(self, sub_cons):
        assert limit_cdf_extreme(sub_cons, OLDEST_AGE, 0.0) == pytest.approx(2.0 / 3.0, rel=1e-12)

    def test_critical_ages(self, crit_cons):
        assert limit_cdf_extreme(crit_cons, OLDEST_AGE, 0.0) == pytest.approx(0.5, rel=1e-9)

    def test_subcritical_sizes_at_t(self, sub_cons):
        got = limit_cdf_extreme(sub_cons, LARGEST_SIZE, 0.0, t=12.0)
        assert got == pytest.approx(0.32038927834948067, rel=1e-9)
        assert got == pytest.approx(0.320, abs=5e-4)

    def test_structural_identity(self, sub_cons, crit_cons):
        rng = np.random.default_rng(0)
        for cons in (sub_cons, crit_cons):
            for kind in (LARGEST_SIZE, OLDEST_AGE):
                for off in rng.uniform(-2, 2, 20):
                    t = 15.0
                    cdf = limit_cdf_extreme(cons, kind, off, t)
                    tau = limit_expectation(cons, kind, off, t)
                    assert cdf * (1 + tau) == pytest.approx(1.0, rel=1e-12)

    def test_supercritical_rejected(self, sup_cons):
        with pytest.raises(ValueError):
            limit_cdf_extreme(sup_cons, LARGEST_SIZE, 1.0)


class TestFractionalPart:
    def test_depends_only_on_ceiling(self, sub_cons):
        t = 12.0
        base = centering(sub_cons, LARGEST_SIZE, t, 0.0)
        # offsets keeping the same ceiling of the centering
        c1, c2 = 0.1, 0.2
        assert math.ceil(base + c1) == math.ceil(base + c2)
        v1 = limit_expectation(sub_cons, LARGEST_SIZE, c1, t)
        v2 = limit_expectation(sub_cons, LARGEST_SIZE, c2, t)
        assert v1 == pytest.approx(v2, rel=1e-12)

    def test_jumps_across_integer(self, sub_cons):
        t = 12.0
        base = centering(sub_cons, LARGEST_SIZE, t, 0.0)
        eps = 1e-6
        gap = math.ceil(base) - base
        below = limit_expectation(sub_cons, LARGEST_SIZE, gap - eps, t)
        above = limit_expectation(sub_cons, LARGEST_SIZE, gap + eps, t)
        assert above / below == pytest.approx(sub_cons.phi_theta, rel=1e-4)


class TestJointPmf:
    def test_reduces_to_cdf(self, sub_cons):
        got = joint_limit_pmf(sub_cons, OLDEST_AGE, [0.0], [0], t=None)
        assert got == pytest.approx(limit_cdf_extreme(sub_cons, OLDEST_AGE, 0.0), rel=1e-12)

    def test_marginal_sums_to_one(self, crit_cons):
        total = sum(joint_limit_pmf(crit_cons, OLDEST_AGE, [0.5], [k]) for k in range(400))
        assert total == pytest.approx(1.0, rel=1e-8)

    def test_against_mixture_quadrature(self, sub_cons):
        offs = (1.0, 0.0)
        tau = [limit_expectation(sub_cons, OLDEST_AGE, a) for a in offs]
        for ks in [(0, 0), (1, 0), (0, 2), (2, 1)]:
            def mixture(x):
                lam1 = x * tau[0]
                lam2 = x * (tau[1] - tau[0])
                p = math.exp(-lam1) * lam1 ** ks[0] / math.factorial(ks[0])
                p *= math.exp(-lam2) * lam2 ** ks[1] / math.factorial(ks[1])
                return math.exp(-x) * p

            expect = quad(mixture, 0, 60, limit=200)[0]
            got = joint_limit_pmf(sub_cons, OLDEST_AGE, offs, ks)
            assert got == pytest.approx(expect, rel=1e-8)

    def test_size_offsets_need_unit_gaps(self, sub_cons):
        with pytest.raises(ValueError):
            joint_limit_pmf(sub_cons, LARGEST_SIZE, [1.0, 0.5], [0, 0], t=12.0)
        joint_limit_pmf(sub_cons, LARGEST_SIZE, [1.0, 0.0], [0, 0], t=12.0)

    def test_age_offsets_decreasing(self, sub_cons):
        with pytest.raises(ValueError):
            joint_limit_pmf(sub_cons, OLDEST_AGE, [0.0, 1.0], [0, 0])


class TestMixedPoisson:
    def test_degenerate(self):
        assert mixed_poisson_pmf(0.0, 0) == 1.0
        assert mixed_poisson_pmf(0.0, 3) == 0.0

    def test_normalization_and_mean(self):
        lam = 1.7
        probs = [mixed_poisson_pmf(lam, k) for k in range(2000)]
        assert sum(probs) == pytest.approx(1.0, rel=1e-9)
        assert sum(k * p for k, p in enumerate(probs)) == pytest.approx(lam, rel=1e-9)

    def test_quadrature_oracle(self):
        got = mixed_poisson_pmf(1.0, 2)
        expect = quad(lambda x: math.exp(-x) * math.exp(-x) * x**2 / 2.0, 0, 200, limit=200)[0]
        assert got == pytest.approx(1.0 / 8.0, rel=1e-12)
        assert got == pytest.approx(expect, rel=1e-8)


class TestSolveTn:
    def test_value(self, sub_cons):
        t10 = solve_t_n(sub_cons, 10)
        oracle = brentq(lambda t: (t - 2 * math.log(t)) / LN2 - 10, 3, 100, xtol=1e-12)
        assert t10 == pytest.approx(oracle, abs=1e-8)
        assert t10 == pytest.approx(11.88, abs=0.01)

    def test_residual_and_monotone(self, sub_cons):
        prev = 0.0
        for n in (8, 12, 20, 40):
            tn = solve_t_n(sub_cons, n)
            assert abs(centering(sub_cons, LARGEST_SIZE, tn, 0.0) - n) <= 1e-10
            assert tn > prev
            prev = tn

    def test_ratio_approaches_constant(self, sub_cons):
        # t_n / n decreases toward a constant (slow log t / t correction);
        # the numeric trend is reported, no specific limit value is asserted
        r100 = solve_t_n(sub_cons, 100) / 100
        r400 = solve_t_n(sub_cons, 400) / 400
        r1600 = solve_t_n(sub_cons, 1600) / 1600
        assert r100 > r400 > r1600 > LN2

    def test_small_n_rejected(self, sub_cons):
        with pytest.raises(ValueError):
            solve_t_n(sub_cons, 0)


class TestLimitLawBundle:
    def test_wraps_consistently(self):
        params = yule(theta=2.0)
        law = limit_law(params, OLDEST_AGE, build_scale_grid(params, t_max=2.0))
        assert law.regime is Regime.SUBCRITICAL_CLONES
        assert not law.uses_fractional_part
        assert law.cdf(0.0) == pytest.approx(2.0 / 3.0, rel=1e-12)
        assert law.count_pmf(0.0, 0) == pytest.approx(2.0 / 3.0, rel=1e-12)
        assert law.centering(10.0, 0.0) == pytest.approx(5.0)
