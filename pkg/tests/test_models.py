import math

import numpy as np
import pytest
from scipy.optimize import brentq

from splitpop import (
    ModelParams,
    LifespanModel,
    ImmortalLifetime,
    ExponentialLifetime,
    FixedLifetime,
    TabulatedTail,
    Regime,
    birth_death,
    classify_regime,
    fixed_lifetime,
    malthusian_alpha,
    psi,
    psi_prime,
    psi_theta,
    psi_theta_prime_at_root,
    yule,
)

MODELS = [yule(), birth_death(2.0, 1.0), fixed_lifetime(2.0, 1.0)]

# root of a = 2(1 - e^{-a}), the Malthusian parameter of the fixed-lifetime model
ALPHA_FIXED = brentq(lambda a: a - 2.0 * (1.0 - math.exp(-a)), 0.5, 3.0, xtol=1e-14)


class TestPsi:
    def test_immortal(self):
        assert psi(yule(), 2.0) == pytest.approx(1.0, abs=1e-15)

    def test_exponential(self):
        assert psi(birth_death(2.0, 1.0), 2.0) == pytest.approx(2.0 / 3.0, rel=1e-14)

    def test_fixed(self):
        expect = 1.0 - 2.0 * (1.0 - math.exp(-1.0))
        assert psi(fixed_lifetime(2.0, 1.0), 1.0) == pytest.approx(expect, rel=1e-14)

    @pytest.mark.parametrize("model", MODELS)
    def test_zero_at_origin(self, model):
        assert psi(model, 0.0) == 0.0

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            psi(yule(), -0.5)

    @pytest.mark.parametrize("model", MODELS)
    def test_convexity(self, model):
        x = np.linspace(0.0, 10.0, 401)
        vals = np.array([psi(model, xi) for xi in x])
        assert np.all(np.diff(vals, 2) >= -1e-9)

    def test_tabulated_matches_exponential(self):
        r = np.linspace(0.0, 40.0, 100001)
        tab = ModelParams(LifespanModel(2.0, TabulatedTail(r, np.exp(-r))))
        exact = birth_death(2.0, 1.0)
        for x in (0.3, 1.0, 2.5):
            assert psi(tab, x) == pytest.approx(psi(exact, x), rel=2e-6, abs=1e-7)
            assert psi_prime(tab, x) == pytest.approx(psi_prime(exact, x), rel=2e-6, abs=5e-7)


class TestPsiPrime:
    def test_immortal(self):
        assert psi_prime(yule(), 3.7) == 1.0

    def test_exponential(self):
        assert psi_prime(birth_death(2.0, 1.0), 1.0) == pytest.approx(0.5, rel=1e-14)

    def test_fixed(self):
        x = 1.59362
        assert psi_prime(fixed_lifetime(2.0, 1.0), x) == pytest.approx(
            1.0 - 2.0 * math.exp(-x), rel=1e-14
        )

    @pytest.mark.parametrize("model", MODELS)
    def test_matches_finite_difference(self, model):
        step = 1e-4
        for x in np.linspace(0.1, 10.0, 34):
            fd = (psi(model, x + step) - psi(model, x - step)) / (2 * step)
            assert psi_prime(model, x) == pytest.approx(fd, rel=1e-6)

    def test_domain(self):
        with pytest.raises(ValueError):
            psi_prime(yule(), 0.0)


class TestMalthusian:
    def test_immortal(self):
        assert malthusian_alpha(yule()) == 1.0

    def test_exponential(self):
        assert malthusian_alpha(birth_death(2.0, 1.0)) == 1.0

    def test_fixed(self):
        assert malthusian_alpha(fixed_lifetime(2.0, 1.0)) == pytest.approx(
            ALPHA_FIXED, rel=1e-11
        )

    @pytest.mark.parametrize("model", MODELS)
    def test_root_and_slope(self, model):
        a = malthusian_alpha(model)
        assert abs(psi(model, a)) <= 1e-12 * max(1.0, a)
        assert psi_prime(model, a) > 0

    def test_subcritical_rejected(self):
        with pytest.raises(ValueError):
            malthusian_alpha(birth_death(1.0, 2.0))


class TestPsiTheta:
    def test_theta_zero_identity(self):
        model = birth_death(2.0, 1.0, theta=0.0)
        assert psi_theta(model, 2.0) == psi(model, 2.0)

    def test_vanishes_at_shifted_root(self):
        model = yule(theta=2.0)
        assert abs(psi_theta(model, -1.0)) <= 1e-12

    def test_derivative_at_root(self):
        assert psi_theta_prime_at_root(yule(theta=2.0)) == pytest.approx(-1.0, rel=1e-12)

    @pytest.mark.parametrize("model", [yule(theta=0.7), birth_death(2.0, 1.0, theta=1.5)])
    def test_ratio_identity(self, model):
        th = model.theta
        for x in (-th / 2, 0.5, 1.0, 4.0):
            lhs = psi_theta(model, x) * (x + th)
            rhs = x * psi(model, x + th)
            assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-300)

    def test_domain(self):
        with pytest.raises(ValueError):
            psi_theta(yule(theta=1.0), -1.0)


class TestRegime:
    def test_supercritical(self):
        assert classify_regime(yule(theta=0.5)) is Regime.SUPERCRITICAL_CLONES

    def test_critical(self):
        assert classify_regime(yule(theta=1.0), tol=1e-9) is Regime.CRITICAL_CLONES

    def test_subcritical(self):
        assert classify_regime(yule(theta=2.0)) is Regime.SUBCRITICAL_CLONES

    def test_tolerance_band(self):
        assert classify_regime(yule(theta=1.0 + 1e-12)) is Regime.CRITICAL_CLONES
        assert classify_regime(yule(theta=1.0 + 1e-6)) is Regime.SUBCRITICAL_CLONES


class TestValidation:
    def test_birth_rate_positive(self):
        with pytest.raises(ValueError):
            LifespanModel(0.0, ImmortalLifetime())

    def test_mutation_rate_nonnegative(self):
        with pytest.raises(ValueError):
            ModelParams(LifespanModel(1.0, ImmortalLifetime()), -0.1)

    def test_tail_monotone(self):
        with pytest.raises(ValueError):
            TabulatedTail(np.array([0.0, 1.0, 2.0]), np.array([1.0, 0.5, 0.7]))

    def test_tail_function(self):
        model = LifespanModel(2.0, FixedLifetime(1.0))
        assert model.tail(np.array([0.0, 0.5, 2.0])) == pytest.approx([2.0, 2.0, 0.0])
