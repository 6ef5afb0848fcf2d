import math

import numpy as np
import pytest

from splitpop import (
    birth_death,
    build_scale_grid,
    check_scale_asymptotics,
    eval_log_w,
    eval_w,
    eval_w_theta,
    fixed_lifetime,
    quantile_h_conditional,
    yule,
)
from splitpop.scale import laplace_transform_check, volterra_residual, write_grid_csv

LN2 = math.log(2.0)


def closed_w(name, t):
    t = np.asarray(t, dtype=float)
    if name == "yule":
        return np.exp(t)
    if name == "bd":
        return 2.0 * np.exp(t) - 1.0
    return np.exp(2.0 * t)  # fixed lifetime, valid for t <= v = 1


MODELS = {
    "yule": yule(),
    "bd": birth_death(2.0, 1.0),
    "fixed": fixed_lifetime(2.0, 1.0),
}


class TestBuild:
    @pytest.mark.parametrize("name,t_hi", [("yule", 4.0), ("bd", 4.0), ("fixed", 1.0)])
    def test_volterra_matches_closed_form(self, name, t_hi):
        grid = build_scale_grid(MODELS[name], t_max=4.0, h=1e-3, method="volterra")
        ts = np.linspace(0.0, t_hi, 57)
        got = eval_w(grid, ts)
        assert got == pytest.approx(closed_w(name, ts), rel=1e-6)

    def test_closed_form_yule(self):
        grid = build_scale_grid(yule(), t_max=3.0)
        assert eval_w(grid, 3.0) == pytest.approx(math.exp(3.0), rel=1e-12)

    def test_closed_form_bd(self):
        grid = build_scale_grid(birth_death(2.0, 1.0), t_max=2.0)
        assert eval_w(grid, 1.0) == pytest.approx(2.0 * math.e - 1.0, rel=1e-12)

    def test_monotone_logs(self):
        for params in MODELS.values():
            grid = build_scale_grid(params, t_max=3.0)
            assert np.all(np.diff(grid.log_w) >= 0)
            assert np.all(np.diff(grid.log_w_theta) >= 0)

    def test_rejects_subcritical(self):
        with pytest.raises(ValueError):
            build_scale_grid(birth_death(1.0, 3.0), t_max=2.0)

    def test_rejects_bad_step(self):
        with pytest.raises(ValueError):
            build_scale_grid(yule(), t_max=2.0, h=0.5)

    def test_volterra_residual_small(self):
        grid = build_scale_grid(MODELS["fixed"], t_max=3.0, h=5e-3, method="volterra")
        assert volterra_residual(grid, MODELS["fixed"]) <= 10.0 * grid.step**2

    def test_laplace_transform(self):
        for params in MODELS.values():
            grid = build_scale_grid(params, t_max=12.0, h=5e-3)
            numeric, exact = laplace_transform_check(grid, params, grid.alpha + 1.0)
            assert numeric == pytest.approx(exact, rel=1e-4)


class TestWTheta:
    def test_theta_zero_shares_array(self):
        grid = build_scale_grid(yule(theta=0.0), t_max=2.0)
        assert grid.log_w_theta is grid.log_w

    def test_rebuild_for_other_theta(self):
        from splitpop import with_mutation_rate

        base = build_scale_grid(yule(theta=0.0), t_max=2.0, h=1e-3)
        derived = with_mutation_rate(base, 2.0)
        assert derived.log_w is base.log_w
        assert eval_w_theta(derived, LN2) == pytest.approx(1.5, rel=1e-6)
        again = with_mutation_rate(derived, 0.0)
        assert again.log_w_theta is base.log_w

    def test_subcritical_closed_form(self):
        # Yule theta=2: W_theta(t) = 2 - e^{-t}
        grid = build_scale_grid(yule(theta=2.0), t_max=2.0, h=1e-3)
        assert eval_w_theta(grid, LN2) == pytest.approx(1.5, rel=1e-6)

    def test_critical_closed_form(self):
        # Yule theta=1: W_theta(t) = 1 + t
        grid = build_scale_grid(yule(theta=1.0), t_max=3.0, h=1e-3)
        assert eval_w_theta(grid, 2.0) == pytest.approx(3.0, rel=1e-6)

    def test_subcritical_limit_cap(self):
        # theta/psi(theta) bounds W_theta in the subcritical regime
        params = yule(theta=2.0)
        grid = build_scale_grid(params, t_max=10.0)
        cap = 2.0 / 1.0
        assert np.all(np.exp(grid.log_w_theta) <= cap * (1.0 + 1e-6))


class TestEval:
    def test_at_zero(self):
        grid = build_scale_grid(yule(), t_max=2.0)
        assert eval_w(grid, 0.0) == 1.0

    def test_interpolation_accuracy(self):
        grid = build_scale_grid(yule(), t_max=2.0)
        assert eval_w(grid, 0.5) == pytest.approx(math.exp(0.5), rel=1e-6)

    def test_monotone(self):
        grid = build_scale_grid(birth_death(2.0, 1.0), t_max=2.0)
        ts = np.sort(np.random.default_rng(1).uniform(0, 2.0, 50))
        vals = eval_w(grid, ts)
        assert np.all(np.diff(vals) >= 0)

    def test_out_of_range(self):
        grid = build_scale_grid(yule(), t_max=2.0)
        with pytest.raises(ValueError):
            eval_w(grid, 2.5)
        with pytest.raises(ValueError):
            eval_w(grid, -0.1)


class TestQuantile:
    def test_endpoints(self):
        grid = build_scale_grid(yule(), t_max=4.0)
        assert quantile_h_conditional(grid, 0.0, 3.0) == 0.0
        assert quantile_h_conditional(grid, 1.0, 3.0) == pytest.approx(3.0, abs=1e-12)

    def test_yule_median(self):
        grid = build_scale_grid(yule(), t_max=4.0)
        expect = math.log(1.0 / (1.0 - 0.5 * (1.0 - math.exp(-3.0))))
        assert quantile_h_conditional(grid, 0.5, 3.0) == pytest.approx(expect, rel=1e-9)

    @pytest.mark.parametrize("params", [yule(), birth_death(2.0, 1.0), fixed_lifetime(2.0, 1.0)])
    def test_roundtrip_identity(self, params):
        grid = build_scale_grid(params, t_max=3.0)
        horizon = 2.5
        cdf_h = -math.expm1(-float(eval_log_w(grid, horizon)))
        u = np.arange(0.01, 1.0, 0.01)
        s = quantile_h_conditional(grid, u, horizon)
        cdf = -np.expm1(-eval_log_w(grid, s))
        assert cdf == pytest.approx(u * cdf_h, abs=1e-8)

    def test_monotone_in_u(self):
        grid = build_scale_grid(fixed_lifetime(2.0, 1.0), t_max=3.0)
        s = quantile_h_conditional(grid, np.linspace(0, 1, 101), 2.0)
        assert np.all(np.diff(s) >= 0)


class TestAsymptotics:
    def test_yule_growth_exact(self):
        grid = build_scale_grid(yule(), t_max=8.0)
        diag = check_scale_asymptotics(grid, yule())
        assert np.max(np.abs(diag.growth_residual)) < 1e-9

    def test_supercritical_clonal_growth(self):
        params = yule(theta=0.5)
        grid = build_scale_grid(params, t_max=25.0)
        diag = check_scale_asymptotics(grid, params)
        assert abs(diag.clonal_growth_residual[-1]) < 1e-4

    def test_subcritical_tail_ratio(self):
        # rho(t) e^{(theta-alpha) t} -> B_sub, i.e. ratio against prediction -> 1;
        # beyond t ~ 9 the residual drops under the quadrature noise floor
        params = yule(theta=2.0)
        grid = build_scale_grid(params, t_max=14.0, h=1e-3)
        diag = check_scale_asymptotics(grid, params)
        assert diag.clonal_limit_gap[-1] == pytest.approx(0.0, abs=1e-4)
        mid = (diag.times > 5.0) & (diag.times < 8.0)
        assert diag.clonal_tail_ratio[mid] == pytest.approx(1.0, rel=5e-3)

    def test_critical_linear_residual(self):
        params = yule(theta=1.0)
        grid = build_scale_grid(params, t_max=10.0, h=1e-3)
        diag = check_scale_asymptotics(grid, params)
        assert abs(diag.critical_linear_residual[-1]) < 1e-5

    def test_requires_range(self):
        grid = build_scale_grid(yule(), t_max=2.0)
        with pytest.raises(ValueError):
            check_scale_asymptotics(grid, yule())


class TestCsv:
    def test_schema_and_precision(self, tmp_path):
        grid = build_scale_grid(yule(theta=1.0), t_max=1.0, h=1e-2)
        path = tmp_path / "grid.csv"
        write_grid_csv(grid, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "t,W,W_theta"
        assert len(lines) == grid.log_w.size + 1
        t, w, wt = lines[50].split(",")
        assert float(w) == pytest.approx(math.exp(float(t)), rel=1e-10)
        # rerun is byte-identical
        path2 = tmp_path / "grid2.csv"
        write_grid_csv(grid, path2)
        assert path.read_bytes() == path2.read_bytes()
