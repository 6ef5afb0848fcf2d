"""Scale functions W and W_theta tabulated on a uniform time grid.

W is the nondecreasing function with W(0) = 1 whose Laplace transform is
1/psi; it governs the branch-length law P(H > s) = 1/W(s) of the genealogy
at a fixed horizon and satisfies the renewal (Volterra) equation

    W(t) = 1 + integral_0^t Lbar(s) W(t - s) ds,

with Lbar(s) = b P(V > s).  The clonal scale function is

    W_theta(x) = e^{-theta x} W(x) + theta integral_0^x W(y) e^{-theta y} dy.

Since W grows like e^{alpha t}/psi'(alpha), everything is stored and
interpolated as log W; interpolation is log-linear (exact for pure
exponentials, which are the dominant growth mode).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .models import (
    ExponentialLifetime,
    ImmortalLifetime,
    ModelParams,
    Regime,
    classify_regime,
    malthusian_alpha,
    psi,
    psi_prime,
    psi_theta_prime_at_root,
)

__all__ = [
    "ScaleGrid",
    "build_scale_grid",
    "with_mutation_rate",
    "eval_w",
    "eval_log_w",
    "eval_w_theta",
    "eval_log_w_theta",
    "quantile_h_conditional",
    "check_scale_asymptotics",
    "volterra_residual",
    "laplace_transform_check",
    "write_grid_csv",
]

# exp() overflows just above 709; refuse linear-space quadratures beyond this
_LOG_OVERFLOW = 600.0


@dataclass(frozen=True)
class ScaleGrid:
    """log W and log W_theta sampled at t = k*step, k = 0..n."""

    step: float
    t_max: float
    log_w: np.ndarray
    log_w_theta: np.ndarray
    theta: float
    alpha: float
    psi_prime_alpha: float
    times: np.ndarray = None  # filled on construction

    def __post_init__(self):
        if self.log_w[0] != 0.0 or self.log_w_theta[0] != 0.0:
            raise ValueError("W(0) and W_theta(0) must both equal 1")
        object.__setattr__(self, "times", self.step * np.arange(self.log_w.size))


def _closed_form_log_w(params: ModelParams, t: np.ndarray) -> np.ndarray | None:
    b = params.birth_rate
    lt = params.lifespan.lifetime
    if isinstance(lt, ImmortalLifetime):
        return b * t
    if isinstance(lt, ExponentialLifetime):
        d = lt.death_rate
        a = b - d
        # W(t) = (b e^{at} - d)/a, written to stay finite for large a*t
        return math.log(b / a) + a * t + np.log1p(-(d / b) * np.exp(-a * t))
    return None


def _volterra_w_once(params: ModelParams, t: np.ndarray, h: float) -> np.ndarray:
    """Trapezoid product integration of W = 1 + Lbar * W (convolution).

    Cell endpoints take one-sided kernel limits, so an atom of the lifetime
    law sitting on a grid node (fixed lifetimes) is integrated exactly.
    """
    right = params.lifespan.tail(t)
    left = params.lifespan.tail_left(t)
    avg = 0.5 * (left + right)
    n = t.size
    w = np.empty(n)
    w[0] = 1.0
    denom = 1.0 - 0.5 * h * right[0]
    for k in range(1, n):
        s = np.dot(avg[1:k], w[k - 1:0:-1]) if k > 1 else 0.0
        w[k] = (1.0 + h * (s + 0.5 * left[k])) / denom
    return w


def _volterra_log_w(params: ModelParams, t: np.ndarray, h: float, alpha: float) -> np.ndarray:
    if alpha * t[-1] > _LOG_OVERFLOW:
        raise ValueError(
            f"alpha*t_max = {alpha * t[-1]:.1f} overflows the Volterra recursion; "
            "use a closed-form lifetime or reduce t_max"
        )
    coarse = _volterra_w_once(params, t, h)
    n_fine = 2 * (t.size - 1) + 1
    t_fine = 0.5 * h * np.arange(n_fine)
    fine = _volterra_w_once(params, t_fine, 0.5 * h)
    # Richardson extrapolation of the O(h^2) rule
    return np.log((4.0 * fine[::2] - coarse) / 3.0)


def _fill_log_w_theta(log_w: np.ndarray, t: np.ndarray, h: float, theta: float) -> np.ndarray:
    if theta == 0.0:
        return log_w
    expo = log_w - theta * t
    if expo.max() > _LOG_OVERFLOW:
        raise ValueError("(alpha - theta) * t_max too large for the clonal quadrature")
    g = np.exp(expo)  # W(y) e^{-theta y}
    cum = np.concatenate(([0.0], np.cumsum(0.5 * h * (g[1:] + g[:-1]))))
    return np.log(g + theta * cum)


def build_scale_grid(
    params: ModelParams,
    t_max: float,
    h: float | None = None,
    method: str = "auto",
) -> ScaleGrid:
    """Tabulate log W and log W_theta on [0, t_max] with spacing h.

    method: "auto" uses closed forms where available (immortal and
    exponential lifetimes) and the trapezoid Volterra recursion otherwise;
    "volterra" forces the generic path; "closed" fails if no closed form.
    """
    if not params.lifespan.is_supercritical():
        raise ValueError("scale grid requires a supercritical lifespan model")
    alpha = malthusian_alpha(params)
    h_cap = min(0.01 / alpha, 1e-2)
    if h is None:
        h = h_cap
    if h <= 0 or h > h_cap * (1 + 1e-12):
        raise ValueError(f"h must lie in (0, {h_cap:g}]")
    if h >= t_max:
        raise ValueError("h must be smaller than t_max")
    if t_max < 1.0 / alpha:
        raise ValueError("t_max must be at least 1/alpha")

    n = int(math.ceil(t_max / h - 1e-9))
    t = h * np.arange(n + 1)

    closed = _closed_form_log_w(params, t)
    if method == "auto":
        log_w = closed if closed is not None else _volterra_log_w(params, t, h, alpha)
    elif method == "closed":
        if closed is None:
            raise ValueError("no closed-form scale function for this lifetime law")
        log_w = closed
    elif method == "volterra":
        log_w = _volterra_log_w(params, t, h, alpha)
    else:
        raise ValueError(f"unknown method {method!r}")
    log_w[0] = 0.0

    log_w_theta = _fill_log_w_theta(log_w, t, h, params.theta)
    return ScaleGrid(
        step=h,
        t_max=float(t[-1]),
        log_w=log_w,
        log_w_theta=log_w_theta,
        theta=params.theta,
        alpha=alpha,
        psi_prime_alpha=psi_prime(params, alpha),
    )


def with_mutation_rate(grid: ScaleGrid, theta: float) -> ScaleGrid:
    """New grid over the same tabulated W with the clonal scale function
    rebuilt for a different mutation rate (theta = 0 shares the W array)."""
    if theta < 0:
        raise ValueError("theta must be nonnegative")
    return ScaleGrid(
        step=grid.step,
        t_max=grid.t_max,
        log_w=grid.log_w,
        log_w_theta=_fill_log_w_theta(grid.log_w, grid.times, grid.step, theta),
        theta=theta,
        alpha=grid.alpha,
        psi_prime_alpha=grid.psi_prime_alpha,
    )


def _check_range(grid: ScaleGrid, t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    if np.any(t < 0) or np.any(t > grid.t_max * (1 + 1e-12)):
        raise ValueError(f"t outside [0, {grid.t_max}]")
    return np.minimum(t, grid.t_max)


def eval_log_w(grid: ScaleGrid, t):
    t = _check_range(grid, t)
    return np.interp(t, grid.times, grid.log_w)


def eval_w(grid: ScaleGrid, t):
    return np.exp(eval_log_w(grid, t))


def eval_log_w_theta(grid: ScaleGrid, t):
    t = _check_range(grid, t)
    return np.interp(t, grid.times, grid.log_w_theta)


def eval_w_theta(grid: ScaleGrid, t):
    return np.exp(eval_log_w_theta(grid, t))


def quantile_h_conditional(grid: ScaleGrid, u, horizon: float):
    """u-quantile of the branch length H conditioned on H < horizon.

    Solves 1 - 1/W(s) = u * (1 - 1/W(horizon)) by exact inversion of the
    log-linear interpolant of log W (so the CDF residual is at rounding
    level).  u = 0 maps to 0 and u = 1 to the horizon.
    """
    u = np.asarray(u, dtype=float)
    if np.any(u < 0) or np.any(u > 1):
        raise ValueError("u must lie in [0, 1]")
    if not 0 < horizon <= grid.t_max * (1 + 1e-12):
        raise ValueError(f"horizon outside (0, {grid.t_max}]")
    log_w_h = eval_log_w(grid, horizon)
    cdf_h = -math.expm1(-log_w_h)  # 1 - 1/W(horizon)
    target = -np.log1p(-u * cdf_h)  # log W at the quantile
    s = np.interp(target, grid.log_w, grid.times)
    return np.where(u >= 1.0, horizon, s) if s.ndim else (horizon if u >= 1.0 else float(s))


def volterra_residual(grid: ScaleGrid, params: ModelParams) -> float:
    """Max relative defect of the tabulated W in the renewal equation,
    discretized with the same one-sided trapezoid rule used to build it."""
    t = grid.times
    h = grid.step
    right = params.lifespan.tail(t)
    avg = 0.5 * (right + params.lifespan.tail_left(t))
    w = np.exp(grid.log_w)
    worst = 0.0
    for k in range(1, t.size):
        conv = 0.5 * right[0] * w[k] + 0.5 * params.lifespan.tail_left(t[k]) * w[0]
        if k > 1:
            conv += np.dot(avg[1:k], w[k - 1:0:-1])
        resid = abs(w[k] - 1.0 - h * conv) / w[k]
        worst = max(worst, resid)
    return worst


def laplace_transform_check(grid: ScaleGrid, params: ModelParams, x: float) -> tuple[float, float]:
    """(numeric, exact) values of integral e^{-xt} W(t) dt for x > alpha.

    The integral over [0, t_max] is done by trapezoid; the tail beyond t_max
    uses the dominant growth W(t) ~ W(t_max) e^{alpha (t - t_max)}.
    """
    if x <= grid.alpha:
        raise ValueError("transform only converges for x > alpha")
    t = grid.times
    vals = np.exp(grid.log_w - x * t)
    head = float(np.trapezoid(vals, t))
    tail = math.exp(grid.log_w[-1] - x * grid.t_max) / (x - grid.alpha)
    return head + tail, 1.0 / psi(params, x)


@dataclass(frozen=True)
class ScaleDiagnostics:
    """Residuals of the large-time scale-function laws on a log-spaced grid."""

    times: np.ndarray
    regime: Regime
    growth_residual: np.ndarray          # W(t) e^{-alpha t} psi'(alpha) - 1
    growth_decay_rate: float             # fitted exponential decay of the above
    clonal_growth_residual: np.ndarray | None = None   # supercritical clones
    clonal_limit_gap: np.ndarray | None = None         # theta/psi(theta) - W_theta
    clonal_tail_ratio: np.ndarray | None = None        # rho(t) / predicted tail
    critical_linear_residual: np.ndarray | None = None  # W_alpha(t) - (at+c)/psi'


def _fit_decay_rate(t: np.ndarray, resid: np.ndarray) -> float:
    mask = np.abs(resid) > 1e-14
    if mask.sum() < 3:
        return math.inf  # residual at rounding level everywhere
    z = np.log(np.abs(resid[mask]))
    slope = np.polyfit(t[mask], z, 1)[0]
    return -slope


def check_scale_asymptotics(grid: ScaleGrid, params: ModelParams, n_points: int = 40) -> ScaleDiagnostics:
    """Evaluate the large-time laws of W and W_theta as numeric residuals."""
    alpha = grid.alpha
    if grid.t_max < 5.0 / alpha:
        raise ValueError("t_max must be at least 5/alpha for asymptotic checks")
    theta = grid.theta
    ts = np.geomspace(0.5 / alpha, grid.t_max, n_points)
    pa = grid.psi_prime_alpha

    growth = np.exp(eval_log_w(grid, ts) - alpha * ts) * pa - 1.0
    rate = _fit_decay_rate(ts, growth)
    regime = classify_regime(params)

    kwargs = {}
    if regime is Regime.SUPERCRITICAL_CLONES:
        rate_th = psi_theta_prime_at_root(params, alpha)
        kwargs["clonal_growth_residual"] = (
            np.exp(eval_log_w_theta(grid, ts) - (alpha - theta) * ts) * rate_th - 1.0
        )
    elif regime is Regime.SUBCRITICAL_CLONES:
        psi_th = psi(params, theta)
        phi = 1.0 - psi_th / theta
        w_th = eval_w_theta(grid, ts)
        kwargs["clonal_limit_gap"] = theta / psi_th - w_th
        rho = (1.0 / w_th - psi_th / theta) / phi
        rate_th = abs(psi_theta_prime_at_root(params, alpha))
        predicted = psi_th**2 / (theta**2 * phi * rate_th) * np.exp(-(theta - alpha) * ts)
        kwargs["clonal_tail_ratio"] = rho / predicted
    else:
        body = pa * np.exp(grid.log_w - alpha * grid.times) - 1.0
        offset = (1.0 + alpha * float(np.trapezoid(body, grid.times))) / pa
        kwargs["critical_linear_residual"] = (
            eval_w_theta(grid, ts) - (alpha * ts / pa + offset)
        )

    return ScaleDiagnostics(
        times=ts,
        regime=regime,
        growth_residual=growth,
        growth_decay_rate=rate,
        **kwargs,
    )


def write_grid_csv(grid: ScaleGrid, path) -> None:
    """Export the grid as t,W,W_theta with 13 significant digits."""
    with open(path, "w", newline="") as fh:
        fh.write("t,W,W_theta\n")
        for t, lw, lwt in zip(grid.times, grid.log_w, grid.log_w_theta):
            fh.write(f"{t:.12e},{math.exp(lw):.12e},{math.exp(lwt):.12e}\n")
