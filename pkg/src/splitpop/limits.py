"""Limiting constants, centering sequences and limit laws of extreme families.

For each clonal regime the expected number of families above a moving
size/age threshold converges; the threshold (centering) and the limit value
are explicit in the model constants.  When clones are critical or
subcritical, the counts above the centerings furthermore converge to mixed
Poisson families with an Exp(1) mixing coefficient, which makes the limiting
probability that the extreme stays below a centering equal to
1 / (1 + limit expectation) in every case.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from .models import (
    ModelParams,
    Regime,
    classify_regime,
    malthusian_alpha,
    psi,
    psi_prime,
    psi_theta_prime_at_root,
)
from .scale import ScaleGrid

__all__ = [
    "AsymptoticConstants",
    "LimitLaw",
    "constants",
    "centering",
    "limit_expectation",
    "limit_cdf_extreme",
    "joint_limit_pmf",
    "mixed_poisson_pmf",
    "solve_t_n",
    "limit_law",
]

LARGEST_SIZE = "largest_size"
OLDEST_AGE = "oldest_age"

B_CRIT_TAIL_TOL = 1e-6


@dataclass(frozen=True)
class AsymptoticConstants:
    """Everything the limit formulas need; regime-specific fields are None
    outside their regime."""

    regime: Regime
    alpha: float
    theta: float
    psi_prime_alpha: float
    psi_at_theta: float | None         # psi(theta), theta > 0
    phi_theta: float | None            # 1 - psi(theta)/theta
    clonal_rate: float                 # psi_theta'(alpha - theta)
    a_theta: float | None = None       # subcritical size-limit prefactor
    b_sub: float | None = None         # subcritical tail-change-of-variable constant
    b_crit: float | None = None        # critical linear-term constant
    b_crit_tail_bound: float | None = None


def constants(params: ModelParams, grid: ScaleGrid | None = None) -> AsymptoticConstants:
    """Evaluate the limit constants for the model's clonal regime.

    The critical constant needs a numeric tail integral of W and therefore a
    scale grid with enough range that the fitted remainder is below
    B_CRIT_TAIL_TOL.
    """
    alpha = malthusian_alpha(params)
    theta = params.theta
    ppa = psi_prime(params, alpha)
    regime = classify_regime(params)
    rate = psi_theta_prime_at_root(params, alpha)
    psi_th = psi(params, theta) if theta > 0 else None
    phi = (1.0 - psi_th / theta) if theta > 0 else None

    a_theta = b_sub = b_crit = tail_bound = None
    if regime is Regime.SUBCRITICAL_CLONES:
        expo = theta / (theta - alpha)
        a_theta = (
            math.gamma(expo)
            * psi_th
            / alpha
            * abs(rate) ** (alpha / (theta - alpha))
            * (theta**2 / (alpha * psi_th**2) * phi * abs(math.log(phi))) ** expo
        )
        b_sub = psi_th**2 / (theta**2 * phi * abs(rate))
    elif regime is Regime.CRITICAL_CLONES:
        if grid is None:
            raise ValueError("the critical constant needs a scale grid")
        b_crit, tail_bound = _critical_constant(grid)

    return AsymptoticConstants(
        regime=regime,
        alpha=alpha,
        theta=theta,
        psi_prime_alpha=ppa,
        psi_at_theta=psi_th,
        phi_theta=phi,
        clonal_rate=rate,
        a_theta=a_theta,
        b_sub=b_sub,
        b_crit=b_crit,
        b_crit_tail_bound=tail_bound,
    )


def _critical_constant(grid: ScaleGrid) -> tuple[float, float]:
    """1 + alpha * integral_0^inf (psi'(alpha) W(y) e^{-alpha y} - 1) dy, with
    the tail beyond the grid bounded through its fitted exponential decay."""
    y = grid.times
    g = grid.psi_prime_alpha * np.exp(grid.log_w - grid.alpha * y) - 1.0
    body = float(np.trapezoid(g, y))

    window = y >= 0.8 * grid.t_max
    g_win = g[window]
    if np.max(np.abs(g_win)) < 1e-12:
        return 1.0 + grid.alpha * body, 0.0
    nz = np.abs(g_win) > 1e-300
    slope = np.polyfit(y[window][nz], np.log(np.abs(g_win[nz])), 1)[0]
    if slope >= -1e-12:
        raise ValueError("scale-grid tail is not decaying; extend t_max")
    gamma = -slope
    tail_est = g[-1] / gamma
    tail_bound = grid.alpha * abs(g[-1]) / gamma
    if tail_bound > B_CRIT_TAIL_TOL:
        raise ValueError(
            f"critical-constant tail bound {tail_bound:.2e} exceeds {B_CRIT_TAIL_TOL}; "
            "extend t_max"
        )
    return 1.0 + grid.alpha * (body + tail_est), tail_bound


def _require(cons: AsymptoticConstants, *regimes: Regime):
    if cons.regime not in regimes:
        raise ValueError(f"operation undefined in the {cons.regime.value} clonal regime")


def _frac_of_minus(x: float) -> float:
    """{-x} = ceil(x) - x."""
    return math.ceil(x) - x


def size_centering_base(cons: AsymptoticConstants, t: float) -> float:
    """Subcritical size centering at offset 0."""
    _require(cons, Regime.SUBCRITICAL_CLONES)
    if t <= 1.0:
        raise ValueError("size centering needs t > 1")
    alpha, theta = cons.alpha, cons.theta
    return (alpha * t - theta / (theta - alpha) * math.log(t)) / abs(
        math.log(cons.phi_theta)
    )


def centering(
    cons: AsymptoticConstants,
    kind: str,
    t: float,
    offset: float,
    expanded_critical: bool = False,
) -> float:
    """Threshold at which the extreme statistic has a nontrivial limit.

    expanded_critical selects the alternative critical-size form
    k' t^2 + k'' t log t + offset * t in place of the squared form.
    """
    alpha, theta = cons.alpha, cons.theta
    if kind == LARGEST_SIZE:
        if cons.regime is Regime.SUPERCRITICAL_CLONES:
            return offset * math.exp((alpha - theta) * t)
        if cons.regime is Regime.SUBCRITICAL_CLONES:
            return size_centering_base(cons, t) + offset
        if t <= 1.0:
            raise ValueError("critical size centering needs t > 1")
        pa = cons.psi_prime_alpha
        if expanded_critical:
            k1 = alpha**2 / (4.0 * pa)
            k2 = -alpha / (4.0 * pa)
            return k1 * t * t + k2 * t * math.log(t) + offset * t
        return alpha**2 / (4.0 * pa) * (t - math.log(t) / (2.0 * alpha) + offset) ** 2
    if kind == OLDEST_AGE:
        if cons.regime is Regime.SUPERCRITICAL_CLONES:
            return t - offset
        if cons.regime is Regime.SUBCRITICAL_CLONES:
            return alpha * t / theta + offset
        if t <= 1.0:
            raise ValueError("critical age centering needs t > 1")
        return t - math.log(t) / alpha + offset
    raise ValueError(f"unknown extreme kind {kind!r}")


def supercritical_window_expectation(
    cons: AsymptoticConstants, c: float, a0: float = 0.0, a1: float = math.inf
) -> float:
    """Limit of the expected number of families of size >= c e^{(alpha-theta)t}
    with age in (t - a1, t - a0]; the age-0 atom is the ancestral type."""
    _require(cons, Regime.SUPERCRITICAL_CLONES)
    if not 0 <= a0 < a1:
        raise ValueError("window needs 0 <= a0 < a1")
    if c < 0:
        raise ValueError("size offset must be nonnegative")
    alpha, theta = cons.alpha, cons.theta
    rate = cons.clonal_rate
    if c == 0.0 and math.isinf(a1):
        raise ValueError("expectation diverges for c = 0 on an unbounded window")

    def integrand(y: float) -> float:
        return math.exp(alpha * y - c * rate * math.exp((alpha - theta) * y))

    hi = a1
    if math.isinf(a1):
        # integrand is doubly-exponentially small beyond this point
        hi = max(a0 + 1.0, math.log(750.0 / (c * rate)) / (alpha - theta))
    val = quad(integrand, a0, hi, limit=200)[0] * theta if hi > a0 else 0.0
    if a0 == 0.0:
        val += math.exp(-c * rate)
    return (alpha - theta) / alpha * val


def limit_expectation(
    cons: AsymptoticConstants, kind: str, offset: float, t: float | None = None
) -> float:
    """Limit of the expected count above the centering at the given offset.

    Subcritical sizes depend on t through the fractional part of the
    centering; t = None selects the integer-lattice convention (fractional
    part 0) used by the point-process limit.
    """
    alpha, theta = cons.alpha, cons.theta
    if kind == LARGEST_SIZE:
        if cons.regime is Regime.SUPERCRITICAL_CLONES:
            return supercritical_window_expectation(cons, offset)
        if cons.regime is Regime.SUBCRITICAL_CLONES:
            frac = 0.0
            if t is not None:
                frac = _frac_of_minus(size_centering_base(cons, t) + offset)
            return cons.a_theta * cons.phi_theta ** (offset - 1.0 + frac)
        pa = cons.psi_prime_alpha
        return math.sqrt(2.0 * math.pi / alpha) * math.exp(
            cons.b_crit - 0.5 * pa - alpha * offset
        )
    if kind == OLDEST_AGE:
        if cons.regime is Regime.SUPERCRITICAL_CLONES:
            return supercritical_window_expectation(cons, 0.0, 0.0, offset) if offset > 0 else 0.0
        if cons.regime is Regime.SUBCRITICAL_CLONES:
            return cons.psi_at_theta / (theta * cons.psi_prime_alpha) * math.exp(-theta * offset)
        return math.exp(-alpha * offset) / alpha
    raise ValueError(f"unknown extreme kind {kind!r}")


def limit_cdf_extreme(
    cons: AsymptoticConstants, kind: str, offset: float, t: float | None = None
) -> float:
    """Limiting P(extreme below its centering at the given offset)."""
    if cons.regime is Regime.SUPERCRITICAL_CLONES:
        raise ValueError(
            "no distributional limit is provided for supercritical clonal "
            "families; only expectations are available in that regime"
        )
    return 1.0 / (1.0 + limit_expectation(cons, kind, offset, t))


def joint_limit_pmf(
    cons: AsymptoticConstants,
    kind: str,
    offsets,
    counts,
    t: float | None = None,
) -> float:
    """Limiting joint pmf of the counts falling between successive centerings.

    offsets must decrease (for subcritical sizes, by at least 1, the size
    lattice spacing); counts[i] is the number of families between the
    centerings at offsets[i] and offsets[i-1] (above offsets[0] for i = 0).
    """
    _require(cons, Regime.SUBCRITICAL_CLONES, Regime.CRITICAL_CLONES)
    offsets = list(offsets)
    counts = [int(k) for k in counts]
    if len(offsets) != len(counts) or not offsets:
        raise ValueError("offsets and counts must be equal-length, nonempty")
    if any(k < 0 for k in counts):
        raise ValueError("counts must be nonnegative")
    min_gap = 1.0 - 1e-12 if (
        kind == LARGEST_SIZE and cons.regime is Regime.SUBCRITICAL_CLONES
    ) else 0.0
    for hi, lo in zip(offsets, offsets[1:]):
        if hi - lo < min_gap or hi <= lo:
            raise ValueError("offsets must decrease" + (" by at least 1" if min_gap else ""))

    tau = [limit_expectation(cons, kind, c, t) for c in offsets]
    total = sum(counts)
    log_coef = math.lgamma(total + 1) - sum(math.lgamma(k + 1) for k in counts)
    prob = math.exp(log_coef) / (1.0 + tau[-1]) ** (total + 1)
    prev = 0.0
    for tau_i, k in zip(tau, counts):
        prob *= (tau_i - prev) ** k
        prev = tau_i
    return prob


def mixed_poisson_pmf(lambda_mass: float, k: int) -> float:
    """P(count = k) for a Poisson count whose intensity is lambda_mass times
    an Exp(1) coefficient: lambda^k / (1 + lambda)^{k+1}."""
    if lambda_mass < 0:
        raise ValueError("lambda_mass must be nonnegative")
    if k < 0:
        raise ValueError("k must be a nonnegative integer")
    if lambda_mass == 0.0:
        return 1.0 if k == 0 else 0.0
    return math.exp(k * math.log(lambda_mass) - (k + 1) * math.log1p(lambda_mass))


def solve_t_n(cons: AsymptoticConstants, n: int, tol: float = 1e-10) -> float:
    """Horizon at which the subcritical size centering (offset 0) equals n.

    Takes the large root, on the increasing side of the centering's minimum.
    """
    _require(cons, Regime.SUBCRITICAL_CLONES)
    alpha, theta = cons.alpha, cons.theta
    t_min = max(theta / (alpha * (theta - alpha)), 1.0 + 1e-12)
    f = lambda t: size_centering_base(cons, t) - n
    if f(t_min) >= 0:
        raise ValueError(f"no solution: n = {n} is below the centering minimum")
    hi = 2.0 * t_min
    while f(hi) < 0:
        hi *= 2.0
    lo = t_min
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        val = f(mid)
        if abs(val) <= tol:
            return mid
        if val < 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 4.0 * math.ulp(hi):
            break
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class LimitLaw:
    """Bundle of centering, limit expectation and limit law for one extreme."""

    kind: str
    constants: AsymptoticConstants

    @property
    def regime(self) -> Regime:
        return self.constants.regime

    @property
    def uses_fractional_part(self) -> bool:
        return (
            self.kind == LARGEST_SIZE
            and self.regime is Regime.SUBCRITICAL_CLONES
        )

    def centering(self, t: float, offset: float) -> float:
        return centering(self.constants, self.kind, t, offset)

    def expectation(self, offset: float, t: float | None = None) -> float:
        return limit_expectation(self.constants, self.kind, offset, t)

    def cdf(self, offset: float, t: float | None = None) -> float:
        return limit_cdf_extreme(self.constants, self.kind, offset, t)

    def count_pmf(self, offset: float, k: int, t: float | None = None) -> float:
        return mixed_poisson_pmf(self.expectation(offset, t), k)


def limit_law(params: ModelParams, kind: str, grid: ScaleGrid | None = None) -> LimitLaw:
    return LimitLaw(kind=kind, constants=constants(params, grid))
