"""Model parameters for binary homogeneous branching populations.

A population is described by its lifespan measure ``L(dr) = b * P(V in dr)``
(birth rate ``b``, lifetime ``V``) together with a neutral mutation rate
``theta``.  The Laplace exponent of the associated spectrally positive Levy
process is

    psi(x) = x - integral (1 - exp(-r x)) L(dr),

a convex function vanishing at 0 and at the Malthusian parameter ``alpha > 0``
(supercritical populations only).  Mutations act as an extra death rate on
clonal families, whose exponent is ``psi_theta(x) = x psi(x + theta)/(x + theta)``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ExponentialLifetime",
    "FixedLifetime",
    "ImmortalLifetime",
    "TabulatedTail",
    "LifespanModel",
    "ModelParams",
    "Regime",
    "psi",
    "psi_prime",
    "malthusian_alpha",
    "psi_theta",
    "psi_theta_prime_at_root",
    "classify_regime",
]

ALPHA_RESIDUAL_TOL = 1e-12
REGIME_TOL_DEFAULT = 1e-9


@dataclass(frozen=True)
class ExponentialLifetime:
    """Lifetime V ~ Exponential(death_rate); the Markov birth-death case."""

    death_rate: float

    def __post_init__(self):
        if self.death_rate <= 0:
            raise ValueError("death_rate must be positive")

    def mean(self) -> float:
        return 1.0 / self.death_rate


@dataclass(frozen=True)
class FixedLifetime:
    """Deterministic lifetime V = v."""

    v: float

    def __post_init__(self):
        if self.v <= 0:
            raise ValueError("fixed lifetime must be positive")

    def mean(self) -> float:
        return self.v


@dataclass(frozen=True)
class ImmortalLifetime:
    """V = +infinity (pure birth / Yule population)."""

    def mean(self) -> float:
        return math.inf


@dataclass(frozen=True)
class TabulatedTail:
    """Lifetime given by a sampled tail P(V > r) on a grid, zero beyond it.

    ``r`` must start at 0 with tail value 1; the tail must be nonincreasing.
    """

    r: np.ndarray
    tail: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.r, dtype=float)
        tail = np.asarray(self.tail, dtype=float)
        if r.ndim != 1 or r.shape != tail.shape or r.size < 2:
            raise ValueError("r and tail must be matching 1-d arrays, length >= 2")
        if r[0] != 0.0 or not np.all(np.diff(r) > 0):
            raise ValueError("r grid must start at 0 and increase strictly")
        if abs(tail[0] - 1.0) > 1e-12 or np.any(np.diff(tail) > 1e-15) or np.any(tail < -1e-15):
            raise ValueError("tail must be nonincreasing from 1 and nonnegative")
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "tail", np.clip(tail, 0.0, 1.0))

    def mean(self) -> float:
        return float(np.trapezoid(self.tail, self.r))


LifetimeLaw = ExponentialLifetime | FixedLifetime | ImmortalLifetime | TabulatedTail


@dataclass(frozen=True)
class LifespanModel:
    """Birth rate plus the lifetime law; tail function Lbar(r) = b P(V > r)."""

    birth_rate: float
    lifetime: LifetimeLaw = field(default_factory=ImmortalLifetime)

    def __post_init__(self):
        if self.birth_rate <= 0:
            raise ValueError("birth_rate must be positive")

    def is_supercritical(self) -> bool:
        return self.birth_rate * self.lifetime.mean() > 1.0

    def tail(self, s: np.ndarray) -> np.ndarray:
        """Lbar(s) = b * P(V > s), vectorized over s >= 0."""
        s = np.asarray(s, dtype=float)
        b = self.birth_rate
        lt = self.lifetime
        if isinstance(lt, ImmortalLifetime):
            return np.full_like(s, b)
        if isinstance(lt, ExponentialLifetime):
            return b * np.exp(-lt.death_rate * s)
        if isinstance(lt, FixedLifetime):
            return np.where(s < lt.v, b, 0.0)
        return b * np.interp(s, lt.r, lt.tail, right=0.0)

    def tail_left(self, s: np.ndarray) -> np.ndarray:
        """Left limit b * P(V >= s); differs from tail only across atoms of V."""
        lt = self.lifetime
        if isinstance(lt, FixedLifetime):
            s = np.asarray(s, dtype=float)
            return np.where(s <= lt.v, self.birth_rate, 0.0)
        return self.tail(s)


@dataclass(frozen=True)
class ModelParams:
    """A lifespan model together with the neutral mutation rate theta."""

    lifespan: LifespanModel
    mutation_rate: float = 0.0

    def __post_init__(self):
        if self.mutation_rate < 0:
            raise ValueError("mutation_rate must be nonnegative")

    @property
    def birth_rate(self) -> float:
        return self.lifespan.birth_rate

    @property
    def theta(self) -> float:
        return self.mutation_rate


class Regime(enum.Enum):
    """How the mutation rate compares with the Malthusian parameter."""

    SUPERCRITICAL_CLONES = "supercritical"  # theta < alpha
    CRITICAL_CLONES = "critical"            # theta = alpha (within tolerance)
    SUBCRITICAL_CLONES = "subcritical"      # theta > alpha


def _tabulated_transform(lt: TabulatedTail, b: float, x: float) -> float:
    # integral (1 - e^{-rx}) L(dr) = x * integral e^{-sx} Lbar(s) ds  (parts)
    integrand = np.exp(-x * lt.r) * b * lt.tail
    return x * float(np.trapezoid(integrand, lt.r))


def _tabulated_transform_prime(lt: TabulatedTail, b: float, x: float) -> float:
    # d/dx of the above: integral (1 - s x) e^{-sx} Lbar(s) ds
    integrand = (1.0 - lt.r * x) * np.exp(-x * lt.r) * b * lt.tail
    return float(np.trapezoid(integrand, lt.r))


def psi(params: ModelParams, x: float) -> float:
    """Laplace exponent psi(x) = x - integral (1 - e^{-rx}) L(dr), for x >= 0."""
    if x < 0:
        raise ValueError(f"psi requires x >= 0, got {x}")
    if x == 0.0:
        return 0.0
    b = params.birth_rate
    lt = params.lifespan.lifetime
    if isinstance(lt, ImmortalLifetime):
        return x - b
    if isinstance(lt, ExponentialLifetime):
        d = lt.death_rate
        return x * (x + d - b) / (x + d)
    if isinstance(lt, FixedLifetime):
        return x - b * (-math.expm1(-lt.v * x))
    return x - _tabulated_transform(lt, b, x)


def psi_prime(params: ModelParams, x: float) -> float:
    """psi'(x) = 1 - integral r e^{-rx} L(dr), for x > 0."""
    if x <= 0:
        raise ValueError(f"psi_prime requires x > 0, got {x}")
    b = params.birth_rate
    lt = params.lifespan.lifetime
    if isinstance(lt, ImmortalLifetime):
        return 1.0
    if isinstance(lt, ExponentialLifetime):
        d = lt.death_rate
        return 1.0 - b * d / (x + d) ** 2
    if isinstance(lt, FixedLifetime):
        return 1.0 - b * lt.v * math.exp(-lt.v * x)
    return 1.0 - _tabulated_transform_prime(lt, b, x)


def malthusian_alpha(params: ModelParams) -> float:
    """Unique positive root of psi (requires a supercritical lifespan).

    Bisection on a doubling bracket followed by two Newton polish steps;
    convexity of psi guarantees the root is simple and bracketable.
    """
    if not params.lifespan.is_supercritical():
        raise ValueError("malthusian_alpha requires b * E[V] > 1 (supercritical)")
    b = params.birth_rate
    lt = params.lifespan.lifetime
    if isinstance(lt, ImmortalLifetime):
        return b
    if isinstance(lt, ExponentialLifetime):
        return b - lt.death_rate

    f = lambda x: psi(params, x)
    hi = 1.0
    for _ in range(200):
        if f(hi) > 0:
            break
        hi *= 2.0
    else:
        raise ValueError("failed to bracket the Malthusian parameter")
    lo = 1e-12 * hi
    if f(lo) >= 0:
        # psi < 0 just above zero for supercritical models; shrink until it is
        while lo > 1e-300 and f(lo) >= 0:
            lo /= 2.0
        if f(lo) >= 0:
            raise ValueError("failed to bracket the Malthusian parameter near 0")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if f(mid) > 0:
            hi = mid
        else:
            lo = mid
        if hi - lo <= 1e-12 * max(1.0, hi):
            break
    root = 0.5 * (lo + hi)
    for _ in range(2):
        root -= psi(params, root) / psi_prime(params, root)
    if abs(psi(params, root)) > ALPHA_RESIDUAL_TOL * max(1.0, root):
        raise ValueError(f"root polish failed: |psi(alpha)| = {abs(psi(params, root)):g}")
    return root


def psi_theta(params: ModelParams, x: float) -> float:
    """Clonal Laplace exponent psi_theta(x) = x psi(x + theta) / (x + theta)."""
    th = params.theta
    if x + th <= 0:
        raise ValueError(f"psi_theta requires x + theta > 0, got x={x}, theta={th}")
    if th == 0.0:
        return psi(params, x)
    return x * psi(params, x + th) / (x + th)


def psi_theta_prime_at_root(params: ModelParams, alpha: float | None = None) -> float:
    """psi_theta'(alpha - theta) = (alpha - theta) psi'(alpha) / alpha."""
    a = malthusian_alpha(params) if alpha is None else alpha
    return (a - params.theta) * psi_prime(params, a) / a


def classify_regime(params: ModelParams, tol: float = REGIME_TOL_DEFAULT) -> Regime:
    """Compare theta with alpha; equality is declared within relative tol."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    a = malthusian_alpha(params)
    th = params.theta
    if abs(th - a) <= tol * max(1.0, a):
        return Regime.CRITICAL_CLONES
    return Regime.SUBCRITICAL_CLONES if th > a else Regime.SUPERCRITICAL_CLONES


def yule(theta: float = 0.0, birth_rate: float = 1.0) -> ModelParams:
    """Immortal-lifetime model; the workhorse test case."""
    return ModelParams(LifespanModel(birth_rate, ImmortalLifetime()), theta)


def birth_death(birth_rate: float, death_rate: float, theta: float = 0.0) -> ModelParams:
    return ModelParams(LifespanModel(birth_rate, ExponentialLifetime(death_rate)), theta)


def fixed_lifetime(birth_rate: float, v: float, theta: float = 0.0) -> ModelParams:
    return ModelParams(LifespanModel(birth_rate, FixedLifetime(v)), theta)
