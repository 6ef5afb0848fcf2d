"""Exact expected frequency spectrum and expected extreme-family counts.

All quantities are conditional on survival at the horizon t and follow from
two closed identities: the expected number of mutant types carried by k alive
individuals,

    E A(k, t) = W(t) * integral_0^t theta e^{-theta y} W_theta(y)^{-2}
                (1 - 1/W_theta(y))^{k-1} dy,

and the law of the ancestral-type count,

    P(Z0 = k) = W(t) e^{-theta t} W_theta(t)^{-2} (1 - 1/W_theta(t))^{k-1}.

Summing over k >= ceil(x) gives expected counts of families by size and age
window; a computable second-moment bound restricts the count to families
founded on the ancestral lineage.  Quadratures ride on the scale grid
(trapezoid); geometric powers are always taken in the log domain.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from .scale import ScaleGrid, eval_log_w, eval_log_w_theta

__all__ = [
    "expected_spectrum",
    "ancestral_law",
    "expected_age_density",
    "expected_counts",
    "expected_counts_parts",
    "total_expected_haplotypes",
    "spectrum_mass",
    "k_bound",
    "write_spectrum_csv",
    "write_counts_csv",
]


def _size_exponent(x: float) -> int:
    """Families 'of size more than (or exactly) x' have size >= ceil(x)."""
    if x < 1.0 and x > 0:
        return 1
    return max(1, int(math.ceil(x - 1e-12)))


def _nodes_between(grid: ScaleGrid, lo: float, hi: float) -> np.ndarray:
    """Grid nodes inside (lo, hi), with lo and hi appended as endpoints."""
    i0 = int(np.searchsorted(grid.times, lo, side="right"))
    i1 = int(np.searchsorted(grid.times, hi, side="left"))
    return np.concatenate(([lo], grid.times[i0:i1], [hi]))


def _log_geom_factor(grid: ScaleGrid, y: np.ndarray, m: int) -> np.ndarray:
    """(m-1) * log(1 - 1/W_theta(y)), with the m = 1 case exactly zero."""
    if m == 1:
        return np.zeros_like(y)
    lwt = eval_log_w_theta(grid, y)
    with np.errstate(divide="ignore"):  # -inf at y = 0 exponentiates to 0
        return (m - 1) * np.log1p(-np.exp(-lwt))


def expected_spectrum(grid: ScaleGrid, k: int, t: float) -> float:
    """E A(k, t): expected number of mutant types carried by exactly k alive."""
    if k < 1:
        raise ValueError("k must be a positive integer")
    if not 0 <= t <= grid.t_max * (1 + 1e-12):
        raise ValueError(f"t outside [0, {grid.t_max}]")
    theta = grid.theta
    if theta == 0.0 or t == 0.0:
        return 0.0
    y = _nodes_between(grid, 0.0, t)
    log_w_t = eval_log_w(grid, t)
    expo = log_w_t - theta * y - 2.0 * eval_log_w_theta(grid, y) + _log_geom_factor(grid, y, k)
    return theta * float(np.trapezoid(np.exp(expo), y))


def ancestral_law(grid: ScaleGrid, k: int, t: float) -> float:
    """P(Z0(t) = k): probability the ancestral type has exactly k carriers."""
    if k < 1:
        raise ValueError("k must be a positive integer")
    if not 0 < t <= grid.t_max * (1 + 1e-12):
        raise ValueError(f"t outside (0, {grid.t_max}]")
    theta = grid.theta
    log_w_t = eval_log_w(grid, t)
    lwt = eval_log_w_theta(grid, t)
    expo = log_w_t - theta * t - 2.0 * lwt
    if k > 1:
        expo += (k - 1) * math.log1p(-math.exp(-lwt))
    return math.exp(expo)


def expected_age_density(grid: ScaleGrid, k: int, t: float, y: float) -> float:
    """Density in the age y of E A(k, t); integrates to expected_spectrum."""
    if not 0 < y < t:
        raise ValueError("age density requires 0 < y < t")
    theta = grid.theta
    if theta == 0.0:
        return 0.0
    lwt = float(eval_log_w_theta(grid, y))
    expo = float(eval_log_w(grid, t)) - theta * y - 2.0 * lwt
    if k > 1:
        expo += (k - 1) * math.log1p(-math.exp(-lwt))
    return theta * math.exp(expo)


class CountParts(NamedTuple):
    mutant: float
    ancestral: float

    @property
    def total(self) -> float:
        return self.mutant + self.ancestral


def expected_counts_parts(
    grid: ScaleGrid, t: float, x: float, s1: float, s2: float
) -> CountParts:
    """E M_t(x, s1, s2) split into mutant and ancestral-type contributions.

    Counts families of size >= ceil(x) whose age lies in (s1, s2]; the
    ancestral type (age exactly t) contributes iff s1 < t <= s2.  Windows are
    clamped to [0, t]; s1 < 0 means no lower age restriction.
    """
    if s2 < s1:
        raise ValueError("age window needs s1 <= s2")
    if not 0 < t <= grid.t_max * (1 + 1e-12):
        raise ValueError(f"t outside (0, {grid.t_max}]")
    m = _size_exponent(x)
    theta = grid.theta
    log_w_t = eval_log_w(grid, t)

    lo, hi = max(s1, 0.0), min(s2, t)
    mutant = 0.0
    if theta > 0.0 and hi > lo:
        y = _nodes_between(grid, lo, hi)
        expo = log_w_t - theta * y - eval_log_w_theta(grid, y) + _log_geom_factor(grid, y, m)
        mutant = theta * float(np.trapezoid(np.exp(expo), y))

    ancestral = 0.0
    if s1 < t <= s2:
        lwt = float(eval_log_w_theta(grid, t))
        expo = log_w_t - theta * t - lwt
        if m > 1:
            expo += (m - 1) * math.log1p(-math.exp(-lwt))
        ancestral = math.exp(expo)
    return CountParts(mutant, ancestral)


def expected_counts(grid: ScaleGrid, t: float, x: float, s1: float, s2: float) -> float:
    """E M_t(x, s1, s2); see expected_counts_parts for conventions."""
    return expected_counts_parts(grid, t, x, s1, s2).total


def total_expected_haplotypes(grid: ScaleGrid, t: float) -> float:
    """Expected number of distinct types alive at t (mutant + ancestral)."""
    return expected_counts(grid, t, 1.0, -math.inf, t)


def spectrum_mass(grid: ScaleGrid, t: float, rel_tol: float = 1e-15, k_max: int = 100_000):
    """sum_k k * (E A(k,t) + P(Z0=k)), truncated once the geometric tail
    bound drops below rel_tol of the accumulated sum.  Equals W(t) exactly.

    Returns (mass, k_used).
    """
    lwt_t = float(eval_log_w_theta(grid, t))
    r_max = -math.expm1(-lwt_t)  # 1 - 1/W_theta(t), the slowest decay ratio
    acc = 0.0
    for k in range(1, k_max + 1):
        term = k * (expected_spectrum(grid, k, t) + ancestral_law(grid, k, t))
        acc += term
        if k >= 4 and acc > 0:
            # remaining sum <= term * sum_{j>=1} ((k+j)/k) r^j
            tail = term * r_max * (1.0 / (1.0 - r_max) + 1.0 / (k * (1.0 - r_max) ** 2))
            if tail < rel_tol * acc:
                return acc, k
    return acc, k_max


def k_bound(
    grid: ScaleGrid, birth_rate: float, t: float, x: float, s1: float, s2: float
) -> tuple[float, float]:
    """Upper bounds for E K_t(x, s1, s2), the expected number of families of
    size >= ceil(x) and age in (s1, s2] founded on the ancestral lineage.

    Returns (tight, loose); the tight bound carries the probability that a
    clonal lineage of the required age survives unbroken, the loose one drops
    that factor.
    """
    if not (x >= 1.0 and 0.0 <= s1 < s2 <= t * (1 + 1e-12)):
        raise ValueError("k_bound requires x >= 1 and 0 <= s1 < s2 <= t")
    theta = grid.theta
    alpha = grid.alpha
    m = _size_exponent(x)
    scale = birth_rate / alpha
    if theta == 0.0:
        # only the ancestral atom can contribute, and g is identically 1
        atom = 0.0
        if s2 >= t:
            lwt = float(eval_log_w_theta(grid, t))
            atom = 1.0 if m == 1 else math.exp((m - 1) * math.log1p(-math.exp(-lwt)))
        return scale * atom, scale * atom
    if theta * t + float(np.max(grid.log_w_theta)) > 600.0:
        raise ValueError("theta * t too large for the clonal-survival quadrature")

    # survival factor g(y) = 1 - C(y)/W_theta(y) with
    # C(y) = theta e^{-theta y} integral_0^y e^{theta u} W_theta(u) du
    i_hi = int(np.searchsorted(grid.times, t, side="right"))
    tt = grid.times[:i_hi]
    h = np.exp(grid.log_w_theta[:i_hi] + theta * tt)
    cum = np.concatenate(([0.0], np.cumsum(0.5 * np.diff(tt) * (h[1:] + h[:-1]))))

    def g(y: np.ndarray) -> np.ndarray:
        c = theta * np.exp(-theta * y) * np.interp(y, tt, cum)
        return 1.0 - c * np.exp(-eval_log_w_theta(grid, y))

    y = _nodes_between(grid, s1, min(s2, t))
    base = np.exp(_log_geom_factor(grid, y, m))
    tight = theta * float(np.trapezoid(base * g(y), y))
    loose = theta * float(np.trapezoid(base, y))
    if s2 >= t:
        lwt = float(eval_log_w_theta(grid, t))
        atom = 1.0 if m == 1 else math.exp((m - 1) * math.log1p(-math.exp(-lwt)))
        tight += atom * float(g(np.array([t]))[0])
        loose += atom
    return scale * tight, scale * loose


def write_spectrum_csv(grid: ScaleGrid, t: float, k_max: int, path) -> None:
    """Export k, E A(k,t), P(Z0=k) for k = 1..k_max."""
    with open(path, "w", newline="") as fh:
        fh.write("k,expected_mutant,expected_ancestral\n")
        for k in range(1, k_max + 1):
            fh.write(
                f"{k},{expected_spectrum(grid, k, t):.12e},{ancestral_law(grid, k, t):.12e}\n"
            )


def write_counts_csv(grid: ScaleGrid, birth_rate: float, t: float, windows, path) -> None:
    """Export x, s1, s2, E M_t, and both ancestral-lineage bounds per window."""
    with open(path, "w", newline="") as fh:
        fh.write("x,s1,s2,expected_M,bound_42,bound_43\n")
        for x, s1, s2 in windows:
            m = expected_counts(grid, t, x, s1, s2)
            tight, loose = k_bound(grid, birth_rate, t, x, max(s1, 0.0), min(s2, t))
            fh.write(f"{x:.12e},{s1:.12e},{s2:.12e},{m:.12e},{tight:.12e},{loose:.12e}\n")
