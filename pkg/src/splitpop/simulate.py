"""Population-at-a-horizon simulator built on the coalescent point process.

Conditional on survival at the horizon t, the genealogy of the alive
population is a sequence of i.i.d. branch depths H with P(H > s) = 1/W(s),
killed at the first value exceeding t; the population size N is geometric
with success probability 1/W(t).  Neutral mutations fall on each branch as a
Poisson process in age; an individual's type is the most recent mutation met
while walking its ancestral spine toward the root.

The spine walk is resolved in O((N + #mutations) log) with two linear passes:
a monotone stack gives each branch its host branch (the previous taller one),
and a forward sweep propagates the "type acquired above my own depth" through
host branches with one binary search each.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .scale import ScaleGrid, eval_log_w, quantile_h_conditional

__all__ = [
    "HaplotypeId",
    "CoalescentTree",
    "MutationSet",
    "AllelicPartition",
    "ExtremeSummary",
    "simulate_tree",
    "overlay_mutations",
    "resolve_partition",
    "extreme_stats",
    "simulate_partition",
]

ANCESTRAL_BRANCH = -1   # founding "mutation" of the ancestral type
FOREIGN_BRANCH = -2     # partition not built from a coalescent tree


@dataclass(frozen=True)
class HaplotypeId:
    """A type: the branch and age of its founding mutation.

    branch = -1 marks the ancestral type (age equals the horizon);
    branch = -2 marks types from simulators without branch bookkeeping.
    """

    branch: int
    age: float

    @property
    def is_ancestral(self) -> bool:
        return self.branch == ANCESTRAL_BRANCH


@dataclass(frozen=True)
class CoalescentTree:
    """Branch depths H_1..H_{N-1}; the ancestral branch 0 spans (0, horizon]."""

    horizon: float
    depths: np.ndarray

    def __post_init__(self):
        d = self.depths
        if d.size and (d.min() <= 0.0 or d.max() >= self.horizon):
            raise ValueError("branch depths must lie strictly inside (0, horizon)")

    @property
    def n_alive(self) -> int:
        return self.depths.size + 1


@dataclass(frozen=True)
class MutationSet:
    """Per-branch mutation ages, flattened; block b is ages[offsets[b]:offsets[b+1]],
    sorted increasingly (block 0 is the ancestral branch)."""

    counts: np.ndarray
    offsets: np.ndarray
    ages: np.ndarray

    @property
    def total(self) -> int:
        return self.ages.size

    def branch_ages(self, branch: int) -> np.ndarray:
        return self.ages[self.offsets[branch]:self.offsets[branch + 1]]


@dataclass(frozen=True)
class AllelicPartition:
    """Alive families: parallel arrays over mutant types plus the ancestral count.

    ``branches`` holds the branch carrying each founding mutation
    (FOREIGN_BRANCH when unknown); ``ages`` the mutation ages, which are also
    the family ages.
    """

    horizon: float
    sizes: np.ndarray
    ages: np.ndarray
    branches: np.ndarray
    ancestral_size: int

    @property
    def n_alive(self) -> int:
        return int(self.sizes.sum()) + self.ancestral_size

    @property
    def n_families(self) -> int:
        return self.sizes.size + (1 if self.ancestral_size > 0 else 0)

    def as_dict(self) -> dict[HaplotypeId, tuple[int, float]]:
        out = {
            HaplotypeId(int(b), float(a)): (int(s), float(a))
            for s, a, b in zip(self.sizes, self.ages, self.branches)
        }
        if self.ancestral_size > 0:
            out[HaplotypeId(ANCESTRAL_BRANCH, self.horizon)] = (
                self.ancestral_size,
                self.horizon,
            )
        return out

    def all_sizes(self) -> np.ndarray:
        if self.ancestral_size > 0:
            return np.concatenate((self.sizes, [self.ancestral_size]))
        return self.sizes

    def all_ages(self) -> np.ndarray:
        if self.ancestral_size > 0:
            return np.concatenate((self.ages, [self.horizon]))
        return self.ages

    def all_branches(self) -> np.ndarray:
        if self.ancestral_size > 0:
            return np.concatenate((self.branches, [ANCESTRAL_BRANCH]))
        return self.branches


@dataclass(frozen=True)
class ExtremeSummary:
    """Threshold counts and the ordered size/age sequences of one partition."""

    large: dict            # x -> L_t(x), families of size >= ceil(x)
    old: dict              # s -> O_t(s), families of age > s
    windows: dict          # (x, s1, s2) -> M_t(x, s1, s2)
    spine_windows: dict    # (x, s1, s2) -> K_t, restricted to the ancestral lineage
    ordered_sizes: np.ndarray
    ordered_ages: np.ndarray


# ---------------------------------------------------------------------------
# kernels


@njit(cache=True)
def _resolve_types(depths, horizon, counts, offsets, ages):
    """Type of each alive individual as a global mutation index (-1 = ancestral).

    depths has length N-1; branch 0 implicitly has depth = horizon, greater
    than every stored depth, so it is never popped from the stack.
    """
    n = counts.shape[0]
    type_idx = np.empty(n, np.int64)
    exit_type = np.empty(n, np.int64)   # type met strictly above own depth
    stack = np.empty(n, np.int64)

    exit_type[0] = -1
    type_idx[0] = offsets[0] if counts[0] > 0 else -1
    stack[0] = 0
    top = 0
    for i in range(1, n):
        d = depths[i - 1]
        while top > 0 and depths[stack[top] - 1] <= d:
            top -= 1
        host = stack[top]
        top += 1
        stack[top] = i

        # first mutation on the host branch strictly above depth d
        lo, hi = offsets[host], offsets[host + 1]
        while lo < hi:
            mid = (lo + hi) // 2
            if ages[mid] <= d:
                lo = mid + 1
            else:
                hi = mid
        exit_type[i] = lo if lo < offsets[host + 1] else exit_type[host]
        type_idx[i] = offsets[i] if counts[i] > 0 else exit_type[i]
    return type_idx


@njit(cache=True)
def _count_types(type_idx, n_mut):
    sizes = np.zeros(n_mut + 1, np.int64)  # slot 0: ancestral, slot m+1: mutation m
    for i in range(type_idx.shape[0]):
        sizes[type_idx[i] + 1] += 1
    return sizes


# ---------------------------------------------------------------------------
# operations


def simulate_tree(
    grid: ScaleGrid,
    horizon: float,
    rng: np.random.Generator,
    max_population: int = 200_000_000,
) -> CoalescentTree:
    """Draw one conditioned genealogy: geometric N, then N-1 i.i.d. depths."""
    if horizon > grid.t_max * (1 + 1e-12):
        raise ValueError("horizon exceeds the grid range")
    p = math.exp(-float(eval_log_w(grid, horizon)))
    u = 1.0 - rng.random()  # in (0, 1]
    n = 1 + int(math.log(u) / math.log1p(-p)) if p < 1.0 else 1
    if n > max_population:
        raise MemoryError(f"population draw {n} exceeds max_population")
    uu = np.clip(rng.random(n - 1), 1e-300, None)
    depths = np.asarray(quantile_h_conditional(grid, uu, horizon), dtype=float)
    return CoalescentTree(horizon=horizon, depths=depths)


def overlay_mutations(
    tree: CoalescentTree, theta: float, rng: np.random.Generator
) -> MutationSet:
    """Poisson(theta * depth) marks per branch with i.i.d. uniform ages.

    Drawn as one Poisson process on the concatenation of all branches (same
    joint law as independent per-branch draws): a single global sort leaves
    every per-branch block sorted by age.
    """
    if theta < 0:
        raise ValueError("theta must be nonnegative")
    spans = np.concatenate(([tree.horizon], tree.depths))
    if theta == 0.0:
        counts = np.zeros(spans.size, np.int64)
        return MutationSet(counts, np.zeros(spans.size + 1, np.int64), np.empty(0))
    edges = np.concatenate(([0.0], np.cumsum(spans)))
    total = rng.poisson(theta * edges[-1])
    pos = np.sort(rng.random(total) * edges[-1])
    offsets = np.searchsorted(pos, edges).astype(np.int64)
    counts = np.diff(offsets)
    ages = pos - np.repeat(edges[:-1], counts)
    return MutationSet(counts=counts, offsets=offsets, ages=ages)


def resolve_partition(
    tree: CoalescentTree, muts: MutationSet, validate: bool = True
) -> AllelicPartition:
    """Assign each alive individual its type and collapse into families."""
    if validate and muts.total:
        spans = np.concatenate(([tree.horizon], tree.depths))
        if np.any(muts.ages >= np.repeat(spans, muts.counts)):
            raise ValueError("mutation age exceeds its branch depth")
    type_idx = _resolve_types(
        tree.depths, tree.horizon, muts.counts, muts.offsets, muts.ages
    )
    slot_sizes = _count_types(type_idx, muts.total)
    live = np.nonzero(slot_sizes[1:] > 0)[0]
    mut_branch = np.repeat(
        np.arange(muts.counts.size, dtype=np.int64), muts.counts
    )
    return AllelicPartition(
        horizon=tree.horizon,
        sizes=slot_sizes[1:][live],
        ages=muts.ages[live],
        branches=mut_branch[live],
        ancestral_size=int(slot_sizes[0]),
    )


def simulate_partition(
    grid: ScaleGrid, horizon: float, rng: np.random.Generator
) -> AllelicPartition:
    """One replicate end to end (no validation pass in the hot path)."""
    tree = simulate_tree(grid, horizon, rng)
    muts = overlay_mutations(tree, grid.theta, rng)
    return resolve_partition(tree, muts, validate=False)


def _order_desc(values: np.ndarray, branches: np.ndarray, ages: np.ndarray) -> np.ndarray:
    # descending by value; ties by (branch asc, age asc) for reproducibility
    return np.lexsort((ages, branches, -values))


def extreme_stats(
    partition: AllelicPartition,
    size_thresholds=(),
    age_thresholds=(),
    windows=(),
) -> ExtremeSummary:
    """Count families by size/age thresholds and order the extremes.

    L counts sizes >= ceil(x); O counts ages > s (strict); windows count
    size >= ceil(x) with age in (s1, s2].  The spine-restricted variant keeps
    families founded on the ancestral branch (the ancestral type qualifies
    when the window reaches the horizon).
    """
    sizes = partition.all_sizes()
    ages = partition.all_ages()
    branches = partition.all_branches()
    # branch-0 mutations and the ancestral type (foreign partitions excluded)
    on_spine = (branches == 0) | (branches == ANCESTRAL_BRANCH)

    large = {x: int(np.count_nonzero(sizes >= math.ceil(x))) for x in size_thresholds}
    old = {s: int(np.count_nonzero(ages > s)) for s in age_thresholds}
    win, spine_win = {}, {}
    for x, s1, s2 in windows:
        if s2 < s1:
            raise ValueError("window needs s1 <= s2")
        sel = (sizes >= math.ceil(x)) & (ages > s1) & (ages <= s2)
        win[(x, s1, s2)] = int(np.count_nonzero(sel))
        spine_win[(x, s1, s2)] = int(np.count_nonzero(sel & on_spine))

    order_by_size = _order_desc(sizes.astype(float), branches, ages)
    order_by_age = _order_desc(ages, branches, ages)
    return ExtremeSummary(
        large=large,
        old=old,
        windows=win,
        spine_windows=spine_win,
        ordered_sizes=sizes[order_by_size],
        ordered_ages=ages[order_by_age],
    )
