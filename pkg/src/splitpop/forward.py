"""Forward-in-time branching simulator, used to cross-validate the
coalescent-based sampler.

Runs the population event by event from a single progenitor born at time 0:
births arrive at rate b during each life, mutations at rate theta, lifetimes
are i.i.d., and a newborn copies its mother's current type.  Runs extinct
before the horizon are rejected and redrawn, which conditions exactly on
survival.  Deliberately shares no machinery with the coalescent sampler.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .models import (
    ExponentialLifetime,
    FixedLifetime,
    ImmortalLifetime,
    ModelParams,
    TabulatedTail,
)
from .simulate import FOREIGN_BRANCH, AllelicPartition

__all__ = ["ForwardRun", "simulate_forward", "partition_forward"]


@dataclass(frozen=True)
class ForwardRun:
    """Population alive at the horizon: one (type label, type birth time) per
    individual.  Label 0 is the ancestral type."""

    horizon: float
    type_labels: np.ndarray
    type_times: np.ndarray
    rejections: int

    @property
    def n_alive(self) -> int:
        return self.type_labels.size


def _sample_lifetime(params: ModelParams, rng: np.random.Generator) -> float:
    lt = params.lifespan.lifetime
    if isinstance(lt, ImmortalLifetime):
        return math.inf
    if isinstance(lt, ExponentialLifetime):
        return rng.exponential(1.0 / lt.death_rate)
    if isinstance(lt, FixedLifetime):
        return lt.v
    assert isinstance(lt, TabulatedTail)
    # inverse transform on the tabulated CDF 1 - tail
    return float(np.interp(rng.random(), 1.0 - lt.tail, lt.r))


def simulate_forward(
    params: ModelParams,
    horizon: float,
    rng: np.random.Generator,
    pop_cap: int = 1_000_000,
    max_rejections: int = 1_000_000,
) -> ForwardRun:
    """One population conditioned on survival at the horizon, by rejection."""
    if not params.lifespan.is_supercritical():
        raise ValueError("forward simulation requires a supercritical model")
    b = params.birth_rate
    theta = params.theta

    for attempt in range(max_rejections + 1):
        labels: list[int] = []
        times: list[float] = []
        next_label = 1
        born = 1
        # stack entries: (birth time, type label, type birth time)
        stack = [(0.0, 0, 0.0)]
        while stack:
            t0, typ, typ_t = stack.pop()
            end = min(t0 + _sample_lifetime(params, rng), horizon)
            now = t0
            while True:
                gap_birth = rng.exponential(1.0 / b)
                gap_mut = rng.exponential(1.0 / theta) if theta > 0 else math.inf
                gap = min(gap_birth, gap_mut)
                if now + gap >= end:
                    break
                now += gap
                if gap_birth <= gap_mut:
                    born += 1
                    if born > pop_cap:
                        raise MemoryError(
                            f"population exceeded pop_cap={pop_cap} before the horizon"
                        )
                    stack.append((now, typ, typ_t))
                else:
                    typ = next_label
                    next_label += 1
                    typ_t = now
            if end >= horizon:  # alive at the horizon
                labels.append(typ)
                times.append(typ_t)
        if labels:
            return ForwardRun(
                horizon=horizon,
                type_labels=np.asarray(labels, dtype=np.int64),
                type_times=np.asarray(times, dtype=float),
                rejections=attempt,
            )
    raise RuntimeError(f"no surviving run in {max_rejections} attempts")


def partition_forward(run: ForwardRun) -> AllelicPartition:
    """Group the alive individuals of a forward run by type.

    Branch provenance does not exist here, so families carry FOREIGN_BRANCH
    and spine-restricted statistics are not meaningful for these partitions.
    """
    labels, first, counts = np.unique(
        run.type_labels, return_index=True, return_counts=True
    )
    mutant = labels > 0
    ancestral = int(counts[~mutant].sum())
    ages = run.horizon - run.type_times[first[mutant]]
    order = np.argsort(ages, kind="stable")
    return AllelicPartition(
        horizon=run.horizon,
        sizes=counts[mutant][order].astype(np.int64),
        ages=ages[order],
        branches=np.full(int(mutant.sum()), FOREIGN_BRANCH, dtype=np.int64),
        ancestral_size=ancestral,
    )
