"""Monte Carlo harness: replicate batches, empirical summaries, and the
verification suites that compare simulation against the exact formulas and
the limit laws.

Replicates are independent work items with per-replicate counter-based
streams (see streams.py); aggregation is ordered by replicate index, so
reports are bit-identical for any worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as sps

from . import spectrum as spx
from .forward import partition_forward, simulate_forward
from .limits import (
    LARGEST_SIZE,
    OLDEST_AGE,
    AsymptoticConstants,
    centering,
    constants,
    joint_limit_pmf,
    limit_cdf_extreme,
    limit_expectation,
    mixed_poisson_pmf,
)
from .models import ModelParams, Regime
from .scale import ScaleGrid, build_scale_grid, eval_log_w
from .simulate import AllelicPartition, simulate_partition
from .streams import SOURCE_COALESCENT, SOURCE_FORWARD, replicate_rng

__all__ = [
    "ExperimentConfig",
    "EmpiricalSummary",
    "run_replicates",
    "compare_to_exact",
    "fit_limit_law",
    "run_suite",
    "SUITES",
]

AUTO_OFFSETS = (-2.0, -1.0, 0.0, 1.0, 2.0)
SUITES = (
    "spectrum",
    "extremes-largest",
    "extremes-oldest",
    "joint",
    "bounds",
    "oracle-crosscheck",
)


@dataclass(frozen=True)
class ExperimentConfig:
    model: ModelParams
    horizons: tuple[float, ...]
    replicates: int
    master_seed: int
    suites: tuple[str, ...] = ("spectrum",)
    size_thresholds: tuple[float, ...] | str = "auto"
    age_thresholds: tuple[float, ...] | str = "auto"
    windows: tuple[tuple[float, float, float], ...] = ()
    k_max: int = 10
    workers: int = 1
    grid_h: float | None = None
    z_max: float = 3.0

    def validate(self) -> None:
        if self.replicates < 100:
            raise ValueError("statistical comparisons need at least 100 replicates")
        if not self.horizons or any(t <= 0 for t in self.horizons):
            raise ValueError("horizons must be positive")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        unknown = set(self.suites) - set(SUITES)
        if unknown:
            raise ValueError(f"unknown suites: {sorted(unknown)}")
        for w in self.windows:
            if len(w) != 3 or w[1] > w[2]:
                raise ValueError(f"bad window {w}; need (x, s1, s2) with s1 <= s2")

    def grid(self) -> ScaleGrid:
        return build_scale_grid(
            self.model, t_max=max(self.horizons) + 1.0, h=self.grid_h
        )


@dataclass(frozen=True)
class StatLayout:
    """Column layout of one replicate's statistics vector."""

    k_max: int
    size_thresholds: tuple[float, ...]
    age_thresholds: tuple[float, ...]
    windows: tuple[tuple[float, float, float], ...]
    names: tuple[str, ...] = field(default=())

    def __post_init__(self):
        names = ["N", "Z0", "families", "X1", "X2", "A1", "A2"]
        names += [f"A[{k}]" for k in range(1, self.k_max + 1)]
        names += [f"L[{x:.6g}]" for x in self.size_thresholds]
        names += [f"O[{s:.6g}]" for s in self.age_thresholds]
        names += [f"M[{x:.6g},{s1:.6g},{s2:.6g}]" for x, s1, s2 in self.windows]
        names += [f"K[{x:.6g},{s1:.6g},{s2:.6g}]" for x, s1, s2 in self.windows]
        object.__setattr__(self, "names", tuple(names))

    def row(self, part: AllelicPartition) -> np.ndarray:
        sizes = part.all_sizes()
        ages = part.all_ages()
        branches = part.all_branches()
        out = np.zeros(len(self.names))
        out[0] = part.n_alive
        out[1] = part.ancestral_size
        out[2] = sizes.size
        top_sizes = np.sort(sizes)[::-1]
        out[3] = top_sizes[0] if top_sizes.size > 0 else 0.0
        out[4] = top_sizes[1] if top_sizes.size > 1 else 0.0
        top_ages = np.sort(ages)[::-1]
        out[5] = top_ages[0] if top_ages.size > 0 else 0.0
        out[6] = top_ages[1] if top_ages.size > 1 else 0.0
        i = 7
        mutant_sizes = part.sizes
        counts = np.bincount(
            np.clip(mutant_sizes, 0, self.k_max + 1), minlength=self.k_max + 2
        )
        out[i:i + self.k_max] = counts[1:self.k_max + 1]
        i += self.k_max
        for x in self.size_thresholds:
            out[i] = np.count_nonzero(sizes >= math.ceil(x))
            i += 1
        for s in self.age_thresholds:
            out[i] = np.count_nonzero(ages > s)
            i += 1
        spine = (branches == 0) | (branches == -1)
        for x, s1, s2 in self.windows:
            sel = (sizes >= math.ceil(x)) & (ages > s1) & (ages <= s2)
            out[i] = np.count_nonzero(sel)
            out[i + len(self.windows)] = np.count_nonzero(sel & spine)
            i += 1
        return out


@dataclass(frozen=True)
class EmpiricalSummary:
    """Per-replicate statistic matrix plus derived means and standard errors."""

    t: float
    replicates: int
    layout: StatLayout
    data: np.ndarray

    def column(self, name: str) -> np.ndarray:
        return self.data[:, self.layout.names.index(name)]

    def mean(self, name: str) -> float:
        return float(np.mean(self.column(name)))

    def se(self, name: str) -> float:
        col = self.column(name)
        if col.size < 2:
            return 0.0
        return float(np.sqrt(np.var(col, ddof=1) / col.size))

    def histogram(self, name: str, k_max: int) -> np.ndarray:
        """Counts of the integer statistic over 0..k_max, overflow pooled."""
        vals = np.clip(self.column(name).astype(np.int64), 0, k_max + 1)
        return np.bincount(vals, minlength=k_max + 2)


def _resolve_thresholds(config: ExperimentConfig, cons: AsymptoticConstants, t: float):
    if config.size_thresholds == "auto":
        if cons.regime is Regime.SUPERCRITICAL_CLONES:
            sizes = tuple(centering(cons, LARGEST_SIZE, t, math.exp(o)) for o in AUTO_OFFSETS)
        else:
            sizes = tuple(centering(cons, LARGEST_SIZE, t, o) for o in AUTO_OFFSETS)
    else:
        sizes = tuple(config.size_thresholds)
    if config.age_thresholds == "auto":
        ages = tuple(centering(cons, OLDEST_AGE, t, o) for o in AUTO_OFFSETS)
    else:
        ages = tuple(config.age_thresholds)
    return StatLayout(
        k_max=config.k_max,
        size_thresholds=sizes,
        age_thresholds=ages,
        windows=tuple(tuple(w) for w in config.windows),
    )


def _coalescent_chunk(grid, horizon, layout, seed, hidx, r0, r1):
    out = np.empty((r1 - r0, len(layout.names)))
    for r in range(r0, r1):
        rng = replicate_rng(seed, hidx, r, SOURCE_COALESCENT)
        part = simulate_partition(grid, horizon, rng)
        out[r - r0] = layout.row(part)
    return out


def _forward_chunk(params, horizon, layout, seed, hidx, r0, r1):
    out = np.empty((r1 - r0, len(layout.names)))
    for r in range(r0, r1):
        rng = replicate_rng(seed, hidx, r, SOURCE_FORWARD)
        part = partition_forward(simulate_forward(params, horizon, rng))
        out[r - r0] = layout.row(part)
    return out


def _run_batch(chunk_fn, chunk_args, config: ExperimentConfig, layout: StatLayout, t: float):
    R = config.replicates
    workers = min(config.workers, max(1, R // 50))
    if workers == 1:
        data = chunk_fn(*chunk_args, 0, R)
    else:
        bounds = np.linspace(0, R, workers * 4 + 1).astype(int)
        data = np.empty((R, len(layout.names)))
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [
                (lo, hi, pool.submit(chunk_fn, *chunk_args, int(lo), int(hi)))
                for lo, hi in zip(bounds[:-1], bounds[1:])
                if hi > lo
            ]
            for lo, hi, fut in futures:
                data[lo:hi] = fut.result()
    return EmpiricalSummary(t=t, replicates=R, layout=layout, data=data)


def run_replicates(
    config: ExperimentConfig, grid: ScaleGrid | None = None, source: str = "coalescent"
) -> dict[float, EmpiricalSummary]:
    """Simulate every horizon of the config and summarize per-replicate stats.

    Stream derivation is per (master_seed, horizon index, replicate index),
    so the result is independent of the worker count.
    """
    config.validate()
    if grid is None:
        grid = config.grid()
    cons = constants(config.model, grid)
    out = {}
    for hidx, t in enumerate(config.horizons):
        layout = _resolve_thresholds(config, cons, t)
        if source == "coalescent":
            batch = _run_batch(
                _coalescent_chunk, (grid, t, layout, config.master_seed, hidx),
                config, layout, t,
            )
        elif source == "forward":
            batch = _run_batch(
                _forward_chunk, (config.model, t, layout, config.master_seed, hidx),
                config, layout, t,
            )
        else:
            raise ValueError(f"unknown source {source!r}")
        out[t] = batch
    return out


# ---------------------------------------------------------------------------
# comparisons


def _check(name, empirical, target, se, z_or_p, passed) -> dict:
    return {
        "name": name,
        "empirical": float(empirical),
        "target": float(target),
        "se": float(se) if se is not None else None,
        "z_or_p": float(z_or_p) if z_or_p is not None else None,
        "pass": bool(passed) if passed is not None else None,
    }


def _z_score(emp: float, target: float, se: float, n: int) -> float:
    """z with a Poisson-scale floor sqrt(target/n) on the standard error.

    The floor keeps rare count statistics honest: a never-observed event with
    n*target of a few is unremarkable, not an infinite-z hard failure, while
    a genuinely impossible discrepancy still explodes.
    """
    se_eff = max(se, math.sqrt(max(target, 0.0) / n))
    if se_eff == 0.0:
        return 0.0 if emp == target else math.copysign(math.inf, emp - target)
    return (emp - target) / se_eff


def compare_to_exact(
    summary: EmpiricalSummary,
    exact: dict[str, float],
    z_max: float = 3.0,
    one_sided: frozenset[str] | set[str] = frozenset(),
) -> list[dict]:
    """z-score the summary means against exact targets.

    one_sided names are bound checks: they fail only when the empirical mean
    exceeds target + z_max * SE.
    """
    checks = []
    for name, target in exact.items():
        if name not in summary.layout.names:
            raise KeyError(f"statistic {name!r} not present in the summary")
        emp = summary.mean(name)
        se = summary.se(name)
        z = _z_score(emp, target, se, summary.replicates)
        ok = z <= z_max if name in one_sided else abs(z) <= z_max
        checks.append(_check(name, emp, target, se, z, ok))
    return checks


def pooled_chisquare(observed: np.ndarray, pmf, n: int, min_expected: float = 5.0):
    """Chi-square of an integer histogram against a pmf, pooling bins from the
    right until every pooled bin has expected count >= min_expected.

    observed[k] counts value k for k < len-1; the last slot pools the
    overflow.  Returns (statistic, p_value, dof).
    """
    k_top = observed.size - 1
    expected = np.array([n * pmf(k) for k in range(k_top)])
    expected = np.append(expected, max(n - expected.sum(), 0.0))
    obs_pool, exp_pool = [], []
    acc_o = acc_e = 0.0
    for o, e in zip(observed, expected):
        acc_o += o
        acc_e += e
        if acc_e >= min_expected:
            obs_pool.append(acc_o)
            exp_pool.append(acc_e)
            acc_o = acc_e = 0.0
    if acc_e > 0 or acc_o > 0:
        if exp_pool:
            obs_pool[-1] += acc_o
            exp_pool[-1] += acc_e
        else:
            obs_pool, exp_pool = [acc_o], [acc_e]
    if len(obs_pool) < 2:
        raise ValueError("not enough replicates for a pooled chi-square")
    obs_arr = np.asarray(obs_pool)
    exp_arr = np.asarray(exp_pool) * (obs_arr.sum() / sum(exp_pool))
    stat, p = sps.chisquare(obs_arr, exp_arr)
    return float(stat), float(p), len(obs_pool) - 1


def two_sample_pooled_chisquare(h1: np.ndarray, h2: np.ndarray, min_expected: float = 5.0):
    """Two-sample chi-square over matching histogram bins, pooled jointly."""
    obs1, obs2 = [], []
    acc1 = acc2 = 0.0
    for a, b in zip(h1, h2):
        acc1 += a
        acc2 += b
        if acc1 + acc2 >= 2 * min_expected:
            obs1.append(acc1)
            obs2.append(acc2)
            acc1 = acc2 = 0.0
    if acc1 + acc2 > 0 and obs1:
        obs1[-1] += acc1
        obs2[-1] += acc2
    table = np.array([obs1, obs2])
    table = table[:, table.sum(axis=0) > 0]
    if table.shape[1] < 2:
        raise ValueError("not enough occupied bins for a two-sample chi-square")
    stat, p, dof, _ = sps.chi2_contingency(table)
    return float(stat), float(p), int(dof)


def fit_limit_law(
    summaries: dict[float, EmpiricalSummary],
    cons: AsymptoticConstants,
    kind: str,
    cdf_offset: float = 0.0,
    count_offset: float = 0.0,
    p_min: float = 0.01,
    gate_counts: bool | None = None,
) -> list[dict]:
    """Goodness-of-fit of extreme statistics against the limit law.

    Reports the per-horizon gap between the empirical CDF of the extreme at
    its centering and the limit CDF (informational), asserts the gaps do not
    grow with the horizon, and chi-squares the count histogram at the largest
    horizon against the mixed-Poisson limit.

    The count chi-square gates pass/fail for age counts only, unless
    gate_counts overrides: size counts carry a finite-horizon bias that decays
    only at log(t)/t speed, so their limit pmf is reported informationally.
    """
    if gate_counts is None:
        gate_counts = kind == OLDEST_AGE
    ts = sorted(summaries)
    stat = "X1" if kind == LARGEST_SIZE else "A1"
    checks = []
    gaps = []
    for t in ts:
        s = summaries[t]
        threshold = centering(cons, kind, t, cdf_offset)
        if kind == LARGEST_SIZE:
            emp = float(np.mean(s.column(stat) < threshold))
        else:
            emp = float(np.mean(s.column(stat) <= threshold))
        target = limit_cdf_extreme(cons, kind, cdf_offset, t)
        gap = abs(emp - target)
        gaps.append(gap)
        se = math.sqrt(max(emp * (1 - emp), 1e-12) / s.replicates)
        checks.append(_check(f"cdf_gap[t={t:g}]", emp, target, se, gap, None))

    slack = 3.0 * math.sqrt(0.25 / summaries[ts[0]].replicates)
    trend_ok = all(g2 <= g1 + slack for g1, g2 in zip(gaps, gaps[1:]))
    checks.append(
        _check("cdf_gap_trend", gaps[-1], 0.0, None, None, trend_ok)
    )

    t_last = ts[-1]
    s_last = summaries[t_last]
    thr = centering(cons, kind, t_last, count_offset)
    prefix = "L" if kind == LARGEST_SIZE else "O"
    name = f"{prefix}[{thr:.6g}]"  # same formatting as the layout builder
    if name not in s_last.layout.names:
        raise KeyError(f"no count column at the {kind} centering (offset {count_offset})")
    lam = limit_expectation(cons, kind, count_offset, t_last)
    hist = s_last.histogram(name, k_max=30)
    _, p, _ = pooled_chisquare(hist, lambda k: mixed_poisson_pmf(lam, k), s_last.replicates)
    checks.append(
        _check(
            f"count_mixed_poisson[t={t_last:g}]",
            p, p_min, None, p,
            (p >= p_min) if gate_counts else None,
        )
    )
    return checks


# ---------------------------------------------------------------------------
# suites


def _model_label(params: ModelParams) -> str:
    lt = params.lifespan.lifetime
    kind = type(lt).__name__.replace("Lifetime", "").replace("Tabulated", "tabulated-").lower()
    extras = {
        "exponential": getattr(lt, "death_rate", None),
        "fixed": getattr(lt, "v", None),
    }.get(kind)
    bits = [f"{kind}", f"b={params.birth_rate:g}"]
    if extras is not None:
        bits.append(f"par={extras:g}")
    bits.append(f"theta={params.theta:g}")
    return " ".join(bits)


def _report(config: ExperimentConfig, suite: str, t: float, checks: list[dict]) -> dict:
    return {
        "suite": suite,
        "model": _model_label(config.model),
        "t": float(t),
        "replicates": int(config.replicates),
        "seed": int(config.master_seed),
        "checks": checks,
    }


def _geometric_pmf(log_w: float):
    p = math.exp(-log_w)

    def pmf(k: int) -> float:  # support {1, 2, ...}, slot k of a 0-based hist
        if k < 1:
            return 0.0
        return p * math.exp((k - 1) * math.log1p(-p)) if p < 1 else (1.0 if k == 1 else 0.0)

    return pmf


def _suite_spectrum(config, grid, summaries) -> list[dict]:
    reports = []
    for t, s in summaries.items():
        log_w = float(eval_log_w(grid, t))
        exact: dict[str, float] = {"N": math.exp(log_w)}
        for k in range(1, min(config.k_max, 10) + 1):
            exact[f"A[{k}]"] = spx.expected_spectrum(grid, k, t)
        for x, s1, s2 in config.windows:
            exact[f"M[{x:.6g},{s1:.6g},{s2:.6g}]"] = spx.expected_counts(grid, t, x, s1, s2)
        for x in s.layout.size_thresholds:
            exact[f"L[{x:.6g}]"] = spx.expected_counts(grid, t, x, -math.inf, t)
        for a in s.layout.age_thresholds:
            exact[f"O[{a:.6g}]"] = spx.expected_counts(grid, t, 1.0, a, t)
        checks = compare_to_exact(s, exact, config.z_max)

        # ancestral-type law, via indicator means
        z0 = s.column("Z0")
        for k in range(1, 6):
            emp = float(np.mean(z0 == k))
            se = math.sqrt(max(emp * (1 - emp), 0.0) / s.replicates)
            target = spx.ancestral_law(grid, k, t)
            z = _z_score(emp, target, se, s.replicates)
            checks.append(_check(f"P[Z0={k}]", emp, target, se, z, abs(z) <= config.z_max))

        hist = s.histogram("N", k_max=60)
        _, p, _ = pooled_chisquare(hist, _geometric_pmf(log_w), s.replicates)
        checks.append(_check("N_geometric_chisq", p, 0.01, None, p, p >= 0.01))
        reports.append(_report(config, "spectrum", t, checks))
    return reports


def _suite_oracle_crosscheck(config, grid, summaries) -> list[dict]:
    forward = run_replicates(config, grid, source="forward")
    reports = []
    for t, s_cpp in summaries.items():
        s_fwd = forward[t]
        checks = []
        for name, k_top in (("N", 40), ("Z0", 20), ("A[1]", 20)):
            h1 = s_cpp.histogram(name, k_top)
            h2 = s_fwd.histogram(name, k_top)
            _, p, _ = two_sample_pooled_chisquare(h1, h2)
            checks.append(_check(f"two_sample[{name}]", p, 0.01, None, p, p >= 0.01))
        # joint (N, Z0, A[1]) occupancy over coarse bins
        def joint_hist(s):
            n = np.clip(s.column("N").astype(int), 1, 4)
            z = np.clip(s.column("Z0").astype(int), 0, 2)
            a = np.clip(s.column("A[1]").astype(int), 0, 2)
            flat = ((n - 1) * 3 + z) * 3 + a
            return np.bincount(flat, minlength=36)

        _, p, _ = two_sample_pooled_chisquare(joint_hist(s_cpp), joint_hist(s_fwd))
        checks.append(_check("two_sample[joint N,Z0,A1]", p, 0.01, None, p, p >= 0.01))
        reports.append(_report(config, "oracle-crosscheck", t, checks))
    return reports


def _suite_extremes(config, grid, summaries, kind: str) -> list[dict]:
    cons = constants(config.model, grid)
    if cons.regime is Regime.SUPERCRITICAL_CLONES:
        raise ValueError("extreme-law suites need critical or subcritical clones")
    checks = fit_limit_law(summaries, cons, kind)
    t_last = max(summaries)
    suite = "extremes-largest" if kind == LARGEST_SIZE else "extremes-oldest"
    return [_report(config, suite, t_last, checks)]


def _suite_joint(config, grid, summaries) -> list[dict]:
    """Joint law of the counts between consecutive age centerings.

    Bins the pair (count above the higher centering, count in between) with
    tails clipped at 2, and chi-squares it against the limiting joint pmf.
    """
    cons = constants(config.model, grid)
    if cons.regime is Regime.SUPERCRITICAL_CLONES:
        raise ValueError("the joint suite needs critical or subcritical clones")
    t = max(summaries)
    s = summaries[t]
    offs = (1.0, 0.0)
    cols = [f"O[{centering(cons, OLDEST_AGE, t, a):.6g}]" for a in offs]
    o_hi = s.column(cols[0]).astype(int)
    o_lo = s.column(cols[1]).astype(int)
    k1 = np.clip(o_hi, 0, 2)
    k2 = np.clip(o_lo - o_hi, 0, 2)
    observed = np.bincount(k1 * 3 + k2, minlength=9).astype(float)

    def cell_pmf(flat: int) -> float:
        if flat >= 9:
            return 0.0
        a, b = divmod(flat, 3)
        ka_range = [a] if a < 2 else range(2, 30)
        kb_range = [b] if b < 2 else range(2, 30)
        return sum(
            joint_limit_pmf(cons, OLDEST_AGE, offs, (ka, kb), t)
            for ka in ka_range
            for kb in kb_range
        )

    _, p, _ = pooled_chisquare(np.append(observed, 0.0), cell_pmf, s.replicates)
    checks = [_check("joint_age_counts_chisq", p, 0.01, None, p, p >= 0.01)]
    return [_report(config, "joint", t, checks)]


def _suite_bounds(config, grid, summaries) -> list[dict]:
    reports = []
    for t, s in summaries.items():
        exact = {}
        for x, s1, s2 in config.windows:
            tight, _ = spx.k_bound(grid, config.model.birth_rate, t, x, max(s1, 0.0), min(s2, t))
            exact[f"K[{x:.6g},{s1:.6g},{s2:.6g}]"] = tight
        checks = compare_to_exact(s, exact, config.z_max, one_sided=set(exact))
        reports.append(_report(config, "bounds", t, checks))
    return reports


def run_suite(config: ExperimentConfig, suite: str, grid: ScaleGrid | None = None) -> list[dict]:
    """Run one verification suite; returns one report dict per horizon."""
    if suite not in SUITES:
        raise ValueError(f"unknown suite {suite!r}")
    config.validate()
    if grid is None:
        grid = config.grid()
    summaries = run_replicates(config, grid)
    if suite == "spectrum":
        return _suite_spectrum(config, grid, summaries)
    if suite == "oracle-crosscheck":
        return _suite_oracle_crosscheck(config, grid, summaries)
    if suite == "extremes-largest":
        return _suite_extremes(config, grid, summaries, LARGEST_SIZE)
    if suite == "extremes-oldest":
        return _suite_extremes(config, grid, summaries, OLDEST_AGE)
    if suite == "joint":
        return _suite_joint(config, grid, summaries)
    return _suite_bounds(config, grid, summaries)
