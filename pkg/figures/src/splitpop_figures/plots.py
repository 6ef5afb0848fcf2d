"""Figure builders: empirical-vs-exact spectrum and extreme-CDF convergence."""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .io import SchemaError, read_checks_csv, read_reports_json

__all__ = ["FigureSpec", "plot_spectrum", "plot_extreme_convergence"]

# deterministic output: no timestamps, fixed hash salt for glyph ids
matplotlib.rcParams["svg.hashsalt"] = "splitpop-figures"
_SAVE_KW = dict(format="svg", metadata={"Date": None})

_SPECTRUM_NAME = re.compile(r"^A\[(\d+)\]$")
_CDF_NAME = re.compile(r"^cdf_gap\[t=([^\]]+)\]$")


@dataclass(frozen=True)
class FigureSpec:
    source: str
    out: str
    title: str = ""
    xlabel: str = ""
    ylabel: str = ""
    log_y: bool = True
    extra_sources: tuple[str, ...] = field(default=())


def plot_spectrum(spec: FigureSpec) -> str:
    """Frequency-spectrum overlay: exact values as a line, empirical means as
    markers with 3-SE error bars, from a per-check comparison CSV."""
    rows = read_checks_csv(spec.source)
    ks, emp, exact, se = [], [], [], []
    for row in rows:
        m = _SPECTRUM_NAME.match(row["name"])
        if m:
            ks.append(int(m.group(1)))
            emp.append(row["empirical"])
            exact.append(row["target"])
            se.append(row["se"] or 0.0)
    if not ks:
        raise SchemaError(f"no spectrum rows (A[k]) found in {spec.source}")
    order = np.argsort(ks)
    ks = np.asarray(ks)[order]
    emp = np.asarray(emp)[order]
    exact = np.asarray(exact)[order]
    se = np.asarray(se)[order]

    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    ax.plot(ks, exact, "-", color="#555555", lw=1.2, label="exact", zorder=1)
    ax.errorbar(
        ks, emp, yerr=3.0 * se, fmt="o", ms=4, color="#1f6fb2",
        capsize=2.5, lw=1.0, label="simulated (3 SE)", zorder=2,
    )
    if spec.log_y:
        ax.set_yscale("log")
    ax.set_xticks(ks)
    ax.set_xlabel(spec.xlabel or "family size k")
    ax.set_ylabel(spec.ylabel or "expected number of families")
    if spec.title:
        ax.set_title(spec.title)
    ax.legend(frameon=False, fontsize=9)
    fig.tight_layout()
    fig.savefig(spec.out, **_SAVE_KW)
    plt.close(fig)
    return spec.out


def extract_convergence(reports: list[dict]) -> tuple[np.ndarray, np.ndarray, float]:
    """(horizons, empirical CDF values, limit reference) from report dicts;
    the reference is the limit value attached to the largest horizon."""
    ts, emp, targets = [], [], []
    for rep in reports:
        for check in rep["checks"]:
            m = _CDF_NAME.match(check["name"])
            if m:
                ts.append(float(m.group(1)))
                emp.append(check["empirical"])
                targets.append(check["target"])
    if not ts:
        raise SchemaError("nothing to plot: no cdf_gap checks in the report")
    order = np.argsort(ts)
    return np.asarray(ts)[order], np.asarray(emp)[order], targets[int(order[-1])]


def plot_extreme_convergence(spec: FigureSpec) -> str:
    """Per-horizon empirical CDF of an extreme at its centering, with the
    limiting CDF of the last horizon as a horizontal reference line."""
    ts, emp, limit = extract_convergence(read_reports_json(spec.source))

    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    ax.axhline(limit, color="#aa3333", lw=1.2, ls="--", label="limit law")
    ax.plot(ts, emp, "o-", ms=5, color="#1f6fb2", lw=1.0, label="simulated")
    ax.set_xlabel(spec.xlabel or "horizon t")
    ax.set_ylabel(spec.ylabel or "P(extreme below centering)")
    ax.set_ylim(0.0, 1.0)
    if spec.title:
        ax.set_title(spec.title)
    ax.legend(frameon=False, fontsize=9)
    fig.tight_layout()
    fig.savefig(spec.out, **_SAVE_KW)
    plt.close(fig)
    return spec.out
