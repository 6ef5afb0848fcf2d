"""Command-line entry point.

Experiments are described by a flat key-value document with dotted sections:

    birth_rate = 1.0
    lifetime.kind = immortal        # immortal | exponential | fixed
    lifetime.death_rate = 1.0       # exponential only
    lifetime.v = 1.0                # fixed only
    mutation_rate = 2.0
    horizons = 8, 12
    replicates = 2000
    seed = 42
    workers = 1
    suites = spectrum
    size_thresholds = auto          # or comma-separated reals
    age_thresholds = auto
    windows =                       # semicolon-separated x:s1:s2 triples
    k_max = 10
    grid_h =                        # empty: min(0.01/alpha, 0.01)

Subcommands: constants, scalefn, expect, simulate, verify.  Exit status is 0
on success, 1 when a verification check fails, 2 on usage or config errors.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, replace

from . import spectrum as spx
from .experiments import SUITES, ExperimentConfig, run_suite
from .limits import constants as limit_constants
from .models import (
    ExponentialLifetime,
    FixedLifetime,
    ImmortalLifetime,
    LifespanModel,
    ModelParams,
)
from .reports import (
    any_failures,
    report_json_bytes,
    write_checks_csv,
    write_reports_json,
)
from .scale import build_scale_grid, write_grid_csv
from .simulate import extreme_stats, simulate_partition
from .streams import replicate_rng

__all__ = ["parse_config", "serialize_config", "dispatch", "main"]


class ConfigError(ValueError):
    pass


_DEFAULTS = {
    "birth_rate": None,           # required
    "lifetime.kind": None,        # required
    "lifetime.death_rate": "",
    "lifetime.v": "",
    "mutation_rate": None,        # required
    "horizons": "1",
    "replicates": "1000",
    "seed": "0",
    "workers": "",       # empty: machine parallelism
    "suites": "spectrum",
    "size_thresholds": "auto",
    "age_thresholds": "auto",
    "windows": "",
    "k_max": "10",
    "grid_h": "",
}


@dataclass(frozen=True)
class CliConfig:
    experiment: ExperimentConfig
    raw: dict[str, str]


def _parse_float(key: str, value: str) -> float:
    try:
        return float(value)
    except ValueError:
        raise ConfigError(f"key {key!r}: expected a number, got {value!r}") from None


def _parse_int(key: str, value: str) -> int:
    try:
        return int(value)
    except ValueError:
        raise ConfigError(f"key {key!r}: expected an integer, got {value!r}") from None


def parse_config(text: str) -> CliConfig:
    """Parse the key-value experiment document; unknown keys are rejected."""
    raw = dict()
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = (part.strip() for part in stripped.split("=", 1))
        if key not in _DEFAULTS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in raw:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        raw[key] = value

    for key, default in _DEFAULTS.items():
        if key not in raw:
            if default is None:
                raise ConfigError(f"missing required key {key!r}")
            raw[key] = default

    kind = raw["lifetime.kind"].lower()
    b = _parse_float("birth_rate", raw["birth_rate"])
    if kind == "immortal":
        lifetime = ImmortalLifetime()
    elif kind == "exponential":
        if not raw["lifetime.death_rate"]:
            raise ConfigError("lifetime.kind = exponential needs lifetime.death_rate")
        lifetime = ExponentialLifetime(_parse_float("lifetime.death_rate", raw["lifetime.death_rate"]))
    elif kind == "fixed":
        if not raw["lifetime.v"]:
            raise ConfigError("lifetime.kind = fixed needs lifetime.v")
        lifetime = FixedLifetime(_parse_float("lifetime.v", raw["lifetime.v"]))
    else:
        raise ConfigError(f"key 'lifetime.kind': unknown lifetime {kind!r}")
    try:
        model = ModelParams(
            LifespanModel(b, lifetime), _parse_float("mutation_rate", raw["mutation_rate"])
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    def parse_list(key: str) -> tuple[float, ...]:
        value = raw[key]
        if not value:
            return ()
        return tuple(_parse_float(key, v) for v in value.split(","))

    def parse_thresholds(key: str):
        return "auto" if raw[key].strip() == "auto" else parse_list(key)

    windows = []
    if raw["windows"]:
        for i, triple in enumerate(raw["windows"].split(";")):
            parts = triple.split(":")
            if len(parts) != 3:
                raise ConfigError(f"key 'windows': entry {i} must be x:s1:s2")
            windows.append(tuple(_parse_float("windows", p) for p in parts))

    suites = tuple(s.strip() for s in raw["suites"].split(",") if s.strip())
    for s in suites:
        if s not in SUITES:
            raise ConfigError(f"key 'suites': unknown suite {s!r}")

    experiment = ExperimentConfig(
        model=model,
        horizons=parse_list("horizons"),
        replicates=_parse_int("replicates", raw["replicates"]),
        master_seed=_parse_int("seed", raw["seed"]),
        suites=suites,
        size_thresholds=parse_thresholds("size_thresholds"),
        age_thresholds=parse_thresholds("age_thresholds"),
        windows=tuple(windows),
        k_max=_parse_int("k_max", raw["k_max"]),
        workers=_parse_int("workers", raw["workers"]) if raw["workers"] else (os.cpu_count() or 1),
        grid_h=_parse_float("grid_h", raw["grid_h"]) if raw["grid_h"] else None,
    )
    return CliConfig(experiment=experiment, raw=raw)


def serialize_config(config: CliConfig) -> str:
    return "".join(f"{k} = {v}\n" for k, v in sorted(config.raw.items()))


def _constants_payload(config: CliConfig) -> dict:
    exp = config.experiment
    grid = exp.grid()
    cons = limit_constants(exp.model, grid)
    payload = {
        "regime": cons.regime.value,
        "alpha": cons.alpha,
        "theta": cons.theta,
        "psi_prime_alpha": cons.psi_prime_alpha,
        "clonal_rate": cons.clonal_rate,
    }
    for name in ("psi_at_theta", "phi_theta", "a_theta", "b_sub", "b_crit", "b_crit_tail_bound"):
        value = getattr(cons, name)
        if value is not None:
            payload[name] = value
    return payload


def _cmd_constants(config: CliConfig, args) -> int:
    payload = _constants_payload(config)
    text = json.dumps(
        {k: (v if isinstance(v, str) else float(f"{v:.15g}")) for k, v in payload.items()},
        sort_keys=True,
        indent=2,
    ) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def _cmd_scalefn(config: CliConfig, args) -> int:
    grid = config.experiment.grid()
    if not args.out:
        raise ConfigError("scalefn requires --out")
    write_grid_csv(grid, args.out)
    return 0


def _cmd_expect(config: CliConfig, args) -> int:
    exp = config.experiment
    grid = exp.grid()
    t = exp.horizons[-1]
    if not args.out:
        raise ConfigError("expect requires --out")
    if args.format == "json":
        payload = {
            "t": t,
            "spectrum": [
                {
                    "k": k,
                    "expected_mutant": spx.expected_spectrum(grid, k, t),
                    "expected_ancestral": spx.ancestral_law(grid, k, t),
                }
                for k in range(1, exp.k_max + 1)
            ],
            "windows": [
                {
                    "x": x, "s1": s1, "s2": s2,
                    "expected_M": spx.expected_counts(grid, t, x, s1, s2),
                }
                for x, s1, s2 in exp.windows
            ],
        }
        with open(args.out, "w") as fh:
            json.dump(payload, fh, sort_keys=True, indent=2)
            fh.write("\n")
    elif exp.windows:
        spx.write_counts_csv(grid, exp.model.birth_rate, t, exp.windows, args.out)
    else:
        spx.write_spectrum_csv(grid, t, exp.k_max, args.out)
    return 0


def _cmd_simulate(config: CliConfig, args) -> int:
    exp = config.experiment
    grid = exp.grid()
    t = exp.horizons[-1]
    if not args.out:
        raise ConfigError("simulate requires --out")
    size_ths = exp.size_thresholds if exp.size_thresholds != "auto" else ()
    with open(args.out, "w", newline="") as fh:
        fh.write("# per-replicate dump: one row per conditioned population\n")
        header = "replicate,N,num_families,X1,X2,A1,A2"
        header += "".join(f",L_{x:g}" for x in size_ths)
        fh.write(header + "\n")
        for r in range(exp.replicates):
            rng = replicate_rng(exp.master_seed, 0, r)
            part = simulate_partition(grid, t, rng)
            summ = extreme_stats(part, size_thresholds=size_ths)
            xs = summ.ordered_sizes
            ag = summ.ordered_ages
            row = [
                str(r),
                str(part.n_alive),
                str(part.n_families),
                f"{xs[0] if xs.size else 0:g}",
                f"{xs[1] if xs.size > 1 else 0:g}",
                f"{ag[0] if ag.size else 0:.12e}",
                f"{ag[1] if ag.size > 1 else 0:.12e}",
            ]
            row += [str(summ.large[x]) for x in size_ths]
            fh.write(",".join(row) + "\n")
    return 0


def _cmd_verify(config: CliConfig, args) -> int:
    exp = config.experiment
    if args.workers:
        exp = replace(exp, workers=args.workers)
    suites = [args.suite] if args.suite else list(exp.suites)
    grid = exp.grid()
    reports = []
    for suite in suites:
        reports.extend(run_suite(exp, suite, grid))
    if args.out:
        if args.format == "csv":
            write_checks_csv(reports, args.out)
        else:
            write_reports_json(reports, args.out)
    else:
        sys.stdout.buffer.write(report_json_bytes(reports))
    return 1 if any_failures(reports) else 0


def dispatch(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="splitpop",
        description="splitting-tree population numerics and Monte Carlo verification",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("constants", "print limit constants for the configured model"),
        ("scalefn", "export the scale-function grid as CSV"),
        ("expect", "export exact expected spectrum / counts"),
        ("simulate", "dump per-replicate simulation statistics"),
        ("verify", "run verification suites and report pass/fail"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("config", help="path to the key-value experiment document")
        p.add_argument("--out", default=None, help="output file path")
        p.add_argument("--format", choices=("csv", "json"), default="json")
        p.add_argument("--workers", type=int, default=None)
        if name == "verify":
            p.add_argument("--suite", choices=SUITES, default=None)

    args = parser.parse_args(argv)
    try:
        with open(args.config) as fh:
            config = parse_config(fh.read())
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    handler = {
        "constants": _cmd_constants,
        "scalefn": _cmd_scalefn,
        "expect": _cmd_expect,
        "simulate": _cmd_simulate,
        "verify": _cmd_verify,
    }[args.command]
    try:
        return handler(config, args)
    except (ConfigError, ValueError, KeyError, MemoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(dispatch())
