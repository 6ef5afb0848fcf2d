"""Readers for the simulator's exported comparison files, with schema checks."""

from __future__ import annotations

import csv
import json

CHECKS_COLUMNS = ("suite", "t", "name", "empirical", "target", "se", "z_or_p", "pass")


class SchemaError(ValueError):
    pass


def read_checks_csv(path) -> list[dict]:
    """Rows of a per-check comparison CSV (suite,t,name,empirical,target,...)."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = tuple(reader.fieldnames or ())
        missing = [c for c in CHECKS_COLUMNS if c not in header]
        if missing:
            raise SchemaError(f"missing column(s) {missing} in {path}")
        rows = []
        for row in reader:
            rows.append(
                {
                    "suite": row["suite"],
                    "t": float(row["t"]),
                    "name": row["name"],
                    "empirical": float(row["empirical"]),
                    "target": float(row["target"]),
                    "se": float(row["se"]) if row["se"] else None,
                }
            )
    return rows


def read_reports_json(path) -> list[dict]:
    """Reports as written by the verify subcommand (list of suite dicts)."""
    with open(path) as fh:
        reports = json.load(fh)
    if not isinstance(reports, list):
        raise SchemaError(f"{path}: expected a list of suite reports")
    for rep in reports:
        for key in ("suite", "t", "checks"):
            if key not in rep:
                raise SchemaError(f"{path}: report missing key {key!r}")
    return reports
