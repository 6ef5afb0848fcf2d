"""Canonical report serialization (JSON and CSV).

Byte-stable for identical inputs: keys are sorted, floats use repr, and no
timestamps or environment details are embedded.
"""

from __future__ import annotations

import json

__all__ = [
    "report_json_bytes",
    "write_reports_json",
    "write_checks_csv",
    "any_failures",
]


def report_json_bytes(reports: list[dict]) -> bytes:
    return (json.dumps(reports, sort_keys=True, indent=2) + "\n").encode()


def write_reports_json(reports: list[dict], path) -> None:
    with open(path, "wb") as fh:
        fh.write(report_json_bytes(reports))


def write_checks_csv(reports: list[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("suite,t,name,empirical,target,se,z_or_p,pass\n")
        for rep in reports:
            for c in rep["checks"]:
                se = "" if c["se"] is None else repr(c["se"])
                zp = "" if c["z_or_p"] is None else repr(c["z_or_p"])
                ok = "" if c["pass"] is None else str(c["pass"]).lower()
                fh.write(
                    f"{rep['suite']},{rep['t']!r},{c['name']},"
                    f"{c['empirical']!r},{c['target']!r},{se},{zp},{ok}\n"
                )


def any_failures(reports: list[dict]) -> bool:
    return any(
        c["pass"] is False for rep in reports for c in rep["checks"]
    )
