"""Audit reports: named residual checks with a deterministic JSON form."""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

__all__ = ["CheckRow", "AuditReport", "check", "fan_out"]


def fan_out(worker, items, threads: int = 1) -> list:
    """Map ``worker`` over pre-drawn sample items, flattening row lists.

    Results keep the order of ``items`` regardless of thread count, so
    reports built from them are byte-identical for any ``threads``.
    """
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            chunks = list(pool.map(worker, items))
    else:
        chunks = [worker(item) for item in items]
    rows = []
    for chunk in chunks:
        rows.extend(chunk)
    return rows


@dataclass(frozen=True)
class CheckRow:
    name: str
    residual: float
    tolerance: float
    passed: bool
    x: tuple | None = None
    y: tuple | None = None


def check(name: str, residual: float, tolerance: float, x=None, y=None) -> CheckRow:
    """A CheckRow that passes iff the residual is finite and within tolerance."""
    residual = float(residual)
    ok = math.isfinite(residual) and residual <= tolerance
    return CheckRow(
        name,
        residual,
        float(tolerance),
        ok,
        None if x is None else tuple(float(v) for v in x),
        None if y is None else tuple(float(v) for v in y),
    )


@dataclass(frozen=True)
class AuditReport:
    verdict: bool
    seed: int
    checks: tuple

    @classmethod
    def from_checks(cls, checks, seed: int = 0) -> "AuditReport":
        rows = tuple(checks)
        return cls(all(row.passed for row in rows), int(seed), rows)

    def failures(self) -> tuple:
        return tuple(row for row in self.checks if not row.passed)

    def to_json(self) -> str:
        """Deterministic serialization: fixed key order, repr-exact floats."""
        payload = {
            "verdict": self.verdict,
            "seed": self.seed,
            "checks": [
                {
                    "name": row.name,
                    "residual": row.residual,
                    "tolerance": row.tolerance,
                    "pass": row.passed,
                    "x": None if row.x is None else list(row.x),
                    "y": None if row.y is None else list(row.y),
                }
                for row in self.checks
            ],
        }
        return json.dumps(payload, indent=2)
