"""Pass/fail records for inequality checks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

CSV_HEADER = "name,lhs,rhs,margin,passed,worst_location"


@dataclass(frozen=True)
class CheckReport:
    """Outcome of checking ``lhs <= rhs`` (up to ``tol``).

    For nodewise checks ``lhs`` and ``rhs`` are taken at the node with the
    smallest tolerance-adjusted margin, which is also ``worst_location``.
    """

    name: str
    lhs: float
    rhs: float
    tol: float
    passed: bool
    worst_location: float | None = None
    note: str = ""

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs

    @classmethod
    def scalar(
        cls,
        name: str,
        lhs: float,
        rhs: float,
        *,
        rtol: float = 0.0,
        atol: float = 0.0,
        location: float | None = None,
        note: str = "",
    ) -> CheckReport:
        tol = atol + rtol * abs(rhs)
        return cls(
            name, float(lhs), float(rhs), float(tol), bool(lhs <= rhs + tol), location, note
        )

    @classmethod
    def nodewise(
        cls,
        name: str,
        lhs: np.ndarray,
        rhs: np.ndarray,
        locations: np.ndarray,
        *,
        rtol: float | np.ndarray = 0.0,
        atol: float | np.ndarray = 0.0,
        note: str = "",
    ) -> CheckReport:
        lhs = np.asarray(lhs, dtype=np.float64)
        rhs = np.asarray(rhs, dtype=np.float64)
        if lhs.size == 0:
            return cls(name, 0.0, 0.0, 0.0, True, None, note)

        tol = np.broadcast_to(atol + rtol * np.abs(rhs), lhs.shape)
        slack = rhs + tol - lhs
        if not np.all(np.isfinite(slack)):
            k = int(np.flatnonzero(~np.isfinite(slack))[0])
            return cls(name, lhs[k], rhs[k], float(tol[k]), False, float(locations[k]), note)

        # normalize so that the worst node is the one closest to failing
        scale = np.maximum(np.abs(lhs) + np.abs(rhs), np.finfo(float).tiny)
        k = int(np.argmin(slack / scale))
        return cls(
            name,
            float(lhs[k]),
            float(rhs[k]),
            float(tol[k]),
            bool(np.all(slack >= 0.0)),
            float(locations[k]),
            note,
        )

    def summary(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        where = "" if self.worst_location is None else f" at {self.worst_location:.6g}"
        note = f" ({self.note})" if self.note else ""
        return (
            f"{status} {self.name}: lhs = {self.lhs:.6e} rhs = {self.rhs:.6e} "
            f"margin = {self.margin:.3e}{where}{note}"
        )

    def csv_row(self) -> str:
        loc = "" if self.worst_location is None else f"{self.worst_location:.17g}"
        return ",".join([
            self.name,
            f"{self.lhs:.17g}",
            f"{self.rhs:.17g}",
            f"{self.margin:.17g}",
            "true" if self.passed else "false",
            loc,
        ])


def write_reports(reports: list[CheckReport], path) -> None:
    with open(path, "w", encoding="utf-8") as outf:
        outf.write(CSV_HEADER + "\n")
        for r in reports:
            outf.write(r.csv_row() + "\n")
