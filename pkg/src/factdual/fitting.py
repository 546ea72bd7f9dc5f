"""
Convergence fits over checkpointed series.

Every model turns a column into a scaled sequence y(x) that should approach
a constant, and fits that constant by least squares (the plain mean) over
the last half of the checkpoints, but never fewer than three. Small x is
dropped because every predicted rate is asymptotic.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import PreconditionError
from .series import Compensated, SeriesTable

MIN_CHECKPOINTS = 3
# bound on |M_omega(x)| log^2 x / x over 10^4 <= x
SCALED_M_OMEGA_BOUND = 5.0
SCALED_M_OMEGA_FROM = 10**4
# x below this makes log log x too small to divide by
LOGLOG_FROM = 16

VERDICTS = ("pass", "fail", "report-only")


@dataclass
class FitReport:
    experiment: str
    model: str
    paper_anchor: str
    checkpoints: list[int]
    values: list[float]
    fitted: dict
    residual_norm: float
    verdict: str
    fit_checkpoints: list[int] = field(default_factory=list)

    def to_json(self) -> dict:
        return asdict(self)


def euler_phi(k: int) -> int:
    result = k
    m = k
    p = 2
    while p * p <= m:
        if m % p == 0:
            while m % p == 0:
                m //= p
            result -= result // p
        p += 1
    if m > 1:
        result -= result // m
    return result


def _tail(n: int) -> slice:
    keep = max(MIN_CHECKPOINTS, math.ceil(n / 2))
    return slice(max(0, n - keep), n)


def _fit_constant(xs: Sequence[int], ys: Sequence[float]):
    """Least-squares constant over the tail of (xs, ys) and its residual norm."""
    if len(xs) < MIN_CHECKPOINTS:
        raise PreconditionError(
            f"need at least {MIN_CHECKPOINTS} checkpoints to fit, got {len(xs)}"
        )
    sl = _tail(len(xs))
    y = np.asarray(ys[sl], dtype=float)
    c = float(y.mean())
    resid = float(np.sqrt(np.sum((y - c) ** 2)))
    return c, resid, list(xs[sl])


def _report(experiment, model, anchor, xs, ys, extra=None, verdict="report-only"):
    c, resid, fit_xs = _fit_constant(xs, ys)
    fitted = {"constant": c, "last": float(ys[-1])}
    if extra:
        fitted.update(extra)
    if not math.isfinite(resid):
        raise PreconditionError(f"{model}: non-finite residual")
    return FitReport(
        experiment, model, anchor, list(xs), [float(v) for v in ys], fitted, resid, verdict, fit_xs
    )


def fit_m_omega_log(table: SeriesTable, experiment="series") -> FitReport:
    xs = [x for x in table.checkpoints if x >= 3]
    col = dict(zip(table.checkpoints, table.column("m_omega")))
    ys = [col[x] * math.log(x) for x in xs]
    return _report(
        experiment, "m_omega_times_log", "m_omega(x) log x tends to a constant", xs, ys
    )


def fit_m_omega_scaled(table: SeriesTable, experiment="series") -> FitReport:
    xs = [x for x in table.checkpoints if x >= 2]
    col = dict(zip(table.checkpoints, table.column("M_omega")))
    ys = [col[x] * math.log(x) ** 2 / x for x in xs]
    checked = [abs(y) for x, y in zip(xs, ys) if x >= SCALED_M_OMEGA_FROM]
    verdict = "report-only"
    if checked:
        verdict = "pass" if max(checked) <= SCALED_M_OMEGA_BOUND else "fail"
    report = _report(
        experiment,
        "M_omega_scaled",
        "M_omega(x) log^2 x / x against lambda_0 = 1",
        xs,
        ys,
        {"lambda_0": 1.0, "bound": SCALED_M_OMEGA_BOUND},
        verdict,
    )
    return report


def fit_slice_bounded(table: SeriesTable, key, experiment="series") -> FitReport:
    side, k, l = key
    xs = [x for x in table.checkpoints if x >= LOGLOG_FROM]
    col = dict(zip(table.checkpoints, table.column("m_omega", k, l, side)))
    ys = [abs(col[x]) * math.sqrt(math.log(x)) / math.log(math.log(x)) ** 2.5 for x in xs]
    return _report(
        experiment,
        f"m_omega_slice_bounded[{side},{k},{l}]",
        "|m_omega(x; l, k)| sqrt(log x) / (log log x)^(5/2) stays bounded",
        xs,
        ys,
    )


def slice_m_target(k: int, l, side: str) -> Optional[float]:
    """Limit of the sliced m for coprime smallest-factor slices, else None."""
    if side != "smallest" or not isinstance(l, int) or math.gcd(l, k) != 1:
        return None
    return -1.0 / euler_phi(k)


def slice_m_tolerance(k: int) -> float:
    return 1e-3 if k == 1 else 0.03


def fit_slice_m(table: SeriesTable, key, experiment="series") -> FitReport:
    side, k, l = key
    xs = list(table.checkpoints)
    ys = table.column("m", k, l, side)
    target = slice_m_target(k, l, side)
    report = _report(
        experiment,
        f"m_slice_limit[{side},{k},{l}]",
        "sum of mu(n)/n over p(n) = l mod k tends to -1/phi(k)",
        xs,
        ys,
        {"target": target},
    )
    if target is not None:
        tol = slice_m_tolerance(k)
        report.fitted["tolerance"] = tol
        ok = abs(report.fitted["constant"] - target) <= tol
        report.verdict = "pass" if ok else "fail"
    return report


def fit_rates(table: SeriesTable, experiment: str = "series") -> list[FitReport]:
    """All four model families for the columns present in ``table``."""
    if len(table.checkpoints) < MIN_CHECKPOINTS:
        raise PreconditionError(
            f"need at least {MIN_CHECKPOINTS} checkpoints, got {len(table.checkpoints)}"
        )
    reports = []
    if table.unsliced:
        reports += [fit_m_omega_log(table, experiment), fit_m_omega_scaled(table, experiment)]
    for key in table.sliced:
        if key[2] == "undef":
            continue
        reports.append(fit_slice_bounded(table, key, experiment))
        reports.append(fit_slice_m(table, key, experiment))
    return reports


def load_series_csv(path, side: str = "smallest") -> SeriesTable:
    """Rebuild a :class:`SeriesTable` from a long-format series CSV.

    The CSV carries no side column; slices are filed under ``side``.
    """
    path = Path(path)
    cps: dict[int, None] = {}
    unsliced: dict = {}
    sliced: dict = {}
    with path.open(newline="") as fh:
        for row in csv.DictReader(fh):
            x = int(row["x"])
            cps.setdefault(x)
            stat = row["stat"]
            if stat.endswith("_slice"):
                k = int(row["k"])
                l = row["l"]
                l = int(l) if l.lstrip("-").isdigit() else l
                base = stat[: -len("_slice")]
                cols = sliced.setdefault((side, k, l), {})
                dest = cols.setdefault(base, [])
            elif stat in ("M", "m", "M_omega", "m_omega"):
                base = stat
                dest = unsliced.setdefault(stat, [])
            else:
                continue
            if base in ("M", "M_omega"):
                dest.append(int(row["value"]))
            else:
                dest.append(Compensated(float(row["value"]), float(row["err_bound"])))
    return SeriesTable(checkpoints=list(cps), unsliced=unsliced, sliced=sliced)
