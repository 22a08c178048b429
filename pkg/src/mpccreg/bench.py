"""Benchmark runs, failure tables and Dolan-More performance profiles."""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from decimal import ROUND_HALF_UP, Decimal
from typing import Sequence

import numpy as np

from .driver import DriverConfig, outer_solve
from .model import MpccProblem
from .regularize import Scheme

CSV_COLUMNS = ("name", "n", "m", "p", "q", "scheme", "f_star", "it_int", "it_ext", "status")
METRICS = ("it_int", "it_ext")


@dataclass(frozen=True)
class BenchRow:
    name: str
    n: int
    m: int
    p: int
    q: int
    scheme: Scheme
    f_star: float | None
    it_int: int
    it_ext: int
    status: str

    @property
    def solved(self) -> bool:
        return self.status == "converged"

    def csv_fields(self) -> list[str]:
        if self.solved:
            tail = [f"{self.f_star:.6E}", str(self.it_int), str(self.it_ext)]
        else:
            tail = ["NC", "", ""]
        return [self.name, str(self.n), str(self.m), str(self.p), str(self.q), self.scheme.value, *tail, self.status]


@dataclass
class BenchReport:
    rows: list[BenchRow]
    schemes: tuple[Scheme, ...]
    problem_count: int
    metadata: dict = field(default_factory=dict)

    def failures(self) -> dict[Scheme, int]:
        return {s: sum(1 for r in self.rows if r.scheme is s and not r.solved) for s in self.schemes}

    def percentages(self) -> dict[Scheme, float]:
        fails = self.failures()
        return {s: failure_percentage(fails[s], self.problem_count) for s in self.schemes}


def failure_percentage(failures: int, total: int) -> float:
    """``100*failures/total`` rounded half-up to one decimal."""
    if total <= 0:
        raise ValueError("problem count must be positive")
    value = Decimal(100 * failures) / Decimal(total)
    return float(value.quantize(Decimal("0.1"), rounding=ROUND_HALF_UP))


def _run_one(args) -> BenchRow:
    problem, scheme, config = args
    res = outer_solve(problem, scheme, config)
    f = res.f if res.converged else None
    return BenchRow(problem.name, problem.n, problem.m, problem.p, problem.q, scheme, f, res.it_int, res.it_ext, res.status)


def run_bench(
    problems: Sequence[MpccProblem],
    schemes: Sequence[Scheme],
    config: DriverConfig = DriverConfig(),
    workers: int = 1,
    timestamp: bool = True,
) -> BenchReport:
    """One driver run per (problem, scheme), rows sorted by problem name then scheme."""
    if not problems:
        raise ValueError("nothing to run: empty problem list")
    if not schemes:
        raise ValueError("nothing to run: empty scheme list")
    names = [p.name for p in problems]
    if len(set(names)) != len(names):
        raise ValueError("problem names must be unique")
    order = {s: i for i, s in enumerate(Scheme)}
    schemes = tuple(sorted(set(schemes), key=order.__getitem__))
    jobs = [(p, s, config) for p in sorted(problems, key=lambda p: p.name) for s in schemes]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_run_one, jobs))
    else:
        rows = [_run_one(j) for j in jobs]
    meta = {"config": asdict(config), "schemes": [s.value for s in schemes]}
    if timestamp:
        meta["timestamp"] = datetime.now(timezone.utc).isoformat(timespec="seconds")
    return BenchReport(rows, schemes, len(problems), meta)


# --- output ------------------------------------------------------------------

def to_csv(report: BenchReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in report.rows:
        w.writerow(r.csv_fields())
    return buf.getvalue()


def failure_table(report: BenchReport) -> str:
    fails, pct = report.failures(), report.percentages()
    head = ["Algorithm"] + [s.label for s in report.schemes]
    rows = [head, ["failures"] + [str(fails[s]) for s in report.schemes], ["%"] + [f"{pct[s]:.1f}" for s in report.schemes]]
    widths = [max(len(r[i]) for r in rows) for i in range(len(head))]
    return "\n".join("  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in rows)


def to_text_table(report: BenchReport) -> str:
    """Results grouped per problem, one (f*, it_int, it_ext) block per scheme."""
    by_problem: dict[str, dict[Scheme, BenchRow]] = {}
    for r in report.rows:
        by_problem.setdefault(r.name, {})[r.scheme] = r
    head = ["Name", "n", "m", "p", "q"]
    for s in report.schemes:
        head += [f"f* ({s.label})", "it_int", "it_ext"]
    lines = [head]
    for name, cells in by_problem.items():
        first = next(iter(cells.values()))
        line = [name, str(first.n), str(first.m), str(first.p), str(first.q)]
        for s in report.schemes:
            r = cells[s]
            line += [f"{r.f_star:.6E}", str(r.it_int), str(r.it_ext)] if r.solved else ["NC", "", ""]
        lines.append(line)
    widths = [max(len(l[i]) for l in lines) for i in range(len(head))]
    body = "\n".join("  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(l, widths))) for l in lines)
    return body + "\n\nFailures\n" + failure_table(report) + "\n"


def emit_report(report: BenchReport, fmt: str = "csv") -> str:
    if fmt == "csv":
        return to_csv(report)
    if fmt in ("text", "text-table"):
        return to_text_table(report)
    raise ValueError(f"unknown report format {fmt!r}")


def read_csv(text: str) -> list[dict[str, str]]:
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None:
        raise ValueError("empty CSV")
    return list(reader)


# --- performance profiles ----------------------------------------------------

@dataclass
class ProfileCurve:
    solver: str
    tau: np.ndarray
    rho: np.ndarray

    def at(self, tau: float) -> float:
        """Step-function value at an arbitrary ``tau >= 1``."""
        idx = int(np.searchsorted(self.tau, tau * (1 + 1e-12), side="right")) - 1
        return float(self.rho[max(idx, 0)])


def performance_ratios(metrics) -> np.ndarray:
    """Ratios ``r[p, s] = t[p, s] / min_s t[p, s]``; unsolved (nan or inf) cells give inf."""
    t = np.array(metrics, dtype=float)
    if t.ndim != 2:
        raise ValueError("metric matrix must be problems x solvers")
    solved = np.isfinite(t)
    if np.any(t[solved] < 0):
        raise ValueError("metrics must be nonnegative")
    t = np.where(solved, np.maximum(t, 1.0), np.inf)
    best = np.min(t, axis=1, keepdims=True)
    with np.errstate(invalid="ignore"):
        r = np.where(np.isfinite(t), t / best, np.inf)
    return r


def tau_grid(max_ratio: float, step: float = 0.1) -> np.ndarray:
    """``2**(i*step)`` from 1 up to the first point covering ``max_ratio``."""
    top = max(0, math.ceil(math.log2(max_ratio) / step - 1e-9)) if max_ratio > 1 else 0
    return 2.0 ** (np.arange(top + 1) * step)


def performance_profile(metrics, solvers: Sequence[str] | None = None) -> list[ProfileCurve]:
    """Dolan-More profiles of a problems x solvers metric matrix.

    Problems unsolved by every solver stay in the denominator.
    """
    r = performance_ratios(metrics)
    nprob, nsolv = r.shape
    if solvers is None:
        solvers = [f"s{i}" for i in range(nsolv)]
    if len(solvers) != nsolv:
        raise ValueError("one solver name per column required")
    finite = r[np.isfinite(r)]
    grid = tau_grid(float(finite.max()) if finite.size else 1.0)
    curves = []
    for s, name in enumerate(solvers):
        col = r[:, s]
        counts = np.array([np.count_nonzero(col <= tau * (1 + 1e-12)) for tau in grid])
        rho = counts / nprob if nprob else np.zeros_like(grid)
        curves.append(ProfileCurve(name, grid, rho))
    return curves


def metric_matrix(rows: Sequence[dict[str, str]], metric: str) -> tuple[list[str], list[str], np.ndarray]:
    """Problems x schemes matrix of ``metric`` from bench CSV rows; NC cells are nan."""
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}; choose from {', '.join(METRICS)}")
    if rows and metric not in rows[0]:
        raise KeyError(f"CSV has no column {metric!r}")
    problems = sorted({r["name"] for r in rows})
    schemes: list[str] = []
    for r in rows:
        if r["scheme"] not in schemes:
            schemes.append(r["scheme"])
    t = np.full((len(problems), len(schemes)), np.nan)
    for r in rows:
        if r["status"] == "converged" and r[metric] != "":
            t[problems.index(r["name"]), schemes.index(r["scheme"])] = float(r[metric])
    return problems, schemes, t


def profile_csv(curves: Sequence[ProfileCurve]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["tau"] + [c.solver for c in curves])
    for i, tau in enumerate(curves[0].tau if curves else []):
        w.writerow([f"{tau:.6g}"] + [f"{c.rho[i]:.6g}" for c in curves])
    return buf.getvalue()
