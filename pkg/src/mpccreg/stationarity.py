"""Strong stationarity and MPCC-LICQ checks at candidate points.

The MPCC multipliers follow the same sign convention as the NLP solver: the
stationarity row is ::

    grad f - J_eq' lam_eq - J_in' lam_in - z_lower + z_upper
           - sum_j (nu1_j e_{x1j} + nu2_j e_{x2j}) = 0

where ``lam_eq``/``lam_in`` belong to the side constraints in residual form
(see :func:`mpccreg.model.side_rows`), ``z_lower``/``z_upper`` to simple bounds
that are not complementarity bounds, and ``nu1``/``nu2`` to the pairs.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .model import MpccProblem, side_rows

ACTIVITY_TOL = 1e-6


@dataclass
class MpccMultipliers:
    lam_eq: np.ndarray
    lam_in: np.ndarray
    z_lower: np.ndarray
    z_upper: np.ndarray
    nu1: np.ndarray
    nu2: np.ndarray

    @classmethod
    def zeros(cls, problem: MpccProblem) -> "MpccMultipliers":
        rows = side_rows(problem)
        n, q = problem.nvars, problem.q
        return cls(np.zeros(len(rows.eq)), np.zeros(len(rows.ineq)), np.zeros(n), np.zeros(n), np.zeros(q), np.zeros(q))

    @classmethod
    def from_dict(cls, problem: MpccProblem, data: dict) -> "MpccMultipliers":
        """Build from a mapping; missing entries are zero.  Raises ValueError on bad lengths."""
        base = cls.zeros(problem)
        out = {}
        for key, default in asdict(base).items():
            val = np.asarray(data.get(key, default), dtype=float).ravel()
            if val.shape != default.shape:
                raise ValueError(f"multiplier {key!r} has length {val.size}, expected {default.size}")
            out[key] = val
        unknown = set(data) - set(out)
        if unknown:
            raise ValueError(f"unknown multiplier keys: {sorted(unknown)}")
        return cls(**out)

    def to_dict(self) -> dict:
        return {k: [float(v) for v in arr] for k, arr in asdict(self).items()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


@dataclass(frozen=True)
class ActiveSets:
    X1: tuple[int, ...]
    X2: tuple[int, ...]
    degenerate: tuple[int, ...]
    active_ineq: tuple[int, ...]
    active_lower: tuple[int, ...]
    active_upper: tuple[int, ...]


@dataclass
class StationarityReport:
    is_feasible: bool
    is_strongly_stationary: bool
    stationarity: float
    feasibility: float
    sign: float
    complementary_slackness: float
    degenerate_sign: float
    licq_holds: bool
    active: ActiveSets

    def to_dict(self) -> dict:
        d = asdict(self)
        d["active"] = {k: list(v) for k, v in asdict(self.active).items()}
        return d

    def format(self) -> str:
        lines = [
            f"feasible:               {'yes' if self.is_feasible else 'no'}",
            f"strongly stationary:    {'yes' if self.is_strongly_stationary else 'no'}",
            f"MPCC-LICQ:              {'holds' if self.licq_holds else 'fails'}",
            f"stationarity row:       {self.stationarity:.3e}",
            f"feasibility:            {self.feasibility:.3e}",
            f"sign conditions:        {self.sign:.3e}",
            f"compl. slackness:       {self.complementary_slackness:.3e}",
            f"degenerate-pair sign:   {self.degenerate_sign:.3e}",
            f"degenerate pairs:       {list(self.active.degenerate)}",
        ]
        return "\n".join(lines)


def _jac(exprs, x, n):
    vals = np.empty(len(exprs))
    J = np.zeros((len(exprs), n))
    for r, e in enumerate(exprs):
        v, g = e.forward(x)
        vals[r] = v
        for i, d in g.items():
            J[r, i] = d
    return vals, J


def _paired_mask(problem: MpccProblem) -> np.ndarray:
    mask = np.zeros(problem.nvars, dtype=bool)
    for i, k in problem.pairs:
        mask[i] = mask[k] = True
    return mask


def active_sets(problem: MpccProblem, x, tol: float = ACTIVITY_TOL) -> ActiveSets:
    x = np.asarray(x, dtype=float)
    first, second = problem.first, problem.second
    X1 = tuple(j for j in range(problem.q) if abs(x[first[j]]) <= tol)
    X2 = tuple(j for j in range(problem.q) if abs(x[second[j]]) <= tol)
    D = tuple(sorted(set(X1) & set(X2)))
    rows = side_rows(problem)
    ci, _ = _jac(rows.ineq, x, problem.nvars)
    paired = _paired_mask(problem)
    lo, up = problem.lower, problem.upper
    act_lo = tuple(i for i in range(problem.nvars) if not paired[i] and math.isfinite(lo[i]) and abs(x[i] - lo[i]) <= tol)
    act_up = tuple(i for i in range(problem.nvars) if math.isfinite(up[i]) and abs(up[i] - x[i]) <= tol)
    return ActiveSets(X1, X2, D, tuple(int(i) for i in np.flatnonzero(np.abs(ci) <= tol)), act_lo, act_up)


def stationarity_row(problem: MpccProblem, x, mult: MpccMultipliers) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    n = problem.nvars
    rows = side_rows(problem)
    _, Je = _jac(rows.eq, x, n)
    _, Ji = _jac(rows.ineq, x, n)
    _, gs = problem.objective.forward(x)
    r = np.zeros(n)
    for i, d in gs.items():
        r[i] = d
    r -= Je.T @ mult.lam_eq + Ji.T @ mult.lam_in
    paired = _paired_mask(problem)
    r -= np.where(paired, 0.0, mult.z_lower)
    r += mult.z_upper
    for j, (i, k) in enumerate(problem.pairs):
        r[i] -= mult.nu1[j]
        r[k] -= mult.nu2[j]
    return r


def stationarity_measure(problem: MpccProblem, x, mult: MpccMultipliers) -> float:
    """Euclidean norm of the stationarity row stacked with the pair residuals.

    The pair part holds ``x1j*nu1j``, ``x2j*nu2j`` and ``min(x1j, x2j)``, so
    the measure vanishes exactly at strongly stationary points.
    """
    x = np.asarray(x, dtype=float)
    r = stationarity_row(problem, x, mult)
    x1 = x[problem.first]
    x2 = x[problem.second]
    pair = np.concatenate([x1 * mult.nu1, x2 * mult.nu2, np.maximum(np.minimum(x1, x2), 0.0)])
    return float(np.linalg.norm(np.concatenate([r, pair])))


def check_mpcc_licq(problem: MpccProblem, x, tol: float = ACTIVITY_TOL) -> bool:
    """Rank test on the active constraint normals of the relaxed NLP at ``x``."""
    x = np.asarray(x, dtype=float)
    n = problem.nvars
    act = active_sets(problem, x, tol)
    rows = side_rows(problem)
    _, Je = _jac(rows.eq, x, n)
    _, Ji = _jac(rows.ineq, x, n)
    eye = np.eye(n)
    cols = [*Je, *Ji[list(act.active_ineq)]]
    cols += [eye[i] for i in act.active_lower] + [eye[i] for i in act.active_upper]
    cols += [eye[problem.first[j]] for j in act.X1] + [eye[problem.second[j]] for j in act.X2]
    if not cols:
        return True
    A = np.column_stack(cols)
    s = np.linalg.svd(A, compute_uv=False)
    rank = int(np.sum(s > 1e-8 * s[0])) if s[0] > 0 else 0
    return rank == A.shape[1]


def check_strong_stationarity(problem: MpccProblem, x, mult: MpccMultipliers, tol: float = 1e-6) -> StationarityReport:
    """Evaluate every condition of strong stationarity at ``x`` with tolerance ``tol``."""
    x = np.asarray(x, dtype=float)
    if x.shape != (problem.nvars,):
        raise ValueError(f"point has length {x.size}, expected {problem.nvars}")
    n = problem.nvars
    rows = side_rows(problem)
    ce, _ = _jac(rows.eq, x, n)
    ci, _ = _jac(rows.ineq, x, n)
    lo, up = problem.lower, problem.upper
    paired = _paired_mask(problem)
    x1 = x[problem.first]
    x2 = x[problem.second]

    def worst(*arrays) -> float:
        return float(max((np.max(a, initial=0.0) for a in arrays), default=0.0))

    stat = float(np.max(np.abs(stationarity_row(problem, x, mult)), initial=0.0))
    fl, fu = np.isfinite(lo), np.isfinite(up)
    feas = worst(
        np.abs(ce), -ci, -x1, -x2, np.minimum(x1, x2),
        (lo - x)[fl], (x - up)[fu],
    )
    z_lo = np.where(paired, 0.0, mult.z_lower)
    sign = worst(-mult.lam_in, -z_lo, -mult.z_upper)
    # a nonzero multiplier on an infinite bound can never be complementary
    free = worst(np.abs(z_lo[~fl]), np.abs(mult.z_upper[~fu]))
    slack = worst(
        np.abs(ci * mult.lam_in),
        np.abs(z_lo[fl] * (x - lo)[fl]),
        np.abs(mult.z_upper[fu] * (up - x)[fu]),
        np.abs(x1 * mult.nu1),
        np.abs(x2 * mult.nu2),
    )
    slack = max(slack, math.inf if free > 0 else 0.0)
    act = active_sets(problem, x)
    D = list(act.degenerate)
    degen = worst(-mult.nu1[D], -mult.nu2[D]) if D else 0.0
    feasible = feas <= tol
    strong = feasible and stat <= tol and sign <= tol and slack <= tol and degen <= tol
    return StationarityReport(
        is_feasible=feasible,
        is_strongly_stationary=strong,
        stationarity=stat,
        feasibility=feas,
        sign=sign,
        complementary_slackness=slack,
        degenerate_sign=degen,
        licq_holds=check_mpcc_licq(problem, x),
        active=act,
    )


def estimate_multipliers(problem: MpccProblem, x, tol: float = ACTIVITY_TOL) -> MpccMultipliers:
    """Least-squares multipliers supported on the constraints active at ``x``."""
    x = np.asarray(x, dtype=float)
    n = problem.nvars
    act = active_sets(problem, x, tol)
    rows = side_rows(problem)
    _, Je = _jac(rows.eq, x, n)
    _, Ji = _jac(rows.ineq, x, n)
    eye = np.eye(n)
    cols, slots = [], []
    for r in range(Je.shape[0]):
        cols.append(Je[r]); slots.append(("lam_eq", r))
    for r in act.active_ineq:
        cols.append(Ji[r]); slots.append(("lam_in", r))
    for i in act.active_lower:
        cols.append(eye[i]); slots.append(("z_lower", i))
    for i in act.active_upper:
        cols.append(-eye[i]); slots.append(("z_upper", i))
    for j in act.X1:
        cols.append(eye[problem.first[j]]); slots.append(("nu1", j))
    for j in act.X2:
        cols.append(eye[problem.second[j]]); slots.append(("nu2", j))
    mult = MpccMultipliers.zeros(problem)
    if not cols:
        return mult
    _, gs = problem.objective.forward(x)
    g = np.zeros(n)
    for i, d in gs.items():
        g[i] = d
    sol = np.linalg.lstsq(np.column_stack(cols), g, rcond=None)[0]
    for (name, idx), val in zip(slots, sol):
        getattr(mult, name)[idx] = val
    return mult
