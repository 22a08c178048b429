"""Dense primal active-set solver for strictly convex QPs.

Solves::

    min  0.5 d'Hd + g'd
    s.t. A_eq d  = b_eq
         A_in d >= b_in

Multiplier convention: stationarity reads ``Hd + g + A_eq' lam_eq - A_in' lam_in = 0``
with ``lam_in >= 0``.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

FEAS_TOL = 1e-9
PHASE1_TOL = 1e-8
# curvature of the phase-1 proximal term; small so the l1 violation penalty stays exact
PHASE1_PROX = 1e-6
DEGENERATE_STEP = 1e-14
PERTURBATION = 1e-10
# negative multipliers above -MULT_TOL*scale are roundoff and clipped to zero
MULT_TOL = 1e-10


class QpStatus(str, enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    ITERATION_LIMIT = "iteration_limit"


def _rows(A, n: int) -> np.ndarray:
    if A is None:
        return np.zeros((0, n))
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.size == 0:
        return np.zeros((0, n))
    return A


def _vec(b, m: int) -> np.ndarray:
    if b is None:
        return np.zeros(m)
    return np.asarray(b, dtype=float).reshape(m)


@dataclass
class QpInstance:
    H: np.ndarray
    g: np.ndarray
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    A_in: np.ndarray | None = None
    b_in: np.ndarray | None = None

    def __post_init__(self):
        self.g = np.asarray(self.g, dtype=float).ravel()
        n = self.g.size
        self.H = np.asarray(self.H, dtype=float).reshape(n, n)
        self.A_eq = _rows(self.A_eq, n)
        self.A_in = _rows(self.A_in, n)
        if self.A_eq.shape[1] != n or self.A_in.shape[1] != n:
            raise ValueError("constraint matrices do not match the number of variables")
        self.b_eq = _vec(self.b_eq, self.A_eq.shape[0])
        self.b_in = _vec(self.b_in, self.A_in.shape[0])
        scale = max(1.0, float(np.max(np.abs(self.H)))) if n else 1.0
        if n and np.max(np.abs(self.H - self.H.T)) > 1e-12 * scale:
            raise ValueError("H must be symmetric")

    @property
    def n(self) -> int:
        return self.g.size

    def objective(self, d) -> float:
        return float(0.5 * d @ self.H @ d + self.g @ d)


@dataclass
class QpSolution:
    d: np.ndarray
    lam_eq: np.ndarray
    lam_in: np.ndarray
    status: QpStatus
    active: tuple[int, ...] = ()
    iterations: int = 0

    @property
    def optimal(self) -> bool:
        return self.status is QpStatus.OPTIMAL


@dataclass
class Phase1Result:
    x: np.ndarray
    feasible: bool
    violation: float
    status: str = "feasible"
    iterations: int = 0
    elastic: np.ndarray = field(default_factory=lambda: np.zeros(0))


def max_violation(A_eq, b_eq, A_in, b_in, x) -> float:
    v = 0.0
    if A_eq.shape[0]:
        v = max(v, float(np.max(np.abs(A_eq @ x - b_eq))))
    if A_in.shape[0]:
        v = max(v, float(np.max(b_in - A_in @ x)))
    return v


def _kkt_solve(H, gk, A):
    """Step ``p`` and multipliers ``mu`` of min 0.5p'Hp + gk'p s.t. Ap = 0."""
    n = gk.size
    m = A.shape[0]
    K = np.zeros((n + m, n + m))
    K[:n, :n] = H
    K[n:, :n] = A
    K[:n, n:] = A.T
    rhs = np.concatenate([-gk, np.zeros(m)])
    z = None
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        try:
            z = scipy.linalg.solve(K, rhs, assume_a="sym")
        except (np.linalg.LinAlgError, ValueError):
            z = None
    if z is None or not np.all(np.isfinite(z)):
        z = np.linalg.lstsq(K, rhs, rcond=None)[0]
    return z[:n], -z[n:]


def _independent(rows: list[np.ndarray], candidate: np.ndarray) -> bool:
    if not rows:
        return bool(np.any(candidate != 0.0))
    M = np.vstack(rows + [candidate])
    s = np.linalg.svd(M, compute_uv=False)
    return bool(s[-1] > 1e-10 * max(1.0, s[0]))


def independent_rows(A: np.ndarray) -> list[int]:
    """Indices of a maximal linearly independent subset of rows, in order."""
    keep: list[int] = []
    chosen: list[np.ndarray] = []
    for i, row in enumerate(A):
        if _independent(chosen, row):
            keep.append(i)
            chosen.append(row)
    return keep


def _initial_working_set(A_eq, A_in, b_in, x, prefer=()) -> list[int]:
    r = A_in @ x - b_in
    tol = 1e-10 * (1.0 + np.abs(b_in))
    active = [i for i in range(A_in.shape[0]) if abs(r[i]) <= tol[i]]
    order = [i for i in prefer if i in active] + [i for i in active if i not in prefer]
    rows = list(A_eq)
    W = []
    for i in order:
        if _independent(rows, A_in[i]):
            rows.append(A_in[i])
            W.append(i)
    return W


def _active_set(H, g, A_eq, b_eq, A_in, b_in, x, W, max_iter):
    """Primal active-set iterations from a feasible ``x`` with working set ``W``.

    Returns ``x, mu_eq, lam_in, W, status, iterations`` where ``mu_eq`` uses
    the ``Hx + g = A_eq' mu_eq + A_in' lam_in`` convention.
    """
    n = x.size
    me, mi = A_eq.shape[0], A_in.shape[0]
    b_in = b_in.copy()
    W = list(W)
    row_norm = np.linalg.norm(A_in, axis=1) if mi else np.zeros(0)
    stalls = 0
    perturbed = False
    # after a full unblocked step x is the minimizer on the working set
    at_minimizer = False
    dropped = None
    for it in range(1, max_iter + 1):
        A_W = np.vstack([A_eq, A_in[W]]) if W else A_eq
        gk = H @ x + g
        p, mu = _kkt_solve(H, gk, A_W)
        if A_W.shape[0] >= n:
            # vertex: the working set pins every direction
            p = np.zeros(n)
        pnorm = float(np.max(np.abs(p))) if n else 0.0
        if at_minimizer or pnorm <= 1e-10 * (1.0 + float(np.max(np.abs(x), initial=0.0))):
            at_minimizer = False
            mu_in = mu[me:]
            if not W or mu_in.min() >= -MULT_TOL * (1.0 + float(np.max(np.abs(gk), initial=0.0))):
                lam_in = np.zeros(mi)
                lam_in[W] = np.maximum(mu_in, 0.0)
                return x, mu[:me], lam_in, W, QpStatus.OPTIMAL, it
            worst = mu_in.min()
            dropped = min(W[k] for k in range(len(W)) if mu_in[k] == worst)
            W.remove(dropped)
            stalls = 0
            continue
        alpha = 1.0
        block = None
        if mi:
            Ap = A_in @ p
            r = A_in @ x - b_in
            in_w = np.zeros(mi, dtype=bool)
            in_w[W] = True
            if dropped is not None:
                # a row released for a negative multiplier cannot block the next step
                in_w[dropped] = True
            cand = (~in_w) & (Ap < -1e-13 * row_norm * pnorm)
            if np.any(cand):
                ratios = np.full(mi, np.inf)
                ratios[cand] = np.maximum(r[cand], 0.0) / -Ap[cand]
                rmin = ratios.min()
                if rmin < 1.0:
                    alpha = float(rmin)
                    block = int(np.flatnonzero(ratios == rmin)[0])
        x = x + alpha * p
        dropped = None
        at_minimizer = block is None
        if block is not None:
            W.append(block)
        if block is not None and alpha * pnorm < DEGENERATE_STEP:
            stalls += 1
        else:
            stalls = 0
        if stalls >= 3 and not perturbed:
            # relax the blocking rows slightly and restart with no active inequalities
            b_in[W] -= PERTURBATION
            W = []
            perturbed = True
            stalls = 0
    lam_in = np.zeros(mi)
    return x, np.zeros(me), lam_in, W, QpStatus.ITERATION_LIMIT, max_iter


def solve_phase1(A_eq, b_eq, A_in, b_in, start, max_iter: int | None = None) -> Phase1Result:
    """Find a point satisfying the linear constraints, near ``start``.

    Minimizes the l1 violation with elastic variables plus a small proximal
    term; the problem is infeasible when the minimal violation exceeds 1e-8.
    """
    start = np.asarray(start, dtype=float).ravel()
    n = start.size
    A_eq, A_in = _rows(A_eq, n), _rows(A_in, n)
    b_eq, b_in = _vec(b_eq, A_eq.shape[0]), _vec(b_in, A_in.shape[0])
    viol = max_violation(A_eq, b_eq, A_in, b_in, start)
    if viol <= FEAS_TOL:
        return Phase1Result(start.copy(), True, viol)
    me, mi = A_eq.shape[0], A_in.shape[0]
    ne = 2 * me + mi
    nz = n + ne
    # z = (d, u, w, v): A_eq d - u + w = b_eq, A_in d + v >= b_in, u, w, v >= 0
    Ez = np.hstack([A_eq, -np.eye(me), np.eye(me), np.zeros((me, mi))])
    Iz = np.vstack([
        np.hstack([A_in, np.zeros((mi, 2 * me)), np.eye(mi)]),
        np.hstack([np.zeros((ne, n)), np.eye(ne)]),
    ])
    bz = np.concatenate([b_in, np.zeros(ne)])
    H = PHASE1_PROX * np.eye(nz)
    g = np.concatenate([-PHASE1_PROX * start, np.ones(ne)])
    res_eq = A_eq @ start - b_eq
    z0 = np.concatenate([
        start,
        np.maximum(res_eq, 0.0),
        np.maximum(-res_eq, 0.0),
        np.maximum(b_in - A_in @ start, 0.0),
    ])
    W0 = _initial_working_set(Ez, Iz, bz, z0)
    limit = max_iter or 50 * (nz + Ez.shape[0] + Iz.shape[0])
    z, _, _, _, status, its = _active_set(H, g, Ez, b_eq, Iz, bz, z0, W0, limit)
    elastic = z[n:]
    d = z[:n]
    aux = float(np.sum(np.maximum(elastic, 0.0)))
    viol = max_violation(A_eq, b_eq, A_in, b_in, d)
    if status is QpStatus.ITERATION_LIMIT:
        return Phase1Result(d, False, viol, "iteration_limit", its, elastic)
    if aux > PHASE1_TOL:
        return Phase1Result(d, False, viol, "infeasible", its, elastic)
    return Phase1Result(d, True, viol, "feasible", its, elastic)


def solve_qp(instance: QpInstance, warm_start=None, max_iter: int | None = None, start=None) -> QpSolution:
    """Solve a strictly convex QP; ``warm_start`` lists preferred active inequality rows."""
    H, g = instance.H, instance.g
    A_eq, b_eq, A_in, b_in = instance.A_eq, instance.b_eq, instance.A_in, instance.b_in
    n, me, mi = instance.n, A_eq.shape[0], A_in.shape[0]
    limit = max_iter or 50 * (n + me + mi)
    x0 = np.zeros(n) if start is None else np.asarray(start, dtype=float)
    ph1 = solve_phase1(A_eq, b_eq, A_in, b_in, x0)
    if not ph1.feasible:
        status = QpStatus.INFEASIBLE if ph1.status == "infeasible" else QpStatus.ITERATION_LIMIT
        return QpSolution(ph1.x, np.zeros(me), np.zeros(mi), status, (), ph1.iterations)
    keep = independent_rows(A_eq) if me else []
    Ae, be = A_eq[keep], b_eq[keep]
    W0 = _initial_working_set(Ae, A_in, b_in, ph1.x, tuple(warm_start or ()))
    x, mu_eq, lam_in, W, status, its = _active_set(H, g, Ae, be, A_in, b_in, ph1.x, W0, limit)
    lam_eq = np.zeros(me)
    lam_eq[keep] = -mu_eq
    return QpSolution(x, lam_eq, lam_in, status, tuple(sorted(W)), its + ph1.iterations)


def kkt_violation(instance: QpInstance, sol: QpSolution) -> dict[str, float]:
    """Residuals of the QP optimality conditions at ``sol``."""
    d = sol.d
    stat = instance.H @ d + instance.g + instance.A_eq.T @ sol.lam_eq - instance.A_in.T @ sol.lam_in
    r_in = instance.A_in @ d - instance.b_in
    out = {
        "stationarity": float(np.max(np.abs(stat), initial=0.0)),
        "primal": max_violation(instance.A_eq, instance.b_eq, instance.A_in, instance.b_in, d),
        "complementarity": float(np.max(np.abs(sol.lam_in * r_in), initial=0.0)),
        "dual": float(max(0.0, -np.min(sol.lam_in, initial=0.0))),
    }
    return out
