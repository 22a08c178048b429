"""Quasi-Newton SQP for smooth NLPs.

Each iteration solves a strictly convex QP built from the damped BFGS model of
the Lagrangian Hessian and the linearized constraints, then backtracks on the
l1 exact-penalty merit function.  Infeasible QPs are retried in elastic mode.

Multiplier convention (also used by :func:`kkt_residual`)::

    grad f - J_eq' lam_eq - J_in' lam_in - z_lower + z_upper = 0
    lam_in, z_lower, z_upper >= 0
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .expr import DomainError
from .model import NlpProblem
from .qp import QpInstance, solve_qp

log = logging.getLogger(__name__)


class SqpStatus(str, enum.Enum):
    CONVERGED = "converged"
    MAX_ITERATIONS = "max_iterations"
    LINE_SEARCH_FAILURE = "line_search_failure"
    QP_INFEASIBLE = "qp_infeasible"


@dataclass(frozen=True)
class SqpConfig:
    kkt_tol: float = 1e-8
    max_iter: int = 100
    armijo: float = 1e-4
    backtrack: float = 0.5
    min_step: float = 1e-12
    damping: float = 0.2
    elastic_weight: float = 1e6

    def __post_init__(self):
        for name in ("kkt_tol", "max_iter", "armijo", "min_step", "damping", "elastic_weight"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 < self.backtrack < 1.0:
            raise ValueError("backtrack must lie in (0, 1)")


@dataclass
class Multipliers:
    eq: np.ndarray
    ineq: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    @classmethod
    def zeros(cls, nlp: NlpProblem) -> "Multipliers":
        n = nlp.nvars
        return cls(np.zeros(len(nlp.eq)), np.zeros(len(nlp.ineq)), np.zeros(n), np.zeros(n))

    def max_abs(self) -> float:
        return float(max((np.max(np.abs(v), initial=0.0) for v in (self.eq, self.ineq, self.lower, self.upper))))


@dataclass
class NlpResult:
    x: np.ndarray
    multipliers: Multipliers
    f: float
    status: SqpStatus
    iterations: int
    kkt: float = np.inf

    @property
    def converged(self) -> bool:
        return self.status is SqpStatus.CONVERGED


@dataclass
class SqpIterate:
    """What the optional callback sees after every accepted step."""

    iteration: int
    x: np.ndarray
    merit_before: float
    merit_after: float
    alpha: float
    kkt: float
    hessian: np.ndarray
    elastic: bool = False


@dataclass
class _Point:
    x: np.ndarray
    f: float
    g: np.ndarray
    ce: np.ndarray
    Je: np.ndarray
    ci: np.ndarray
    Ji: np.ndarray


class _Evaluator:
    def __init__(self, nlp: NlpProblem):
        self.nlp = nlp
        self.n = nlp.nvars

    def _rows(self, exprs, x):
        vals = np.empty(len(exprs))
        J = np.zeros((len(exprs), self.n))
        for r, e in enumerate(exprs):
            v, g = e.forward(x)
            vals[r] = v
            for i, d in g.items():
                J[r, i] = d
        return vals, J

    def __call__(self, x) -> _Point:
        f, gs = self.nlp.objective.forward(x)
        g = np.zeros(self.n)
        for i, d in gs.items():
            g[i] = d
        ce, Je = self._rows(self.nlp.eq, x)
        ci, Ji = self._rows(self.nlp.ineq, x)
        return _Point(x, f, g, ce, Je, ci, Ji)


def _lagrangian_grad(pt: _Point, mult: Multipliers) -> np.ndarray:
    return pt.g - pt.Je.T @ mult.eq - pt.Ji.T @ mult.ineq - mult.lower + mult.upper


def _kkt_parts(pt: _Point, mult: Multipliers, lo, up) -> float:
    x = pt.x
    terms = [np.max(np.abs(_lagrangian_grad(pt, mult)), initial=0.0)]
    terms.append(np.max(np.abs(pt.ce), initial=0.0))
    terms.append(np.max(-pt.ci, initial=0.0))
    terms.append(np.max(lo - x, initial=0.0))
    terms.append(np.max(x - up, initial=0.0))
    terms.append(np.max(-mult.ineq, initial=0.0))
    terms.append(np.max(-mult.lower, initial=0.0))
    terms.append(np.max(-mult.upper, initial=0.0))
    terms.append(np.max(np.abs(mult.ineq * pt.ci), initial=0.0))
    fl, fu = np.isfinite(lo), np.isfinite(up)
    terms.append(np.max(np.abs(mult.lower[fl] * (x[fl] - lo[fl])), initial=0.0))
    terms.append(np.max(np.abs(mult.upper[fu] * (up[fu] - x[fu])), initial=0.0))
    # multipliers on infinite bounds must vanish
    terms.append(np.max(np.abs(mult.lower[~fl]), initial=0.0))
    terms.append(np.max(np.abs(mult.upper[~fu]), initial=0.0))
    return float(max(terms))


def kkt_residual(nlp: NlpProblem, x, multipliers: Multipliers) -> float:
    """Worst violation of the NLP's first-order optimality conditions."""
    x = np.asarray(x, dtype=float)
    pt = _Evaluator(nlp)(x)
    return _kkt_parts(pt, multipliers, np.array(nlp.lower), np.array(nlp.upper))


def _violation(pt: _Point) -> float:
    return float(np.sum(np.abs(pt.ce)) + np.sum(np.maximum(-pt.ci, 0.0)))


def _lin_violation(pt: _Point, d) -> float:
    return float(np.sum(np.abs(pt.ce + pt.Je @ d)) + np.sum(np.maximum(-(pt.ci + pt.Ji @ d), 0.0)))


def _bound_rows(lo, up):
    n = lo.size
    fl = np.flatnonzero(np.isfinite(lo))
    fu = np.flatnonzero(np.isfinite(up))
    A = np.vstack([np.eye(n)[fl], -np.eye(n)[fu]]) if n else np.zeros((0, 0))
    return fl, fu, A.reshape(len(fl) + len(fu), n)


def _solve_subproblem(pt, B, lo, up, weight, elastic, warm):
    """QP step and multiplier estimates; ``None`` if the QP cannot be solved."""
    n = pt.x.size
    me, mi = pt.ce.size, pt.ci.size
    fl, fu, Ab = _bound_rows(lo, up)
    bb = np.concatenate([lo[fl] - pt.x[fl], pt.x[fu] - up[fu]])
    nb = bb.size
    if not elastic:
        inst = QpInstance(
            B, pt.g, pt.Je, -pt.ce,
            np.vstack([pt.Ji, Ab]) if mi + nb else None,
            np.concatenate([-pt.ci, bb]),
        )
        sol = solve_qp(inst, warm_start=warm)
        if not sol.optimal:
            return None
        d = sol.d
        lam_eq = -sol.lam_eq
        lam_in = sol.lam_in[:mi]
        lam_b = sol.lam_in[mi:]
        active = sol.active
    else:
        # variables (d, u, w, v): Je d - u + w = -ce, Ji d + v >= -ci, u, w, v >= 0
        ne = 2 * me + mi
        H = np.zeros((n + ne, n + ne))
        H[:n, :n] = B
        H[n:, n:] = np.eye(ne)
        g = np.concatenate([pt.g, weight * np.ones(ne)])
        Ae = np.hstack([pt.Je, -np.eye(me), np.eye(me), np.zeros((me, mi))])
        Ai = np.vstack([
            np.hstack([pt.Ji, np.zeros((mi, 2 * me)), np.eye(mi)]),
            np.hstack([Ab, np.zeros((nb, ne))]),
            np.hstack([np.zeros((ne, n)), np.eye(ne)]),
        ])
        bi = np.concatenate([-pt.ci, bb, np.zeros(ne)])
        sol = solve_qp(QpInstance(H, g, Ae, -pt.ce, Ai, bi))
        if not sol.optimal:
            return None
        d = sol.d[:n]
        lam_eq = -sol.lam_eq
        lam_in = sol.lam_in[:mi]
        lam_b = sol.lam_in[mi:mi + nb]
        active = ()
    z_lo = np.zeros(n)
    z_up = np.zeros(n)
    z_lo[fl] = lam_b[: fl.size]
    z_up[fu] = lam_b[fl.size:]
    return d, Multipliers(lam_eq, lam_in, z_lo, z_up), active


def _damped_bfgs(B, s, y, threshold):
    Bs = B @ s
    sBs = float(s @ Bs)
    if sBs <= 1e-300 or not np.all(np.isfinite(y)):
        return B
    sy = float(s @ y)
    if sy >= threshold * sBs:
        r = y
    else:
        theta = (1.0 - threshold) * sBs / (sBs - sy)
        r = theta * y + (1.0 - theta) * Bs
    sr = float(s @ r)
    if sr <= 1e-300:
        return B
    Bn = B - np.outer(Bs, Bs) / sBs + np.outer(r, r) / sr
    Bn = 0.5 * (Bn + Bn.T)
    try:
        np.linalg.cholesky(Bn)
    except np.linalg.LinAlgError:
        return np.eye(B.shape[0])
    return Bn


def sqp_solve(
    nlp: NlpProblem,
    start=None,
    config: SqpConfig = SqpConfig(),
    callback: Callable[[SqpIterate], None] | None = None,
) -> NlpResult:
    """Solve ``nlp`` from ``start`` (default: the NLP's initial point)."""
    lo = np.array(nlp.lower, dtype=float)
    up = np.array(nlp.upper, dtype=float)
    x = np.array(nlp.x0 if start is None else start, dtype=float)
    if x.shape != lo.shape:
        raise ValueError(f"start has length {x.size}, expected {lo.size}")
    x = np.clip(x, lo, up)
    evaluate = _Evaluator(nlp)
    pt = evaluate(x)
    n = x.size
    B = np.eye(n)
    sigma = 0.0
    mult = Multipliers.zeros(nlp)
    warm = None
    iterations = 0
    kkt = np.inf
    status = SqpStatus.MAX_ITERATIONS

    while True:
        elastic = False
        sub = _solve_subproblem(pt, B, lo, up, config.elastic_weight, False, warm)
        if sub is None:
            elastic = True
            sub = _solve_subproblem(pt, B, lo, up, config.elastic_weight, True, None)
        if sub is None:
            status = SqpStatus.QP_INFEASIBLE
            break
        d, qmult, warm = sub
        kkt = _kkt_parts(pt, qmult, lo, up)
        mult = qmult
        if kkt <= config.kkt_tol:
            status = SqpStatus.CONVERGED
            break
        if iterations >= config.max_iter:
            status = SqpStatus.MAX_ITERATIONS
            break

        mmax = max(np.max(np.abs(qmult.eq), initial=0.0), np.max(np.abs(qmult.ineq), initial=0.0))
        sigma = max(sigma, float(mmax) + 10.0)
        viol = _violation(pt)
        phi0 = pt.f + sigma * viol
        slope = float(pt.g @ d) - sigma * (viol - _lin_violation(pt, d))
        if slope >= 0.0:
            slope = -float(d @ B @ d)
        dnorm = float(np.max(np.abs(d), initial=0.0))
        alpha = 1.0
        accepted = None
        # merit values closer than a few ulps are indistinguishable
        noise = 10.0 * np.finfo(float).eps * max(1.0, abs(phi0))
        while alpha * dnorm >= config.min_step:
            xt = np.clip(x + alpha * d, lo, up)
            try:
                trial = evaluate(xt)
                phi = trial.f + sigma * _violation(trial)
            except DomainError:
                phi = np.inf
            if np.isfinite(phi) and phi <= phi0 + config.armijo * alpha * slope + noise:
                accepted = trial
                break
            alpha *= config.backtrack
        if accepted is None:
            status = SqpStatus.LINE_SEARCH_FAILURE
            break

        s = accepted.x - x
        y = _lagrangian_grad(accepted, qmult) - _lagrangian_grad(pt, qmult)
        B = _damped_bfgs(B, s, y, config.damping)
        x, pt = accepted.x, accepted
        iterations += 1
        log.debug("sqp it=%d merit=%.6e step=%.3e kkt=%.3e%s", iterations, phi, alpha, kkt,
                  " elastic" if elastic else "")
        if callback is not None:
            callback(SqpIterate(iterations, x.copy(), phi0, phi, alpha, kkt, B.copy(), elastic))

    return NlpResult(x, mult, float(pt.f), status, iterations, float(kkt))


def with_weight(config: SqpConfig, factor: float) -> SqpConfig:
    return replace(config, elastic_weight=config.elastic_weight * factor)
