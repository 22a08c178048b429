"""Outer regularization loop: solve Reg(t_k) for decreasing t_k."""

from __future__ import annotations

import enum
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .expr import DomainError
from .model import MpccProblem, residuals, side_rows
from .regularize import Scheme, build_regularized
from .sqp import NlpResult, SqpConfig, SqpStatus, sqp_solve, with_weight
from .stationarity import MpccMultipliers, stationarity_measure

log = logging.getLogger(__name__)

FEAS_TOL = 1e-6


class StopReason(str, enum.Enum):
    T_MIN = "t_min"
    K_MAX = "k_max"
    RELATIVE_STEP = "relative_step"
    STATIONARITY = "stationarity"
    INNER_FAILURE = "inner_failure"


@dataclass(frozen=True)
class DriverConfig:
    t0: float = 1.0
    rho2: float = 0.1
    t_min: float = 1e-8
    k_max: int = 8
    eps1: float = 1e-6
    eps2: float = 1e-6
    comp_tol: float = 1e-4
    inner: SqpConfig = field(default_factory=SqpConfig)

    def __post_init__(self):
        if not 0.0 < self.rho2 < 1.0:
            raise ValueError("rho2 must lie in (0, 1)")
        if not self.t0 > self.t_min > 0.0:
            raise ValueError("need t0 > t_min > 0")
        if self.k_max < 1:
            raise ValueError("k_max must be at least 1")
        if not (self.eps1 > 0 and self.eps2 > 0 and self.comp_tol > 0):
            raise ValueError("eps1, eps2 and comp_tol must be positive")

    def t_at(self, k: int) -> float:
        return self.t0 * self.rho2**k


@dataclass
class OuterRecord:
    k: int
    t: float
    inner_iterations: int
    relative_step: float
    grad_norm: float
    inner_status: str
    x: np.ndarray


@dataclass
class SolveResult:
    problem: str
    scheme: Scheme
    x: np.ndarray
    f: float
    multipliers: MpccMultipliers
    converged: bool
    it_int: int
    it_ext: int
    stop_reason: StopReason
    trace: list[OuterRecord]

    @property
    def status(self) -> str:
        return "converged" if self.converged else "NC"

    def to_dict(self) -> dict:
        return {
            "problem": self.problem,
            "scheme": self.scheme.value,
            "status": self.status,
            "f": self.f,
            "x": [float(v) for v in self.x],
            "it_int": self.it_int,
            "it_ext": self.it_ext,
            "stop_reason": self.stop_reason.value,
            "multipliers": self.multipliers.to_dict(),
            "trace": [
                {**{k: v for k, v in asdict(r).items() if k != "x"}, "x": [float(v) for v in r.x]}
                for r in self.trace
            ],
        }


def stop_criterion(t: float, k: int, x_prev, x_curr, grad_norm: float, config: DriverConfig):
    """Disjunction of the four stopping tests; returns ``(stop, reason)``."""
    if t <= config.t_min:
        return True, StopReason.T_MIN
    if k >= config.k_max:
        return True, StopReason.K_MAX
    step = float(np.linalg.norm(np.asarray(x_curr) - np.asarray(x_prev)))
    size = float(np.linalg.norm(x_curr))
    rel = step / size if size > 0.0 else step
    if rel <= config.eps1:
        return True, StopReason.RELATIVE_STEP
    if grad_norm <= config.eps2:
        return True, StopReason.STATIONARITY
    return False, None


def recover_multipliers(scheme: Scheme, t: float, inner: NlpResult, problem: MpccProblem) -> MpccMultipliers:
    """MPCC multipliers from the multipliers of the regularized NLP.

    With ``xi`` the multiplier of the regularization row written as
    ``t - x1'x2`` (``>= 0`` or ``= 0``), ``nu1 = mu1 - xi*x2`` and
    ``nu2 = mu2 - xi*x1`` where ``mu`` are the lower-bound multipliers.
    """
    rows = side_rows(problem)
    pe, pi = len(rows.eq), len(rows.ineq)
    m = inner.multipliers
    x = inner.x
    q = problem.q
    if scheme.is_equality:
        xi = -m.eq[pe:]
    else:
        xi = m.ineq[pi:]
    if q and scheme.aggregated:
        xi = np.full(q, xi[0] if xi.size else 0.0)
    elif q == 0:
        xi = np.zeros(0)
    first, second = problem.first, problem.second
    mu1 = m.lower[first]
    mu2 = m.lower[second]
    nu1 = mu1 - xi * x[second]
    nu2 = mu2 - xi * x[first]
    z_lower = m.lower.copy()
    z_lower[first] = 0.0
    z_lower[second] = 0.0
    return MpccMultipliers(m.eq[:pe].copy(), m.ineq[:pi].copy(), z_lower, m.upper.copy(), nu1, nu2)


def _inner(nlp, x, config: SqpConfig):
    try:
        return sqp_solve(nlp, x, config)
    except DomainError as exc:
        log.debug("inner solve hit a domain error: %s", exc)
        return None


def outer_solve(problem: MpccProblem, scheme: Scheme, config: DriverConfig = DriverConfig()) -> SolveResult:
    """Run the regularization loop for one problem and scheme."""
    x = problem.x0
    k = 0
    it_int = 0
    trace: list[OuterRecord] = []
    mult = MpccMultipliers.zeros(problem)
    inner_ok = False
    reason = None
    while True:
        t = config.t_at(k)
        nlp = build_regularized(problem, scheme, t)
        res = _inner(nlp, x, config.inner)
        used = res.iterations if res is not None else 0
        if res is None or not res.converged:
            retry = _inner(nlp, x, with_weight(config.inner, 10.0))
            used += retry.iterations if retry is not None else 0
            res = retry
        it_int += used
        inner_ok = res is not None and res.converged
        if not inner_ok:
            status = res.status.value if res is not None else "domain_error"
            trace.append(OuterRecord(k, t, used, np.nan, np.nan, status, x.copy()))
            reason = StopReason.INNER_FAILURE
            k += 1
            break
        x_new = res.x
        mult = recover_multipliers(scheme, t, res, problem)
        grad_norm = stationarity_measure(problem, x_new, mult)
        size = float(np.linalg.norm(x_new))
        step = float(np.linalg.norm(x_new - x))
        rel = step / size if size > 0.0 else step
        trace.append(OuterRecord(k, t, used, rel, grad_norm, res.status.value, x_new.copy()))
        log.info("outer k=%d t=%.1e inner=%d rel_step=%.3e grad=%.3e", k, t, used, rel, grad_norm)
        x_prev, x = x, x_new
        k += 1
        stop, reason = stop_criterion(config.t_at(k), k, x_prev, x, grad_norm, config)
        if stop:
            break

    try:
        f = float(problem.objective.value(x))
        eq_v, in_v, comp = residuals(problem, x)
    except DomainError:
        f, eq_v, in_v, comp = np.nan, np.inf, np.inf, np.inf
    converged = inner_ok and comp <= config.comp_tol and max(eq_v, in_v) <= FEAS_TOL
    return SolveResult(problem.name, scheme, x, f, mult, converged, it_int, k, reason, trace)


__all__ = [
    "DriverConfig",
    "OuterRecord",
    "SolveResult",
    "StopReason",
    "outer_solve",
    "recover_multipliers",
    "stop_criterion",
]
