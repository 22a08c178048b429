"""Built-in test problems and the branch-enumeration oracle."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .expr import DomainError
from .model import MpccProblem, load_problem, nlp_shell, residuals
from .regularize import Scheme
from .sqp import SqpConfig, SqpStatus, sqp_solve

MAX_BRANCH_PAIRS = 12


@dataclass(frozen=True)
class SuiteProblem:
    problem: MpccProblem
    oracle_f: float
    oracle_x: tuple[float, ...]
    derivation: str
    # schemes expected to reach the oracle value; the rest may or may not
    expected: frozenset[Scheme] = frozenset({Scheme.REG, Scheme.REG_ONE})

    @property
    def name(self) -> str:
        return self.problem.name


# Known minima: value, point and how they were obtained.  Branch minima are
# computed by hand from the branch KKT systems.
_ORACLES: dict[str, tuple[float, tuple[float, ...], str]] = {
    "p1": (0.0, (0, 0), "objective nonnegative on the feasible set, zero at the origin"),
    "p2": (1.0, (0, 1), "each branch is a 1-D quadratic with minimum 1"),
    "p3": (0.5, (1.5, 0, 0.5), "x1=0 branch: min (x0-2)^2+x2^2 on x0-x2=1 gives 0.5; x2=0 branch gives 1"),
    "p4": (1.0, (0, 2), "x1=0 branch gives 1, x2=0 branch gives 4"),
    "bilevel1": (0.5, (1.5, 1.5, 0), "lam=0 branch forces y=x, min (x-1)^2+(x-2)^2 at 1.5; y=0 branch gives 5"),
    "bilevel2": (0.7275, (1.25, 1, 0, 0, 0.5), "follower solution y=min(x,1); y=1 piece minimized at x=1.25"),
    "chain5": (5.45, (0, 1.4, 0, 1.5, 0, 1.6, 0, 1.7, 0, 1.8), "all a_j=0; sum constraint shifts each b_j up by 0.3"),
    "control3": (3.0, (2, 0, 2, 2, 0, 0, 3), "zero the cheaper member of each pair; z=a2=2 on the coupling row"),
    "degen2": (0.0, (1, 0, 0, 0, 0), "linear terms in the pair variables, all pairs at the origin"),
    "funcpair": (1 / 3, (5 / 3, 1, 2 / 3, 0), "H=0 branch: y=1, minimize (x-2)^2+(x-1)^2/2 at x=5/3"),
    "ineq2": (2.5, (0, 1.5, 2.5, 0), "a1=b2=0 branch, projection of (2,3) onto b1+a2<=4 costs 0.5"),
    "mixed4": (6.0, (0.5, -1.25, 1.75, 0, 1, 0, 1.25, 0, 0, 1.25), "b1=b2=b3=a4=0 branch QP solved from its KKT system"),
    "nonquad": (1.1163037278373387, (0.6033711017092702, 0, 1.8966288982907298), "a=0 branch; active z+b=2.5 leaves a 1-D convex root in z"),
    "upper1": (2.0, (2, 0), "b=0 branch with a at its upper bound 2; a=0 branch gives 9"),
}

# equality schemes stall on these degenerate solutions (x1j = x2j = 0)
_EQUALITY_SCHEME_FAILURES = {"p1", "degen2"}


def problem_files() -> list[tuple[str, str]]:
    """(file name, text) of every shipped problem file, sorted by name."""
    data = resources.files("mpccreg") / "data"
    out = [(p.name, p.read_text()) for p in data.iterdir() if p.name.endswith(".mpcc")]
    return sorted(out)


def builtin_suite() -> list[SuiteProblem]:
    suite = []
    for fname, text in problem_files():
        problem = load_problem(text)
        f, x, how = _ORACLES[problem.name]
        expected = frozenset(Scheme) if problem.name not in _EQUALITY_SCHEME_FAILURES else frozenset({Scheme.REG, Scheme.REG_ONE})
        suite.append(SuiteProblem(problem, f, tuple(float(v) for v in x), how, expected))
    return suite


def get_problem(name: str) -> SuiteProblem:
    for sp in builtin_suite():
        if sp.name == name:
            return sp
    raise KeyError(f"no suite problem named {name!r}")


@dataclass
class BranchResult:
    mask: tuple[int, ...]        # 0: first member fixed at zero, 1: second
    status: SqpStatus | None
    f: float
    x: np.ndarray | None

    @property
    def converged(self) -> bool:
        return self.status is SqpStatus.CONVERGED


@dataclass
class OracleResult:
    best_f: float
    best_x: np.ndarray | None
    branches: list[BranchResult] = field(default_factory=list)

    @property
    def available(self) -> bool:
        return self.best_x is not None


def branch_nlp(problem: MpccProblem, mask):
    """NLP of one branch: the chosen member of each pair is fixed at zero."""
    up = problem.upper.copy()
    for j, side in enumerate(mask):
        up[(problem.first if side == 0 else problem.second)[j]] = 0.0
    x0 = np.minimum(problem.x0, up)
    return nlp_shell(problem, tag=("branch", tuple(mask)), upper=up, x0=x0)


def enumerate_branches(problem: MpccProblem, config: SqpConfig = SqpConfig()) -> OracleResult:
    """Solve all ``2**q`` branch NLPs and keep the best converged one.

    Ties go to the lowest branch index.  If no branch converges the result has
    ``best_x = None`` and ``best_f = inf``.
    """
    if problem.q > MAX_BRANCH_PAIRS:
        raise ValueError(f"branch enumeration is limited to {MAX_BRANCH_PAIRS} pairs")
    results = []
    best = None
    for mask in itertools.product((0, 1), repeat=problem.q):
        nlp = branch_nlp(problem, mask)
        try:
            res = sqp_solve(nlp, config=config)
        except DomainError:
            results.append(BranchResult(mask, None, np.inf, None))
            continue
        br = BranchResult(mask, res.status, res.f, res.x)
        results.append(br)
        if br.converged and (best is None or br.f < best.f):
            best = br
    if best is None:
        return OracleResult(np.inf, None, results)
    return OracleResult(best.f, best.x, results)


def is_mpcc_feasible(problem: MpccProblem, x, tol: float = 1e-8) -> bool:
    return max(residuals(problem, x)) <= tol
