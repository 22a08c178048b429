"""Regularized NLP formulations of an MPCC.

Each scheme keeps the side constraints and ``x1, x2 >= 0`` and replaces
complementarity by product constraints controlled by ``t``:

    REG         t - x1j*x2j >= 0     for every pair j
    REG_ONE     t - sum_k x1k*x2k >= 0
    REG_EQ      x1j*x2j - t = 0      for every pair j
    REG_EQ_ONE  sum_k x1k*x2k - t = 0
"""

from __future__ import annotations

import enum

from . import expr as ex
from .model import MpccProblem, NlpProblem, nlp_shell


class Scheme(enum.Enum):
    REG = "reg"
    REG_ONE = "reg-one"
    REG_EQ = "reg-eq"
    REG_EQ_ONE = "reg-eq-one"

    @classmethod
    def parse(cls, text: str) -> "Scheme":
        key = text.strip().lower().replace("_", "-")
        for s in cls:
            if s.value == key:
                return s
        raise ValueError(f"unknown scheme {text!r}; choose from {', '.join(s.value for s in cls)}")

    @property
    def is_equality(self) -> bool:
        return self in (Scheme.REG_EQ, Scheme.REG_EQ_ONE)

    @property
    def aggregated(self) -> bool:
        """One constraint for all pairs instead of one per pair."""
        return self in (Scheme.REG_ONE, Scheme.REG_EQ_ONE)

    @property
    def label(self) -> str:
        return {"reg": "Reg", "reg-one": "Reg-one", "reg-eq": "Reg-eq", "reg-eq-one": "Reg-eq-one"}[self.value]


def _product(problem: MpccProblem, j: int) -> ex.Expression:
    i, k = problem.pairs[j]
    names = problem.names
    return ex.mul(ex.Var(i, names[i]), ex.Var(k, names[k]))


def _regularization_rows(problem: MpccProblem, scheme: Scheme, t: float) -> list[ex.Expression]:
    q = problem.q
    if q == 0:
        return []
    tc = ex.const(t)
    if scheme.aggregated:
        total = _product(problem, 0)
        for j in range(1, q):
            total = ex.add(total, _product(problem, j))
        products = [total]
    else:
        products = [_product(problem, j) for j in range(q)]
    if scheme.is_equality:
        return [ex.sub(prod, tc) for prod in products]
    return [ex.sub(tc, prod) for prod in products]


def build_regularized(problem: MpccProblem, scheme: Scheme, t: float) -> NlpProblem:
    """The regularized NLP of ``problem`` for ``scheme`` at parameter ``t``."""
    t = float(t)
    if t < 0.0:
        raise ValueError("regularization parameter t must be nonnegative")
    if problem.function_pairs:
        raise ValueError("problem has function-form pairs; apply introduce_slacks first")
    rows = _regularization_rows(problem, scheme, t)
    tag = (scheme.value, t)
    if scheme.is_equality:
        return nlp_shell(problem, extra_eq=rows, tag=tag)
    return nlp_shell(problem, extra_ineq=rows, tag=tag)


def build_equivalent_nlp(problem: MpccProblem) -> NlpProblem:
    """Complementarity as ``x1j*x2j <= 0``; identical to ``Reg(0)``."""
    return build_regularized(problem, Scheme.REG, 0.0)


def regularization_rows(nlp: NlpProblem) -> tuple[str, list[int]]:
    """Which row block ('eq' or 'ineq') holds the regularization rows, and their indices."""
    scheme = Scheme(nlp.tag[0])
    if scheme.is_equality:
        return "eq", list(range(nlp.n_side_eq, len(nlp.eq)))
    return "ineq", list(range(nlp.n_side_ineq, len(nlp.ineq)))
