"""MPCC problem instances, the problem-file reader and the regularized NLP shell.

Problem file format (one problem per file, ``#`` starts a comment)::

    name: example
    vars:
      x0  -inf  inf  0.5        # name lower upper initial
      x1  0     inf  1
      x2  0     inf  0
    objective:
      (x0 - 2)^2 + x1^2 + x2^2
    constraints:
      1 <= x0 + x1 - x2 <= 1    # equal limits: equality constraint
      -inf <= x0 <= 3
    pairs:
      x1 x2                     # 0 <= x1 _|_ x2 >= 0
    complements:
      x0 - 1 perp x0 + 1        # 0 <= G(x) _|_ H(x) >= 0, via slacks
    dims: 1 1 1 1               # optional check of n m p q

Section headers may carry their content on the same line (``objective: x1+x2``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from . import expr as ex
from .expr import Expression, ParseError

INF = math.inf


class ProblemError(ValueError):
    """Invalid problem file or inconsistent problem structure."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


@dataclass(frozen=True)
class Variable:
    name: str
    lower: float = -INF
    upper: float = INF
    init: float = 0.0


@dataclass(frozen=True)
class Constraint:
    """``lower <= expr <= upper``; equal limits make it an equality."""

    expr: Expression
    lower: float = 0.0
    upper: float = INF

    @property
    def is_equality(self) -> bool:
        return self.lower == self.upper


@dataclass(frozen=True)
class MpccProblem:
    """An MPCC with complementarity given as variable index pairs.

    ``pairs[j] = (i, k)`` means ``0 <= x_i _|_ x_k >= 0``.  ``function_pairs``
    holds ``0 <= G(x) _|_ H(x) >= 0`` terms not yet converted by
    :func:`introduce_slacks`.
    """

    name: str
    variables: tuple[Variable, ...]
    objective: Expression
    constraints: tuple[Constraint, ...] = ()
    pairs: tuple[tuple[int, int], ...] = ()
    function_pairs: tuple[tuple[Expression, Expression], ...] = ()

    def __post_init__(self):
        nv = len(self.variables)
        names = [v.name for v in self.variables]
        if len(set(names)) != nv:
            raise ProblemError("duplicate variable names")
        for v in self.variables:
            if v.name in ex.FUNCTIONS:
                raise ProblemError(f"variable name {v.name!r} is reserved")
            if v.lower > v.upper:
                raise ProblemError(f"variable {v.name}: lower bound exceeds upper bound")
        exprs = [self.objective] + [c.expr for c in self.constraints]
        exprs += [e for pair in self.function_pairs for e in pair]
        for e in exprs:
            if any(i >= nv or i < 0 for i in e.variables()):
                raise ProblemError("expression references an undeclared variable")
        seen: set[int] = set()
        for i, k in self.pairs:
            if not (0 <= i < nv and 0 <= k < nv):
                raise ProblemError("pair index out of range")
            if i == k:
                raise ProblemError(f"variable {names[i]} paired with itself")
            for idx in (i, k):
                if idx in seen:
                    raise ProblemError(f"variable {names[idx]} appears in more than one pair")
                seen.add(idx)
                if self.variables[idx].lower != 0.0:
                    raise ProblemError(f"paired variable {names[idx]} must have lower bound 0")
        for c in self.constraints:
            if c.lower > c.upper:
                raise ProblemError("constraint lower limit exceeds upper limit")

    # dimensions
    @property
    def nvars(self) -> int:
        return len(self.variables)

    @property
    def q(self) -> int:
        return len(self.pairs)

    @property
    def n(self) -> int:
        return self.nvars - 2 * self.q

    @property
    def p(self) -> int:
        return sum(c.is_equality for c in self.constraints)

    @property
    def m(self) -> int:
        return len(self.constraints) - self.p

    @property
    def names(self) -> list[str]:
        return [v.name for v in self.variables]

    @property
    def lower(self) -> np.ndarray:
        return np.array([v.lower for v in self.variables], dtype=float)

    @property
    def upper(self) -> np.ndarray:
        return np.array([v.upper for v in self.variables], dtype=float)

    @property
    def x0(self) -> np.ndarray:
        """Initial point clipped into the simple bounds."""
        x = np.array([v.init for v in self.variables], dtype=float)
        return np.clip(x, self.lower, self.upper)

    @property
    def first(self) -> list[int]:
        return [i for i, _ in self.pairs]

    @property
    def second(self) -> list[int]:
        return [k for _, k in self.pairs]


@dataclass(frozen=True)
class SideRows:
    """Side constraints of an MPCC in residual form.

    ``eq`` rows must vanish, ``ineq`` rows must be nonnegative.  Each ineq row
    comes from a general constraint limit; ``origin`` records
    ``(constraint index, +1 lower | -1 upper)``.
    """

    eq: tuple[Expression, ...]
    ineq: tuple[Expression, ...]
    eq_origin: tuple[int, ...]
    origin: tuple[tuple[int, int], ...]


def side_rows(problem: MpccProblem) -> SideRows:
    eq, ineq, eq_origin, origin = [], [], [], []
    for ci, c in enumerate(problem.constraints):
        if c.is_equality:
            eq.append(c.expr if c.lower == 0.0 else ex.sub(c.expr, ex.const(c.lower)))
            eq_origin.append(ci)
            continue
        if math.isfinite(c.lower):
            ineq.append(c.expr if c.lower == 0.0 else ex.sub(c.expr, ex.const(c.lower)))
            origin.append((ci, 1))
        if math.isfinite(c.upper):
            ineq.append(ex.sub(ex.const(c.upper), c.expr))
            origin.append((ci, -1))
    return SideRows(tuple(eq), tuple(ineq), tuple(eq_origin), tuple(origin))


@dataclass(frozen=True)
class NlpProblem:
    """A smooth NLP: ``min f`` s.t. ``eq(x) = 0``, ``ineq(x) >= 0``, bounds.

    The first ``n_side_eq``/``n_side_ineq`` rows come from the MPCC's side
    constraints; regularization rows (if any) follow in pair order.
    """

    names: tuple[str, ...]
    lower: tuple[float, ...]
    upper: tuple[float, ...]
    x0: tuple[float, ...]
    objective: Expression
    eq: tuple[Expression, ...] = ()
    ineq: tuple[Expression, ...] = ()
    tag: tuple = ()
    n_side_eq: int = 0
    n_side_ineq: int = 0

    def __post_init__(self):
        nv = len(self.names)
        if not (len(self.lower) == len(self.upper) == len(self.x0) == nv):
            raise ProblemError("bound/initial vectors do not match the variable count")
        for e in (self.objective, *self.eq, *self.ineq):
            if any(i >= nv for i in e.variables()):
                raise ProblemError("constraint references an undeclared variable")

    @property
    def nvars(self) -> int:
        return len(self.names)


def nlp_shell(problem: MpccProblem, extra_eq=(), extra_ineq=(), tag=(), lower=None, upper=None, x0=None) -> NlpProblem:
    """NLP with the MPCC's objective, side rows and bounds, plus extra rows."""
    rows = side_rows(problem)
    lo = problem.lower if lower is None else lower
    up = problem.upper if upper is None else upper
    start = problem.x0 if x0 is None else x0
    return NlpProblem(
        names=tuple(problem.names),
        lower=tuple(float(v) for v in lo),
        upper=tuple(float(v) for v in up),
        x0=tuple(float(v) for v in start),
        objective=problem.objective,
        eq=rows.eq + tuple(extra_eq),
        ineq=rows.ineq + tuple(extra_ineq),
        tag=tag,
        n_side_eq=len(rows.eq),
        n_side_ineq=len(rows.ineq),
    )


# --- slacks ------------------------------------------------------------------

def introduce_slacks(problem: MpccProblem) -> MpccProblem:
    """Rewrite ``0 <= G_k(x) _|_ H_k(x) >= 0`` terms as slack variable pairs.

    Adds ``s1_k, s2_k >= 0``, equalities ``G_k - s1_k = 0`` and
    ``H_k - s2_k = 0``, and the pair ``(s1_k, s2_k)``.
    """
    if not problem.function_pairs:
        return problem
    variables = list(problem.variables)
    constraints = list(problem.constraints)
    pairs = list(problem.pairs)
    taken = {v.name for v in variables}
    x0 = problem.x0

    def fresh(base: str) -> str:
        name = base
        while name in taken:
            name += "_"
        taken.add(name)
        return name

    for k, (g, h) in enumerate(problem.function_pairs):
        ids = []
        for label, fun in (("s1", g), ("s2", h)):
            try:
                init = max(fun.value(x0), 0.0)
            except ex.DomainError:
                init = 0.0
            name = fresh(f"{label}_{k}")
            idx = len(variables)
            variables.append(Variable(name, 0.0, INF, init))
            constraints.append(Constraint(ex.sub(fun, ex.Var(idx, name)), 0.0, 0.0))
            ids.append(idx)
        pairs.append((ids[0], ids[1]))
    return MpccProblem(problem.name, tuple(variables), problem.objective, tuple(constraints), tuple(pairs))


# --- residuals ---------------------------------------------------------------

def residuals(problem: MpccProblem, x) -> tuple[float, float, float]:
    """Max equality violation, max inequality (incl. bound) violation, max complementarity residual."""
    x = np.asarray(x, dtype=float)
    if x.shape != (problem.nvars,):
        raise ValueError(f"point has length {x.size}, expected {problem.nvars}")
    eq_v = 0.0
    in_v = 0.0
    for c in problem.constraints:
        val = c.expr.value(x)
        if c.is_equality:
            eq_v = max(eq_v, abs(val - c.lower))
        else:
            in_v = max(in_v, c.lower - val, val - c.upper)
    lo, up = problem.lower, problem.upper
    if x.size:
        in_v = max(in_v, float(np.max(lo - x)), float(np.max(x - up)))
    comp = 0.0
    for i, k in problem.pairs:
        comp = max(comp, min(max(x[i], 0.0), max(x[k], 0.0)))
    return eq_v, max(in_v, 0.0), comp


# --- file format ---------------------------------------------------------------

_SECTIONS = ("name", "vars", "objective", "constraints", "pairs", "complements", "dims")


def _number(tok: str, line: int) -> float:
    t = tok.lower()
    if t in ("inf", "+inf", "infinity"):
        return INF
    if t in ("-inf", "-infinity"):
        return -INF
    try:
        return float(tok)
    except ValueError:
        raise ProblemError(f"expected a number, got {tok!r}", line) from None


def _parse(text: str, names: Sequence[str], line: int) -> Expression:
    try:
        return ex.parse_expression(text, names)
    except ParseError as exc:
        raise ProblemError(f"{exc} in {text.strip()!r}", line) from None


def load_problem(file_text: str, name: str | None = None) -> MpccProblem:
    """Read a problem file; function-form pairs are converted via slacks."""
    sections: dict[str, list[tuple[int, str]]] = {s: [] for s in _SECTIONS}
    current = None
    for lineno, raw in enumerate(file_text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        head, sep, rest = line.partition(":")
        key = head.strip().lower()
        if sep and key in _SECTIONS:
            current = key
            if rest.strip():
                sections[key].append((lineno, rest.strip()))
            continue
        if current is None:
            raise ProblemError(f"content outside a section: {line!r}", lineno)
        sections[current].append((lineno, line))

    if len(sections["name"]) > 1:
        raise ProblemError("more than one name", sections["name"][1][0])
    pname = sections["name"][0][1] if sections["name"] else (name or "unnamed")

    variables = []
    for lineno, line in sections["vars"]:
        parts = line.split()
        if len(parts) != 4:
            raise ProblemError("variable lines need: name lower upper initial", lineno)
        vname = parts[0]
        if not vname.isidentifier():
            raise ProblemError(f"bad variable name {vname!r}", lineno)
        lo, up, init = (_number(t, lineno) for t in parts[1:])
        if not math.isfinite(init):
            raise ProblemError("initial value must be finite", lineno)
        variables.append(Variable(vname, lo, up, init))
    if not variables:
        raise ProblemError("no variables declared")
    names = [v.name for v in variables]
    if len(set(names)) != len(names):
        raise ProblemError("duplicate variable names")

    if len(sections["objective"]) != 1:
        raise ProblemError("exactly one objective expression is required")
    lineno, text = sections["objective"][0]
    objective = _parse(text, names, lineno)

    constraints = []
    for lineno, line in sections["constraints"]:
        parts = line.split("<=")
        if len(parts) != 3:
            raise ProblemError("constraint lines need the form: lower <= expr <= upper", lineno)
        lo = _number(parts[0].strip(), lineno)
        up = _number(parts[2].strip(), lineno)
        if lo > up:
            raise ProblemError("constraint lower limit exceeds upper limit", lineno)
        constraints.append(Constraint(_parse(parts[1], names, lineno), lo, up))

    index = {n: i for i, n in enumerate(names)}
    pairs = []
    for lineno, line in sections["pairs"]:
        parts = line.split()
        if len(parts) != 2:
            raise ProblemError("pair lines need two variable names", lineno)
        for p in parts:
            if p not in index:
                raise ProblemError(f"unknown variable {p!r} in pair", lineno)
        pairs.append((index[parts[0]], index[parts[1]]))

    fpairs = []
    for lineno, line in sections["complements"]:
        parts = line.split(" perp ")
        if len(parts) != 2:
            raise ProblemError("complement lines need the form: G perp H", lineno)
        fpairs.append((_parse(parts[0], names, lineno), _parse(parts[1], names, lineno)))

    problem = MpccProblem(pname, tuple(variables), objective, tuple(constraints), tuple(pairs), tuple(fpairs))
    problem = introduce_slacks(problem)

    if sections["dims"]:
        lineno, line = sections["dims"][0]
        try:
            dims = tuple(int(t) for t in line.split())
        except ValueError:
            raise ProblemError("dims needs four integers n m p q", lineno) from None
        actual = (problem.n, problem.m, problem.p, problem.q)
        if dims != actual:
            raise ProblemError(f"count mismatch: declared n m p q = {dims}, found {actual}", lineno)
    return problem


def dump_problem(problem: MpccProblem) -> str:
    """Write a problem (in variable-pair form) in the file format."""
    if problem.function_pairs:
        problem = introduce_slacks(problem)

    def num(v: float) -> str:
        return "inf" if v == INF else "-inf" if v == -INF else repr(float(v))

    lines = [f"name: {problem.name}", "vars:"]
    for v in problem.variables:
        lines.append(f"  {v.name} {num(v.lower)} {num(v.upper)} {num(v.init)}")
    lines += ["objective:", f"  {problem.objective.to_text()}"]
    if problem.constraints:
        lines.append("constraints:")
        for c in problem.constraints:
            lines.append(f"  {num(c.lower)} <= {c.expr.to_text()} <= {num(c.upper)}")
    if problem.pairs:
        lines.append("pairs:")
        for i, k in problem.pairs:
            lines.append(f"  {problem.variables[i].name} {problem.variables[k].name}")
    return "\n".join(lines) + "\n"


def with_start(problem: MpccProblem, x0) -> MpccProblem:
    """Copy of ``problem`` with a different initial point."""
    vs = tuple(replace(v, init=float(val)) for v, val in zip(problem.variables, x0))
    return replace(problem, variables=vs)


__all__ = [
    "Constraint",
    "MpccProblem",
    "NlpProblem",
    "ProblemError",
    "SideRows",
    "Variable",
    "dump_problem",
    "introduce_slacks",
    "load_problem",
    "nlp_shell",
    "residuals",
    "side_rows",
    "with_start",
]
