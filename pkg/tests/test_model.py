import numpy as np
import pytest

from mpccreg.expr import evaluate, parse_expression
from mpccreg.model import (
    Constraint,
    MpccProblem,
    ProblemError,
    Variable,
    dump_problem,
    introduce_slacks,
    load_problem,
    residuals,
    side_rows,
)

BARE = """
name: bare
vars:
  x1 0 inf 0
  x2 0 inf 0
objective: x1 + x2
pairs: x1 x2
"""


def test_bare_problem_counts():
    p = load_problem(BARE)
    assert (p.n, p.m, p.p, p.q) == (0, 0, 0, 1)


def test_equal_limits_make_an_equality(p3):
    assert (p3.n, p3.m, p3.p, p3.q) == (1, 0, 1, 1)
    assert p3.constraints[0].is_equality


def test_self_pairing_rejected():
    with pytest.raises(ProblemError, match="itself"):
        load_problem(BARE.replace("pairs: x1 x2", "pairs: x1 x1"))


def test_double_pairing_rejected():
    text = BARE.replace("  x2 0 inf 0", "  x2 0 inf 0\n  x3 0 inf 0") + "  x1 x3\n"
    with pytest.raises(ProblemError, match="more than one pair"):
        load_problem(text)


def test_paired_variable_needs_zero_lower_bound():
    with pytest.raises(ProblemError, match="lower bound 0"):
        load_problem(BARE.replace("x1 0 inf 0", "x1 -1 inf 0"))


@pytest.mark.parametrize(
    "bad, message",
    [
        ("objective: x1 + y", "unknown identifier"),
        ("objective: x1 +", "unexpected end"),
        ("pairs: x1 z", "unknown variable"),
    ],
)
def test_file_errors(bad, message):
    head = bad.split(":")[0]
    lines = [l for l in BARE.splitlines() if not l.startswith(head)]
    with pytest.raises(ProblemError, match=message):
        load_problem("\n".join(lines) + "\n" + bad + "\n")


def test_dims_mismatch_is_reported():
    with pytest.raises(ProblemError, match="count mismatch"):
        load_problem(BARE + "dims: 1 0 0 1\n")
    assert load_problem(BARE + "dims: 0 0 0 1\n").q == 1


def test_initial_point_is_clipped():
    p = load_problem(BARE.replace("x1 0 inf 0", "x1 0 2 5").replace("x2 0 inf 0", "x2 0 inf -3"))
    np.testing.assert_array_equal(p.x0, [2.0, 0.0])


def test_load_is_deterministic():
    assert load_problem(BARE) == load_problem(BARE)


def test_dump_round_trip(suite):
    for sp in suite:
        again = load_problem(dump_problem(sp.problem))
        assert again.names == sp.problem.names
        assert again.pairs == sp.problem.pairs
        x = np.linspace(0.1, 0.9, sp.problem.nvars)
        assert evaluate(again.objective, x) == evaluate(sp.problem.objective, x)


def test_two_sided_inequality_splits():
    p = load_problem(BARE + "constraints:\n  -1 <= x1 - x2 <= 2\n  -inf <= x1 <= 4\n")
    rows = side_rows(p)
    assert len(rows.eq) == 0
    assert len(rows.ineq) == 3
    vals = [evaluate(r, [1.0, 0.5]) for r in rows.ineq]
    assert vals == [1.5, 1.5, 3.0]


# --- residuals -----------------------------------------------------------------

def test_residual_examples():
    p = load_problem(BARE)
    assert residuals(p, [0, 0]) == (0.0, 0.0, 0.0)
    assert residuals(p, [1, 1])[2] == 1.0
    assert residuals(p, [0.5, 1e-9])[2] == 1e-9


def test_bound_violation_counts_as_inequality(p3):
    eq_v, in_v, _ = residuals(p3, [1.0, -0.5, 0.0])
    assert in_v == 0.5
    assert eq_v == 0.5


# --- slacks ----------------------------------------------------------------------

SLACK = """
name: slack
vars:
  x0 -inf inf 2
objective: x0^2
complements:
  x0 - 1 perp x0 + 1
"""


def test_slack_structure():
    p = load_problem(SLACK)
    assert p.nvars == 3
    assert (p.p, p.q) == (2, 1)
    assert p.names[1:] == ["s1_0", "s2_0"]
    assert not p.function_pairs


def test_slacks_identity_without_function_pairs(p3):
    assert introduce_slacks(p3) is p3


def test_same_function_on_both_sides_is_valid():
    p = load_problem(SLACK.replace("x0 - 1 perp x0 + 1", "x0 perp x0"))
    assert p.q == 1 and p.nvars == 3


def test_slack_names_avoid_clashes():
    text = SLACK.replace("x0 -inf inf 2", "x0 -inf inf 2\n  s1_0 -inf inf 0")
    p = load_problem(text)
    assert "s1_0_" in p.names


def test_slacks_preserve_feasible_set(rng):
    names = ["x0", "x1"]
    g = parse_expression("x0 - x1", names)
    h = parse_expression("x0 + x1 - 1", names)
    base = MpccProblem("f", (Variable("x0"), Variable("x1")), parse_expression("x0", names), function_pairs=((g, h),))
    slack = introduce_slacks(base)

    def function_feasible(x):
        gv, hv = evaluate(g, x), evaluate(h, x)
        return gv >= -1e-12 and hv >= -1e-12 and min(gv, hv) <= 1e-12

    hits = 0
    for _ in range(500):
        x = rng.uniform(-1, 2, 2)
        # move onto one of the two branches half of the time
        if rng.random() < 0.5:
            x[1] = x[0] if rng.random() < 0.5 else 1 - x[0]
        lifted = np.concatenate([x, [evaluate(g, x), evaluate(h, x)]])
        ok = max(residuals(slack, lifted)) <= 1e-12
        assert ok == function_feasible(x)
        hits += ok
        # converse: a slack-feasible point projects to a function-feasible one
        if ok:
            assert function_feasible(lifted[:2])
    assert hits > 50


def test_constraint_limits_validated():
    names = ["x"]
    with pytest.raises(ProblemError):
        MpccProblem("c", (Variable("x"),), parse_expression("x", names), (Constraint(parse_expression("x", names), 2, 1),))
