import numpy as np
import pytest

from mpccreg.model import load_problem, residuals
from mpccreg.regularize import Scheme, build_equivalent_nlp, build_regularized, regularization_rows
from oracles import nlp_feasible, sample_points

Q3 = """
name: q3
vars:
  z -inf inf 0
  a1 0 inf 1
  b1 0 inf 1
  a2 0 inf 1
  b2 0 inf 1
  a3 0 inf 1
  b3 0 inf 1
objective: z^2
constraints:
  0 <= z + a1 <= inf
pairs:
  a1 b1
  a2 b2
  a3 b3
"""


@pytest.fixture
def q3():
    return load_problem(Q3)


@pytest.mark.parametrize(
    "scheme, n_eq, n_ineq",
    [(Scheme.REG, 0, 4), (Scheme.REG_ONE, 0, 2), (Scheme.REG_EQ, 3, 1), (Scheme.REG_EQ_ONE, 1, 1)],
)
def test_row_counts(q3, scheme, n_eq, n_ineq):
    nlp = build_regularized(q3, scheme, 0.5)
    assert (len(nlp.eq), len(nlp.ineq)) == (n_eq, n_ineq)
    kind, idx = regularization_rows(nlp)
    assert kind == ("eq" if scheme.is_equality else "ineq")
    assert len(idx) == (1 if scheme.aggregated else 3)


def test_row_values(q3):
    x = np.array([0.0, 1.0, 2.0, 0.5, 0.5, 3.0, 0.0])
    reg = build_regularized(q3, Scheme.REG, 0.5)
    assert [e.value(x) for e in reg.ineq[1:]] == [0.5 - 2.0, 0.5 - 0.25, 0.5]
    one = build_regularized(q3, Scheme.REG_ONE, 0.5)
    assert one.ineq[1].value(x) == 0.5 - 2.25
    eq = build_regularized(q3, Scheme.REG_EQ, 0.5)
    assert [e.value(x) for e in eq.eq] == [1.5, -0.25, -0.5]
    eq1 = build_regularized(q3, Scheme.REG_EQ_ONE, 0.5)
    assert eq1.eq[0].value(x) == 2.25 - 0.5


def test_reg_zero_is_complementarity(p1):
    nlp = build_regularized(p1, Scheme.REG, 0.0)
    assert nlp_feasible(nlp, [0.0, 0.0])
    assert not nlp_feasible(nlp, [1.0, 1.0])


def test_equivalent_nlp(p1):
    nlp = build_equivalent_nlp(p1)
    assert nlp == build_regularized(p1, Scheme.REG, 0.0)
    assert len(nlp.ineq) == 1 and nlp.lower == (0.0, 0.0)
    x = [0.0, 5.0]
    assert nlp.ineq[0].value(x) == 0.0 and nlp_feasible(nlp, x)


def test_tag_identifies_scheme_and_t(p1):
    tags = {build_regularized(p1, s, t).tag for s in Scheme for t in (0.0, 0.1, 1.0)}
    assert len(tags) == 12


def test_negative_t_rejected(p1):
    with pytest.raises(ValueError):
        build_regularized(p1, Scheme.REG, -1e-3)


def test_scheme_parse():
    assert Scheme.parse("Reg_Eq_One") is Scheme.REG_EQ_ONE
    with pytest.raises(ValueError):
        Scheme.parse("penalty")


def test_nesting_on_suite(suite):
    rng = np.random.default_rng(11)
    for sp in suite:
        pts = sample_points(sp.problem, rng, 1000)
        for scheme in (Scheme.REG, Scheme.REG_ONE):
            for t, t2 in ((0.0, 1e-3), (1e-3, 0.1), (0.1, 1.0)):
                small = build_regularized(sp.problem, scheme, t)
                big = build_regularized(sp.problem, scheme, t2)
                inside = 0
                for x in pts:
                    if nlp_feasible(small, x):
                        assert nlp_feasible(big, x)
                    if nlp_feasible(small, x, rows="regularization"):
                        inside += 1
                        assert nlp_feasible(big, x, rows="regularization")
                assert inside > 0


def test_reg_implies_reg_one_at_q_times_t(suite):
    rng = np.random.default_rng(12)
    for sp in suite:
        q = sp.problem.q
        for x in sample_points(sp.problem, rng, 300):
            for t in (1e-4, 0.1):
                if nlp_feasible(build_regularized(sp.problem, Scheme.REG, t), x):
                    assert nlp_feasible(build_regularized(sp.problem, Scheme.REG_ONE, q * t), x)


def test_reg_zero_matches_mpcc_feasibility(suite):
    rng = np.random.default_rng(13)
    for sp in suite:
        nlp = build_regularized(sp.problem, Scheme.REG, 0.0)
        for x in sample_points(sp.problem, rng, 300):
            assert nlp_feasible(nlp, x) == (max(residuals(sp.problem, x)) == 0.0)


def test_reg_eq_excludes_zero_members(q3, rng):
    nlp = build_regularized(q3, Scheme.REG_EQ, 0.01)
    for _ in range(200):
        x = rng.uniform(0, 1, 7)
        x[1 + 2 * int(rng.integers(3)) + int(rng.integers(2))] = 0.0
        assert not nlp_feasible(nlp, x)
