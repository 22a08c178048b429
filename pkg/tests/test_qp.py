import numpy as np
import pytest

from mpccreg.qp import QpInstance, QpStatus, kkt_violation, max_violation, solve_phase1, solve_qp
from oracles import brute_force_qp, random_qp


def test_equality_example():
    inst = QpInstance(np.eye(2), [1.0, 0.0], [[1.0, 1.0]], [0.0])
    sol = solve_qp(inst)
    assert sol.status is QpStatus.OPTIMAL
    np.testing.assert_allclose(sol.d, [-0.5, 0.5], atol=1e-12)
    np.testing.assert_allclose(sol.lam_eq, [-0.5], atol=1e-12)


def test_unconstrained_zero_gradient():
    sol = solve_qp(QpInstance(np.eye(1), [0.0]))
    np.testing.assert_array_equal(sol.d, [0.0])


def test_single_inequality_example():
    sol = solve_qp(QpInstance(np.eye(1), [-1.0], A_in=[[1.0]], b_in=[2.0]))
    np.testing.assert_allclose(sol.d, [2.0], atol=1e-12)
    np.testing.assert_allclose(sol.lam_in, [1.0], atol=1e-12)
    assert sol.active == (0,)


def test_phase1_examples():
    r = solve_phase1(np.array([[1.0]]), np.array([1.0]), np.array([[1.0]]), np.array([0.0]), np.zeros(1))
    assert r.feasible and abs(r.x[0] - 1) <= 1e-9
    r = solve_phase1(np.array([[1.0]]), np.array([1.0]), np.array([[-1.0]]), np.array([0.0]), np.zeros(1))
    assert not r.feasible and r.status == "infeasible"
    start = np.array([0.3, -2.0])
    r = solve_phase1(np.zeros((0, 2)), np.zeros(0), np.zeros((0, 2)), np.zeros(0), start)
    np.testing.assert_array_equal(r.x, start)


def test_infeasible_qp_reported():
    sol = solve_qp(QpInstance(np.eye(1), [0.0], [[1.0]], [1.0], [[-1.0]], [0.0]))
    assert sol.status is QpStatus.INFEASIBLE


def test_asymmetric_hessian_rejected():
    with pytest.raises(ValueError):
        QpInstance(np.array([[1.0, 0.5], [0.0, 1.0]]), [0.0, 0.0])


def test_matches_enumeration_oracle():
    rng = np.random.default_rng(1)
    for _ in range(200):
        inst = random_qp(rng)
        sol = solve_qp(inst)
        d_ref, f_ref = brute_force_qp(inst)
        assert sol.status is QpStatus.OPTIMAL
        assert np.max(np.abs(sol.d - d_ref)) <= 1e-7
        assert abs(inst.objective(sol.d) - f_ref) <= 1e-7 * (1 + abs(f_ref))


def test_solution_contract():
    rng = np.random.default_rng(2)
    for _ in range(100):
        inst = random_qp(rng)
        sol = solve_qp(inst)
        kkt = kkt_violation(inst, sol)
        assert kkt["stationarity"] <= 1e-8
        assert kkt["primal"] <= 1e-9
        assert kkt["complementarity"] <= 1e-9
        assert np.min(sol.lam_in, initial=0.0) >= -1e-12


def test_inactive_constraint_does_not_change_solution():
    rng = np.random.default_rng(3)
    for _ in range(50):
        n = int(rng.integers(1, 8))
        M = rng.normal(size=(n, n))
        H = M @ M.T + np.eye(n)
        g = rng.normal(size=n)
        free = solve_qp(QpInstance(H, g)).d
        a = rng.normal(size=n)
        b = a @ free - 1.0 - rng.exponential()
        sol = solve_qp(QpInstance(H, g, A_in=[a], b_in=[b]))
        assert np.max(np.abs(sol.d - free)) <= 1e-9


def test_deterministic_and_warm_start_consistent():
    rng = np.random.default_rng(4)
    for _ in range(30):
        inst = random_qp(rng)
        a, b = solve_qp(inst), solve_qp(inst)
        np.testing.assert_array_equal(a.d, b.d)
        warm = solve_qp(inst, warm_start=a.active)
        assert np.max(np.abs(warm.d - a.d)) <= 1e-8


def test_degenerate_vertex_terminates():
    # many redundant rows active at the optimum
    A = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [2.0, 1.0], [1.0, 2.0]])
    inst = QpInstance(np.eye(2), [1.0, 1.0], A_in=A, b_in=np.zeros(5))
    sol = solve_qp(inst)
    assert sol.status is QpStatus.OPTIMAL
    np.testing.assert_allclose(sol.d, [0.0, 0.0], atol=1e-12)
    assert max_violation(inst.A_eq, inst.b_eq, A, np.zeros(5), sol.d) <= 1e-12
