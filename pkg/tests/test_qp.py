import numpy as np
import pytest

from pfguide import Infeasible, QPProblem, solve_qp
from qp_oracle import qp_oracle, random_feasible_qp


class TestShapes:
    def test_bad_bounds_rejected(self):
        with pytest.raises(ValueError):
            QPProblem(np.eye(2), np.zeros(2), np.eye(2),
                      np.array([1.0, 0.0]), np.array([0.0, 1.0]))

    def test_bad_shapes_rejected(self):
        with pytest.raises(ValueError):
            QPProblem(np.eye(3), np.zeros(2), np.zeros((0, 2)),
                      np.zeros(0), np.zeros(0))


class TestBasics:
    def test_unconstrained_stationarity(self):
        sol = solve_qp(QPProblem(np.eye(4), -np.ones(4),
                                 np.zeros((0, 4)), np.zeros(0), np.zeros(0)))
        assert sol.x == pytest.approx(np.ones(4), abs=1e-12)
        assert sol.converged

    def test_separable_projection_on_upper_bounds(self):
        n = 4
        sol = solve_qp(QPProblem(np.eye(n), -np.ones(n), np.eye(n),
                                 np.full(n, -np.inf), np.full(n, 0.5)))
        assert sol.x == pytest.approx(np.full(n, 0.5), abs=1e-12)

    def test_equality_rows(self):
        # lb == ub encodes an equality; minimum of ||x||^2 on x0 + x1 = 1
        A = np.array([[1.0, 1.0]])
        sol = solve_qp(QPProblem(np.eye(2), np.zeros(2), A,
                                 np.array([1.0]), np.array([1.0])))
        assert sol.x == pytest.approx([0.5, 0.5], abs=1e-10)

    def test_infeasible_detected(self):
        A = np.array([[1.0, 0.0], [1.0, 0.0]])
        with pytest.raises(Infeasible):
            solve_qp(QPProblem(np.eye(2), np.zeros(2), A,
                               np.array([1.0, -np.inf]),
                               np.array([np.inf, -1.0])))

    def test_deterministic(self):
        rng = np.random.default_rng(9)
        H, g, A, lb, ub = random_feasible_qp(rng)
        a = solve_qp(QPProblem(H, g, A, lb, ub))
        b = solve_qp(QPProblem(H, g, A, lb, ub))
        assert np.array_equal(a.x, b.x)
        assert a.active_set == b.active_set
        assert a.iterations == b.iterations


class TestAgainstOracle:
    def test_random_problems_match_enumeration(self):
        rng = np.random.default_rng(2024)
        for _ in range(80):
            H, g, A, lb, ub = random_feasible_qp(rng)
            J_ref, x_ref = qp_oracle(H, g, A, lb, ub)
            sol = solve_qp(QPProblem(H, g, A, lb, ub))
            J = 0.5 * sol.x @ H @ sol.x + g @ sol.x
            assert np.max(np.abs(sol.x - x_ref)) <= 1e-7
            assert abs(J - J_ref) <= 1e-8


class TestInvariantsAndWarmStart:
    def test_primal_feasibility_on_exit(self):
        rng = np.random.default_rng(5)
        for _ in range(60):
            H, g, A, lb, ub = random_feasible_qp(rng)
            sol = solve_qp(QPProblem(H, g, A, lb, ub))
            r = A @ sol.x
            assert np.all(r <= ub + 1e-8) and np.all(r >= lb - 1e-8)
            for (row, side), lam in sol.multipliers.items():
                if side != 0:
                    assert lam >= -1e-8  # dual feasibility
                    slack = (ub[row] - r[row]) if side > 0 else (r[row] - lb[row])
                    assert abs(lam * slack) <= 1e-6 * max(1.0, np.abs(g).max())

    def test_monotone_objective_trace(self):
        rng = np.random.default_rng(7)
        for _ in range(25):
            H, g, A, lb, ub = random_feasible_qp(rng)
            trace = []
            solve_qp(QPProblem(H, g, A, lb, ub), objective_trace=trace)
            for a, b in zip(trace, trace[1:]):
                assert b <= a + 1e-9 * (1.0 + abs(a))

    def test_warm_start_from_solution_is_immediate(self):
        rng = np.random.default_rng(11)
        for _ in range(25):
            H, g, A, lb, ub = random_feasible_qp(rng)
            cold = solve_qp(QPProblem(H, g, A, lb, ub))
            hot = solve_qp(QPProblem(H, g, A, lb, ub), warm=cold)
            assert hot.iterations <= 2
            assert np.max(np.abs(hot.x - cold.x)) <= 1e-9

    def test_regularization_handles_semidefinite_hessian(self):
        # a zero-curvature direction must be shored up by the 1e-10 ridge
        H = np.diag([1.0, 0.0])
        A = np.eye(2)
        sol = solve_qp(QPProblem(H, np.array([-1.0, -1e-8]), A,
                                 -np.ones(2), np.ones(2)))
        assert sol.x[0] == pytest.approx(1.0, abs=1e-6)
        assert sol.x[1] == pytest.approx(1.0, abs=1e-5)  # pushed to its bound
