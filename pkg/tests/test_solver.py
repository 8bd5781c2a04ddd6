"""Tests for branch and bound, outer-approximation cuts, the brute-force
oracle, and the fallback policy."""

import numpy as np
import pytest

from hybridmpc.problem import MiProblem, MiProblemBuilder, QuadConstraint
from hybridmpc.solver import (SolveOptions, branch_and_bound, brute_force_mi,
                              oa_cut, solve_miqcp, solve_with_fallback)


def random_milp(seed: int, n_cont: int = 4, n_bin: int = 6,
                m_rows: int = 6) -> MiProblem:
    rng = np.random.default_rng(seed)
    b = MiProblemBuilder()
    cont = [b.add_var(-3.0, 3.0, name=f"x{i}") for i in range(n_cont)]
    bins = [b.add_binary(name=f"d{i}") for i in range(n_bin)]
    for i, coeff in zip(cont + bins, rng.normal(size=n_cont + n_bin)):
        b.add_objective(i, coeff)
    for _ in range(m_rows):
        coeffs = {i: float(rng.normal()) for i in cont + bins}
        b.add_le(coeffs, float(rng.normal()) + 2.0)
    return b.build()


def quad_problem() -> MiProblem:
    """One binary plus a unit-ball quadratic row."""
    b = MiProblemBuilder()
    x = b.add_var(-2.0, 2.0, name="x")
    y = b.add_var(-2.0, 2.0, name="y")
    b.add_binary(name="d")
    b.add_objective(x, 1.0)
    b.add_quad([x, y], np.eye(2), np.zeros(2), 1.0)
    return b.build()


class TestBranchAndBound:
    @pytest.mark.parametrize("seed", range(15))
    def test_matches_brute_force(self, seed):
        p = random_milp(seed)
        exact = brute_force_mi(p)
        res = branch_and_bound(p)
        assert res.status == exact.status
        if exact.status == "optimal":
            assert res.objective == pytest.approx(exact.objective, abs=1e-6)
            assert p.max_violation(res.x) <= 1e-7
            assert np.all(np.abs(res.x[p.binary_indices]
                                 - np.round(res.x[p.binary_indices])) <= 1e-6)

    def test_pure_lp_no_binaries(self):
        b = MiProblemBuilder()
        x = b.add_var(0.0, 2.0)
        b.add_objective(x, -1.0)
        res = branch_and_bound(b.build())
        assert res.status == "optimal"
        assert res.objective == pytest.approx(-2.0)
        assert res.node_count == 1

    def test_infeasible(self):
        b = MiProblemBuilder()
        x = b.add_var(0.0, 1.0)
        d = b.add_binary()
        b.add_le({x: 1.0, d: 1.0}, -0.5)
        res = branch_and_bound(b.build())
        assert res.status == "infeasible"
        assert res.x is None

    def test_rejects_quadratic(self):
        with pytest.raises(ValueError):
            branch_and_bound(quad_problem())

    def test_node_log_bounds_monotone(self, tmp_path):
        p = random_milp(3)
        log = tmp_path / "nodes.log"
        res = branch_and_bound(p, SolveOptions(node_log=log))
        rows = [line.split() for line in log.read_text().splitlines()]
        assert len(rows) == res.node_count
        bounds = [float(r[1]) for r in rows]
        finite = [b for b in bounds if np.isfinite(b)]
        # Best-bound selection pops nodes in nondecreasing bound order.
        assert finite == sorted(finite)
        if res.status == "optimal" and finite:
            assert finite[-1] <= res.objective + 1e-6

    def test_initial_incumbent_prunes(self):
        p = random_milp(4)
        exact = brute_force_mi(p)
        assert exact.status == "optimal"
        cold = branch_and_bound(p)
        warm = branch_and_bound(p, SolveOptions(initial_incumbent=exact.x))
        assert warm.objective == pytest.approx(exact.objective, abs=1e-6)
        assert warm.node_count <= cold.node_count

    def test_heuristic_candidate_used(self):
        p = random_milp(5)
        exact = brute_force_mi(p)
        calls = []

        def rounding(prob, x):
            calls.append(1)
            cand = x.copy()
            bi = prob.binary_indices
            cand[bi] = np.round(cand[bi])
            return cand

        res = branch_and_bound(p, SolveOptions(heuristic=rounding))
        assert calls
        assert res.objective == pytest.approx(exact.objective, abs=1e-6)

    def test_max_nodes_budget(self):
        p = random_milp(6)
        res = branch_and_bound(p, SolveOptions(max_nodes=1))
        assert res.node_count <= 1
        assert res.status in ("time_limit", "optimal")

    def test_deterministic(self):
        p = random_milp(7)
        r1 = branch_and_bound(p)
        r2 = branch_and_bound(p)
        assert r1.node_count == r2.node_count
        assert np.array_equal(r1.x, r2.x)


class TestOuterApproximation:
    def _qc(self):
        # (x - 1)^2 + y^2 <= 1 over idx (0, 1): x^2 + y^2 - 2x <= 0.
        return QuadConstraint(idx=np.array([0, 1]), q_mat=np.eye(2),
                              q_lin=np.array([-2.0, 0.0]), rhs=0.0)

    def test_cut_separates_point(self):
        qc = self._qc()
        pt = np.array([3.0, 1.0])
        row, rhs = oa_cut(qc, pt)
        assert row @ pt > rhs + 1e-9

    def test_cut_valid_on_satisfying_points(self):
        qc = self._qc()
        row, rhs = oa_cut(qc, np.array([3.0, 1.0]))
        rng = np.random.default_rng(0)
        for _ in range(10000):
            theta = rng.uniform(0.0, 2.0 * np.pi)
            rad = np.sqrt(rng.uniform())
            pt = np.array([1.0 + rad * np.cos(theta), rad * np.sin(theta)])
            assert qc.violation(pt) <= 1e-9
            assert row @ pt <= rhs + 1e-9

    def test_cut_tight_on_boundary_tangency(self):
        # Cutting at a boundary-direction exterior point: the cut plane
        # touches the ball at the nearest boundary point.
        qc = self._qc()
        row, rhs = oa_cut(qc, np.array([4.0, 0.0]))
        assert row @ np.array([2.0, 0.0]) <= rhs + 1e-9
        row2, rhs2 = oa_cut(qc, np.array([2.0 + 1e-3, 0.0]))
        boundary = np.array([2.0, 0.0])
        assert row2 @ boundary == pytest.approx(rhs2, abs=1e-5)

    def test_symmetric_points_symmetric_cuts(self):
        qc = QuadConstraint(idx=np.array([0, 1]), q_mat=np.eye(2),
                            q_lin=np.zeros(2), rhs=1.0)
        row_a, rhs_a = oa_cut(qc, np.array([2.0, 0.5]))
        row_b, rhs_b = oa_cut(qc, np.array([2.0, -0.5]))
        assert row_a[0] == pytest.approx(row_b[0])
        assert row_a[1] == pytest.approx(-row_b[1])
        assert rhs_a == pytest.approx(rhs_b)

    def test_rejects_satisfied_point(self):
        with pytest.raises(ValueError):
            oa_cut(self._qc(), np.array([1.0, 0.0]))


class TestMiqcp:
    def test_ball_constrained_min(self):
        # min x subject to (x - 1)^2 + y^2 <= 1: optimum x = 0.
        b = MiProblemBuilder()
        x = b.add_var(-5.0, 5.0)
        y = b.add_var(-5.0, 5.0)
        b.add_objective(x, 1.0)
        b.add_quad([x, y], np.eye(2), np.array([-2.0, 0.0]), 0.0)
        res = solve_miqcp(b.build())
        assert res.status == "optimal"
        assert res.objective == pytest.approx(0.0, abs=1e-5)

    def test_two_ball_binary_choice(self):
        # Slack big-M: ball k is enforced only when its binary is active.
        sep = 3.0
        b = MiProblemBuilder()
        x = b.add_var(-6.0, 6.0)
        y = b.add_var(-2.0, 2.0)
        d = b.add_binary()
        s_l = b.add_var(0.0, 200.0)   # slack deactivating the left ball
        s_r = b.add_var(0.0, 200.0)
        b.add_objective(x, 1.0)
        big_m = 100.0
        # value_left - s_l <= rhs_left, with s_l <= M * d (d = 1 frees left).
        b.add_quad([x, y, s_l], np.diag([1.0, 1.0, 0.0]),
                   np.array([2.0 * sep, 0.0, -1.0]), 1.0 - sep ** 2)
        b.add_quad([x, y, s_r], np.diag([1.0, 1.0, 0.0]),
                   np.array([-2.0 * sep, 0.0, -1.0]), 1.0 - sep ** 2)
        b.add_le({s_l: 1.0, d: -big_m}, 0.0)
        b.add_le({s_r: 1.0, d: big_m}, big_m)
        res = solve_miqcp(b.build())
        assert res.status == "optimal"
        # min x picks the left ball (d = 1 frees the left constraint, so the
        # optimum sits on the left ball boundary at x = -sep - 1 with d = 0).
        assert res.objective == pytest.approx(-(sep + 1.0), abs=1e-4)
        assert res.x[d] == pytest.approx(0.0, abs=1e-6)

    def test_matches_brute_force_with_quads(self):
        rng = np.random.default_rng(9)
        b = MiProblemBuilder()
        xs = [b.add_var(-2.0, 2.0) for _ in range(3)]
        ds = [b.add_binary() for _ in range(4)]
        for i, coeff in zip(xs + ds, rng.normal(size=7)):
            b.add_objective(i, coeff)
        for _ in range(3):
            b.add_le({i: float(rng.normal()) for i in xs + ds},
                     float(rng.normal()) + 1.5)
        b.add_quad(xs, np.eye(3), np.zeros(3), 2.0)
        p = b.build()
        exact = brute_force_mi(p)
        res = solve_miqcp(p)
        assert res.status == exact.status == "optimal"
        assert res.objective == pytest.approx(exact.objective, abs=1e-5)

    def test_identical_to_bnb_without_quads(self):
        p = random_milp(10)
        r1 = branch_and_bound(p)
        r2 = solve_miqcp(p)
        assert r1.status == r2.status
        assert r1.node_count == r2.node_count
        assert np.array_equal(r1.x, r2.x)
        assert r1.objective == r2.objective


class TestBruteForce:
    def test_enumeration_count(self):
        p = random_milp(11, n_bin=5)
        res = brute_force_mi(p)
        assert res.node_count == 32

    def test_limit_guard(self):
        p = random_milp(12, n_bin=8)
        with pytest.raises(ValueError):
            brute_force_mi(p, limit=4)


class TestFallback:
    def _problem(self):
        return random_milp(13)

    def test_normal_solve_passthrough(self):
        p = self._problem()
        res = solve_with_fallback(p, SolveOptions(time_limit=30.0))
        assert res.status in ("optimal", "gap_limit")
        assert res.x is not None

    def test_zero_time_limit_uses_previous(self):
        p = self._problem()
        prev = np.clip(np.full(p.n, 0.25), p.lb, p.ub)
        res = solve_with_fallback(p, SolveOptions(time_limit=0.0),
                                  previous_solution=prev)
        assert res.status == "fallback"
        assert np.array_equal(res.x, prev)

    def test_zero_time_limit_no_previous(self):
        p = self._problem()
        res = solve_with_fallback(p, SolveOptions(time_limit=0.0))
        assert res.status == "fallback"
        assert np.array_equal(res.x, np.clip(np.zeros(p.n), p.lb, p.ub))

    def test_infeasible_falls_back(self):
        b = MiProblemBuilder()
        x = b.add_var(0.0, 1.0)
        d = b.add_binary()
        b.add_le({x: 1.0, d: 1.0}, -0.5)
        p = b.build()
        prev = np.array([0.5, 1.0])
        res = solve_with_fallback(p, previous_solution=prev)
        assert res.status == "fallback"
        assert np.array_equal(res.x, np.clip(prev, p.lb, p.ub))
