"""Tests for the bounded-variable two-phase simplex solver, cross-checked
against scipy.optimize.linprog on randomized instances."""

import numpy as np
import pytest
from scipy.optimize import linprog

from hybridmpc.problem import LpProblem
from hybridmpc.simplex import simplex_solve


def make_lp(c, a_ub=None, b_ub=None, a_eq=None, b_eq=None, lb=None, ub=None):
    c = np.asarray(c, dtype=float)
    n = c.size
    return LpProblem(
        c=c,
        lb=np.full(n, -1e3) if lb is None else np.asarray(lb, dtype=float),
        ub=np.full(n, 1e3) if ub is None else np.asarray(ub, dtype=float),
        a_ub=np.zeros((0, n)) if a_ub is None else np.asarray(a_ub, dtype=float),
        b_ub=np.zeros(0) if b_ub is None else np.asarray(b_ub, dtype=float),
        a_eq=np.zeros((0, n)) if a_eq is None else np.asarray(a_eq, dtype=float),
        b_eq=np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float),
    )


def scipy_solve(lp: LpProblem):
    return linprog(lp.c,
                   A_ub=lp.a_ub if lp.a_ub.size else None,
                   b_ub=lp.b_ub if lp.b_ub.size else None,
                   A_eq=lp.a_eq if lp.a_eq.size else None,
                   b_eq=lp.b_eq if lp.b_eq.size else None,
                   bounds=list(zip(lp.lb, lp.ub)), method="highs")


class TestBasics:
    def test_box_only(self):
        lp = make_lp([1.0, -2.0], lb=[-1.0, -1.0], ub=[3.0, 4.0])
        res = simplex_solve(lp)
        assert res.status == "optimal"
        assert res.x == pytest.approx([-1.0, 4.0])
        assert res.objective == pytest.approx(-9.0)

    def test_single_inequality(self):
        # min -x - y  s.t.  x + y <= 1, x, y in [0, 1]
        lp = make_lp([-1.0, -1.0], a_ub=[[1.0, 1.0]], b_ub=[1.0],
                     lb=[0.0, 0.0], ub=[1.0, 1.0])
        res = simplex_solve(lp)
        assert res.status == "optimal"
        assert res.objective == pytest.approx(-1.0)

    def test_equality(self):
        lp = make_lp([1.0, 1.0], a_eq=[[1.0, -1.0]], b_eq=[2.0],
                     lb=[0.0, 0.0], ub=[10.0, 10.0])
        res = simplex_solve(lp)
        assert res.status == "optimal"
        assert res.x == pytest.approx([2.0, 0.0])

    def test_infeasible(self):
        lp = make_lp([1.0], a_ub=[[1.0], [-1.0]], b_ub=[-1.0, -1.0],
                     lb=[-10.0], ub=[10.0])
        assert simplex_solve(lp).status == "infeasible"

    def test_infeasible_equality(self):
        lp = make_lp([0.0, 0.0], a_eq=[[1.0, 1.0], [1.0, 1.0]],
                     b_eq=[1.0, 2.0], lb=[0.0, 0.0], ub=[5.0, 5.0])
        assert simplex_solve(lp).status == "infeasible"

    def test_unbounded(self):
        lp = make_lp([-1.0], lb=[0.0], ub=[np.inf])
        assert simplex_solve(lp).status == "unbounded"

    def test_needs_one_finite_bound(self):
        lp = make_lp([1.0], lb=[-np.inf], ub=[np.inf])
        with pytest.raises(ValueError):
            simplex_solve(lp)

    def test_degenerate_lp(self):
        # Many redundant rows through the optimum; Bland fallback must finish.
        n = 6
        a = np.vstack([np.eye(n), np.ones((4, n))])
        b = np.concatenate([np.zeros(n), np.zeros(4)])
        lp = make_lp(-np.ones(n), a_ub=a, b_ub=b, lb=np.full(n, -1.0),
                     ub=np.ones(n))
        res = simplex_solve(lp)
        assert res.status == "optimal"
        assert res.objective == pytest.approx(0.0, abs=1e-9)


class TestRandomizedVsScipy:
    @pytest.mark.parametrize("seed", range(30))
    def test_matches_linprog(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 9))
        m_ub = int(rng.integers(0, 7))
        m_eq = int(rng.integers(0, min(n, 3)))
        lp = make_lp(rng.normal(size=n),
                     a_ub=rng.normal(size=(m_ub, n)),
                     b_ub=rng.normal(size=m_ub) + 1.0,
                     a_eq=rng.normal(size=(m_eq, n)),
                     b_eq=0.3 * rng.normal(size=m_eq),
                     lb=np.full(n, -5.0), ub=np.full(n, 5.0))
        ours = simplex_solve(lp)
        ref = scipy_solve(lp)
        if ref.status == 2:
            assert ours.status == "infeasible"
            return
        assert ref.status == 0
        assert ours.status == "optimal"
        assert ours.objective == pytest.approx(ref.fun, abs=1e-6)
        # The solution itself must be feasible.
        assert np.all(lp.lb - 1e-9 <= ours.x) and np.all(ours.x <= lp.ub + 1e-9)
        if lp.a_ub.size:
            assert np.all(lp.a_ub @ ours.x <= lp.b_ub + 1e-7)
        if lp.a_eq.size:
            assert np.max(np.abs(lp.a_eq @ ours.x - lp.b_eq)) <= 1e-7

    def test_deterministic(self):
        rng = np.random.default_rng(123)
        lp = make_lp(rng.normal(size=5), a_ub=rng.normal(size=(4, 5)),
                     b_ub=rng.normal(size=4) + 1.0,
                     lb=np.full(5, -2.0), ub=np.full(5, 2.0))
        r1 = simplex_solve(lp)
        r2 = simplex_solve(lp)
        assert np.array_equal(r1.x, r2.x)
        assert r1.objective == r2.objective
        assert r1.iterations == r2.iterations


class TestOptimalityCertificate:
    def test_complementary_slackness(self):
        # At an optimal basic solution: dual-feasible rows with positive dual
        # must be tight, and strictly interior variables have zero reduced cost.
        rng = np.random.default_rng(7)
        for _ in range(10):
            n, m = 5, 4
            lp = make_lp(rng.normal(size=n), a_ub=rng.normal(size=(m, n)),
                         b_ub=rng.normal(size=m) + 2.0,
                         lb=np.full(n, -4.0), ub=np.full(n, 4.0))
            res = simplex_solve(lp)
            if res.status != "optimal":
                continue
            slack = lp.b_ub - lp.a_ub @ res.x
            for i in range(m):
                if abs(res.duals[i]) > 1e-7:
                    assert slack[i] == pytest.approx(0.0, abs=1e-7)
            interior = (res.x > lp.lb + 1e-6) & (res.x < lp.ub - 1e-6)
            assert np.all(np.abs(res.reduced_costs[interior]) <= 1e-7)

    def test_objective_equals_bound(self):
        lp = make_lp([2.0, -1.0], a_ub=[[1.0, 1.0]], b_ub=[1.5],
                     lb=[0.0, 0.0], ub=[1.0, 1.0])
        res = simplex_solve(lp)
        assert res.status == "optimal"
        assert res.bound == res.objective
