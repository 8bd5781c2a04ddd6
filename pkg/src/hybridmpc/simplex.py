"""Dense two-phase primal simplex for bounded-variable linear programs.

Nonbasic variables sit at a bound; entering variables are priced with
Dantzig's rule, switching to Bland's rule after a run of degenerate pivots
so termination is guaranteed.  The basis inverse is maintained by pivot
updates with periodic refactorization.
"""

from __future__ import annotations

import time

import numpy as np

from .problem import LpProblem, SolveResult

__all__ = ["simplex_solve"]

_AT_LOWER, _AT_UPPER, _BASIC = 0, 1, 2

_PIVOT_TOL = 1e-9
_DEGENERATE_STEP = 1e-10
_DEGENERACY_THRESHOLD = 60
_REFACTOR_EVERY = 150
_MAX_ITER = 50_000


class _NumericFailure(Exception):
    pass


class _Tableau:
    """Mutable simplex state over the equality system A x = b."""

    def __init__(self, cols: np.ndarray, b: np.ndarray, lb: np.ndarray,
                 ub: np.ndarray, basis: np.ndarray, x: np.ndarray):
        self.a = cols          # (m, N)
        self.b = b
        self.lb = lb
        self.ub = ub
        self.basis = basis     # (m,) column index per row
        self.x = x             # (N,) current point
        self.m, self.n_cols = cols.shape
        self.status = np.full(self.n_cols, _AT_LOWER, dtype=np.int8)
        self.status[basis] = _BASIC
        self.b_inv = np.eye(self.m)
        self.iterations = 0
        self.refactorize()

    def refactorize(self) -> None:
        if self.m == 0:
            return
        bmat = self.a[:, self.basis]
        try:
            self.b_inv = np.linalg.inv(bmat)
        except np.linalg.LinAlgError as exc:
            raise _NumericFailure("singular basis") from exc
        self.recompute_basics()

    def recompute_basics(self) -> None:
        if self.m == 0:
            return
        nonbasic = self.status != _BASIC
        rhs = self.b - self.a[:, nonbasic] @ self.x[nonbasic]
        self.x[self.basis] = self.b_inv @ rhs

    def solve_phase(self, c: np.ndarray, tol: float) -> None:
        degenerate_run = 0
        bland = False
        since_refactor = 0
        while True:
            if self.iterations > _MAX_ITER:
                raise _NumericFailure("iteration limit exceeded")
            if self.m:
                y = c[self.basis] @ self.b_inv
                d = c - y @ self.a
            else:
                d = c.copy()
            free_range = self.ub > self.lb
            elig_lo = (self.status == _AT_LOWER) & (d < -tol) & free_range
            elig_up = (self.status == _AT_UPPER) & (d > tol) & free_range
            eligible = np.flatnonzero(elig_lo | elig_up)
            if eligible.size == 0:
                self._last_reduced = d
                self._last_duals = y if self.m else np.zeros(0)
                return
            if bland:
                j = int(eligible[0])
            else:
                j = int(eligible[np.argmax(np.abs(d[eligible]))])
            step = self._pivot(j, from_lower=self.status[j] == _AT_LOWER)
            self.iterations += 1
            since_refactor += 1
            if step <= _DEGENERATE_STEP:
                degenerate_run += 1
                if degenerate_run >= _DEGENERACY_THRESHOLD:
                    bland = True
            else:
                degenerate_run = 0
                bland = False
            if since_refactor >= _REFACTOR_EVERY:
                self.refactorize()
                since_refactor = 0

    def _pivot(self, j: int, from_lower: bool) -> float:
        sign = 1.0 if from_lower else -1.0
        w = self.b_inv @ self.a[:, j] if self.m else np.zeros(0)
        delta = -sign * w
        # Ratio test against the basic variables' bounds.
        t_row = np.inf
        leave_pos = -1
        leave_to_upper = False
        xb = self.x[self.basis]
        lb_b = self.lb[self.basis]
        ub_b = self.ub[self.basis]
        dec = delta < -_PIVOT_TOL
        inc = delta > _PIVOT_TOL
        limits = np.full(self.m, np.inf)
        if dec.any():
            lo = lb_b[dec]
            limits_dec = np.where(np.isfinite(lo), (xb[dec] - lo) / (-delta[dec]), np.inf)
            limits[dec] = limits_dec
        if inc.any():
            hi = ub_b[inc]
            limits_inc = np.where(np.isfinite(hi), (hi - xb[inc]) / delta[inc], np.inf)
            limits[inc] = limits_inc
        if self.m:
            limits = np.maximum(limits, 0.0)
            pos = int(np.argmin(limits))
            if limits[pos] < np.inf:
                # Deterministic tie-break: smallest limit, then smallest
                # basis variable index among near-ties.
                near = np.flatnonzero(limits <= limits[pos] + 1e-12)
                pos = int(near[np.argmin(self.basis[near])])
                t_row = limits[pos]
                leave_pos = pos
                leave_to_upper = delta[pos] > 0
        t_bound = self.ub[j] - self.lb[j]
        t = min(t_row, t_bound)
        if not np.isfinite(t):
            raise _Unbounded()
        # Move the point.
        if self.m:
            self.x[self.basis] = xb + t * delta
        if t_bound <= t_row + 1e-15 and t_bound <= t + 1e-15:
            # Bound flip: the entering variable crosses to its other bound.
            self.x[j] = self.ub[j] if from_lower else self.lb[j]
            self.status[j] = _AT_UPPER if from_lower else _AT_LOWER
            return t
        leaving = self.basis[leave_pos]
        self.x[leaving] = self.ub[leaving] if leave_to_upper else self.lb[leaving]
        self.status[leaving] = _AT_UPPER if leave_to_upper else _AT_LOWER
        self.x[j] = (self.lb[j] if from_lower else self.ub[j]) + sign * t
        self.status[j] = _BASIC
        self.basis[leave_pos] = j
        piv = w[leave_pos]
        if abs(piv) < _PIVOT_TOL:
            raise _NumericFailure("tiny pivot element")
        self.b_inv[leave_pos] /= piv
        rows = np.arange(self.m) != leave_pos
        self.b_inv[rows] -= np.outer(w[rows], self.b_inv[leave_pos])
        return t


class _Unbounded(Exception):
    pass


def _standard_form(lp: LpProblem):
    """Equality system [A_ub I; A_eq 0] plus artificials where needed."""
    n = lp.n
    m_ub = lp.a_ub.shape[0] if lp.a_ub.size else 0
    m_eq = lp.a_eq.shape[0] if lp.a_eq.size else 0
    m = m_ub + m_eq
    a = np.zeros((m, n + m_ub))
    b = np.zeros(m)
    if m_ub:
        a[:m_ub, :n] = lp.a_ub
        a[:m_ub, n:n + m_ub] = np.eye(m_ub)
        b[:m_ub] = lp.b_ub
    if m_eq:
        a[m_ub:, :n] = lp.a_eq
        b[m_ub:] = lp.b_eq
    lb = np.concatenate([lp.lb, np.zeros(m_ub)])
    ub = np.concatenate([lp.ub, np.full(m_ub, np.inf)])
    # Nonbasic starting point: structural variables at a finite bound.
    if not np.all(np.isfinite(lp.lb) | np.isfinite(lp.ub)):
        raise ValueError("every variable needs at least one finite bound")
    x0 = np.where(np.isfinite(lb), lb, np.where(np.isfinite(ub), ub, 0.0))
    resid = b - a @ x0
    # Slack absorbs non-negative residuals on <= rows; artificials elsewhere.
    basis = np.full(m, -1, dtype=int)
    art_cols = []
    for i in range(m):
        if i < m_ub and resid[i] >= 0.0:
            basis[i] = n + i
            x0[n + i] = resid[i]
        else:
            art_cols.append((i, 1.0 if resid[i] >= 0.0 else -1.0))
    n_art = len(art_cols)
    if n_art:
        art = np.zeros((m, n_art))
        for k, (i, sgn) in enumerate(art_cols):
            art[i, k] = sgn
            basis[i] = a.shape[1] + k
        a = np.hstack([a, art])
        lb = np.concatenate([lb, np.zeros(n_art)])
        ub = np.concatenate([ub, np.full(n_art, np.inf)])
        x0 = np.concatenate([x0, np.abs(resid[[i for i, _ in art_cols]])])
    return a, b, lb, ub, basis, x0, n, m_ub, n_art


def simplex_solve(lp: LpProblem, tol: float = 1e-7) -> SolveResult:
    """Solve a bounded-variable LP; returns an optimal basic solution,
    an infeasibility verdict, or a numeric-failure status."""
    start = time.perf_counter()
    try:
        a, b, lb, ub, basis, x0, n, m_ub, n_art = _standard_form(lp)
    except ValueError:
        raise
    n_total = a.shape[1]
    tab = _Tableau(a, b, lb, ub, basis, x0)
    try:
        if n_art:
            c1 = np.zeros(n_total)
            c1[n + m_ub:] = 1.0
            tab.solve_phase(c1, tol)
            phase1 = float(c1 @ tab.x)
            if phase1 > 1e-6:
                return SolveResult(status="infeasible",
                                   wall_time=time.perf_counter() - start,
                                   iterations=tab.iterations)
            # Pin artificials to zero for phase 2.
            tab.ub[n + m_ub:] = 0.0
            tab.x[n + m_ub:][tab.status[n + m_ub:] != _BASIC] = 0.0
            tab.recompute_basics()
        c2 = np.zeros(n_total)
        c2[:n] = lp.c
        tab.solve_phase(c2, tol)
    except _Unbounded:
        return SolveResult(status="unbounded",
                           wall_time=time.perf_counter() - start,
                           iterations=tab.iterations)
    except _NumericFailure:
        try:
            tab.refactorize()
            tab.solve_phase(np.concatenate([lp.c, np.zeros(n_total - n)]), tol)
        except (_NumericFailure, _Unbounded):
            return SolveResult(status="numeric_failure",
                               wall_time=time.perf_counter() - start,
                               iterations=tab.iterations)
    x = tab.x[:n].copy()
    np.clip(x, lp.lb, lp.ub, out=x)
    obj = float(lp.c @ x)
    duals = getattr(tab, "_last_duals", np.zeros(tab.m))
    reduced = getattr(tab, "_last_reduced", np.zeros(n_total))[:n]
    return SolveResult(status="optimal", x=x, objective=obj, bound=obj,
                       wall_time=time.perf_counter() - start,
                       iterations=tab.iterations,
                       duals=duals.copy() if duals is not None else None,
                       reduced_costs=reduced.copy())
