"""Branch-and-bound over the simplex core, with outer-approximation cuts for
convex quadratic constraints, a brute-force oracle, and a time-limit
fallback policy.

Node selection is best-bound, branching most-fractional with lowest-index
tie-breaks; everything is deterministic for fixed inputs and options.
"""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .problem import LpProblem, MiProblem, QuadConstraint, SolveResult
from .simplex import simplex_solve

__all__ = ["SolveOptions", "branch_and_bound", "solve_miqcp", "oa_cut",
           "brute_force_mi", "solve_with_fallback"]

_INT_TOL = 1e-6
_FEAS_TOL = 1e-7


@dataclass
class SolveOptions:
    time_limit: float | None = None
    gap_tol: float = 1e-6
    max_nodes: int | None = None
    integrality_tol: float = _INT_TOL
    quad_tol: float = 1e-7
    node_log: str | Path | None = None
    # Optional incumbent sources: a known-feasible starting point and a
    # problem-specific rounding heuristic applied to relaxation solutions.
    initial_incumbent: np.ndarray | None = None
    heuristic: Callable[[MiProblem, np.ndarray], np.ndarray | None] | None = None


def oa_cut(qc: QuadConstraint, point: np.ndarray, tol: float = 1e-9
           ) -> tuple[np.ndarray, float]:
    """Gradient tangent cut at a point violating the quadratic constraint.

    Returns (row, rhs) over the full variable vector with row @ x <= rhs.
    By convexity the cut never removes a point satisfying the constraint.
    """
    value = qc.value(point)
    if value <= qc.rhs + tol:
        raise ValueError("outer-approximation cut requested at a satisfied point")
    v = point[qc.idx]
    grad = 2.0 * qc.q_mat @ v + qc.q_lin
    row = np.zeros(point.shape[0])
    row[qc.idx] = grad
    rhs = qc.rhs - value + float(grad @ v)
    return row, rhs


def _lp_with_cuts(p: MiProblem, lb: np.ndarray, ub: np.ndarray,
                  cuts: list[tuple[np.ndarray, float]]) -> LpProblem:
    if cuts:
        a_extra = np.array([row for row, _ in cuts])
        b_extra = np.array([rhs for _, rhs in cuts])
        a_ub = np.vstack([p.a_ub, a_extra]) if p.a_ub.size else a_extra
        b_ub = np.concatenate([p.b_ub, b_extra]) if p.b_ub.size else b_extra
    else:
        a_ub, b_ub = p.a_ub, p.b_ub
    return LpProblem(c=p.c, lb=lb, ub=ub, a_ub=a_ub, b_ub=b_ub,
                     a_eq=p.a_eq, b_eq=p.b_eq)


@dataclass(order=True)
class _Node:
    bound: float
    seq: int
    depth: int = field(compare=False)
    lb: np.ndarray = field(compare=False)
    ub: np.ndarray = field(compare=False)
    branch_var: int = field(compare=False, default=-1)


def _check_candidate(p: MiProblem, x: np.ndarray, bin_idx: np.ndarray,
                     opts: SolveOptions) -> bool:
    if x is None or x.shape != (p.n,):
        return False
    if np.any(np.abs(x[bin_idx] - np.round(x[bin_idx])) > opts.integrality_tol):
        return False
    return p.max_violation(x) <= 10.0 * _FEAS_TOL


def _bnb_core(p: MiProblem, opts: SolveOptions, allow_quad: bool) -> SolveResult:
    start = time.perf_counter()
    p.validate()
    bin_idx = p.binary_indices
    cuts: list[tuple[np.ndarray, float]] = []
    log_lines: list[str] = []

    incumbent: np.ndarray | None = None
    inc_obj = np.inf
    if opts.initial_incumbent is not None:
        cand = np.asarray(opts.initial_incumbent, dtype=float)
        if _check_candidate(p, cand, bin_idx, opts):
            incumbent = cand.copy()
            inc_obj = float(p.c @ cand)

    import heapq
    seq = itertools.count()
    heap: list[_Node] = [_Node(bound=-np.inf, seq=next(seq), depth=0,
                               lb=p.lb.copy(), ub=p.ub.copy())]
    node_count = 0
    global_bound = -np.inf
    status = "optimal"

    def elapsed() -> float:
        return time.perf_counter() - start

    while heap:
        node = heapq.heappop(heap)
        global_bound = max(global_bound, node.bound) if node.bound > -np.inf else global_bound
        if incumbent is not None and node.bound >= inc_obj - opts.gap_tol * max(1.0, abs(inc_obj)):
            continue
        if opts.time_limit is not None and elapsed() >= opts.time_limit:
            status = "time_limit"
            break
        if opts.max_nodes is not None and node_count >= opts.max_nodes:
            status = "time_limit"
            break
        node_count += 1
        log_lines.append(f"{node_count} {node.bound:.12g} {node.depth} {node.branch_var}")

        # Re-solve this node's LP until it is quad-feasible at integral points.
        while True:
            res = simplex_solve(_lp_with_cuts(p, node.lb, node.ub, cuts))
            if res.status in ("infeasible", "unbounded", "numeric_failure"):
                # Numeric failure is pruned like infeasibility: losing one
                # node keeps the search alive at the cost of exactness in a
                # pathological case.
                res = None
                break
            x = res.x
            frac = np.abs(x[bin_idx] - np.round(x[bin_idx])) if bin_idx.size else np.zeros(0)
            integral = bool(np.all(frac <= opts.integrality_tol))
            if not (allow_quad and p.quad and integral):
                break
            violated = [qc for qc in p.quad if qc.violation(x) > opts.quad_tol]
            if not violated:
                break
            for qc in violated:
                cuts.append(oa_cut(qc, x))
        if res is None:
            continue
        lp_obj = res.objective
        if lp_obj >= inc_obj - opts.gap_tol * max(1.0, abs(inc_obj)):
            continue

        if opts.heuristic is not None:
            cand = opts.heuristic(p, x)
            if cand is not None:
                cand = np.asarray(cand, dtype=float)
                if _check_candidate(p, cand, bin_idx, opts):
                    obj = float(p.c @ cand)
                    if obj < inc_obj:
                        incumbent, inc_obj = cand.copy(), obj

        if bin_idx.size:
            frac = np.abs(x[bin_idx] - np.round(x[bin_idx]))
        else:
            frac = np.zeros(0)
        if frac.size == 0 or np.all(frac <= opts.integrality_tol):
            # Integral (and quad-feasible, if applicable): new incumbent.
            cand = x.copy()
            cand[bin_idx] = np.round(cand[bin_idx])
            obj = float(p.c @ cand)
            if obj < inc_obj:
                incumbent, inc_obj = cand, obj
            continue
        # Most-fractional branching, lowest variable index on ties.
        scores = np.abs(frac - 0.5)
        k = int(np.argmin(scores + 1e-12 * np.arange(frac.size)))
        var = int(bin_idx[k])
        for fix in (0.0, 1.0):
            child_lb = node.lb.copy()
            child_ub = node.ub.copy()
            child_lb[var] = fix
            child_ub[var] = fix
            heapq.heappush(heap, _Node(bound=lp_obj, seq=next(seq),
                                       depth=node.depth + 1, lb=child_lb,
                                       ub=child_ub, branch_var=var))

    if heap and status == "optimal":
        status = "time_limit"
    if status == "optimal":
        if incumbent is None:
            status = "infeasible"
            final_bound = None
        else:
            global_bound = inc_obj
            final_bound = inc_obj
    else:
        open_bounds = [nd.bound for nd in heap if nd.bound > -np.inf]
        final_bound = min(open_bounds) if open_bounds else (inc_obj if incumbent is not None else None)

    if opts.node_log is not None:
        Path(opts.node_log).write_text("\n".join(log_lines) + "\n")
    return SolveResult(status=status,
                       x=incumbent,
                       objective=inc_obj if incumbent is not None else None,
                       bound=final_bound,
                       node_count=node_count,
                       wall_time=time.perf_counter() - start)


def branch_and_bound(p: MiProblem, opts: SolveOptions | None = None) -> SolveResult:
    """Exact best-bound branch and bound for MILPs (no quadratic rows)."""
    if p.quad:
        raise ValueError("problem has quadratic constraints; use solve_miqcp")
    return _bnb_core(p, opts or SolveOptions(), allow_quad=False)


def solve_miqcp(p: MiProblem, opts: SolveOptions | None = None) -> SolveResult:
    """Branch and bound with outer-approximation cuts for convex quadratic rows."""
    return _bnb_core(p, opts or SolveOptions(), allow_quad=True)


def _continuous_solve(p: MiProblem, lb: np.ndarray, ub: np.ndarray,
                      quad_tol: float, max_rounds: int = 200) -> SolveResult:
    """LP solve, adding OA cuts until all quadratic rows hold."""
    cuts: list[tuple[np.ndarray, float]] = []
    res = simplex_solve(_lp_with_cuts(p, lb, ub, cuts))
    for _ in range(max_rounds):
        if res.status != "optimal" or not p.quad:
            return res
        violated = [qc for qc in p.quad if qc.violation(res.x) > quad_tol]
        if not violated:
            return res
        for qc in violated:
            cuts.append(oa_cut(qc, res.x))
        res = simplex_solve(_lp_with_cuts(p, lb, ub, cuts))
    return res


def brute_force_mi(p: MiProblem, limit: int = 16,
                   quad_tol: float = 1e-7) -> SolveResult:
    """Testing oracle: enumerate every binary assignment and keep the best."""
    start = time.perf_counter()
    bin_idx = p.binary_indices
    if bin_idx.size > limit:
        raise ValueError(f"{bin_idx.size} binaries exceeds the enumeration limit {limit}")
    best: SolveResult | None = None
    count = 0
    for bits in itertools.product((0.0, 1.0), repeat=bin_idx.size):
        lb = p.lb.copy()
        ub = p.ub.copy()
        lb[bin_idx] = bits
        ub[bin_idx] = bits
        res = _continuous_solve(p, lb, ub, quad_tol)
        count += 1
        if res.status == "optimal" and (best is None or res.objective < best.objective - 1e-12):
            best = res
    wall = time.perf_counter() - start
    if best is None:
        return SolveResult(status="infeasible", node_count=count, wall_time=wall)
    return SolveResult(status="optimal", x=best.x, objective=best.objective,
                       bound=best.objective, node_count=count, wall_time=wall)


def solve_with_fallback(p: MiProblem, opts: SolveOptions | None = None,
                        previous_solution: np.ndarray | None = None) -> SolveResult:
    """Solve with a time limit; on failure return the shifted previous solution.

    The caller supplies ``previous_solution`` already shifted into this
    step's variable layout.  Without one, a zero vector clipped into the
    variable bounds is returned, flagged as fallback.
    """
    start = time.perf_counter()
    opts = opts or SolveOptions()
    if opts.time_limit is not None and opts.time_limit <= 0.0:
        res = None
    else:
        res = solve_miqcp(p, opts) if p.quad else branch_and_bound(p, opts)
        if res.x is not None:
            return res
        if res.status == "time_limit" and res.x is None:
            res = None
        elif res.status == "infeasible":
            res = None
    if previous_solution is not None:
        x = np.clip(np.asarray(previous_solution, dtype=float), p.lb, p.ub)
    else:
        x = np.clip(np.zeros(p.n), p.lb, p.ub)
    return SolveResult(status="fallback", x=x, objective=float(p.c @ x),
                       wall_time=time.perf_counter() - start)
