"""Containers for LP and mixed-integer problem instances.

Problems are stored dense (desk scale: a few hundred variables).  Quadratic
constraints act on an index subset of the variables to keep them small.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["LpProblem", "QuadConstraint", "MiProblem", "SolveResult", "MiProblemBuilder"]


@dataclass
class LpProblem:
    """min c'x  s.t.  A_ub x <= b_ub,  A_eq x = b_eq,  lb <= x <= ub."""

    c: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    a_ub: np.ndarray
    b_ub: np.ndarray
    a_eq: np.ndarray
    b_eq: np.ndarray

    @property
    def n(self) -> int:
        return self.c.shape[0]


@dataclass(frozen=True)
class QuadConstraint:
    """v' Q v + q' v <= rhs over the variable subset ``idx``."""

    idx: np.ndarray   # (k,) variable indices
    q_mat: np.ndarray  # (k, k) positive semidefinite
    q_lin: np.ndarray  # (k,)
    rhs: float

    def value(self, x: np.ndarray) -> float:
        v = x[self.idx]
        return float(v @ self.q_mat @ v + self.q_lin @ v)

    def violation(self, x: np.ndarray) -> float:
        return max(0.0, self.value(x) - self.rhs)


@dataclass
class MiProblem:
    """Mixed-integer problem: linear objective, linear rows, optional convex
    quadratic rows, and binary variables flagged by ``is_binary``."""

    c: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    is_binary: np.ndarray
    a_ub: np.ndarray
    b_ub: np.ndarray
    a_eq: np.ndarray
    b_eq: np.ndarray
    quad: list[QuadConstraint] = field(default_factory=list)
    names: list[str] = field(default_factory=list)

    @property
    def n(self) -> int:
        return self.c.shape[0]

    @property
    def binary_indices(self) -> np.ndarray:
        return np.flatnonzero(self.is_binary)

    def validate(self) -> None:
        if not (np.all(np.isfinite(self.lb)) and np.all(np.isfinite(self.ub))):
            raise ValueError("all variables need finite bounds")
        if np.any(self.lb > self.ub + 1e-12):
            raise ValueError("lower bound exceeds upper bound")
        for qc in self.quad:
            eig = np.linalg.eigvalsh(0.5 * (qc.q_mat + qc.q_mat.T))
            if eig.min(initial=0.0) < -1e-8:
                raise ValueError("quadratic constraint matrix must be PSD")

    def relaxation(self) -> LpProblem:
        """Continuous relaxation (binaries become [0, 1] box variables)."""
        return LpProblem(c=self.c.copy(), lb=self.lb.copy(), ub=self.ub.copy(),
                         a_ub=self.a_ub.copy(), b_ub=self.b_ub.copy(),
                         a_eq=self.a_eq.copy(), b_eq=self.b_eq.copy())

    def max_violation(self, x: np.ndarray) -> float:
        """Largest constraint/bound violation of a candidate point."""
        viol = 0.0
        viol = max(viol, float(np.max(self.lb - x, initial=0.0)))
        viol = max(viol, float(np.max(x - self.ub, initial=0.0)))
        if self.a_ub.size:
            viol = max(viol, float(np.max(self.a_ub @ x - self.b_ub, initial=0.0)))
        if self.a_eq.size:
            viol = max(viol, float(np.max(np.abs(self.a_eq @ x - self.b_eq), initial=0.0)))
        for qc in self.quad:
            viol = max(viol, qc.violation(x))
        return viol


@dataclass
class SolveResult:
    """Outcome of an LP or mixed-integer solve."""

    status: str                      # optimal | infeasible | unbounded | time_limit
                                     # | gap_limit | fallback | numeric_failure
    x: np.ndarray | None = None
    objective: float | None = None
    bound: float | None = None
    node_count: int = 0
    wall_time: float = 0.0
    iterations: int = 0
    duals: np.ndarray | None = None          # LP row duals (ub rows then eq rows)
    reduced_costs: np.ndarray | None = None  # LP reduced costs

    @property
    def gap(self) -> float:
        if self.objective is None or self.bound is None:
            return np.inf
        return (self.objective - self.bound) / max(1.0, abs(self.objective))


class MiProblemBuilder:
    """Incremental construction of a MiProblem."""

    def __init__(self):
        self._lb: list[float] = []
        self._ub: list[float] = []
        self._binary: list[bool] = []
        self._names: list[str] = []
        self._obj: dict[int, float] = {}
        self._ub_rows: list[tuple[np.ndarray, np.ndarray, float]] = []
        self._eq_rows: list[tuple[np.ndarray, np.ndarray, float]] = []
        self._quad: list[QuadConstraint] = []

    @property
    def n_vars(self) -> int:
        return len(self._lb)

    def add_var(self, lb: float, ub: float, name: str = "", binary: bool = False) -> int:
        if not (np.isfinite(lb) and np.isfinite(ub)):
            raise ValueError(f"variable {name or len(self._lb)} needs finite bounds")
        if lb > ub:
            raise ValueError(f"variable {name}: lb {lb} > ub {ub}")
        self._lb.append(float(lb))
        self._ub.append(float(ub))
        self._binary.append(binary)
        self._names.append(name or f"v{len(self._lb) - 1}")
        return len(self._lb) - 1

    def add_binary(self, name: str = "") -> int:
        return self.add_var(0.0, 1.0, name=name, binary=True)

    def add_objective(self, idx: int, coeff: float) -> None:
        self._obj[idx] = self._obj.get(idx, 0.0) + float(coeff)

    def _row(self, coeffs: dict[int, float]) -> tuple[np.ndarray, np.ndarray]:
        idx = np.array(sorted(coeffs), dtype=int)
        vals = np.array([coeffs[i] for i in idx], dtype=float)
        return idx, vals

    def add_le(self, coeffs: dict[int, float], rhs: float) -> None:
        idx, vals = self._row(coeffs)
        self._ub_rows.append((idx, vals, float(rhs)))

    def add_ge(self, coeffs: dict[int, float], rhs: float) -> None:
        self.add_le({i: -v for i, v in coeffs.items()}, -rhs)

    def add_eq(self, coeffs: dict[int, float], rhs: float) -> None:
        idx, vals = self._row(coeffs)
        self._eq_rows.append((idx, vals, float(rhs)))

    def add_quad(self, idx: list[int], q_mat: np.ndarray, q_lin: np.ndarray,
                 rhs: float) -> None:
        self._quad.append(QuadConstraint(idx=np.asarray(idx, dtype=int),
                                         q_mat=np.asarray(q_mat, dtype=float),
                                         q_lin=np.asarray(q_lin, dtype=float),
                                         rhs=float(rhs)))

    def build(self) -> MiProblem:
        n = self.n_vars
        c = np.zeros(n)
        for i, v in self._obj.items():
            c[i] = v
        a_ub = np.zeros((len(self._ub_rows), n))
        b_ub = np.zeros(len(self._ub_rows))
        for r, (idx, vals, rhs) in enumerate(self._ub_rows):
            a_ub[r, idx] = vals
            b_ub[r] = rhs
        a_eq = np.zeros((len(self._eq_rows), n))
        b_eq = np.zeros(len(self._eq_rows))
        for r, (idx, vals, rhs) in enumerate(self._eq_rows):
            a_eq[r, idx] = vals
            b_eq[r] = rhs
        problem = MiProblem(c=c, lb=np.array(self._lb), ub=np.array(self._ub),
                            is_binary=np.array(self._binary, dtype=bool),
                            a_ub=a_ub, b_ub=b_ub, a_eq=a_eq, b_eq=b_eq,
                            quad=list(self._quad), names=list(self._names))
        problem.validate()
        return problem
