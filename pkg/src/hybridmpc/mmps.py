"""Max-of-affine difference (Kripfganz form) functions and feasible regions.

An :class:`MmpsFunction` stores, per output component, two sets of affine
modes; evaluation is max(plus modes) - max(minus modes), which can represent
any continuous piecewise-affine map.  Feasible regions come in two flavours:
an MMPS boundary function (membership: 0 <= g <= 1) and a union of
ellipsoids (membership: min quadratic form <= 1).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "AffineModeSet",
    "MmpsFunction",
    "MmpsRegion",
    "EllipsoidUnion",
    "eval_mmps",
    "eval_region_mmps",
    "eval_ellipsoid_union",
    "circle_polytope",
    "circle_ellipsoid",
    "save_model",
    "load_model",
    "save_region",
    "load_region",
]


@dataclass(frozen=True)
class AffineModeSet:
    """A set of P affine modes v -> A x + B u + h over (x, u)."""

    a: np.ndarray  # (P, n) acting on the state
    b: np.ndarray  # (P, m) acting on the input
    h: np.ndarray  # (P,)

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.a, dtype=float))
        b = np.atleast_2d(np.asarray(self.b, dtype=float))
        h = np.atleast_1d(np.asarray(self.h, dtype=float))
        if a.shape[0] != b.shape[0] or a.shape[0] != h.shape[0]:
            raise ValueError("inconsistent mode counts across A, B, h")
        if a.shape[0] < 1:
            raise ValueError("a mode set needs at least one mode")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "h", h)

    @property
    def count(self) -> int:
        return self.a.shape[0]

    @property
    def n(self) -> int:
        return self.a.shape[1]

    @property
    def m(self) -> int:
        return self.b.shape[1]

    def values(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        """All P affine mode values at (x, u)."""
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        if x.shape != (self.n,) or u.shape != (self.m,):
            raise ValueError(
                f"expected x of shape ({self.n},) and u of shape ({self.m},), "
                f"got {x.shape} and {u.shape}")
        return self.a @ x + self.b @ u + self.h

    def max(self, x: np.ndarray, u: np.ndarray) -> float:
        return float(np.max(self.values(x, u)))


@dataclass(frozen=True)
class MmpsFunction:
    """Vector-valued Kripfganz-form function: one (plus, minus) pair per component."""

    plus: tuple[AffineModeSet, ...]
    minus: tuple[AffineModeSet, ...]

    def __post_init__(self):
        plus = tuple(self.plus)
        minus = tuple(self.minus)
        if len(plus) != len(minus) or not plus:
            raise ValueError("plus/minus mode sets must pair up, one per component")
        n, m = plus[0].n, plus[0].m
        for ms in (*plus, *minus):
            if ms.n != n or ms.m != m:
                raise ValueError("all mode sets must share the (n, m) dimensions")
        object.__setattr__(self, "plus", plus)
        object.__setattr__(self, "minus", minus)

    @property
    def n_out(self) -> int:
        return len(self.plus)

    @property
    def n(self) -> int:
        return self.plus[0].n

    @property
    def m(self) -> int:
        return self.plus[0].m


@dataclass(frozen=True)
class MmpsRegion:
    """Scalar boundary function g = max(gamma_plus) - max(gamma_minus); membership 0 <= g <= 1."""

    gamma_plus: AffineModeSet
    gamma_minus: AffineModeSet

    def __post_init__(self):
        if (self.gamma_plus.n != self.gamma_minus.n
                or self.gamma_plus.m != self.gamma_minus.m):
            raise ValueError("gamma mode sets must share the (n, m) dimensions")

    @property
    def n(self) -> int:
        return self.gamma_plus.n

    @property
    def m(self) -> int:
        return self.gamma_plus.m


@dataclass(frozen=True)
class EllipsoidUnion:
    """Union of ellipsoids in (x, u) space; membership: min quadratic form <= 1."""

    q: tuple[np.ndarray, ...]        # each (d, d) positive definite, d = n + m
    center: tuple[np.ndarray, ...]   # each (d,)
    n: int
    m: int

    _PD_TOL = 1e-10

    def __post_init__(self):
        d = self.n + self.m
        qs = tuple(np.asarray(qe, dtype=float) for qe in self.q)
        cs = tuple(np.asarray(ce, dtype=float) for ce in self.center)
        if len(qs) != len(cs) or not qs:
            raise ValueError("need matching, non-empty Q and center lists")
        for qe, ce in zip(qs, cs):
            if qe.shape != (d, d) or ce.shape != (d,):
                raise ValueError("ellipsoid dimensions inconsistent with n + m")
            if not np.allclose(qe, qe.T, atol=1e-9):
                raise ValueError("ellipsoid matrix must be symmetric")
            if np.min(np.linalg.eigvalsh(qe)) <= self._PD_TOL:
                raise ValueError("ellipsoid matrix must be positive definite")
        object.__setattr__(self, "q", qs)
        object.__setattr__(self, "center", cs)

    @property
    def count(self) -> int:
        return len(self.q)


def eval_mmps(f: MmpsFunction, x: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Evaluate all components of a Kripfganz-form function at (x, u)."""
    return np.array([f.plus[s].max(x, u) - f.minus[s].max(x, u)
                     for s in range(f.n_out)])


def eval_region_mmps(g: MmpsRegion, x: np.ndarray, u: np.ndarray) -> float:
    """Scalar boundary value; the point is a member iff 0 <= value <= 1."""
    return g.gamma_plus.max(x, u) - g.gamma_minus.max(x, u)


def eval_ellipsoid_union(e: EllipsoidUnion, x: np.ndarray, u: np.ndarray) -> float:
    """Smallest quadratic-form value over the union; member iff value <= 1."""
    v = np.concatenate([np.asarray(x, dtype=float).ravel(),
                        np.asarray(u, dtype=float).ravel()])
    if v.shape != (e.n + e.m,):
        raise ValueError("point dimension does not match the union")
    best = np.inf
    for qe, ce in zip(e.q, e.center):
        dv = v - ce
        best = min(best, float(dv @ qe @ dv))
    return best


def circle_polytope(radius: float, n_facets: int, n: int = 2, m: int = 0) -> MmpsRegion:
    """Inscribed regular polygon standing in for a disc constraint.

    The polygon acts on the first two coordinates of (x, u) and is scaled so
    the boundary value is exactly 1 on its edges.  Being inscribed, it is a
    conservative subset of the true disc.
    """
    if radius <= 0.0:
        raise ValueError("radius must be strictly positive")
    if n_facets < 3:
        raise ValueError("need at least 3 facets")
    if n + m < 2:
        raise ValueError("the polytope needs at least two coordinates to act on")
    apothem = radius * np.cos(np.pi / n_facets)
    rows = np.zeros((n_facets, n + m))
    for i in range(n_facets):
        # Facet normals at the edge midpoints of the inscribed polygon.
        theta = 2.0 * np.pi * (i + 0.5) / n_facets
        rows[i, 0] = np.cos(theta) / apothem
        rows[i, 1] = np.sin(theta) / apothem
    gamma_plus = AffineModeSet(a=rows[:, :n], b=rows[:, n:], h=np.zeros(n_facets))
    gamma_minus = AffineModeSet(a=np.zeros((1, n)), b=np.zeros((1, m)), h=np.zeros(1))
    return MmpsRegion(gamma_plus=gamma_plus, gamma_minus=gamma_minus)


def circle_ellipsoid(radius: float, n: int = 2, m: int = 0) -> EllipsoidUnion:
    """Exact single-ellipsoid cover of a disc of the given radius."""
    if radius <= 0.0:
        raise ValueError("radius must be strictly positive")
    d = n + m
    q = np.zeros((d, d))
    q[0, 0] = q[1, 1] = 1.0 / radius ** 2
    # Off-disc coordinates are unconstrained in the true disc; pin them weakly
    # but positively so Q stays positive definite.
    for i in range(2, d):
        q[i, i] = 1e-9
    if d == 2:
        return EllipsoidUnion(q=(q,), center=(np.zeros(2),), n=n, m=m)
    return EllipsoidUnion(q=(q,), center=(np.zeros(d),), n=n, m=m)


# ---------------------------------------------------------------------------
# Coefficient file I/O.  Text format, 17 significant digits, bit-faithful
# round trips.  Grammar:
#   mmps <n> <m>
#   component <s> <Pplus> <Pminus>
#   <A row ...> <B row ...> <h>        (one line per mode, plus then minus)
# Region files use the header "mmps-region <n> <m>" with two mode blocks
# ("plus <R>" / "minus <R>"); ellipsoid files use "ellipsoid-union <n> <m> <ne>"
# followed per ellipsoid by a center line and d rows of Q.
# ---------------------------------------------------------------------------

def _fmt(value: float) -> str:
    return f"{value:.17g}"


def _mode_lines(ms: AffineModeSet) -> list[str]:
    lines = []
    for i in range(ms.count):
        row = [*ms.a[i], *ms.b[i], ms.h[i]]
        lines.append(" ".join(_fmt(v) for v in row))
    return lines


def _parse_mode_set(lines: list[str], start: int, count: int, n: int, m: int
                    ) -> tuple[AffineModeSet, int]:
    a = np.zeros((count, n))
    b = np.zeros((count, m))
    h = np.zeros(count)
    for i in range(count):
        vals = [float(t) for t in lines[start + i].split()]
        if len(vals) != n + m + 1:
            raise ValueError(f"mode row {start + i + 1}: expected {n + m + 1} numbers")
        a[i] = vals[:n]
        b[i] = vals[n:n + m]
        h[i] = vals[n + m]
    return AffineModeSet(a=a, b=b, h=h), start + count


def save_model(f: MmpsFunction, path: str | Path) -> None:
    lines = [f"mmps {f.n} {f.m}"]
    for s in range(f.n_out):
        lines.append(f"component {s} {f.plus[s].count} {f.minus[s].count}")
        lines.extend(_mode_lines(f.plus[s]))
        lines.extend(_mode_lines(f.minus[s]))
    Path(path).write_text("\n".join(lines) + "\n")


def load_model(path: str | Path) -> MmpsFunction:
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
    head = lines[0].split()
    if len(head) != 3 or head[0] != "mmps":
        raise ValueError(f"{path}: expected header 'mmps n m'")
    n, m = int(head[1]), int(head[2])
    plus: list[AffineModeSet] = []
    minus: list[AffineModeSet] = []
    pos = 1
    while pos < len(lines):
        tokens = lines[pos].split()
        if tokens[0] != "component" or len(tokens) != 4:
            raise ValueError(f"{path}: expected 'component s Pplus Pminus' at line {pos + 1}")
        p_plus, p_minus = int(tokens[2]), int(tokens[3])
        ms_plus, pos = _parse_mode_set(lines, pos + 1, p_plus, n, m)
        ms_minus, pos = _parse_mode_set(lines, pos, p_minus, n, m)
        plus.append(ms_plus)
        minus.append(ms_minus)
    return MmpsFunction(plus=tuple(plus), minus=tuple(minus))


def save_region(region: MmpsRegion | EllipsoidUnion, path: str | Path) -> None:
    if isinstance(region, MmpsRegion):
        lines = [f"mmps-region {region.n} {region.m}",
                 f"plus {region.gamma_plus.count}"]
        lines.extend(_mode_lines(region.gamma_plus))
        lines.append(f"minus {region.gamma_minus.count}")
        lines.extend(_mode_lines(region.gamma_minus))
    else:
        d = region.n + region.m
        lines = [f"ellipsoid-union {region.n} {region.m} {region.count}"]
        for qe, ce in zip(region.q, region.center):
            lines.append("center " + " ".join(_fmt(v) for v in ce))
            for i in range(d):
                lines.append(" ".join(_fmt(v) for v in qe[i]))
    Path(path).write_text("\n".join(lines) + "\n")


def load_region(path: str | Path) -> MmpsRegion | EllipsoidUnion:
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
    head = lines[0].split()
    if head[0] == "mmps-region":
        n, m = int(head[1]), int(head[2])
        if lines[1].split()[0] != "plus":
            raise ValueError(f"{path}: expected 'plus R' block")
        r_plus = int(lines[1].split()[1])
        gamma_plus, pos = _parse_mode_set(lines, 2, r_plus, n, m)
        if lines[pos].split()[0] != "minus":
            raise ValueError(f"{path}: expected 'minus R' block")
        r_minus = int(lines[pos].split()[1])
        gamma_minus, _ = _parse_mode_set(lines, pos + 1, r_minus, n, m)
        return MmpsRegion(gamma_plus=gamma_plus, gamma_minus=gamma_minus)
    if head[0] == "ellipsoid-union":
        n, m, n_e = int(head[1]), int(head[2]), int(head[3])
        d = n + m
        qs, cs = [], []
        pos = 1
        for _ in range(n_e):
            tokens = lines[pos].split()
            if tokens[0] != "center":
                raise ValueError(f"{path}: expected 'center ...' at line {pos + 1}")
            cs.append(np.array([float(t) for t in tokens[1:]]))
            q = np.zeros((d, d))
            for i in range(d):
                q[i] = [float(t) for t in lines[pos + 1 + i].split()]
            qs.append(q)
            pos += 1 + d
        return EllipsoidUnion(q=tuple(qs), center=tuple(cs), n=n, m=m)
    raise ValueError(f"{path}: unknown region header {head[0]!r}")
