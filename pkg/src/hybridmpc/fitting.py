"""Seedable fitting of Kripfganz-form functions and feasible regions.

The function fitter is a k-plane style alternation between mode assignment
and (ridge-regularized) least squares, restarted from several seeded random
assignments and reporting the best parameters found.  Region fitting covers
four variants: {region, boundary} x {polytopic, ellipsoidal}.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mmps import AffineModeSet, EllipsoidUnion, MmpsFunction, MmpsRegion

__all__ = ["FitReport", "RegionFitReport", "fit_mmps", "fit_region"]

_RIDGE = 1e-8


@dataclass
class FitReport:
    """Per-component sample errors of a fitted MmpsFunction."""

    rms: list[float]
    max_err: list[float]
    iterations: list[int]
    degenerate: bool = False
    rms_history: list[list[float]] = field(default_factory=list)


@dataclass
class RegionFitReport:
    coverage: float            # fraction of in-samples inside the fitted region
    false_inclusions: int      # out-samples inside (must be 0 for region-based)
    feasible: bool = True      # False when the budget could not separate the labels


def _design(points: np.ndarray) -> np.ndarray:
    return np.hstack([points, np.ones((points.shape[0], 1))])


def _ridge_lstsq(a: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, bool]:
    """Least squares with a small ridge; flags rank deficiency."""
    gram = a.T @ a
    rank_ok = np.linalg.matrix_rank(gram) == gram.shape[0]
    gram[np.diag_indices_from(gram)] += _RIDGE
    return np.linalg.solve(gram, a.T @ y), not rank_ok


def _eval_scalar(w_plus: np.ndarray, w_minus: np.ndarray, v: np.ndarray) -> np.ndarray:
    return np.max(v @ w_plus.T, axis=1) - np.max(v @ w_minus.T, axis=1)


def _fit_component(v: np.ndarray, y: np.ndarray, p_plus: int, p_minus: int,
                   rng: np.random.Generator, tol: float, max_iter: int,
                   n_restarts: int) -> tuple[np.ndarray, np.ndarray, float, int, bool, list[float]]:
    n_samples, d1 = v.shape
    best: tuple[np.ndarray, np.ndarray] | None = None
    best_rms = np.inf
    best_iters = 0
    degenerate = False
    history: list[float] = []

    for _ in range(n_restarts):
        asg_plus = rng.integers(0, p_plus, size=n_samples)
        asg_minus = rng.integers(0, p_minus, size=n_samples)
        prev_rms = np.inf
        w_plus = np.zeros((p_plus, d1))
        w_minus = np.zeros((p_minus, d1))
        iters = 0
        for iters in range(1, max_iter + 1):
            # Joint least squares over all modes given the current assignment.
            cols = (p_plus + p_minus) * d1
            a = np.zeros((n_samples, cols))
            rows = np.arange(n_samples)
            for k in range(d1):
                a[rows, asg_plus * d1 + k] = v[:, k]
                a[rows, (p_plus + asg_minus) * d1 + k] -= v[:, k]
            w, deficient = _ridge_lstsq(a, y)
            degenerate = degenerate or deficient
            w_plus = w[:p_plus * d1].reshape(p_plus, d1)
            w_minus = w[p_plus * d1:].reshape(p_minus, d1)
            # Reassign to the actually active modes of the Kripfganz evaluation.
            asg_plus = np.argmax(v @ w_plus.T, axis=1)
            asg_minus = np.argmax(v @ w_minus.T, axis=1)
            rms = float(np.sqrt(np.mean((_eval_scalar(w_plus, w_minus, v) - y) ** 2)))
            if rms < best_rms:
                best_rms = rms
                best = (w_plus.copy(), w_minus.copy())
                best_iters = iters
                history.append(best_rms)
            if prev_rms - rms < tol:
                break
            prev_rms = rms
        if best_rms < tol:
            break
    assert best is not None
    return best[0], best[1], best_rms, best_iters, degenerate, history


def fit_mmps(samples: list[tuple[tuple[np.ndarray, np.ndarray], np.ndarray]],
             p_plus: int, p_minus: int, seed: int,
             tol: float = 1e-10, max_iter: int = 50,
             n_restarts: int = 8) -> tuple[MmpsFunction, FitReport]:
    """Fit a Kripfganz-form function to samples ((x, u), F(x, u)).

    Each output component is fitted independently with ``p_plus`` plus-modes
    and ``p_minus`` minus-modes.  Deterministic for a fixed seed.
    """
    if not samples:
        raise ValueError("no samples")
    x0, u0 = samples[0][0]
    n = np.asarray(x0).size
    m = np.asarray(u0).size
    n_out = np.atleast_1d(np.asarray(samples[0][1])).size
    points = np.array([np.concatenate([np.ravel(x), np.ravel(u)])
                       for (x, u), _ in samples])
    targets = np.array([np.atleast_1d(np.asarray(y, dtype=float)) for _, y in samples])
    if not np.all(np.isfinite(points)) or not np.all(np.isfinite(targets)):
        raise ValueError("samples must be finite")
    needed = (p_plus + p_minus) * (n + m + 1)
    if len(samples) < needed:
        raise ValueError(f"need at least {needed} samples for this mode budget, "
                         f"got {len(samples)}")

    v = _design(points)
    rng = np.random.default_rng(seed)
    plus_sets, minus_sets = [], []
    report = FitReport(rms=[], max_err=[], iterations=[])
    for s in range(n_out):
        w_plus, w_minus, rms, iters, degen, history = _fit_component(
            v, targets[:, s], p_plus, p_minus, rng, tol, max_iter, n_restarts)
        plus_sets.append(AffineModeSet(a=w_plus[:, :n], b=w_plus[:, n:n + m],
                                       h=w_plus[:, n + m]))
        minus_sets.append(AffineModeSet(a=w_minus[:, :n], b=w_minus[:, n:n + m],
                                        h=w_minus[:, n + m]))
        fitted = _eval_scalar(w_plus, w_minus, v)
        report.rms.append(rms)
        report.max_err.append(float(np.max(np.abs(fitted - targets[:, s]))))
        report.iterations.append(iters)
        report.degenerate = report.degenerate or degen
        report.rms_history.append(history)
    f = MmpsFunction(plus=tuple(plus_sets), minus=tuple(minus_sets))
    return f, report


# ---------------------------------------------------------------------------
# Region fitting
# ---------------------------------------------------------------------------

def _facet_directions(n_facets: int, d: int, rng: np.random.Generator) -> np.ndarray:
    if d == 2:
        thetas = 2.0 * np.pi * (np.arange(n_facets) + 0.5) / n_facets
        return np.column_stack([np.cos(thetas), np.sin(thetas)])
    dirs = rng.standard_normal((n_facets, d))
    return dirs / np.linalg.norm(dirs, axis=1, keepdims=True)


def _polytope_region(center: np.ndarray, dirs: np.ndarray, offsets: np.ndarray,
                     n: int, m: int) -> MmpsRegion:
    rows = dirs / offsets[:, None]
    h = -(rows @ center)
    gamma_plus = AffineModeSet(a=rows[:, :n], b=rows[:, n:], h=h)
    gamma_minus = AffineModeSet(a=np.zeros((1, n)), b=np.zeros((1, m)), h=np.zeros(1))
    return MmpsRegion(gamma_plus=gamma_plus, gamma_minus=gamma_minus)


def _fit_polytope(inside: np.ndarray, outside: np.ndarray, n_facets: int,
                  mode: str, rng: np.random.Generator, n: int, m: int
                  ) -> tuple[MmpsRegion, RegionFitReport]:
    center = inside.mean(axis=0)
    dirs = _facet_directions(n_facets, n + m, rng)
    proj_in = (inside - center) @ dirs.T    # (N_in, n_facets)
    offsets = np.maximum(proj_in.max(axis=0), 1e-12)
    feasible = True
    if mode == "region" and outside.size:
        proj_out = (outside - center) @ dirs.T
        # Shrink facets greedily until every out-sample violates one of them.
        for _ in range(10 * len(outside)):
            g_out = (proj_out / offsets).max(axis=1)
            bad = np.flatnonzero(g_out <= 1.0)
            if bad.size == 0:
                break
            k = bad[0]
            best_facet, best_loss = -1, np.inf
            for i in range(n_facets):
                if proj_out[k, i] <= 1e-12:
                    continue
                new_offset = proj_out[k, i] / (1.0 + 1e-9)
                loss = np.count_nonzero(proj_in[:, i] > new_offset)
                if loss < best_loss:
                    best_loss, best_facet = loss, i
            if best_facet < 0:
                feasible = False  # out-sample sits at/behind the center
                break
            offsets[best_facet] = proj_out[k, best_facet] / (1.0 + 1e-9)
    region = _polytope_region(center, dirs, offsets, n, m)
    g_in = (proj_in / offsets).max(axis=1)
    coverage = float(np.mean(g_in <= 1.0 + 1e-12))
    false_inc = 0
    if outside.size:
        g_out = ((outside - center) @ dirs.T / offsets).max(axis=1)
        false_inc = int(np.count_nonzero(g_out <= 1.0))
    if mode == "region" and false_inc > 0:
        feasible = False
    return region, RegionFitReport(coverage=coverage, false_inclusions=false_inc,
                                   feasible=feasible)


def _kmeans(points: np.ndarray, k: int, rng: np.random.Generator,
            n_iter: int = 50) -> np.ndarray:
    centers = points[rng.choice(len(points), size=k, replace=False)]
    labels = np.zeros(len(points), dtype=int)
    for _ in range(n_iter):
        dist = np.linalg.norm(points[:, None, :] - centers[None], axis=2)
        new_labels = np.argmin(dist, axis=1)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for j in range(k):
            mask = labels == j
            if mask.any():
                centers[j] = points[mask].mean(axis=0)
    return labels


def _cluster_ellipsoid(points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Covariance-shaped ellipsoid scaled to contain all cluster points."""
    center = points.mean(axis=0)
    dv = points - center
    cov = dv.T @ dv / max(1, len(points))
    cov[np.diag_indices_from(cov)] += 1e-9 * (1.0 + np.trace(cov))
    q = np.linalg.inv(cov)
    q = 0.5 * (q + q.T)
    forms = np.einsum("ij,jk,ik->i", dv, q, dv)
    scale = float(forms.max())
    if scale <= 0.0:
        scale = 1.0
    return q / scale, center


def _fit_ellipsoids(inside: np.ndarray, outside: np.ndarray, n_e: int,
                    mode: str, rng: np.random.Generator, n: int, m: int
                    ) -> tuple[EllipsoidUnion, RegionFitReport]:
    labels = _kmeans(inside, n_e, rng) if n_e > 1 else np.zeros(len(inside), dtype=int)
    qs, cs = [], []
    for j in range(n_e):
        pts = inside[labels == j]
        if len(pts) == 0:
            pts = inside
        q, c = _cluster_ellipsoid(pts)
        if mode == "region" and outside.size:
            dv = outside - c
            forms = np.einsum("ij,jk,ik->i", dv, q, dv)
            worst = forms.min(initial=np.inf)
            if worst < 1.0:
                # Uniformly shrink until the closest out-sample is excluded.
                q = q / worst * (1.0 + 1e-9)
        qs.append(q)
        cs.append(c)
    union = EllipsoidUnion(q=tuple(qs), center=tuple(cs), n=n, m=m)

    def _member(points: np.ndarray) -> np.ndarray:
        vals = np.full(len(points), np.inf)
        for q, c in zip(qs, cs):
            dv = points - c
            vals = np.minimum(vals, np.einsum("ij,jk,ik->i", dv, q, dv))
        return vals <= 1.0 + 1e-12

    coverage = float(np.mean(_member(inside)))
    false_inc = int(np.count_nonzero(_member(outside))) if outside.size else 0
    feasible = not (mode == "region" and false_inc > 0)
    return union, RegionFitReport(coverage=coverage, false_inclusions=false_inc,
                                  feasible=feasible)


def fit_region(samples: np.ndarray, labels: np.ndarray, mode: str, shape: str,
               budget: int, seed: int, n: int | None = None, m: int = 0
               ) -> tuple[MmpsRegion | EllipsoidUnion, RegionFitReport]:
    """Fit a feasible-region approximation to labeled points.

    ``samples`` is (N, d) with boolean ``labels`` (True = inside).  ``mode``
    is "region" (no out-sample may be included) or "boundary" (fit the
    in-sample hull, out-samples may leak); ``shape`` is "polytopic" or
    "ellipsoidal"; ``budget`` is the facet or ellipsoid count.
    """
    samples = np.asarray(samples, dtype=float)
    labels = np.asarray(labels, dtype=bool)
    if samples.ndim != 2 or len(samples) != len(labels):
        raise ValueError("samples must be (N, d) with one label per row")
    inside = samples[labels]
    outside = samples[~labels]
    if len(inside) == 0:
        raise ValueError("no in-region samples")
    if mode not in ("region", "boundary"):
        raise ValueError(f"unknown mode {mode!r}")
    d = samples.shape[1]
    if n is None:
        n = d - m
    if n + m != d:
        raise ValueError("n + m must equal the sample dimension")
    rng = np.random.default_rng(seed)
    if shape == "polytopic":
        return _fit_polytope(inside, outside, budget, mode, rng, n, m)
    if shape == "ellipsoidal":
        return _fit_ellipsoids(inside, outside, budget, mode, rng, n, m)
    raise ValueError(f"unknown shape {shape!r}")
