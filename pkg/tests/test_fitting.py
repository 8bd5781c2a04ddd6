"""Tests for model and region fitting: exact recovery of representable
targets, reported error accounting, and region label separation."""

import numpy as np
import pytest

from hybridmpc.fitting import fit_mmps, fit_region
from hybridmpc.mmps import eval_ellipsoid_union, eval_mmps, eval_region_mmps
from hybridmpc.vehicle import (DEFAULT_PARAMS, INPUT_BOUNDS, STATE_BOUNDS,
                               Input, State, dynamics)


def _scalar_samples(fn, xs):
    return [((np.array([x]), np.zeros(0)), np.array([fn(x)])) for x in xs]


class TestFunctionFit:
    def test_abs_exact_recovery(self):
        xs = np.linspace(-2.0, 2.0, 40)
        f, report = fit_mmps(_scalar_samples(abs, xs), p_plus=2, p_minus=1, seed=0)
        assert report.rms[0] <= 1e-6
        for x in np.linspace(-3.0, 3.0, 31):
            assert eval_mmps(f, np.array([x]), np.zeros(0))[0] == pytest.approx(
                abs(x), abs=1e-6)

    def test_affine_exact_recovery(self):
        rng = np.random.default_rng(5)
        w = np.array([1.5, -0.7, 0.3])
        samples = []
        for _ in range(30):
            x = rng.uniform(-1, 1, size=2)
            u = rng.uniform(-1, 1, size=0)
            samples.append(((x, u), np.array([w[:2] @ x + w[2]])))
        f, report = fit_mmps(samples, p_plus=1, p_minus=1, seed=0)
        assert report.rms[0] <= 1e-8
        assert report.max_err[0] <= 1e-6

    def test_insufficient_modes_higher_error(self):
        xs = np.linspace(-2.0, 2.0, 60)
        _, rep_poor = fit_mmps(_scalar_samples(abs, xs), p_plus=1, p_minus=1, seed=0)
        _, rep_good = fit_mmps(_scalar_samples(abs, xs), p_plus=2, p_minus=1, seed=0)
        assert rep_good.rms[0] < rep_poor.rms[0]
        assert rep_poor.rms[0] > 1e-3

    def test_rms_history_monotone(self):
        xs = np.linspace(-2.0, 2.0, 80)
        samples = _scalar_samples(lambda x: max(x, -1.0) - max(x - 1.0, 0.0), xs)
        _, report = fit_mmps(samples, p_plus=2, p_minus=2, seed=1)
        hist = report.rms_history[0]
        assert hist == sorted(hist, reverse=True)

    def test_sample_count_precondition(self):
        xs = np.linspace(-1.0, 1.0, 5)
        with pytest.raises(ValueError):
            fit_mmps(_scalar_samples(abs, xs), p_plus=2, p_minus=2, seed=0)
        with pytest.raises(ValueError):
            fit_mmps([], p_plus=1, p_minus=1, seed=0)

    def test_nonfinite_rejected(self):
        samples = _scalar_samples(abs, np.linspace(-1, 1, 20))
        samples[3] = ((np.array([np.nan]), np.zeros(0)), np.array([0.0]))
        with pytest.raises(ValueError):
            fit_mmps(samples, p_plus=1, p_minus=1, seed=0)

    def test_deterministic_for_seed(self):
        xs = np.linspace(-2.0, 2.0, 50)
        samples = _scalar_samples(lambda x: x * abs(x), xs)
        f1, r1 = fit_mmps(samples, p_plus=2, p_minus=2, seed=7)
        f2, r2 = fit_mmps(samples, p_plus=2, p_minus=2, seed=7)
        assert r1.rms == r2.rms
        for ms1, ms2 in zip(f1.plus, f2.plus):
            assert np.array_equal(ms1.a, ms2.a)

    def _dynamics_samples(self, lo, hi, n_samples, seed):
        rng = np.random.default_rng(seed)
        samples = []
        for _ in range(n_samples):
            z = rng.uniform(lo, hi)
            deriv = dynamics(State(*z[:3]), Input(*z[3:]), DEFAULT_PARAMS)
            samples.append(((z[:3], z[3:]), np.array(deriv)))
        return samples

    def test_dynamics_fit_full_box_baseline(self):
        # Regression baseline: over the full state/input box the plant is
        # strongly nonlinear and a 4+4 mode budget lands near 13-16% of the
        # sampled output range per component.
        lo = np.array([b[0] for b in STATE_BOUNDS] + [b[0] for b in INPUT_BOUNDS])
        hi = np.array([b[1] for b in STATE_BOUNDS] + [b[1] for b in INPUT_BOUNDS])
        samples = self._dynamics_samples(lo, hi, 600, seed=11)
        _, report = fit_mmps(samples, p_plus=4, p_minus=4, seed=0)
        targets = np.array([y for _, y in samples])
        for s in range(3):
            span = targets[:, s].max() - targets[:, s].min()
            assert report.rms[s] <= 0.20 * span

    def test_dynamics_fit_tight_box(self):
        # In a maneuver-sized operating box (the regime the controllers fit
        # over) the default 2+1 budget must reach 5% of the output range.
        lo = np.array([33.0, -1.5, -0.3, -1500.0, -1500.0, -0.06])
        hi = np.array([38.0, 1.5, 0.3, 0.0, 1500.0, 0.06])
        samples = self._dynamics_samples(lo, hi, 600, seed=12)
        _, report = fit_mmps(samples, p_plus=2, p_minus=1, seed=0)
        targets = np.array([y for _, y in samples])
        for s in range(3):
            span = targets[:, s].max() - targets[:, s].min()
            assert report.rms[s] <= 0.05 * span


class TestRegionFit:
    def _disc_data(self, n_samples, radius, seed):
        rng = np.random.default_rng(seed)
        pts = rng.uniform(-2.0, 2.0, size=(n_samples, 2))
        labels = np.linalg.norm(pts, axis=1) <= radius
        return pts, labels

    def test_polytope_region_no_false_inclusions(self):
        pts, labels = self._disc_data(800, 1.2, seed=0)
        region, report = fit_region(pts, labels, "region", "polytopic",
                                    budget=10, seed=0)
        assert report.false_inclusions == 0
        assert report.feasible
        for p, inside in zip(pts, labels):
            if not inside:
                assert eval_region_mmps(region, p, np.zeros(0)) > 1.0

    def test_boundary_covers_all_in_samples(self):
        pts, labels = self._disc_data(600, 1.0, seed=1)
        region, report = fit_region(pts, labels, "boundary", "polytopic",
                                    budget=8, seed=0)
        assert report.coverage == pytest.approx(1.0)
        for p in pts[labels]:
            assert eval_region_mmps(region, p, np.zeros(0)) <= 1.0 + 1e-9

    def test_ellipsoid_region_no_false_inclusions(self):
        pts, labels = self._disc_data(800, 1.2, seed=2)
        union, report = fit_region(pts, labels, "region", "ellipsoidal",
                                   budget=2, seed=0)
        assert report.false_inclusions == 0
        for p, inside in zip(pts, labels):
            if not inside:
                assert eval_ellipsoid_union(union, p, np.zeros(0)) > 1.0

    def test_ellipsoid_boundary_coverage(self):
        pts, labels = self._disc_data(600, 1.0, seed=3)
        union, report = fit_region(pts, labels, "boundary", "ellipsoidal",
                                   budget=1, seed=0)
        assert report.coverage == pytest.approx(1.0)

    def test_two_cluster_union_beats_single(self):
        rng = np.random.default_rng(4)
        a = rng.normal(scale=0.3, size=(150, 2)) + np.array([-2.0, 0.0])
        b = rng.normal(scale=0.3, size=(150, 2)) + np.array([2.0, 0.0])
        inside = np.vstack([a, b])
        outside = rng.uniform(-0.5, 0.5, size=(100, 2))  # gap between clusters
        pts = np.vstack([inside, outside])
        labels = np.array([True] * 300 + [False] * 100)
        union2, rep2 = fit_region(pts, labels, "region", "ellipsoidal",
                                  budget=2, seed=0)
        _, rep1 = fit_region(pts, labels, "region", "ellipsoidal",
                             budget=1, seed=0)
        assert rep2.coverage > rep1.coverage
        assert rep2.false_inclusions == 0

    def test_arg_validation(self):
        pts, labels = self._disc_data(50, 1.0, seed=5)
        with pytest.raises(ValueError):
            fit_region(pts, labels, "bogus", "polytopic", budget=4, seed=0)
        with pytest.raises(ValueError):
            fit_region(pts, labels, "region", "bogus", budget=4, seed=0)
        with pytest.raises(ValueError):
            fit_region(pts, np.zeros(50, dtype=bool), "region", "polytopic",
                       budget=4, seed=0)
        with pytest.raises(ValueError):
            fit_region(pts, labels[:-1], "region", "polytopic", budget=4, seed=0)
