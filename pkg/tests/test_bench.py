"""Tests for benchmark metrics, controller specs, cell orchestration, and
the configuration file format."""

import numpy as np
import pytest

from hybridmpc.bench import (CellResult, ControllerSpec, Metrics,
                             _parse_controller, compute_metrics, config_hash,
                             load_config, run_cell, run_matrix, state_weights)
from hybridmpc.simloop import ClosedLoopTrace, Scenario, StepRecord
from hybridmpc.vehicle import DEFAULT_PARAMS, STATE_BOUNDS


def record(t, state, ref, inp=(0.0, 0.0, 0.0), wall=0.0, encode=0.0,
           gg=0.0, fallback=False):
    return StepRecord(t=t, state=np.asarray(state, dtype=float),
                      inp=None if inp is None else np.asarray(inp, dtype=float),
                      ref_state=np.asarray(ref, dtype=float),
                      status="terminal" if inp is None else "optimal",
                      objective=None, wall_time=wall, encode_time=encode,
                      gg=gg, kamm_front=0.0, kamm_rear=0.0, beta_env=0.0,
                      r_env=0.0, mu_plant=1.0, fallback=fallback)


class TestMetrics:
    def test_zero_error(self):
        ref = [36.0, 0.5, 0.1]
        trace = ClosedLoopTrace(scenario=Scenario(), records=[
            record(0.0, ref, ref), record(0.05, ref, ref),
            record(0.1, ref, ref, inp=None)])
        m = compute_metrics(trace)
        assert m.mean_rel_err == 0.0
        assert m.max_rel_err == 0.0
        assert m.fallback_count == 0
        assert not m.failed

    def test_hand_computed_three_step(self):
        # Ranges 45, 20, 1.2 give weights (1/45, 1/20, 1/1.2).  Constant
        # reference (36, 0, 0): denominator 36/45 = 0.8.  Deviation
        # (0.9, 0.2, 0.12) weighs to 0.13, so each deviated row is
        # 0.13 / 0.8 * 100 = 16.25%.
        assert state_weights() == pytest.approx([1.0 / 45.0, 1.0 / 20.0,
                                                 1.0 / 1.2])
        ref = [36.0, 0.0, 0.0]
        dev = [36.9, 0.2, 0.12]
        trace = ClosedLoopTrace(scenario=Scenario(), records=[
            record(0.0, dev, ref, wall=0.2, encode=0.1, gg=0.3),
            record(0.05, dev, ref, wall=0.4, encode=0.1, gg=0.6,
                   fallback=True),
            record(0.1, ref, ref, inp=None)])
        m = compute_metrics(trace)
        assert m.max_rel_err == pytest.approx(16.25)
        assert m.mean_rel_err == pytest.approx(2.0 * 16.25 / 3.0)
        assert m.mean_wall_time == pytest.approx(0.3)
        assert m.max_wall_time == pytest.approx(0.4)
        assert m.mean_total_time == pytest.approx(0.4)
        assert m.fallback_count == 1
        assert m.max_gg == pytest.approx(0.6)

    def test_zero_reference_rejected(self):
        zero = [0.0, 0.0, 0.0]
        trace = ClosedLoopTrace(scenario=Scenario(),
                                records=[record(0.0, zero, zero)])
        with pytest.raises(ValueError):
            compute_metrics(trace)

    def test_empty_trace_rejected(self):
        with pytest.raises(ValueError):
            compute_metrics(ClosedLoopTrace(scenario=Scenario()))

    def test_invariants_enforced(self):
        with pytest.raises(ValueError):
            Metrics(mean_rel_err=5.0, max_rel_err=1.0, mean_wall_time=0.0,
                    max_wall_time=0.0, mean_total_time=0.0, fallback_count=0,
                    max_gg=0.0, max_kamm=0.0)
        with pytest.raises(ValueError):
            Metrics(mean_rel_err=1.0, max_rel_err=2.0, mean_wall_time=0.5,
                    max_wall_time=0.1, mean_total_time=0.5, fallback_count=0,
                    max_gg=0.0, max_kamm=0.0)
        with pytest.raises(ValueError):
            Metrics(mean_rel_err=-1.0, max_rel_err=2.0, mean_wall_time=0.0,
                    max_wall_time=0.0, mean_total_time=0.0, fallback_count=0,
                    max_gg=0.0, max_kamm=0.0)


class TestControllerSpec:
    def test_labels(self):
        assert ControllerSpec(kind="nlp_warm").label == "NL-1"
        assert ControllerSpec(kind="nlp_multi").label == "NL-5"
        spec = ControllerSpec(kind="hybrid", model_preset="T",
                              constraint_form="bmp")
        assert spec.label == "T--BMP"
        assert ControllerSpec(kind="hybrid", model_preset="R",
                              constraint_form="rel").label == "R--REL"

    def test_validation(self):
        with pytest.raises(ValueError):
            ControllerSpec(kind="bogus")
        with pytest.raises(ValueError):
            ControllerSpec(kind="hybrid")
        with pytest.raises(ValueError):
            ControllerSpec(kind="hybrid", model_preset="X",
                           constraint_form="bmp")
        with pytest.raises(ValueError):
            ControllerSpec(kind="hybrid", model_preset="T",
                           constraint_form="xyz")

    def test_parse_tokens(self):
        solver = {"max_nodes": "8", "time_limit": "5.0"}
        assert _parse_controller("NL-1", 10, 0, solver).kind == "nlp_warm"
        assert _parse_controller("nlp_multi", 10, 0, solver).kind == "nlp_multi"
        spec = _parse_controller("S--REL", 5, 3, solver)
        assert spec.kind == "hybrid"
        assert spec.model_preset == "S"
        assert spec.constraint_form == "rel"
        assert spec.np_steps == 5
        assert spec.seed == 3
        assert spec.max_nodes == 8
        assert spec.time_limit == 5.0
        with pytest.raises(ValueError):
            _parse_controller("whatever", 10, 0, solver)


class TestConfigHash:
    def test_stable_and_sensitive(self):
        spec = ControllerSpec(kind="nlp_warm")
        scenario = Scenario()
        h = config_hash(spec, scenario, seed=0)
        assert h == config_hash(spec, scenario, seed=0)
        assert len(h) == 16
        assert h != config_hash(spec, scenario, seed=1)
        assert h != config_hash(spec, Scenario(maneuver=2), seed=0)
        assert h != config_hash(ControllerSpec(kind="nlp_multi"), scenario, 0)


class TestCells:
    SPEC = ControllerSpec(kind="nlp_warm", np_steps=2)
    SCENARIO = Scenario(kind="ideal", maneuver=1, np_steps=2)

    def test_run_cell(self):
        cell = run_cell(self.SPEC, self.SCENARIO, DEFAULT_PARAMS, seed=0)
        assert cell.error is None
        assert cell.metrics is not None
        assert cell.metrics.mean_rel_err < 5.0
        assert cell.label == "NL-1"
        # The cell rebuilds the scenario with the spec's horizon and seed.
        assert cell.scenario.np_steps == 2

    def test_matrix_matches_direct_cell(self):
        direct = run_cell(self.SPEC, self.SCENARIO, DEFAULT_PARAMS, seed=0)
        matrix = run_matrix([self.SCENARIO], [self.SPEC], DEFAULT_PARAMS,
                            seed=0)
        assert len(matrix) == 1
        assert matrix[0].config_hash == direct.config_hash
        assert matrix[0].metrics.mean_rel_err == pytest.approx(
            direct.metrics.mean_rel_err)
        assert matrix[0].metrics.max_gg == direct.metrics.max_gg

    def test_cell_error_captured(self):
        bad = Scenario(kind="ideal", maneuver=1,
                       reference_file="/nonexistent/ref.csv")
        cell = run_cell(self.SPEC, bad, DEFAULT_PARAMS, seed=0)
        assert cell.error is not None
        assert cell.metrics is None


class TestConfigFile:
    CONFIG = """\
[vehicle]
m = 1970.0

[solver]
max_nodes = 6
gap_tol = 0.05

[matrix]
scenarios = ideal friction_offset
maneuvers = 1 2
np = 5 10
controllers = NL-1 T--BMP
mus = 0.7 1.0
seed = 3
parallelism = 2
out_dir = out_test
"""

    def test_load_config(self, tmp_path):
        path = tmp_path / "bench.ini"
        path.write_text(self.CONFIG)
        cfg = load_config(path)
        assert cfg.params.m == 1970.0
        assert cfg.seed == 3
        assert cfg.parallelism == 2
        assert cfg.out_dir == "out_test"
        # ideal: 2 maneuvers; friction_offset: 2 maneuvers x 2 mus.
        assert len(cfg.scenarios) == 6
        kinds = {s.kind for s in cfg.scenarios}
        assert kinds == {"ideal", "friction_offset"}
        # 2 horizons x 2 controller tokens.
        assert len(cfg.controllers) == 4
        hybrid = [c for c in cfg.controllers if c.kind == "hybrid"]
        assert all(c.max_nodes == 6 and c.gap_tol == 0.05 for c in hybrid)
        assert sorted({c.np_steps for c in cfg.controllers}) == [5, 10]

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_config(tmp_path / "nope.ini")

    def test_unknown_vehicle_key(self, tmp_path):
        path = tmp_path / "bench.ini"
        path.write_text("[vehicle]\nbogus = 1.0\n")
        with pytest.raises(TypeError):
            load_config(path)
