"""Tests for the results CSV round trip and report rendering."""

import numpy as np
import pytest

from hybridmpc.bench import CellResult, ControllerSpec, Metrics, config_hash
from hybridmpc.report import emit_report, results_from_csv, results_to_csv
from hybridmpc.simloop import ClosedLoopTrace, Scenario, StepRecord


def make_results():
    out = []
    for kind, np_steps, err, wall in (("nlp_warm", 5, 1.5, 0.2),
                                      ("nlp_multi", 5, 0.8, 1.1),
                                      ("hybrid", 10, 6.9, 0.9)):
        if kind == "hybrid":
            spec = ControllerSpec(kind=kind, model_preset="T",
                                  constraint_form="bmp", np_steps=np_steps)
        else:
            spec = ControllerSpec(kind=kind, np_steps=np_steps)
        for mu in (0.7, 1.0):
            scenario = Scenario(kind="friction_offset", maneuver=2,
                                np_steps=np_steps, mu=mu)
            metrics = Metrics(mean_rel_err=err / mu, max_rel_err=3.0 * err / mu,
                              mean_wall_time=wall, max_wall_time=2.0 * wall,
                              mean_total_time=wall * 1.1, fallback_count=0,
                              max_gg=0.7, max_kamm=0.8)
            out.append(CellResult(scenario=scenario, controller=spec,
                                  metrics=metrics,
                                  config_hash=config_hash(spec, scenario, 0),
                                  seed=0))
    failed_spec = ControllerSpec(kind="nlp_warm", np_steps=5)
    failed_scenario = Scenario(kind="ideal", maneuver=3, np_steps=5)
    out.append(CellResult(scenario=failed_scenario, controller=failed_spec,
                          metrics=None,
                          config_hash=config_hash(failed_spec, failed_scenario, 0),
                          seed=0, error="synthetic failure"))
    return out


def make_trace():
    recs = []
    for k in range(4):
        recs.append(StepRecord(
            t=0.05 * k, state=np.array([36.0 + 0.1 * k, 0.0, 0.0]),
            inp=np.zeros(3) if k < 3 else None,
            ref_state=np.array([36.0, 0.0, 0.0]), status="optimal",
            objective=0.0, wall_time=0.1, encode_time=0.0, gg=0.1,
            kamm_front=0.1, kamm_rear=0.1, beta_env=0.0, r_env=0.5,
            mu_plant=1.0))
    return ClosedLoopTrace(scenario=Scenario(), records=recs)


class TestResultsCsv:
    def test_round_trip(self, tmp_path):
        results = make_results()
        path = tmp_path / "results.csv"
        results_to_csv(results, path)
        back = results_from_csv(path)
        assert len(back) == len(results)
        for a, b in zip(results, back):
            assert a.label == b.label
            assert a.controller.kind == b.controller.kind
            assert a.controller.np_steps == b.controller.np_steps
            assert a.scenario.kind == b.scenario.kind
            assert a.scenario.mu == b.scenario.mu
            assert a.config_hash == b.config_hash
            assert a.error == b.error
            if a.metrics is None:
                assert b.metrics is None
            else:
                assert b.metrics.mean_rel_err == a.metrics.mean_rel_err
                assert b.metrics.max_wall_time == a.metrics.max_wall_time
                assert b.metrics.failed == a.metrics.failed

    def test_bad_header(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("x,y\n1,2\n")
        with pytest.raises(ValueError):
            results_from_csv(path)


class TestEmitReport:
    def test_writes_all_figures(self, tmp_path):
        written = emit_report(make_results(), tmp_path,
                              traces={"NL-1": make_trace()})
        names = {p.name for p in written}
        assert "results.csv" in names
        for fig in ("fig_error_vs_np", "fig_error_vs_mu", "fig_time_bars",
                    "fig_scatter", "fig_error_trajectory"):
            assert f"{fig}.csv" in names
            assert f"{fig}.svg" in names

    def test_no_mu_cells_skips_mu_figure(self, tmp_path):
        results = [c for c in make_results()
                   if c.scenario.kind != "friction_offset" and c.metrics]
        # Only the failed cell remains without metrics; add one ideal cell.
        spec = ControllerSpec(kind="nlp_warm", np_steps=5)
        scenario = Scenario(kind="ideal", maneuver=1, np_steps=5)
        results.append(CellResult(
            scenario=scenario, controller=spec,
            metrics=Metrics(mean_rel_err=1.0, max_rel_err=2.0,
                            mean_wall_time=0.1, max_wall_time=0.2,
                            mean_total_time=0.1, fallback_count=0,
                            max_gg=0.5, max_kamm=0.5),
            config_hash=config_hash(spec, scenario, 0), seed=0))
        written = emit_report(results, tmp_path)
        names = {p.name for p in written}
        assert "fig_error_vs_mu.csv" not in names
        assert "fig_error_vs_np.svg" in names

    def test_deterministic_output(self, tmp_path):
        results = make_results()
        out1 = tmp_path / "a"
        out2 = tmp_path / "b"
        emit_report(results, out1)
        emit_report(results, out2)
        for name in ("results.csv", "fig_scatter.svg", "fig_time_bars.svg"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes()

    def test_empty_results_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            emit_report([], tmp_path)
