"""Benchmark orchestration: controller matrix, tracking/time metrics, and
the line-oriented configuration format.

Controller labels follow the model/constraint abbreviation convention:
NL-1 and NL-5 for the exact-model baselines, and "<model>--<CONSTRAINT>"
(for example "T--BMP") for the mixed-integer controllers, where the model
letter is the fitting-sample preset (R: domain-uniform random, S:
steady-state-initialized rollouts, T: randomly-initialized rollouts) and
the constraint tag combines region/boundary fitting with polytopic or
ellipsoidal shape (RMP, BMP, REL, BEL).
"""

from __future__ import annotations

import configparser
import hashlib
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .controllers import (CONSTRAINT_FORMS, MODEL_PRESETS, HybridController,
                          NlpController, OperatingBox, box_from_reference,
                          default_weights, fit_constraint_region, fit_model,
                          inflate_region)
from .mmps import load_model, load_region
from .simloop import (ClosedLoopTrace, Reference, Scenario, make_reference,
                      run_closed_loop)
from .solver import SolveOptions
from .vehicle import STATE_BOUNDS, VehicleParams

__all__ = ["ControllerSpec", "Metrics", "CellResult", "compute_metrics",
           "build_controller", "run_cell", "run_matrix", "config_hash",
           "load_config", "BenchConfig"]


@dataclass(frozen=True)
class ControllerSpec:
    """One controller column of the benchmark matrix."""

    kind: str                          # nlp_warm | nlp_multi | hybrid
    model_preset: str | None = None    # R | S | T (hybrid)
    constraint_form: str | None = None  # rmp | bmp | rel | bel (hybrid)
    np_steps: int = 10
    model_file: str | None = None      # coefficient file overrides the preset
    constraint_file: str | None = None
    seed: int = 0
    max_nodes: int = 4
    time_limit: float = 10.0
    gap_tol: float = 0.02
    region_margin: float = 1.05        # inflation factor on fitted regions

    def __post_init__(self):
        if self.kind not in ("nlp_warm", "nlp_multi", "hybrid"):
            raise ValueError(f"unknown controller kind {self.kind!r}")
        if self.kind == "hybrid":
            if self.model_preset is None and self.model_file is None:
                raise ValueError("hybrid controllers need a model preset or file")
            if self.constraint_form is None and self.constraint_file is None:
                raise ValueError("hybrid controllers need a constraint form or file")
            if (self.model_preset is not None
                    and self.model_preset not in MODEL_PRESETS):
                raise ValueError(f"unknown model preset {self.model_preset!r}")
            if (self.constraint_form is not None
                    and self.constraint_form not in CONSTRAINT_FORMS):
                raise ValueError(f"unknown constraint form {self.constraint_form!r}")

    @property
    def label(self) -> str:
        if self.kind == "nlp_warm":
            return "NL-1"
        if self.kind == "nlp_multi":
            return "NL-5"
        model = self.model_preset or "F"   # F: from file
        form = (self.constraint_form or "file").upper()
        return f"{model}--{form}"


@dataclass
class Metrics:
    mean_rel_err: float       # percent
    max_rel_err: float
    mean_wall_time: float     # solve seconds per control step
    max_wall_time: float
    mean_total_time: float    # encode + solve seconds per control step
    fallback_count: int
    max_gg: float
    max_kamm: float
    failed: bool = False

    def __post_init__(self):
        if self.max_rel_err + 1e-12 < self.mean_rel_err:
            raise ValueError("max relative error below the mean")
        if self.max_wall_time + 1e-12 < self.mean_wall_time:
            raise ValueError("max wall time below the mean")
        if self.mean_rel_err < 0.0:
            raise ValueError("percentages must be non-negative")


def state_weights() -> np.ndarray:
    """Diagonal normalization: one over each state's admissible range."""
    return np.array([1.0 / (hi - lo) for lo, hi in STATE_BOUNDS])


def compute_metrics(trace: ClosedLoopTrace,
                    weights: np.ndarray | None = None) -> Metrics:
    """Relative tracking error and per-step timing statistics of a trace.

    Per-step error is the weighted l1 state deviation divided by the
    time-averaged weighted l1 reference magnitude (a per-step denominator
    would blow up wherever the reference crosses zero), in percent.
    """
    if not trace.records:
        raise ValueError("empty trace")
    w = state_weights() if weights is None else np.asarray(weights, dtype=float)
    err = np.abs(trace.states - trace.ref_states) @ w
    denom = float(np.mean(np.abs(trace.ref_states) @ w))
    if denom <= 0.0:
        raise ValueError("reference magnitude is zero; relative error undefined")
    rel = err / denom * 100.0
    solve_rows = [rec for rec in trace.records if rec.inp is not None]
    walls = np.array([rec.wall_time for rec in solve_rows]) if solve_rows else np.zeros(1)
    totals = (np.array([rec.wall_time + rec.encode_time for rec in solve_rows])
              if solve_rows else np.zeros(1))
    return Metrics(
        mean_rel_err=float(rel.mean()), max_rel_err=float(rel.max()),
        mean_wall_time=float(walls.mean()), max_wall_time=float(walls.max()),
        mean_total_time=float(totals.mean()),
        fallback_count=sum(rec.fallback for rec in solve_rows),
        max_gg=float(max((rec.gg for rec in solve_rows), default=0.0)),
        max_kamm=float(max((max(rec.kamm_front, rec.kamm_rear)
                            for rec in solve_rows), default=0.0)),
        failed=trace.failed)


def build_controller(spec: ControllerSpec, scenario: Scenario,
                     params: VehicleParams, reference: Reference | None = None):
    """Instantiate a controller for a scenario (fits hybrid artifacts)."""
    if reference is None:
        scale = (scenario.steering_scale
                 if scenario.kind == "handling_limits" else 1.0)
        reference = make_reference(scenario.maneuver, params,
                                   scenario.duration, steering_scale=scale)
    steps = round(scenario.duration / reference.tsc)
    box = box_from_reference(reference, steps)
    theta_x, theta_u = default_weights()
    if spec.kind in ("nlp_warm", "nlp_multi"):
        return NlpController(params, box, spec.np_steps, theta_x, theta_u,
                             multi_start=spec.kind == "nlp_multi",
                             seed=spec.seed)
    if spec.model_file is not None:
        model = load_model(spec.model_file)
    else:
        model, _, _ = fit_model(spec.model_preset, box, params, seed=spec.seed)
    if spec.constraint_file is not None:
        region = load_region(spec.constraint_file)
    else:
        region = fit_constraint_region(spec.constraint_form, box, params,
                                       seed=spec.seed)
        region = inflate_region(region, spec.region_margin)
    opts = SolveOptions(time_limit=spec.time_limit, gap_tol=spec.gap_tol,
                        max_nodes=spec.max_nodes)
    return HybridController(model, region, box, spec.np_steps, theta_x,
                            theta_u, solve_options=opts)


def config_hash(spec: ControllerSpec, scenario: Scenario, seed: int) -> str:
    """Order-insensitive hash over every semantic configuration field."""
    payload = {"controller": asdict(spec), "scenario": asdict(scenario),
               "seed": seed}
    text = json.dumps(payload, sort_keys=True, default=str)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


@dataclass
class CellResult:
    scenario: Scenario
    controller: ControllerSpec
    metrics: Metrics | None
    config_hash: str
    seed: int
    error: str | None = None   # populated when the cell raised

    @property
    def label(self) -> str:
        return self.controller.label


def run_cell(spec: ControllerSpec, scenario: Scenario, params: VehicleParams,
             seed: int) -> CellResult:
    """One (controller, scenario) cell; failures are recorded, not raised."""
    digest = config_hash(spec, scenario, seed)
    try:
        scenario = Scenario(**{**asdict(scenario),
                               "np_steps": spec.np_steps, "seed": seed})
        controller = build_controller(spec, scenario, params)
        trace = run_closed_loop(controller, scenario, params)
        return CellResult(scenario=scenario, controller=spec,
                          metrics=compute_metrics(trace), config_hash=digest,
                          seed=seed)
    except Exception as exc:  # cell isolation: a broken cell must not stop the run
        return CellResult(scenario=scenario, controller=spec, metrics=None,
                          config_hash=digest, seed=seed, error=str(exc))


def run_matrix(scenarios: list[Scenario], controllers: list[ControllerSpec],
               params: VehicleParams, seed: int = 0,
               parallelism: int = 1) -> list[CellResult]:
    """Run every scenario x controller cell, optionally on a process pool.

    Results come back in deterministic (scenario-major) order regardless of
    the pool size; per-cell wall times are measured inside each cell.
    """
    cells = [(spec, scenario) for scenario in scenarios for spec in controllers]
    if parallelism <= 1:
        return [run_cell(spec, scenario, params, seed)
                for spec, scenario in cells]
    with ProcessPoolExecutor(max_workers=parallelism) as pool:
        futures = [pool.submit(run_cell, spec, scenario, params, seed)
                   for spec, scenario in cells]
        return [f.result() for f in futures]


@dataclass
class BenchConfig:
    """Parsed benchmark configuration (see ``load_config``)."""

    params: VehicleParams
    scenarios: list[Scenario]
    controllers: list[ControllerSpec]
    seed: int = 0
    parallelism: int = 1
    out_dir: str = "bench_out"


def _parse_controller(token: str, np_steps: int, seed: int,
                      solver: dict[str, str]) -> ControllerSpec:
    common = dict(np_steps=np_steps, seed=seed,
                  max_nodes=int(solver.get("max_nodes", 4)),
                  time_limit=float(solver.get("time_limit", 10.0)),
                  gap_tol=float(solver.get("gap_tol", 0.02)),
                  region_margin=float(solver.get("region_margin", 1.05)))
    if token == "nlp_warm" or token == "NL-1":
        return ControllerSpec(kind="nlp_warm", np_steps=np_steps, seed=seed)
    if token == "nlp_multi" or token == "NL-5":
        return ControllerSpec(kind="nlp_multi", np_steps=np_steps, seed=seed)
    if "--" in token:
        model, form = token.split("--", 1)
        return ControllerSpec(kind="hybrid", model_preset=model,
                              constraint_form=form.lower(), **common)
    raise ValueError(f"cannot parse controller token {token!r}")


def load_config(path: str | Path) -> BenchConfig:
    """Read a benchmark configuration file.

    Line-oriented ``key = value`` entries under ``[vehicle]``, ``[solver]``,
    and ``[matrix]`` sections; list-valued matrix keys are whitespace
    separated.  Unknown vehicle keys are rejected.
    """
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    read = cp.read(path)
    if not read:
        raise FileNotFoundError(path)
    vehicle_kwargs = {k: float(v) for k, v in cp.items("vehicle")} \
        if cp.has_section("vehicle") else {}
    params = VehicleParams(**vehicle_kwargs)
    solver = dict(cp.items("solver")) if cp.has_section("solver") else {}
    matrix = dict(cp.items("matrix")) if cp.has_section("matrix") else {}
    seed = int(matrix.get("seed", 0))
    kinds = matrix.get("scenarios", "ideal").split()
    maneuvers = [int(v) for v in matrix.get("maneuvers", "1").split()]
    np_list = [int(v) for v in matrix.get("np", "10").split()]
    mus = [float(v) for v in matrix.get("mus", "1.0").split()]
    scales = [float(v) for v in matrix.get("steering_scales", "1.0").split()]
    scenarios = []
    for kind in kinds:
        for maneuver in maneuvers:
            if kind == "friction_offset":
                for mu in mus:
                    scenarios.append(Scenario(kind=kind, maneuver=maneuver, mu=mu))
            elif kind == "handling_limits":
                for scale in scales:
                    scenarios.append(Scenario(kind=kind, maneuver=maneuver,
                                              steering_scale=scale,
                                              mu=float(matrix.get("mu", 1.0))))
            else:
                scenarios.append(Scenario(kind=kind, maneuver=maneuver))
    controllers = []
    for np_steps in np_list:
        for token in matrix.get("controllers", "NL-1").split():
            controllers.append(_parse_controller(token, np_steps, seed, solver))
    return BenchConfig(params=params, scenarios=scenarios,
                       controllers=controllers, seed=seed,
                       parallelism=int(matrix.get("parallelism", 1)),
                       out_dir=matrix.get("out_dir", "bench_out"))
