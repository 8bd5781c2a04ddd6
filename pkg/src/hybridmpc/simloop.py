"""Receding-horizon closed-loop executor.

Runs a controller against the nonlinear plant: solve the horizon problem,
apply the first input, integrate the plant at the fine sampling time under
the scenario's road-friction schedule, log a record per control step.
Reference trajectories come from parametric maneuver generators (open-loop
simulation of steering profiles, so they are dynamically consistent) or
from a CSV file.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

import numpy as np

from .vehicle import (Input, State, VehicleParams, beta_r_envelope, dynamics,
                      gg_value, kamm_value, normal_loads, step_rk4, tire_states)

__all__ = [
    "TSM", "TSC", "Scenario", "StepRecord", "ClosedLoopTrace", "Reference",
    "Controller", "PlanResult", "ReplayController", "make_reference",
    "load_reference_csv", "save_reference_csv", "apply_friction_schedule",
    "scale_steering", "run_closed_loop", "save_trace_csv", "load_trace_csv",
    "MANEUVERS",
]

TSM = 0.01   # plant integration step [s]
TSC = 0.05   # control sampling time [s]
_SUBSTEPS = round(TSC / TSM)

SCENARIO_KINDS = ("ideal", "friction_offset", "friction_disturbance",
                  "handling_limits")


@dataclass(frozen=True)
class Scenario:
    """One closed-loop experiment: maneuver, friction schedule, horizon."""

    kind: str = "ideal"
    maneuver: int = 1
    np_steps: int = 10
    mu: float = 1.0               # plant friction for the offset kind
    steering_scale: float = 1.0   # handling-limits kind only
    duration: float = 2.0
    seed: int = 0
    reference_file: str | None = None

    def __post_init__(self):
        if self.kind not in SCENARIO_KINDS:
            raise ValueError(f"unknown scenario kind {self.kind!r}")
        if not (0.0 < self.mu <= 1.1):
            raise ValueError("mu must lie in (0, 1.1]")
        if self.duration <= 0.0:
            raise ValueError("duration must be strictly positive")
        if self.steering_scale < 0.0:
            raise ValueError("steering_scale must be non-negative")

    def mu_at(self, t: float) -> float:
        """Plant road friction relative to the prediction nominal."""
        if self.kind == "friction_offset":
            return self.mu
        if self.kind == "friction_disturbance":
            return 0.4 if 0.5 <= t < 1.0 else 1.0
        if self.kind == "handling_limits":
            return self.mu
        return 1.0


def apply_friction_schedule(scenario: Scenario):
    """Road-friction schedule of a scenario as a callable of time."""
    return scenario.mu_at


@dataclass
class PlanResult:
    """One horizon solve: the planned input sequence and solver bookkeeping."""

    inputs: np.ndarray          # (Np, m)
    status: str
    objective: float | None
    wall_time: float            # solve time [s]
    fallback: bool = False
    encode_time: float = 0.0    # problem-construction time [s], hybrid only


class Controller(Protocol):
    def plan(self, x0: np.ndarray, x_ref: np.ndarray) -> PlanResult:
        """Solve the horizon problem from state x0 tracking x_ref (Np, n)."""
        ...

    def reset(self) -> None:
        ...


@dataclass
class Reference:
    """Reference states/inputs on the control grid; row k is time k * tsc.

    ``states[0]`` is the initial state; ``inputs[k]`` is held over
    [k*tsc, (k+1)*tsc).  The trailing rows pad past the maneuver end by
    holding the last state so horizon lookahead always has data.
    """

    tsc: float
    states: np.ndarray   # (K+1, 3)
    inputs: np.ndarray   # (K+1, 3)

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=float)
        self.inputs = np.asarray(self.inputs, dtype=float)
        if self.states.shape != self.inputs.shape or self.states.ndim != 2:
            raise ValueError("states and inputs must be matching (K+1, 3) arrays")

    @property
    def steps(self) -> int:
        return self.states.shape[0] - 1

    def window(self, k: int, np_steps: int) -> np.ndarray:
        """Reference states for a horizon starting at step k (pads by holding)."""
        rows = [self.states[min(k + 1 + j, self.steps)] for j in range(np_steps)]
        return np.array(rows)

    def input_window(self, k: int, np_steps: int) -> np.ndarray:
        rows = [self.inputs[min(k + j, self.steps)] for j in range(np_steps)]
        return np.array(rows)


# Parametric maneuver definitions.  Speeds are the nominal averages [km/h];
# target_gg is the peak normalized acceleration the steering amplitude is
# calibrated against (bands: 1: 0-0.5, 2: 0-0.6, 3: 0.2-0.8, 4: 0.3-0.7,
# 5: 0.2-0.8).
MANEUVERS = {
    1: {"name": "safe lane change", "vx_kmh": 130.0, "profile": "lane_change",
        "target_gg": 0.45},
    2: {"name": "aggressive lane change", "vx_kmh": 128.0, "profile": "lane_change",
        "target_gg": 0.57},
    3: {"name": "drift cornering", "vx_kmh": 73.0, "profile": "corner",
        "target_gg": 0.70},
    4: {"name": "high-speed cornering", "vx_kmh": 154.0, "profile": "corner",
        "target_gg": 0.60},
    5: {"name": "low-speed cornering", "vx_kmh": 75.0, "profile": "corner",
        "target_gg": 0.70},
}


def _steer_profile(profile: str, amplitude: float, duration: float):
    if profile == "lane_change":
        # Single full sine period: steer out, back, and counter-steer.
        return lambda t: amplitude * math.sin(2.0 * math.pi * t / duration)
    if profile == "corner":
        ramp = 0.25 * duration
        return lambda t: amplitude * min(1.0, t / ramp)
    raise ValueError(f"unknown steering profile {profile!r}")


def _open_loop(vx0: float, steer, duration: float, params: VehicleParams,
               tsc: float = TSC) -> tuple[np.ndarray, np.ndarray, float]:
    """Simulate the plant under a steering profile; returns (states, inputs,
    peak gg) on the control grid including the initial row."""
    steps = round(duration / tsc)
    states = np.zeros((steps + 1, 3))
    inputs = np.zeros((steps + 1, 3))
    states[0] = (vx0, 0.0, 0.0)
    x = State(vx0, 0.0, 0.0)
    peak = 0.0
    for k in range(steps):
        u = Input(0.0, 0.0, steer(k * tsc))
        inputs[k] = u.as_tuple()
        front, rear = tire_states(x, u, params)
        mu = max(1e-6, min(front.mu, rear.mu))
        peak = max(peak, gg_value(dynamics(x, u, params), x, mu, params.g))
        x = step_rk4(x, u, tsc, _SUBSTEPS, params)
        states[k + 1] = x.as_tuple()
    inputs[steps] = inputs[steps - 1]
    return states, inputs, peak


def _calibrate_amplitude(profile: str, vx0: float, target_gg: float,
                         duration: float, params: VehicleParams) -> float:
    """Bisect the steering amplitude so the open-loop peak gg hits the target."""
    lo, hi = 0.0, 0.02
    for _ in range(30):
        try:
            _, _, peak = _open_loop(vx0, _steer_profile(profile, hi, duration),
                                    duration, params)
        except ValueError:
            break
        if peak >= target_gg or hi >= 0.5:
            break
        hi *= 2.0
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        try:
            _, _, peak = _open_loop(vx0, _steer_profile(profile, mid, duration),
                                    duration, params)
        except ValueError:
            peak = math.inf
        if peak < target_gg:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


_REFERENCE_CACHE: dict[tuple, Reference] = {}


def make_reference(maneuver: int, params: VehicleParams, duration: float = 2.0,
                   steering_scale: float = 1.0, pad_steps: int = 30) -> Reference:
    """Parametric reference for maneuvers 1-5 via open-loop simulation.

    Lane changes (1-2) use a single-period sinusoidal steer; cornering
    maneuvers (3-5) ramp to a constant steer.  Amplitudes are calibrated to
    the maneuver's acceleration band and the initial speed is nudged so the
    average longitudinal velocity matches the nominal within tolerance.
    """
    key = (maneuver, params, duration, steering_scale, pad_steps)
    if key in _REFERENCE_CACHE:
        return _REFERENCE_CACHE[key]
    if maneuver not in MANEUVERS:
        raise ValueError(f"unknown maneuver {maneuver}")
    man = MANEUVERS[maneuver]
    vx0 = man["vx_kmh"] / 3.6
    amp = _calibrate_amplitude(man["profile"], vx0, man["target_gg"],
                               duration, params) * steering_scale
    steer = _steer_profile(man["profile"], amp, duration)
    states, inputs, _ = _open_loop(vx0, steer, duration, params)
    # One correction pass so the time-averaged vx matches the nominal speed.
    vx0 += vx0 - float(np.mean(states[:, 0]))
    states, inputs, _ = _open_loop(vx0, steer, duration, params)
    if pad_steps:
        states = np.vstack([states, np.tile(states[-1], (pad_steps, 1))])
        inputs = np.vstack([inputs, np.tile(inputs[-1], (pad_steps, 1))])
    ref = Reference(tsc=TSC, states=states, inputs=inputs)
    _REFERENCE_CACHE[key] = ref
    return ref


def scale_steering(maneuver: int, scale: float, params: VehicleParams,
                   duration: float = 2.0) -> tuple[Reference, tuple[float, float]]:
    """Reference with the steering channel scaled, regenerated by simulation.

    Returns the reference and its (min, max) acceleration-magnitude band in
    units of g.  Raises if the scaled trajectory leaves the model's validity
    domain.
    """
    if scale < 0.0:
        raise ValueError("scale must be non-negative")
    try:
        ref = make_reference(maneuver, params, duration, steering_scale=scale)
    except ValueError as exc:
        raise ValueError(f"steering scale {scale} drives the reference out of "
                         f"the validity domain") from exc
    mags = []
    steps = round(duration / TSC)
    for k in range(steps):
        x = State(*ref.states[k])
        u = Input(*ref.inputs[k])
        xd = dynamics(x, u, params)
        ax = xd[0] - x.vy * x.r
        ay = xd[1] + x.vx * x.r
        mags.append(math.hypot(ax, ay) / params.g)
    return ref, (float(min(mags)), float(max(mags)))


def load_reference_csv(path: str | Path) -> Reference:
    """Read a reference from CSV with header ``t,vx,vy,r,fxf,fxr,delta``."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if [h.strip() for h in header] != ["t", "vx", "vy", "r", "fxf", "fxr", "delta"]:
            raise ValueError(f"{path}: unexpected reference CSV header {header}")
        rows = [[float(v) for v in row] for row in reader if row]
    if len(rows) < 2:
        raise ValueError(f"{path}: a reference needs at least two rows")
    data = np.array(rows)
    tsc = float(data[1, 0] - data[0, 0])
    if tsc <= 0.0 or not np.allclose(np.diff(data[:, 0]), tsc, atol=1e-9):
        raise ValueError(f"{path}: time column must be a uniform grid")
    return Reference(tsc=tsc, states=data[:, 1:4], inputs=data[:, 4:7])


def save_reference_csv(ref: Reference, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "vx", "vy", "r", "fxf", "fxr", "delta"])
        for k in range(ref.states.shape[0]):
            row = [k * ref.tsc, *ref.states[k], *ref.inputs[k]]
            writer.writerow([f"{v:.17g}" for v in row])


@dataclass
class StepRecord:
    t: float
    state: np.ndarray          # plant state at t
    inp: np.ndarray | None     # input applied over [t, t+tsc); None on final row
    ref_state: np.ndarray
    status: str
    objective: float | None
    wall_time: float
    encode_time: float
    gg: float
    kamm_front: float
    kamm_rear: float
    beta_env: float
    r_env: float
    mu_plant: float
    fallback: bool = False


@dataclass
class ClosedLoopTrace:
    scenario: Scenario
    records: list[StepRecord] = field(default_factory=list)
    failed: bool = False        # plant left the validity domain mid-run
    failure_step: int = -1

    @property
    def states(self) -> np.ndarray:
        return np.array([rec.state for rec in self.records])

    @property
    def ref_states(self) -> np.ndarray:
        return np.array([rec.ref_state for rec in self.records])

    def applied_inputs(self) -> np.ndarray:
        return np.array([rec.inp for rec in self.records if rec.inp is not None])


class ReplayController:
    """Replays the reference's own generating inputs (testing stub)."""

    def __init__(self, ref: Reference, np_steps: int):
        self.ref = ref
        self.np_steps = np_steps
        self._k = 0

    def reset(self) -> None:
        self._k = 0

    def plan(self, x0: np.ndarray, x_ref: np.ndarray) -> PlanResult:
        inputs = self.ref.input_window(self._k, self.np_steps)
        self._k += 1
        return PlanResult(inputs=inputs, status="replay", objective=None,
                          wall_time=0.0)


def _constraint_values(x: State, u: Input, params: VehicleParams,
                       mu_plant: float) -> tuple[float, float, float, float, float]:
    front, rear = tire_states(x, u, params, mu_plant)
    mu = max(1e-6, min(front.mu, rear.mu))
    fzf, fzr = normal_loads(params)
    gg = gg_value(dynamics(x, u, params, mu_plant), x, mu, params.g)
    kf = kamm_value(u.fxf, front.fy, max(1e-6, front.mu), fzf)
    kr = kamm_value(u.fxr, rear.fy, max(1e-6, rear.mu), fzr)
    beta_env, r_env = beta_r_envelope(x, mu, params.g)
    return gg, kf, kr, beta_env, r_env


def run_closed_loop(controller: Controller, scenario: Scenario,
                    params: VehicleParams,
                    reference: Reference | None = None) -> ClosedLoopTrace:
    """Closed-loop run; the trace has duration/tsc + 1 records (the final one
    holds the terminal state with no applied input)."""
    if reference is None:
        if scenario.reference_file is not None:
            reference = load_reference_csv(scenario.reference_file)
        else:
            scale = (scenario.steering_scale
                     if scenario.kind == "handling_limits" else 1.0)
            reference = make_reference(scenario.maneuver, params,
                                       scenario.duration, steering_scale=scale)
    steps = round(scenario.duration / TSC)
    needed = steps + scenario.np_steps
    if reference.steps < needed:
        raise ValueError(f"reference covers {reference.steps} steps; "
                         f"need {needed} (duration plus horizon)")
    controller.reset()
    trace = ClosedLoopTrace(scenario=scenario)
    x = State(*reference.states[0])   # zero initial tracking error
    for k in range(steps):
        t = k * TSC
        mu_plant = scenario.mu_at(t)
        plan = controller.plan(np.array(x.as_tuple()),
                               reference.window(k, scenario.np_steps))
        u = Input(*plan.inputs[0])    # receding horizon: first input only
        gg, kf, kr, be, re = _constraint_values(x, u, params, mu_plant)
        trace.records.append(StepRecord(
            t=t, state=np.array(x.as_tuple()), inp=np.array(u.as_tuple()),
            ref_state=reference.states[k].copy(), status=plan.status,
            objective=plan.objective, wall_time=plan.wall_time,
            encode_time=plan.encode_time,
            gg=gg, kamm_front=kf, kamm_rear=kr, beta_env=be, r_env=re,
            mu_plant=mu_plant, fallback=plan.fallback))
        try:
            x = step_rk4(x, u, TSC, _SUBSTEPS, params, mu_plant)
            if x.vx <= 0.0:
                raise ValueError("vx left the validity domain")
        except ValueError:
            trace.failed = True
            trace.failure_step = k
            return trace
    trace.records.append(StepRecord(
        t=steps * TSC, state=np.array(x.as_tuple()), inp=None,
        ref_state=reference.states[steps].copy(), status="terminal",
        objective=None, wall_time=0.0, encode_time=0.0,
        gg=0.0, kamm_front=0.0, kamm_rear=0.0,
        beta_env=0.0, r_env=0.0, mu_plant=scenario.mu_at(steps * TSC)))
    return trace


_TRACE_FIELDS = ["t", "vx", "vy", "r", "fxf", "fxr", "delta",
                 "ref_vx", "ref_vy", "ref_r", "status", "objective",
                 "wall_time", "encode_time", "gg", "kamm_front", "kamm_rear",
                 "beta_env", "r_env", "mu_plant", "fallback"]


def save_trace_csv(trace: ClosedLoopTrace, path: str | Path) -> None:
    """Write a trace as CSV (schema in ``_TRACE_FIELDS``; numbers at 17
    significant digits, empty cells for the terminal row's input)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_TRACE_FIELDS)
        for rec in trace.records:
            inp = ["", "", ""] if rec.inp is None else [f"{v:.17g}" for v in rec.inp]
            obj = "" if rec.objective is None else f"{rec.objective:.17g}"
            writer.writerow([f"{rec.t:.17g}", *(f"{v:.17g}" for v in rec.state),
                             *inp, *(f"{v:.17g}" for v in rec.ref_state),
                             rec.status, obj, f"{rec.wall_time:.17g}",
                             f"{rec.encode_time:.17g}",
                             f"{rec.gg:.17g}", f"{rec.kamm_front:.17g}",
                             f"{rec.kamm_rear:.17g}", f"{rec.beta_env:.17g}",
                             f"{rec.r_env:.17g}", f"{rec.mu_plant:.17g}",
                             int(rec.fallback)])


def load_trace_csv(path: str | Path,
                   scenario: Scenario | None = None) -> ClosedLoopTrace:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != _TRACE_FIELDS:
            raise ValueError(f"{path}: unexpected trace CSV header")
        trace = ClosedLoopTrace(scenario=scenario or Scenario())
        for row in reader:
            if not row:
                continue
            inp = None if row[4] == "" else np.array([float(row[4]), float(row[5]),
                                                      float(row[6])])
            trace.records.append(StepRecord(
                t=float(row[0]), state=np.array([float(v) for v in row[1:4]]),
                inp=inp, ref_state=np.array([float(v) for v in row[7:10]]),
                status=row[10],
                objective=None if row[11] == "" else float(row[11]),
                wall_time=float(row[12]), encode_time=float(row[13]),
                gg=float(row[14]),
                kamm_front=float(row[15]), kamm_rear=float(row[16]),
                beta_env=float(row[17]), r_env=float(row[18]),
                mu_plant=float(row[19]), fallback=bool(int(row[20]))))
    return trace
