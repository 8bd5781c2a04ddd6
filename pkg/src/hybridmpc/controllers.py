"""Horizon controllers for the closed loop.

HybridController encodes the fitted piecewise-affine model as a mixed-integer
program per step (big-M) and solves it with the branch-and-bound core, warm
started from the shifted previous plan.  NlpController wraps the sequential
convexification baseline (warm start only, or five starts).

The fitting presets (R / S / T models, polytopic / ellipsoidal regions) that
feed the hybrid controllers also live here.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .encoder import HorizonSpec, MpcEncoding
from .fitting import FitReport, fit_mmps, fit_region
from .mmps import EllipsoidUnion, MmpsFunction, MmpsRegion, AffineModeSet, \
    eval_ellipsoid_union, eval_region_mmps
from .nlp import NlpInstance, NlpOptions, local_solve, multi_start_solve, \
    warm_start_shift
from .simloop import PlanResult, Reference, TSC
from .solver import SolveOptions, solve_with_fallback
from .vehicle import Input, State, VehicleParams, gg_value, kamm_value, \
    dynamics, normal_loads, step_rk4, tire_states

__all__ = [
    "OperatingBox", "box_from_reference", "sample_model_data", "fit_model",
    "fit_constraint_region", "inflate_region", "default_weights",
    "HybridController", "NlpController", "MODEL_PRESETS", "CONSTRAINT_FORMS",
]

MODEL_PRESETS = ("R", "S", "T")
CONSTRAINT_FORMS = ("rmp", "bmp", "rel", "bel")


@dataclass(frozen=True)
class OperatingBox:
    """Finite (x, u) box the fitted models and encodings operate over."""

    x_bounds: tuple[tuple[float, float], ...]
    u_bounds: tuple[tuple[float, float], ...]

    @property
    def lo(self) -> np.ndarray:
        return np.array([b[0] for b in (*self.x_bounds, *self.u_bounds)])

    @property
    def hi(self) -> np.ndarray:
        return np.array([b[1] for b in (*self.x_bounds, *self.u_bounds)])


def box_from_reference(ref: Reference, steps: int) -> OperatingBox:
    """Operating box enclosing a reference with working margins.

    Tighter boxes keep the big-M constants small, which keeps the relaxation
    of the mixed-integer encoding useful.
    """
    states = ref.states[:steps + 1]
    inputs = ref.inputs[:steps + 1]
    vx_lo, vx_hi = states[:, 0].min(), states[:, 0].max()
    vy_span = max(1.5, 1.8 * np.abs(states[:, 1]).max())
    r_span = max(0.15, 1.8 * np.abs(states[:, 2]).max())
    d_span = max(0.06, 2.0 * np.abs(inputs[:, 2]).max())
    fx_span = max(1500.0, 2.0 * np.abs(inputs[:, :2]).max())
    return OperatingBox(
        x_bounds=((vx_lo - 4.0, vx_hi + 2.0),
                  (-vy_span, vy_span),
                  (-r_span, r_span)),
        u_bounds=((-fx_span, 0.0),
                  (-fx_span, fx_span),
                  (-d_span, d_span)))


def default_weights() -> tuple[np.ndarray, np.ndarray]:
    """Normalizing diagonal weights: states by 1/range, inputs by 0.1/range."""
    from .vehicle import STATE_BOUNDS, INPUT_BOUNDS
    theta_x = np.array([1.0 / (hi - lo) for lo, hi in STATE_BOUNDS])
    theta_u = np.array([0.1 / (hi - lo) for lo, hi in INPUT_BOUNDS])
    return theta_x, theta_u


def sample_model_data(preset: str, box: OperatingBox, params: VehicleParams,
                      n_samples: int, seed: int, tsc: float = TSC
                      ) -> list[tuple[tuple[np.ndarray, np.ndarray], np.ndarray]]:
    """(x, u) -> next-state samples of the discrete map under a preset.

    R: uniform over the box.  S: trajectory rollouts from steady states
    (vy = r = 0).  T: trajectory rollouts from random box states.
    """
    if preset not in MODEL_PRESETS:
        raise ValueError(f"unknown model preset {preset!r}")
    rng = np.random.default_rng(seed)
    x_lo = np.array([b[0] for b in box.x_bounds])
    x_hi = np.array([b[1] for b in box.x_bounds])
    u_lo = np.array([b[0] for b in box.u_bounds])
    u_hi = np.array([b[1] for b in box.u_bounds])
    samples: list[tuple[tuple[np.ndarray, np.ndarray], np.ndarray]] = []

    def advance(x: np.ndarray, u: np.ndarray) -> np.ndarray | None:
        try:
            nxt = step_rk4(State(*x), Input(*u), tsc, 5, params)
        except ValueError:
            return None
        return np.array(nxt.as_tuple())

    if preset == "R":
        while len(samples) < n_samples:
            x = rng.uniform(x_lo, x_hi)
            u = rng.uniform(u_lo, u_hi)
            nxt = advance(x, u)
            if nxt is not None:
                samples.append(((x, u), nxt))
        return samples

    rollout_len = 8
    while len(samples) < n_samples:
        if preset == "S":
            x = np.array([rng.uniform(x_lo[0], x_hi[0]), 0.0, 0.0])
        else:
            x = rng.uniform(x_lo, x_hi)
        u = rng.uniform(u_lo, u_hi)
        for _ in range(rollout_len):
            # Inputs drift within the box so rollouts stay smooth.
            u = np.clip(u + 0.25 * rng.uniform(u_lo - u, u_hi - u), u_lo, u_hi)
            nxt = advance(x, u)
            if nxt is None or np.any(nxt < x_lo) or np.any(nxt > x_hi):
                break
            samples.append(((x.copy(), u.copy()), nxt))
            x = nxt
            if len(samples) >= n_samples:
                break
    return samples


def fit_model(preset: str, box: OperatingBox, params: VehicleParams, seed: int,
              p_plus: int = 2, p_minus: int = 1, n_samples: int = 400
              ) -> tuple[MmpsFunction, FitReport, list[float]]:
    """Fit the discrete dynamics under a sampling preset.

    Returns the model, the raw fit report, and per-component RMS normalized
    by the box span of each state.
    """
    samples = sample_model_data(preset, box, params, n_samples, seed)
    model, report = fit_mmps(samples, p_plus=p_plus, p_minus=p_minus, seed=seed)
    spans = [hi - lo for lo, hi in box.x_bounds]
    normalized = [report.rms[s] / spans[s] for s in range(len(spans))]
    return model, report, normalized


def _feasible_label(x: np.ndarray, u: np.ndarray, params: VehicleParams) -> bool:
    try:
        st, inp = State(*x), Input(*u)
        front, rear = tire_states(st, inp, params)
        mu = max(1e-6, min(front.mu, rear.mu))
        fzf, fzr = normal_loads(params)
        if gg_value(dynamics(st, inp, params), st, mu, params.g) > 1.0:
            return False
        if kamm_value(inp.fxf, front.fy, max(1e-6, front.mu), fzf) > 1.0:
            return False
        return kamm_value(inp.fxr, rear.fy, max(1e-6, rear.mu), fzr) <= 1.0
    except ValueError:
        return False


def fit_constraint_region(form: str, box: OperatingBox, params: VehicleParams,
                          seed: int, n_samples: int = 1500,
                          budget: int | None = None
                          ) -> MmpsRegion | EllipsoidUnion:
    """Fitted stand-in for the tire/acceleration feasible set over (x, u).

    ``form``: rmp / bmp (polytopic, region / boundary based) or rel / bel
    (ellipsoidal).  Samples are labeled by the exact constraint evaluators.
    """
    if form not in CONSTRAINT_FORMS:
        raise ValueError(f"unknown constraint form {form!r}")
    rng = np.random.default_rng(seed)
    lo, hi = box.lo, box.hi
    pts = rng.uniform(lo, hi, size=(n_samples, lo.size))
    labels = np.array([_feasible_label(v[:3], v[3:], params) for v in pts])
    if labels.sum() < 20:
        raise ValueError("operating box yields too few feasible samples")
    mode = "region" if form[0] == "r" else "boundary"
    shape = "polytopic" if form.endswith("mp") else "ellipsoidal"
    if budget is None:
        budget = 8 if shape == "polytopic" else 2
    region, _ = fit_region(pts, labels, mode=mode, shape=shape, budget=budget,
                           seed=seed, n=3, m=3)
    return region


def inflate_region(region: MmpsRegion | EllipsoidUnion, factor: float
                   ) -> MmpsRegion | EllipsoidUnion:
    """Uniformly enlarge a region about its own scale by ``factor`` >= 1.

    Used to leave working margin around boundary-based fits so an exactly
    feasible reference does not sit on the fitted boundary.
    """
    if factor < 1.0:
        raise ValueError("factor must be at least 1")
    if isinstance(region, MmpsRegion):
        gp = region.gamma_plus
        scaled = AffineModeSet(a=gp.a / factor, b=gp.b / factor, h=gp.h / factor)
        return MmpsRegion(gamma_plus=scaled, gamma_minus=region.gamma_minus)
    qs = tuple(q / factor ** 2 for q in region.q)
    return EllipsoidUnion(q=qs, center=region.center, n=region.n, m=region.m)


def region_contains(region: MmpsRegion | EllipsoidUnion, x: np.ndarray,
                    u: np.ndarray) -> bool:
    if isinstance(region, MmpsRegion):
        g = eval_region_mmps(region, x, u)
        return 0.0 <= g <= 1.0
    return eval_ellipsoid_union(region, x, u) <= 1.0


class HybridController:
    """MPC over the fitted piecewise-affine model via mixed-integer solves.

    Each step encodes the horizon problem, seeds the solver with a feasible
    candidate rolled out from the shifted previous plan, and uses rollout
    rounding of relaxation solutions as the incumbent heuristic.  A hard
    time/node budget keeps the per-step cost bounded; if the solver returns
    nothing usable the shifted previous plan is applied (flagged fallback).
    """

    def __init__(self, model: MmpsFunction,
                 constraint: MmpsRegion | EllipsoidUnion | None,
                 box: OperatingBox, np_steps: int,
                 theta_x: np.ndarray, theta_u: np.ndarray,
                 solve_options: SolveOptions | None = None,
                 soft_constraints: bool = False):
        self.model = model
        self.constraint = constraint
        self.box = box
        self.np_steps = np_steps
        self.theta_x = np.asarray(theta_x, dtype=float)
        self.theta_u = np.asarray(theta_u, dtype=float)
        # Node budget keeps the applied inputs deterministic across machines;
        # the time limit is a safety valve that normally never triggers.
        self.solve_options = solve_options or SolveOptions(
            time_limit=10.0, gap_tol=0.02, max_nodes=4)
        self.soft = soft_constraints
        self._prev_inputs: np.ndarray | None = None
        self.last_encode_time = 0.0

    def reset(self) -> None:
        self._prev_inputs = None

    def _encode(self, x0: np.ndarray, x_ref: np.ndarray) -> MpcEncoding:
        spec = HorizonSpec(np_steps=self.np_steps, tsc=TSC,
                           theta_x=self.theta_x, theta_u=self.theta_u,
                           x0=x0, x_ref=x_ref)
        enc = MpcEncoding(spec, list(self.box.x_bounds), list(self.box.u_bounds),
                          soft_constraints=self.soft)
        enc.encode_objective()
        enc.encode_dynamics(self.model)
        if isinstance(self.constraint, MmpsRegion):
            enc.encode_region(self.constraint)
        elif isinstance(self.constraint, EllipsoidUnion):
            enc.encode_ellipsoids(self.constraint)
        return enc

    def plan(self, x0: np.ndarray, x_ref: np.ndarray) -> PlanResult:
        t0 = time.perf_counter()
        enc = self._encode(x0, x_ref)
        problem = enc.build()
        u_lo = np.array([b[0] for b in self.box.u_bounds])
        u_hi = np.array([b[1] for b in self.box.u_bounds])
        if self._prev_inputs is not None:
            warm_u = warm_start_shift(self._prev_inputs)
        else:
            warm_u = np.tile(np.clip(np.zeros(3), u_lo, u_hi), (self.np_steps, 1))
        warm = enc.candidate_from_inputs(warm_u)
        self.last_encode_time = time.perf_counter() - t0

        def rollout_rounding(_p, x_rel):
            u_seq = np.clip(enc.decode_inputs(x_rel), u_lo, u_hi)
            return enc.candidate_from_inputs(u_seq)

        opts = replace(self.solve_options, initial_incumbent=warm,
                       heuristic=rollout_rounding)
        res = solve_with_fallback(problem, opts, previous_solution=warm)
        if res.x is None:
            inputs = warm_u
            status, objective, fallback = "fallback", None, True
        else:
            inputs = enc.decode_inputs(res.x)
            status = res.status
            objective = res.objective
            fallback = res.status == "fallback"
        self._prev_inputs = inputs
        return PlanResult(inputs=inputs, status=status, objective=objective,
                          wall_time=res.wall_time, fallback=fallback,
                          encode_time=self.last_encode_time)


class NlpController:
    """Exact-model baseline: warm-start only (NL-1) or five starts (NL-5)."""

    def __init__(self, params: VehicleParams, box: OperatingBox, np_steps: int,
                 theta_x: np.ndarray, theta_u: np.ndarray,
                 multi_start: bool = False, seed: int = 0,
                 options: NlpOptions | None = None):
        self.params = params
        self.box = box
        self.np_steps = np_steps
        self.theta_x = np.asarray(theta_x, dtype=float)
        self.theta_u = np.asarray(theta_u, dtype=float)
        self.multi_start = multi_start
        self.seed = seed
        self.options = options or NlpOptions()
        self._prev_inputs: np.ndarray | None = None
        self._step = 0

    def reset(self) -> None:
        self._prev_inputs = None
        self._step = 0

    def plan(self, x0: np.ndarray, x_ref: np.ndarray) -> PlanResult:
        spec = HorizonSpec(np_steps=self.np_steps, tsc=TSC,
                           theta_x=self.theta_x, theta_u=self.theta_u,
                           x0=x0, x_ref=x_ref)
        inst = NlpInstance(spec=spec, params=self.params,
                           u_bounds=list(self.box.u_bounds))
        if self.multi_start:
            res, _ = multi_start_solve(inst, self._prev_inputs,
                                       seed=self.seed + self._step,
                                       opts=self.options)
        else:
            if self._prev_inputs is not None:
                guess = warm_start_shift(self._prev_inputs)
            else:
                lo = np.array([b[0] for b in self.box.u_bounds])
                hi = np.array([b[1] for b in self.box.u_bounds])
                guess = np.tile(0.5 * (lo + hi), (self.np_steps, 1))
            res = local_solve(inst, guess, self.options)
        self._prev_inputs = res.inputs
        self._step += 1
        return PlanResult(inputs=res.inputs, status="optimal" if res.converged
                          else "iteration_limit", objective=res.objective,
                          wall_time=res.wall_time)
