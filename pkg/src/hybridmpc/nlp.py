"""Nonlinear MPC baseline: sequential convexification with an l1 exact
penalty, trust-region box, and the in-repo simplex for the LP subproblems.

Two solution strategies are provided: warm start only (shifted previous
solution) and a five-start variant that also tries a random interior
point, both bound corners, and the geometric center.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .encoder import HorizonSpec
from .problem import LpProblem
from .simplex import simplex_solve
from .vehicle import Input, State, VehicleParams, dynamics, gg_value, kamm_value, \
    normal_loads, step_rk4, tire_states

__all__ = ["NlpInstance", "NlpOptions", "NlpResult", "local_solve",
           "warm_start_shift", "multi_start_solve"]


@dataclass
class NlpOptions:
    max_outer: int = 25
    trust_frac: float = 0.1      # initial radius as fraction of the box width
    expand: float = 2.0
    shrink: float = 0.5
    penalty: float = 1e3         # exact-l1 penalty on normalized violations
    fd_step: float = 1e-6        # forward-difference step, scaled per channel
    step_tol: float = 1e-5       # relative trust radius below which we stop
    merit_tol: float = 1e-8
    substeps: int = 5


@dataclass
class NlpResult:
    inputs: np.ndarray           # (Np, m), within bounds
    objective: float
    merit: float
    violation: float             # max normalized constraint excess over 1
    iterations: int
    wall_time: float
    converged: bool
    log: list[tuple[int, float, float, float]] = field(default_factory=list)
    # log rows: (iteration, merit, violation, trust radius)


@dataclass
class NlpInstance:
    """Exact-model horizon problem: nonlinear rollout dynamics plus the
    acceleration (g-g) and tire saturation (Kamm) constraints."""

    spec: HorizonSpec
    params: VehicleParams
    u_bounds: list[tuple[float, float]]
    mu_pred: float = 1.0         # prediction-side road friction multiplier
    use_gg: bool = True
    use_kamm: bool = True

    def rollout(self, u_seq: np.ndarray, substeps: int = 5
                ) -> tuple[np.ndarray, np.ndarray]:
        """States over the horizon and normalized constraint values per step.

        Constraint columns: [gg, kamm_front, kamm_rear] for each step.
        Raises ValueError when the rollout leaves the model's validity
        domain (vx <= 0).
        """
        spec = self.spec
        n = spec.x0.shape[0]
        states = np.zeros((spec.np_steps, n))
        cons = np.zeros((spec.np_steps, 3))
        x = State(*spec.x0)
        fzf, fzr = normal_loads(self.params)
        for j in range(spec.np_steps):
            u = Input(*u_seq[j])
            xdot = dynamics(x, u, self.params, self.mu_pred)
            front, rear = tire_states(x, u, self.params, self.mu_pred)
            mu_min = max(1e-6, min(front.mu, rear.mu))
            cons[j, 0] = gg_value(xdot, x, mu_min, self.params.g)
            cons[j, 1] = kamm_value(u.fxf, front.fy, max(1e-6, front.mu), fzf)
            cons[j, 2] = kamm_value(u.fxr, rear.fy, max(1e-6, rear.mu), fzr)
            x = step_rk4(x, u, spec.tsc, substeps, self.params, self.mu_pred)
            states[j] = x.as_tuple()
        return states, cons

    def objective(self, u_seq: np.ndarray, states: np.ndarray) -> float:
        spec = self.spec
        err = np.abs(states - spec.x_ref) @ spec.theta_x
        eff = np.abs(u_seq) @ spec.theta_u
        return float(err.sum() + eff.sum())

    def merit(self, u_seq: np.ndarray, opts: NlpOptions
              ) -> tuple[float, float, float]:
        """(merit, objective, max violation) of an input sequence."""
        states, cons = self.rollout(u_seq, opts.substeps)
        obj = self.objective(u_seq, states)
        excess = np.maximum(0.0, cons - 1.0)
        viol = float(excess.max(initial=0.0))
        return obj + opts.penalty * float(excess.sum()), obj, viol


def _clip_inputs(u_seq: np.ndarray, bounds: list[tuple[float, float]]) -> np.ndarray:
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])
    return np.clip(u_seq, lo, hi)


def _jacobians(inst: NlpInstance, u_seq: np.ndarray, opts: NlpOptions,
               states0: np.ndarray, cons0: np.ndarray
               ) -> tuple[np.ndarray, np.ndarray]:
    """Forward-difference sensitivities of states and constraints w.r.t.
    every input channel over the horizon."""
    npred, m = u_seq.shape
    n = states0.shape[1]
    jac_x = np.zeros((npred * n, npred * m))
    jac_c = np.zeros((npred * 3, npred * m))
    lo = np.array([b[0] for b in inst.u_bounds])
    hi = np.array([b[1] for b in inst.u_bounds])
    scale = np.maximum(1.0, hi - lo)
    for j in range(npred):
        for c in range(m):
            h = opts.fd_step * scale[c]
            pert = u_seq.copy()
            pert[j, c] += h
            try:
                states, cons = inst.rollout(pert, opts.substeps)
            except ValueError:
                pert[j, c] -= 2.0 * h
                states, cons = inst.rollout(pert, opts.substeps)
                h = -h
            col = j * m + c
            jac_x[:, col] = (states - states0).ravel() / h
            jac_c[:, col] = (cons - cons0).ravel() / h
    return jac_x, jac_c


def _lp_step(inst: NlpInstance, u_seq: np.ndarray, states0: np.ndarray,
             cons0: np.ndarray, jac_x: np.ndarray, jac_c: np.ndarray,
             radius: np.ndarray, opts: NlpOptions) -> np.ndarray:
    """Solve the linearized l1 subproblem; returns the input step du."""
    spec = inst.spec
    npred, m = u_seq.shape
    n = states0.shape[1]
    n_du = npred * m
    n_ex = npred * n
    n_eu = npred * m
    n_s = npred * 3
    n_vars = n_du + n_ex + n_eu + n_s
    c = np.zeros(n_vars)
    c[n_du:n_du + n_ex] = np.tile(spec.theta_x, npred)
    c[n_du + n_ex:n_du + n_ex + n_eu] = np.tile(spec.theta_u, npred)
    c[n_du + n_ex + n_eu:] = opts.penalty
    lo_u = np.array([b[0] for b in inst.u_bounds])
    hi_u = np.array([b[1] for b in inst.u_bounds])
    lb = np.zeros(n_vars)
    ub = np.full(n_vars, np.inf)
    for j in range(npred):
        for ch in range(m):
            k = j * m + ch
            lb[k] = max(lo_u[ch] - u_seq[j, ch], -radius[ch])
            ub[k] = min(hi_u[ch] - u_seq[j, ch], radius[ch])
    dev0 = (states0 - spec.x_ref).ravel()
    rows = []
    rhs = []
    # |x + Jx du - ref| epigraph
    for i in range(n_ex):
        row = np.zeros(n_vars)
        row[:n_du] = jac_x[i]
        row[n_du + i] = -1.0
        rows.append(row.copy())
        rhs.append(-dev0[i])
        row[:n_du] = -jac_x[i]
        rows.append(row)
        rhs.append(dev0[i])
    # |u + du| epigraph
    for i in range(n_eu):
        row = np.zeros(n_vars)
        row[i] = 1.0
        row[n_du + n_ex + i] = -1.0
        rows.append(row.copy())
        rhs.append(-u_seq.ravel()[i])
        row[i] = -1.0
        rows.append(row)
        rhs.append(u_seq.ravel()[i])
    # linearized constraints with l1 slack
    for i in range(n_s):
        row = np.zeros(n_vars)
        row[:n_du] = jac_c[i]
        row[n_du + n_ex + n_eu + i] = -1.0
        rows.append(row)
        rhs.append(1.0 - cons0.ravel()[i])
    lp = LpProblem(c=c, lb=lb, ub=ub, a_ub=np.array(rows), b_ub=np.array(rhs),
                   a_eq=np.zeros((0, n_vars)), b_eq=np.zeros(0))
    res = simplex_solve(lp)
    if res.status != "optimal":
        return np.zeros((npred, m))
    return res.x[:n_du].reshape(npred, m)


def local_solve(inst: NlpInstance, guess: np.ndarray,
                opts: NlpOptions | None = None) -> NlpResult:
    """Trust-region sequential convexification from one initial guess."""
    opts = opts or NlpOptions()
    start = time.perf_counter()
    u_seq = _clip_inputs(np.asarray(guess, dtype=float).copy(), inst.u_bounds)
    lo = np.array([b[0] for b in inst.u_bounds])
    hi = np.array([b[1] for b in inst.u_bounds])
    width = hi - lo
    radius = opts.trust_frac * width
    try:
        merit, obj, viol = inst.merit(u_seq, opts)
    except ValueError:
        # Guess rolls out of the validity domain: retreat to the box center.
        u_seq = np.tile(0.5 * (lo + hi), (inst.spec.np_steps, 1))
        merit, obj, viol = inst.merit(u_seq, opts)
    log = [(0, merit, viol, float(radius.max()))]
    converged = False
    iters = 0
    for iters in range(1, opts.max_outer + 1):
        states0, cons0 = inst.rollout(u_seq, opts.substeps)
        jac_x, jac_c = _jacobians(inst, u_seq, opts, states0, cons0)
        du = _lp_step(inst, u_seq, states0, cons0, jac_x, jac_c, radius, opts)
        step_size = float(np.max(np.abs(du) / np.maximum(width, 1e-12)))
        if step_size < opts.step_tol:
            converged = True
            break
        trial = _clip_inputs(u_seq + du, inst.u_bounds)
        try:
            trial_merit, trial_obj, trial_viol = inst.merit(trial, opts)
        except ValueError:
            trial_merit = np.inf
            trial_obj = trial_viol = np.inf
        if trial_merit < merit - 1e-12:
            u_seq = trial
            improvement = merit - trial_merit
            merit, obj, viol = trial_merit, trial_obj, trial_viol
            radius = np.minimum(radius * opts.expand, width)
            log.append((iters, merit, viol, float(radius.max())))
            if improvement < opts.merit_tol * max(1.0, abs(merit)):
                converged = True
                break
        else:
            radius *= opts.shrink
            log.append((iters, merit, viol, float(radius.max())))
            if float(np.max(radius / np.maximum(width, 1e-12))) < opts.step_tol:
                converged = True
                break
    return NlpResult(inputs=u_seq, objective=obj, merit=merit, violation=viol,
                     iterations=iters, wall_time=time.perf_counter() - start,
                     converged=converged, log=log)


def warm_start_shift(prev_inputs: np.ndarray) -> np.ndarray:
    """Receding-horizon shift: drop the first input, repeat the last."""
    prev_inputs = np.asarray(prev_inputs, dtype=float)
    if prev_inputs.ndim != 2 or prev_inputs.shape[0] < 1:
        raise ValueError("expected an (Np, m) input sequence")
    return np.vstack([prev_inputs[1:], prev_inputs[-1:]])


def multi_start_solve(inst: NlpInstance, prev_inputs: np.ndarray | None,
                      seed: int, opts: NlpOptions | None = None
                      ) -> tuple[NlpResult, list[NlpResult]]:
    """Best of five starts: warm start, seeded random point, lower bound,
    upper bound, and geometric center.  Wall time reported on the returned
    result is the sequential sum over all starts."""
    opts = opts or NlpOptions()
    npred = inst.spec.np_steps
    lo = np.array([b[0] for b in inst.u_bounds])
    hi = np.array([b[1] for b in inst.u_bounds])
    rng = np.random.default_rng(seed)
    guesses = []
    if prev_inputs is not None:
        guesses.append(warm_start_shift(prev_inputs))
    else:
        guesses.append(np.tile(0.5 * (lo + hi), (npred, 1)))
    guesses.append(rng.uniform(lo, hi, size=(npred, lo.size)))
    guesses.append(np.tile(lo, (npred, 1)))
    guesses.append(np.tile(hi, (npred, 1)))
    guesses.append(np.tile(0.5 * (lo + hi), (npred, 1)))
    results = [local_solve(inst, g, opts) for g in guesses]
    total_time = sum(r.wall_time for r in results)
    best = min(results, key=lambda r: r.merit)
    best.wall_time = total_time
    return best, results
