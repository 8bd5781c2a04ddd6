"""Nonlinear single-track vehicle plant with Dugoff tires and varying friction.

State is [vx, vy, r] (longitudinal velocity, lateral velocity, yaw rate);
inputs are [Fxf, Fxr, delta] (front/rear longitudinal axle forces and road
steering angle).  All functions here are pure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

__all__ = [
    "VehicleParams",
    "State",
    "Input",
    "TireState",
    "DEFAULT_PARAMS",
    "STATE_BOUNDS",
    "INPUT_BOUNDS",
    "slip_angles",
    "slip_ratio_from_force",
    "friction_coefficient",
    "dugoff_lateral",
    "normal_loads",
    "dynamics",
    "step_rk4",
    "gg_value",
    "kamm_value",
    "beta_r_envelope",
    "load_params",
    "save_params",
]

# Default validation boxes for the state and input vectors.
STATE_BOUNDS = ((5.0, 50.0), (-10.0, 10.0), (-0.6, 0.6))
INPUT_BOUNDS = ((-5000.0, 0.0), (-5000.0, 5000.0), (-0.5, 0.5))

_LAMBDA_DENOM_EPS = 1e-12


@dataclass(frozen=True)
class VehicleParams:
    """Single-track vehicle parameters (defaults: mid-size sedan dataset)."""

    m: float = 1970.0          # mass [kg]
    izz: float = 3498.0        # yaw inertia [kg m^2]
    lf: float = 1.4778         # CoG to front axle [m]
    lr: float = 1.4102         # CoG to rear axle [m]
    caf: float = 126784.0      # front cornering stiffness [N]
    car: float = 213983.0      # rear cornering stiffness [N]
    ckf: float = 315000.0      # front longitudinal stiffness [N]
    ckr: float = 286700.0      # rear longitudinal stiffness [N]
    mu0: float = 1.076         # zero-velocity friction [-]
    er: float = 0.01           # friction slope [-]
    g: float = 9.81            # gravity [m/s^2]

    def __post_init__(self):
        for name in ("m", "izz", "lf", "lr", "caf", "car", "ckf", "ckr"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"vehicle parameter {name!r} must be strictly positive")
        if self.mu0 <= 0.0:
            raise ValueError("mu0 must be strictly positive")
        if self.er < 0.0:
            raise ValueError("er must be non-negative")
        if self.g <= 0.0:
            raise ValueError("g must be strictly positive")


DEFAULT_PARAMS = VehicleParams()


@dataclass(frozen=True)
class State:
    vx: float
    vy: float
    r: float

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.vx, self.vy, self.r)


@dataclass(frozen=True)
class Input:
    fxf: float
    fxr: float
    delta: float

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.fxf, self.fxr, self.delta)


@dataclass(frozen=True)
class TireState:
    """Per-axle tire quantities entering the Dugoff force computation."""

    alpha: float   # slip angle [rad]
    kappa: float   # slip ratio [-]
    fz: float      # normal load [N]
    mu: float      # effective friction [-]
    fy: float      # lateral force [N]


def slip_angles(state: State, inp: Input, params: VehicleParams) -> tuple[float, float]:
    """Front and rear slip angles from single-track kinematics.

    Requires a strictly positive longitudinal velocity.
    """
    if state.vx <= 0.0:
        raise ValueError(f"slip angles undefined for vx={state.vx} (requires vx > 0)")
    alpha_f = inp.delta - math.atan((state.vy + params.lf * state.r) / state.vx)
    alpha_r = -math.atan((state.vy - params.lr * state.r) / state.vx)
    return alpha_f, alpha_r


def slip_ratio_from_force(fx: float, ck: float) -> float:
    """Slip ratio inferred from a longitudinal axle force.

    Inverts the linear-region force law kappa -> Ck * kappa while staying
    bounded: the result lies in (-1, 1) and has the sign of ``fx``.
    """
    if ck <= 0.0:
        raise ValueError("longitudinal stiffness must be strictly positive")
    return fx / (ck + abs(fx))


def friction_coefficient(vx: float, kappa: float, alpha: float, params: VehicleParams) -> float:
    """Velocity- and slip-dependent friction coefficient, clamped at zero."""
    if vx < 0.0:
        raise ValueError("vx must be non-negative")
    slip = math.sqrt(kappa * kappa + math.tan(alpha) ** 2)
    return max(0.0, params.mu0 * (1.0 - params.er * vx * slip))


def dugoff_lateral(alpha: float, kappa: float, fz: float, mu: float, ca: float, ck: float) -> float:
    """Dugoff lateral tire force.

    Uses the weighting function f(l) = l * (2 - l) below l = 1 and 1 above,
    which reproduces the post-saturation force decay.  Returns 0 at zero slip.
    """
    if abs(kappa) >= 1.0:
        raise ValueError("slip ratio magnitude must be below 1")
    if fz <= 0.0:
        raise ValueError("normal load must be strictly positive")
    if ca <= 0.0:
        raise ValueError("cornering stiffness must be strictly positive")
    tan_a = math.tan(alpha)
    denom = 2.0 * math.sqrt((ck * kappa) ** 2 + (ca * tan_a) ** 2)
    if denom < _LAMBDA_DENOM_EPS:
        f_lambda = 1.0  # zero-slip limit; the alpha factor makes the force 0 anyway
    else:
        lam = mu * fz * (1.0 - kappa) / denom
        f_lambda = lam * (2.0 - lam) if lam < 1.0 else 1.0
    return ca / (1.0 - kappa) * f_lambda * alpha


def normal_loads(params: VehicleParams) -> tuple[float, float]:
    """Static front/rear axle normal loads (no load transfer)."""
    wheelbase = params.lf + params.lr
    fzf = params.m * params.g * params.lr / wheelbase
    fzr = params.m * params.g * params.lf / wheelbase
    return fzf, fzr


def _tire_states(state: State, inp: Input, params: VehicleParams,
                 mu_road: float) -> tuple[TireState, TireState]:
    alpha_f, alpha_r = slip_angles(state, inp, params)
    kappa_f = slip_ratio_from_force(inp.fxf, params.ckf)
    kappa_r = slip_ratio_from_force(inp.fxr, params.ckr)
    fzf, fzr = normal_loads(params)
    mu_f = mu_road * friction_coefficient(state.vx, kappa_f, alpha_f, params)
    mu_r = mu_road * friction_coefficient(state.vx, kappa_r, alpha_r, params)
    fyf = dugoff_lateral(alpha_f, kappa_f, fzf, mu_f, params.caf, params.ckf)
    fyr = dugoff_lateral(alpha_r, kappa_r, fzr, mu_r, params.car, params.ckr)
    front = TireState(alpha=alpha_f, kappa=kappa_f, fz=fzf, mu=mu_f, fy=fyf)
    rear = TireState(alpha=alpha_r, kappa=kappa_r, fz=fzr, mu=mu_r, fy=fyr)
    return front, rear


def tire_states(state: State, inp: Input, params: VehicleParams,
                mu_road: float = 1.0) -> tuple[TireState, TireState]:
    """Front and rear tire states for the given operating point.

    ``mu_road`` scales the nominal zero-velocity friction and models the
    plant's true road surface relative to the prediction-side nominal.
    """
    return _tire_states(state, inp, params, mu_road)


def dynamics(state: State, inp: Input, params: VehicleParams,
             mu_road: float = 1.0) -> tuple[float, float, float]:
    """Continuous-time state derivative (vx_dot, vy_dot, r_dot)."""
    front, rear = _tire_states(state, inp, params, mu_road)
    sin_d = math.sin(inp.delta)
    cos_d = math.cos(inp.delta)
    vx_dot = (inp.fxf * cos_d - front.fy * sin_d + inp.fxr) / params.m + state.vy * state.r
    vy_dot = (inp.fxf * sin_d + front.fy * cos_d + rear.fy) / params.m - state.vx * state.r
    r_dot = (inp.fxf * sin_d * params.lf + front.fy * cos_d * params.lf
             - rear.fy * params.lr) / params.izz
    return vx_dot, vy_dot, r_dot


def step_rk4(state: State, inp: Input, dt: float, substeps: int,
             params: VehicleParams, mu_road: float = 1.0) -> State:
    """Advance the plant by ``dt`` with classical RK4 under a zero-order-hold input."""
    if dt <= 0.0:
        raise ValueError("dt must be strictly positive")
    if substeps < 1:
        raise ValueError("substeps must be at least 1")
    h = dt / substeps
    x = state.as_tuple()
    for _ in range(substeps):
        k1 = dynamics(State(*x), inp, params, mu_road)
        x2 = tuple(x[i] + 0.5 * h * k1[i] for i in range(3))
        k2 = dynamics(State(*x2), inp, params, mu_road)
        x3 = tuple(x[i] + 0.5 * h * k2[i] for i in range(3))
        k3 = dynamics(State(*x3), inp, params, mu_road)
        x4 = tuple(x[i] + h * k3[i] for i in range(3))
        k4 = dynamics(State(*x4), inp, params, mu_road)
        x = tuple(x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
                  for i in range(3))
    return State(*x)


def gg_value(state_dot: tuple[float, float, float], state: State,
             mu: float, g: float) -> float:
    """Normalized acceleration magnitude on the g-g diagram; <= 1 is feasible."""
    if mu <= 0.0:
        raise ValueError("mu must be strictly positive")
    ax = state_dot[0] - state.vy * state.r
    ay = state_dot[1] + state.vx * state.r
    return math.hypot(ax, ay) / (mu * g)


def kamm_value(fx: float, fy: float, mu: float, fz: float) -> float:
    """Normalized tire force magnitude on the Kamm circle; <= 1 is within saturation."""
    if fz <= 0.0:
        raise ValueError("fz must be strictly positive")
    if mu <= 0.0:
        raise ValueError("mu must be strictly positive")
    return math.hypot(fx, fy) / (mu * fz)


def beta_r_envelope(state: State, mu: float, g: float,
                    beta_limit: float = math.radians(5.0),
                    yaw_limit_literal: bool = False) -> tuple[float, float]:
    """Normalized sideslip / yaw-rate position inside the stability envelope.

    The yaw-rate limit defaults to mu*g/vx; ``yaw_limit_literal`` switches to
    the dimensionally questionable mu*g*vx variant for comparison.
    """
    if state.vx <= 0.0:
        raise ValueError("envelope undefined for vx <= 0")
    beta = math.atan(state.vy / state.vx)
    if yaw_limit_literal:
        r_limit = mu * g * state.vx
    else:
        r_limit = mu * g / state.vx
    return abs(beta) / beta_limit, abs(state.r) / r_limit


_PARAM_KEYS = ("m", "izz", "lf", "lr", "caf", "car", "ckf", "ckr", "mu0", "er", "g")


def load_params(path: str | Path) -> VehicleParams:
    """Read vehicle parameters from a ``key=value`` text file.

    Lines starting with '#' and blank lines are ignored; missing keys fall
    back to the built-in defaults.
    """
    values: dict[str, float] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, val = line.partition("=")
        key = key.strip().lower()
        if key not in _PARAM_KEYS:
            raise ValueError(f"{path}:{lineno}: unknown vehicle parameter {key!r}")
        values[key] = float(val)
    return VehicleParams(**values)


def save_params(params: VehicleParams, path: str | Path) -> None:
    """Write vehicle parameters in the ``key=value`` format read by load_params."""
    lines = [f"{key} = {getattr(params, key)!r}" for key in _PARAM_KEYS]
    Path(path).write_text("\n".join(lines) + "\n")
