"""Horizon encoding of the hybrid MPC problem as an MILP or MIQCP.

The max terms of the Kripfganz dynamics and of polytopic region constraints
become big-M activations with one binary per mode; ellipsoid unions become
big-M-relaxed quadratic rows with one binary per ellipsoid.  All big-M
constants come from interval arithmetic over the declared variable boxes,
so the projection of the mixed-integer feasible set onto the continuous
variables is exactly the graph of the piecewise-affine map.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .mmps import AffineModeSet, EllipsoidUnion, MmpsFunction, MmpsRegion, eval_mmps
from .problem import MiProblem, MiProblemBuilder, QuadConstraint

__all__ = ["HorizonSpec", "MpcEncoding", "count_binaries",
           "export_problem", "import_problem"]


@dataclass(frozen=True)
class HorizonSpec:
    """Tracking problem over a prediction horizon of np_steps control steps."""

    np_steps: int
    tsc: float
    theta_x: np.ndarray   # (n,) non-negative diagonal weights on state error
    theta_u: np.ndarray   # (m,) non-negative diagonal weights on inputs
    x0: np.ndarray        # (n,) measured state
    x_ref: np.ndarray     # (np_steps, n) reference states

    def __post_init__(self):
        if self.np_steps < 1:
            raise ValueError("np_steps must be at least 1")
        theta_x = np.asarray(self.theta_x, dtype=float)
        theta_u = np.asarray(self.theta_u, dtype=float)
        if np.any(theta_x < 0.0) or np.any(theta_u < 0.0):
            raise ValueError("weights must be non-negative")
        x_ref = np.atleast_2d(np.asarray(self.x_ref, dtype=float))
        if x_ref.shape != (self.np_steps, theta_x.shape[0]):
            raise ValueError("x_ref must have shape (np_steps, n)")
        object.__setattr__(self, "theta_x", theta_x)
        object.__setattr__(self, "theta_u", theta_u)
        object.__setattr__(self, "x0", np.asarray(self.x0, dtype=float))
        object.__setattr__(self, "x_ref", x_ref)


@dataclass
class _MaxRecord:
    """Bookkeeping for one encoded max term (used to decode candidates)."""

    z_idx: int
    delta_idx: list[int]
    weights: np.ndarray   # (P, K) coefficients over var_idx
    const: np.ndarray     # (P,)
    var_idx: list[int]


@dataclass
class _EllipsoidRecord:
    delta_idx: list[int]
    union: EllipsoidUnion
    x_idx: list[int] | None   # None when the state is the fixed x0
    u_idx: list[int]
    step: int


class MpcEncoding:
    """Builder for one MPC instance; call the encode_* methods, then build()."""

    def __init__(self, spec: HorizonSpec,
                 x_bounds: list[tuple[float, float]],
                 u_bounds: list[tuple[float, float]],
                 soft_constraints: bool = False,
                 slack_penalty: float = 1e4):
        self.spec = spec
        self.n = len(x_bounds)
        self.m = len(u_bounds)
        self.x_bounds = [tuple(map(float, b)) for b in x_bounds]
        self.u_bounds = [tuple(map(float, b)) for b in u_bounds]
        self.soft = soft_constraints
        self.slack_penalty = float(slack_penalty)
        self.builder = MiProblemBuilder()
        npred = spec.np_steps
        self.u_idx = [[self.builder.add_var(*self.u_bounds[c], name=f"u{j}_{c}")
                       for c in range(self.m)] for j in range(npred)]
        self.x_idx = [[self.builder.add_var(*self.x_bounds[c], name=f"x{j + 1}_{c}")
                       for c in range(self.n)] for j in range(npred)]
        self.max_records: list[_MaxRecord] = []
        self.dyn_records: list[list[tuple[_MaxRecord, _MaxRecord]]] = []
        self.region_records: list[tuple[_MaxRecord, _MaxRecord]] = []
        self.ellipsoid_records: list[_EllipsoidRecord] = []
        self.slack_idx: list[int] = []
        self.ex_idx: list[list[int]] = []
        self.eu_idx: list[list[int]] = []
        self.binaries_emitted = 0
        self._model: MmpsFunction | None = None

    # -- variable helpers ---------------------------------------------------

    def _state_vars(self, j: int) -> list[int] | None:
        """Variables of x(k+j); None for j = 0 (the fixed measurement)."""
        return None if j == 0 else self.x_idx[j - 1]

    def _pair_vars(self, j: int) -> tuple[list[int], np.ndarray | None]:
        """(variable list, constant state) for the step-j pair (x(k+j), u(k+j))."""
        xs = self._state_vars(j)
        if xs is None:
            return list(self.u_idx[j]), self.spec.x0
        return [*xs, *self.u_idx[j]], None

    def _slack(self, name: str) -> int:
        idx = self.builder.add_var(0.0, 10.0, name=name)
        self.builder.add_objective(idx, self.slack_penalty)
        self.slack_idx.append(idx)
        return idx

    # -- big-M max encoding -------------------------------------------------

    def encode_max(self, weights: np.ndarray, const: np.ndarray,
                   var_idx: list[int], name: str) -> _MaxRecord:
        """Encode z = max_i (weights[i] @ vars + const[i]) with one binary per mode.

        Big-M constants come from interval arithmetic over the variable bounds.
        """
        weights = np.atleast_2d(weights)
        const = np.atleast_1d(const)
        p_modes = weights.shape[0]
        lo = np.array([self.builder._lb[i] for i in var_idx])
        hi = np.array([self.builder._ub[i] for i in var_idx])
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ValueError("big-M encoding requires finite variable bounds")
        mode_lo = const + np.minimum(weights * lo, weights * hi).sum(axis=1)
        mode_hi = const + np.maximum(weights * lo, weights * hi).sum(axis=1)
        z_lo = float(mode_lo.max())
        z_hi = float(mode_hi.max())
        z = self.builder.add_var(z_lo, z_hi, name=f"z_{name}")
        deltas = []
        if p_modes == 1:
            d = self.builder.add_var(1.0, 1.0, name=f"d_{name}_0", binary=True)
            deltas.append(d)
            self.binaries_emitted += 1
            coeffs = {z: 1.0}
            for i, v in zip(var_idx, weights[0]):
                if v:
                    coeffs[i] = coeffs.get(i, 0.0) - v
            self.builder.add_eq(coeffs, float(const[0]))
        else:
            for i in range(p_modes):
                d = self.builder.add_var(0.0, 1.0, name=f"d_{name}_{i}", binary=True)
                deltas.append(d)
                self.binaries_emitted += 1
            for i in range(p_modes):
                # z >= phi_i
                coeffs = {z: -1.0}
                for vi, w in zip(var_idx, weights[i]):
                    if w:
                        coeffs[vi] = coeffs.get(vi, 0.0) + w
                self.builder.add_le(coeffs, -float(const[i]))
                # z <= phi_i + M_i (1 - delta_i)
                big_m = z_hi - float(mode_lo[i])
                coeffs = {z: 1.0, deltas[i]: big_m}
                for vi, w in zip(var_idx, weights[i]):
                    if w:
                        coeffs[vi] = coeffs.get(vi, 0.0) - w
                self.builder.add_le(coeffs, float(const[i]) + big_m)
            self.builder.add_eq({d: 1.0 for d in deltas}, 1.0)
        rec = _MaxRecord(z_idx=z, delta_idx=deltas, weights=weights.copy(),
                         const=const.copy(), var_idx=list(var_idx))
        self.max_records.append(rec)
        return rec

    def _encode_mode_set(self, ms: AffineModeSet, j: int, name: str) -> _MaxRecord:
        """Encode max over a mode set evaluated at (x(k+j), u(k+j))."""
        var_idx, x_const = self._pair_vars(j)
        if x_const is not None:
            weights = ms.b
            const = ms.h + ms.a @ x_const
        else:
            weights = np.hstack([ms.a, ms.b])
            const = ms.h
        return self.encode_max(weights, const, var_idx, name)

    # -- problem pieces -----------------------------------------------------

    def encode_objective(self) -> None:
        """l1 tracking objective via non-negative epigraph variables."""
        spec = self.spec
        for j in range(spec.np_steps):
            ex_row, eu_row = [], []
            for s in range(self.n):
                lo, hi = self.x_bounds[s]
                ref = spec.x_ref[j, s]
                e_hi = max(abs(lo - ref), abs(hi - ref))
                e = self.builder.add_var(0.0, e_hi, name=f"ex{j}_{s}")
                ex_row.append(e)
                self.builder.add_objective(e, float(spec.theta_x[s]))
                xi = self.x_idx[j][s]
                self.builder.add_le({xi: 1.0, e: -1.0}, ref)
                self.builder.add_le({xi: -1.0, e: -1.0}, -ref)
            for c in range(self.m):
                lo, hi = self.u_bounds[c]
                e_hi = max(abs(lo), abs(hi))
                e = self.builder.add_var(0.0, e_hi, name=f"eu{j}_{c}")
                eu_row.append(e)
                self.builder.add_objective(e, float(spec.theta_u[c]))
                ui = self.u_idx[j][c]
                self.builder.add_le({ui: 1.0, e: -1.0}, 0.0)
                self.builder.add_le({ui: -1.0, e: -1.0}, 0.0)
            self.ex_idx.append(ex_row)
            self.eu_idx.append(eu_row)

    def encode_dynamics(self, f: MmpsFunction) -> None:
        """x(k+j) = max(plus) - max(minus), componentwise, for j = 1..np_steps."""
        if f.n != self.n or f.m != self.m:
            raise ValueError("model dimensions do not match the encoding")
        self._model = f
        for j in range(self.spec.np_steps):
            step_records = []
            for s in range(self.n):
                zp = self._encode_mode_set(f.plus[s], j, f"dyn{j}_{s}p")
                zm = self._encode_mode_set(f.minus[s], j, f"dyn{j}_{s}m")
                xi = self.x_idx[j][s]
                self.builder.add_eq({xi: 1.0, zp.z_idx: -1.0, zm.z_idx: 1.0}, 0.0)
                step_records.append((zp, zm))
            self.dyn_records.append(step_records)

    def encode_region(self, g: MmpsRegion) -> None:
        """0 <= max(gamma_plus) - max(gamma_minus) <= 1 at every horizon step."""
        if g.n != self.n or g.m != self.m:
            raise ValueError("region dimensions do not match the encoding")
        for j in range(self.spec.np_steps):
            lp = self._encode_mode_set(g.gamma_plus, j, f"reg{j}p")
            lm = self._encode_mode_set(g.gamma_minus, j, f"reg{j}m")
            upper = {lp.z_idx: 1.0, lm.z_idx: -1.0}
            lower = {lp.z_idx: -1.0, lm.z_idx: 1.0}
            if self.soft:
                upper[self._slack(f"sreg{j}u")] = -1.0
                lower[self._slack(f"sreg{j}l")] = -1.0
            self.builder.add_le(upper, 1.0)
            self.builder.add_le(lower, 0.0)
            self.region_records.append((lp, lm))

    def encode_ellipsoids(self, e: EllipsoidUnion) -> None:
        """Disjunctive membership in at least one ellipsoid at every step."""
        if e.n != self.n or e.m != self.m:
            raise ValueError("ellipsoid dimensions do not match the encoding")
        for j in range(self.spec.np_steps):
            var_idx, x_const = self._pair_vars(j)
            deltas = []
            for k in range(e.count):
                d = self.builder.add_var(0.0, 1.0, name=f"de{j}_{k}", binary=True)
                deltas.append(d)
                self.binaries_emitted += 1
            self.builder.add_eq({d: 1.0 for d in deltas}, 1.0)
            lo = np.array([self.builder._lb[i] for i in var_idx])
            hi = np.array([self.builder._ub[i] for i in var_idx])
            for k, (q, c) in enumerate(zip(e.q, e.center)):
                lam_max = float(np.max(np.linalg.eigvalsh(0.5 * (q + q.T))))
                if x_const is not None:
                    # Fold the fixed state into constants; keep the u block.
                    dx = x_const - c[:self.n]
                    cu = c[self.n:]
                    quu = q[self.n:, self.n:]
                    qxu = q[:self.n, self.n:]
                    q_mat = quu
                    q_lin = 2.0 * (dx @ qxu) - 2.0 * (quu @ cu)
                    const = float(dx @ q[:self.n, :self.n] @ dx)
                    const += float(cu @ quu @ cu)
                    const -= 2.0 * float((dx @ qxu) @ cu)
                    rhs_shift = -const
                    span = float(dx @ dx) + float(
                        np.sum(np.maximum((lo - cu) ** 2, (hi - cu) ** 2)))
                else:
                    q_mat = q
                    q_lin = -2.0 * (q @ c)
                    rhs_shift = -float(c @ q @ c)
                    span = float(np.sum(np.maximum((lo - c) ** 2, (hi - c) ** 2)))
                # Interval bound on the full quadratic form over the box.
                form_hi = lam_max * span
                big_m = max(1.0, form_hi - 1.0)
                # form(v) + M delta_k <= 1 + M  (active when delta_k = 1)
                idx = [*var_idx, deltas[k]]
                kdim = len(var_idx)
                q_full = np.zeros((kdim + 1, kdim + 1))
                q_full[:kdim, :kdim] = q_mat
                lin_full = np.concatenate([q_lin, [big_m]])
                rhs = 1.0 + big_m + rhs_shift
                if self.soft:
                    s = self._slack(f"sell{j}_{k}")
                    idx.append(s)
                    q_tmp = np.zeros((kdim + 2, kdim + 2))
                    q_tmp[:kdim, :kdim] = q_mat
                    q_full = q_tmp
                    lin_full = np.concatenate([q_lin, [big_m, -1.0]])
                self.builder.add_quad(idx, q_full, lin_full, rhs)
            self.ellipsoid_records.append(
                _EllipsoidRecord(delta_idx=deltas, union=e,
                                 x_idx=self._state_vars(j), u_idx=list(self.u_idx[j]),
                                 step=j))

    def build(self) -> MiProblem:
        return self.builder.build()

    # -- decoding -----------------------------------------------------------

    def decode_inputs(self, x: np.ndarray) -> np.ndarray:
        return np.array([[x[i] for i in row] for row in self.u_idx])

    def decode_states(self, x: np.ndarray) -> np.ndarray:
        return np.array([[x[i] for i in row] for row in self.x_idx])

    def candidate_from_inputs(self, u_seq: np.ndarray) -> np.ndarray | None:
        """Full variable assignment from an input sequence via model rollout.

        Sets every max term and binary to its argmax selection, making the
        point mixed-integer feasible whenever the rollout respects the state
        box and the encoded constraints.  Returns None if the rollout leaves
        the state box (the candidate could not be feasible).
        """
        if self._model is None:
            raise ValueError("encode_dynamics must run before building candidates")
        spec = self.spec
        u_seq = np.asarray(u_seq, dtype=float)
        n_vars = self.builder.n_vars
        out = np.zeros(n_vars)
        lo = np.array(self.builder._lb)
        hi = np.array(self.builder._ub)
        x_traj = [spec.x0]
        for j in range(spec.np_steps):
            nxt = eval_mmps(self._model, x_traj[-1], u_seq[j])
            x_traj.append(nxt)
            for s in range(self.n):
                blo, bhi = self.x_bounds[s]
                if not (blo - 1e-9 <= nxt[s] <= bhi + 1e-9):
                    return None
            for c in range(self.m):
                out[self.u_idx[j][c]] = u_seq[j, c]
            for s in range(self.n):
                out[self.x_idx[j][s]] = nxt[s]
        # Max terms: pick the active mode.
        for rec in self.max_records:
            vals = rec.weights @ out[rec.var_idx] + rec.const
            k = int(np.argmax(vals))
            out[rec.z_idx] = vals[k]
            for i, d in enumerate(rec.delta_idx):
                out[d] = 1.0 if i == k else 0.0
        for rec in self.ellipsoid_records:
            xv = (spec.x0 if rec.x_idx is None
                  else np.array([out[i] for i in rec.x_idx]))
            uv = np.array([out[i] for i in rec.u_idx])
            v = np.concatenate([xv, uv])
            forms = [float((v - c) @ q @ (v - c))
                     for q, c in zip(rec.union.q, rec.union.center)]
            k = int(np.argmin(forms))
            for i, d in enumerate(rec.delta_idx):
                out[d] = 1.0 if i == k else 0.0
        # Epigraph and slack variables: tightest feasible values.
        for j in range(len(self.ex_idx)):
            for s in range(self.n):
                out[self.ex_idx[j][s]] = abs(out[self.x_idx[j][s]] - spec.x_ref[j, s])
            for c in range(self.m):
                out[self.eu_idx[j][c]] = abs(out[self.u_idx[j][c]])
        for s_idx in self.slack_idx:
            out[s_idx] = 0.0
        np.clip(out, lo, hi, out=out)
        return out


def count_binaries(model: MmpsFunction,
                   constraint: MmpsRegion | EllipsoidUnion | None,
                   np_steps: int) -> int:
    """Binary-variable count of the encoded horizon problem.

    MILP (MMPS region): Np * (R+ + R- + sum_s (P_s+ + P_s-)); MIQCP
    (ellipsoid union): Np * (n_e + sum_s (P_s+ + P_s-)).
    """
    if np_steps < 0:
        raise ValueError("np_steps must be non-negative")
    per_step = sum(model.plus[s].count + model.minus[s].count
                   for s in range(model.n_out))
    if isinstance(constraint, MmpsRegion):
        per_step += constraint.gamma_plus.count + constraint.gamma_minus.count
    elif isinstance(constraint, EllipsoidUnion):
        per_step += constraint.count
    elif constraint is not None:
        raise TypeError(f"unsupported constraint type {type(constraint)!r}")
    return np_steps * per_step


# ---------------------------------------------------------------------------
# Problem export / import.  Deterministic text serialization with sections
# VARS / BINARIES / LINEAR / QUAD / OBJ; 17 significant digits.
# ---------------------------------------------------------------------------

def _fmt(v: float) -> str:
    return f"{v:.17g}"


def export_problem(p: MiProblem, path: str | Path) -> None:
    lines = ["miproblem", f"VARS {p.n}"]
    names = p.names if p.names else [f"v{i}" for i in range(p.n)]
    for i in range(p.n):
        lines.append(f"{names[i]} {_fmt(p.lb[i])} {_fmt(p.ub[i])}")
    bins = p.binary_indices
    lines.append(f"BINARIES {bins.size}")
    if bins.size:
        lines.append(" ".join(str(i) for i in bins))
    n_ub = p.a_ub.shape[0] if p.a_ub.size else 0
    n_eq = p.a_eq.shape[0] if p.a_eq.size else 0
    lines.append(f"LINEAR {n_ub} {n_eq}")
    for kind, a, b in (("le", p.a_ub, p.b_ub), ("eq", p.a_eq, p.b_eq)):
        for r in range(a.shape[0] if a.size else 0):
            nz = np.flatnonzero(a[r])
            terms = " ".join(f"{i}:{_fmt(a[r, i])}" for i in nz)
            lines.append(f"{kind} {_fmt(b[r])} {terms}")
    lines.append(f"QUAD {len(p.quad)}")
    for qc in p.quad:
        k = qc.idx.size
        lines.append(f"quad {_fmt(qc.rhs)} {k} " + " ".join(str(i) for i in qc.idx))
        for r in range(k):
            lines.append(" ".join(_fmt(v) for v in qc.q_mat[r]))
        lines.append(" ".join(_fmt(v) for v in qc.q_lin))
    nz = np.flatnonzero(p.c)
    lines.append(f"OBJ {nz.size}")
    for i in nz:
        lines.append(f"{i} {_fmt(p.c[i])}")
    Path(path).write_text("\n".join(lines) + "\n")


def import_problem(path: str | Path) -> MiProblem:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != "miproblem":
        raise ValueError(f"{path}: not a problem file")
    pos = 1
    head = lines[pos].split()
    if head[0] != "VARS":
        raise ValueError(f"{path}: expected VARS section")
    n = int(head[1])
    names, lb, ub = [], np.zeros(n), np.zeros(n)
    for i in range(n):
        tokens = lines[pos + 1 + i].split()
        names.append(tokens[0])
        lb[i], ub[i] = float(tokens[1]), float(tokens[2])
    pos += 1 + n
    head = lines[pos].split()
    n_bin = int(head[1])
    is_binary = np.zeros(n, dtype=bool)
    pos += 1
    if n_bin:
        for tok in lines[pos].split():
            is_binary[int(tok)] = True
        pos += 1
    head = lines[pos].split()
    n_ub, n_eq = int(head[1]), int(head[2])
    a_ub, b_ub = np.zeros((n_ub, n)), np.zeros(n_ub)
    a_eq, b_eq = np.zeros((n_eq, n)), np.zeros(n_eq)
    pos += 1
    for r in range(n_ub + n_eq):
        tokens = lines[pos + r].split()
        target_a, target_b, rr = ((a_ub, b_ub, r) if r < n_ub
                                  else (a_eq, b_eq, r - n_ub))
        target_b[rr] = float(tokens[1])
        for term in tokens[2:]:
            i, v = term.split(":")
            target_a[rr, int(i)] = float(v)
    pos += n_ub + n_eq
    head = lines[pos].split()
    n_quad = int(head[1])
    pos += 1
    quad = []
    for _ in range(n_quad):
        tokens = lines[pos].split()
        rhs = float(tokens[1])
        k = int(tokens[2])
        idx = np.array([int(t) for t in tokens[3:3 + k]])
        q_mat = np.array([[float(t) for t in lines[pos + 1 + r].split()]
                          for r in range(k)])
        q_lin = np.array([float(t) for t in lines[pos + 1 + k].split()])
        quad.append(QuadConstraint(idx=idx, q_mat=q_mat, q_lin=q_lin, rhs=rhs))
        pos += 2 + k
    head = lines[pos].split()
    n_obj = int(head[1])
    c = np.zeros(n)
    for r in range(n_obj):
        tokens = lines[pos + 1 + r].split()
        c[int(tokens[0])] = float(tokens[1])
    return MiProblem(c=c, lb=lb, ub=ub, is_binary=is_binary, a_ub=a_ub,
                     b_ub=b_ub, a_eq=a_eq, b_eq=b_eq, quad=quad, names=names)
