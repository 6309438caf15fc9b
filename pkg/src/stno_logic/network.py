"""ODE engine for networks of isolated spin torque nano oscillators.

Each node obeys

    du_j/dt = -i omega u_j + (lam - b |u_j|^2 + C_j(t, v)) u_j + floor * u_j / |u_j|

and carries a filtered output ``v_j`` that low-passes the correlation of
``|u_j|`` with its unit carrier:

    tau_j dv_j/dt = -v_j + phat_j(t) |u_j| / r_ref_j

With ``tau_j = 0`` the output is the instantaneous product.  The ``floor`` term
is a small phase-preserving radial injection; it keeps ``|u|`` from collapsing
to zero between bursts so that a driven oscillator bursts on every carrier
period instead of only the first one.  ``floor = 0`` recovers the bare model.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Sequence

import numba
import numpy as np

from .encoding import DEFAULT_CARRIER, Carrier, Gate
from .errors import BlowUpError, StepSizeError, UnresolvedReferenceError
from .forcing import DEFAULT_GAIN, SIGN_TOLERANCE, ForcingTerm, PackedForcing, gate_forcing, pack_forcings

DEFAULT_DT = 0.01
DEFAULT_STRIDE = 10
DEFAULT_U0 = 0.01
DEFAULT_FLOOR = 1e-5


@dataclass(frozen=True)
class StnoParams:
    omega: float = 0.15
    lam: float = -0.1
    b: float = 0.1
    floor: float = 0.0

    def __post_init__(self):
        if not self.b > 0:
            raise ValueError(f"saturation b must be positive, got {self.b}")
        if self.floor < 0:
            raise ValueError(f"floor must be non-negative, got {self.floor}")


PAPER_PARAMS = StnoParams()
LOGIC_PARAMS = StnoParams(floor=DEFAULT_FLOOR)

DEFAULT_TAU = 2 * DEFAULT_CARRIER.period


@dataclass
class NetworkState:
    t: float
    u: np.ndarray
    v: np.ndarray
    tau: np.ndarray

    def __post_init__(self):
        self.u = np.array(self.u, dtype=complex).reshape(-1)
        self.v = np.array(self.v, dtype=float).reshape(-1)
        self.tau = np.array(self.tau, dtype=float).reshape(-1)
        if not len(self.u) == len(self.v) == len(self.tau):
            raise ValueError("u, v and tau must have equal lengths")
        if np.any(self.tau < 0):
            raise ValueError("time constants must be non-negative")
        if not np.all(np.isfinite(self.u)):
            raise ValueError("magnetizations must be finite")

    @classmethod
    def initial(cls, n: int, u0: complex = DEFAULT_U0, tau: float = DEFAULT_TAU, t: float = 0.0):
        return cls(t, np.full(n, u0, dtype=complex), np.zeros(n), np.full(n, float(tau)))

    @property
    def size(self) -> int:
        return len(self.u)

    def copy(self) -> "NetworkState":
        return NetworkState(self.t, self.u.copy(), self.v.copy(), self.tau.copy())


@dataclass
class Trajectory:
    t: np.ndarray          # (S,)
    u: np.ndarray          # (S, N) complex
    v: np.ndarray          # (S, N)
    stride: int
    dt: float
    r_ref: np.ndarray      # (N,) amplitude normalization of each node
    final: NetworkState
    carriers: list = field(default_factory=list)   # reference carrier per node, or None

    @property
    def size(self) -> int:
        return self.u.shape[1]

    def abs_u(self, node: int = 0) -> np.ndarray:
        return np.abs(self.u[:, node])

    def write_csv(self, path, carrier: Carrier | None = None):
        """Columns t, re_u_j, im_u_j, abs_u_j, v_j per node; with a carrier also abs_u_j_p."""
        header = ["t"]
        for j in range(self.size):
            header += [f"re_u_{j}", f"im_u_{j}", f"abs_u_{j}", f"v_{j}"]
            if carrier is not None:
                header.append(f"abs_u_{j}_p")
        p = carrier(self.t) if carrier is not None else None
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for i, t in enumerate(self.t):
                row = [repr(float(t))]
                for j in range(self.size):
                    uj = self.u[i, j]
                    row += [repr(float(uj.real)), repr(float(uj.imag)), repr(float(abs(uj))), repr(float(self.v[i, j]))]
                    if p is not None:
                        row.append(repr(float(abs(uj) * p[i])))
                w.writerow(row)


# --- compiled kernels -------------------------------------------------------

@numba.njit(cache=True)
def _node_forcing(j, t, v, start, carrier, coef, gain, ref_kind, ref_value, bias, sign_tol, unsettled_zero):
    total = bias[j]
    for m in range(start[j], start[j + 1]):
        A = 0.0
        B = 0.0
        settled = True
        for side in range(2):
            kind = ref_kind[m, side]
            if kind == 0:
                x = ref_value[m, side]
            else:
                src = int(ref_value[m, side])
                vv = v[src]
                if abs(vv) < sign_tol:
                    if unsettled_zero:
                        settled = False
                        x = 0.0
                    else:
                        return total, src
                else:
                    x = 1.0 if vv > 0 else -1.0
                    if kind == 2:
                        x = -x
            if side == 0:
                A = x
            else:
                B = x
        if not settled:
            continue
        arg = coef[m, 0] + coef[m, 1] * A + coef[m, 2] * B
        if arg > 0:
            L = 1.0
        elif arg < 0:
            L = -1.0
        else:
            L = 0.0
        p = carrier[m, 0] * math.cos(2.0 * math.pi * carrier[m, 1] * t + carrier[m, 2])
        total += gain[m] * p * L
    return total, -1


@numba.njit(cache=True)
def _rhs_kernel(t, u, v, tau, omega, lam, b, floor,
                start, carrier, coef, gain, ref_kind, ref_value, bias, ref_carrier, r_ref,
                sign_tol, unsettled_zero, du, dv):
    n = u.shape[0]
    for j in range(n):
        if tau[j] == 0.0:
            phat = ref_carrier[j, 0] * math.cos(2.0 * math.pi * ref_carrier[j, 1] * t + ref_carrier[j, 2])
            v[j] = phat * abs(u[j]) / r_ref[j]
    for j in range(n):
        C, bad = _node_forcing(j, t, v, start, carrier, coef, gain, ref_kind, ref_value, bias,
                               sign_tol, unsettled_zero)
        if bad >= 0:
            return bad
        uj = u[j]
        r2 = uj.real * uj.real + uj.imag * uj.imag
        d = complex(lam - b * r2 + C, -omega) * uj
        if floor > 0.0 and r2 > 0.0:
            d += floor * uj / math.sqrt(r2)
        du[j] = d
        if tau[j] > 0.0:
            phat = ref_carrier[j, 0] * math.cos(2.0 * math.pi * ref_carrier[j, 1] * t + ref_carrier[j, 2])
            dv[j] = (-v[j] + phat * math.sqrt(r2) / r_ref[j]) / tau[j]
        else:
            dv[j] = 0.0
    return -1


@numba.njit(cache=True)
def _rk4_kernel(u0, v0, t0, n_steps, dt, stride, tau, omega, lam, b, floor,
                start, carrier, coef, gain, ref_kind, ref_value, bias, ref_carrier, r_ref,
                sign_tol, unsettled_zero, blow_limit, out_t, out_u, out_v):
    n = u0.shape[0]
    u = u0.copy()
    v = v0.copy()
    vs = np.empty(n)
    ut = np.empty(n, dtype=np.complex128)
    vt = np.empty(n)
    k1u = np.empty(n, dtype=np.complex128)
    k2u = np.empty(n, dtype=np.complex128)
    k3u = np.empty(n, dtype=np.complex128)
    k4u = np.empty(n, dtype=np.complex128)
    k1v = np.empty(n)
    k2v = np.empty(n)
    k3v = np.empty(n)
    k4v = np.empty(n)
    half = 0.5 * dt

    # outputs with tau = 0 are algebraic; bring them in line with u0 first
    for j in range(n):
        if tau[j] == 0.0:
            phat = ref_carrier[j, 0] * math.cos(2.0 * math.pi * ref_carrier[j, 1] * t0 + ref_carrier[j, 2])
            v[j] = phat * abs(u[j]) / r_ref[j]
    out_t[0] = t0
    out_u[0, :] = u
    out_v[0, :] = v
    k = 1
    t = t0
    for step in range(n_steps):
        vs[:] = v
        bad = _rhs_kernel(t, u, vs, tau, omega, lam, b, floor, start, carrier, coef, gain, ref_kind,
                          ref_value, bias, ref_carrier, r_ref, sign_tol, unsettled_zero, k1u, k1v)
        if bad >= 0:
            return 1, bad, step, u, v
        for j in range(n):
            ut[j] = u[j] + half * k1u[j]
            vt[j] = vs[j] + half * k1v[j]
        bad = _rhs_kernel(t + half, ut, vt, tau, omega, lam, b, floor, start, carrier, coef, gain,
                          ref_kind, ref_value, bias, ref_carrier, r_ref, sign_tol, unsettled_zero, k2u, k2v)
        if bad >= 0:
            return 1, bad, step, u, v
        for j in range(n):
            ut[j] = u[j] + half * k2u[j]
            vt[j] = vs[j] + half * k2v[j]
        bad = _rhs_kernel(t + half, ut, vt, tau, omega, lam, b, floor, start, carrier, coef, gain,
                          ref_kind, ref_value, bias, ref_carrier, r_ref, sign_tol, unsettled_zero, k3u, k3v)
        if bad >= 0:
            return 1, bad, step, u, v
        for j in range(n):
            ut[j] = u[j] + dt * k3u[j]
            vt[j] = vs[j] + dt * k3v[j]
        bad = _rhs_kernel(t + dt, ut, vt, tau, omega, lam, b, floor, start, carrier, coef, gain,
                          ref_kind, ref_value, bias, ref_carrier, r_ref, sign_tol, unsettled_zero, k4u, k4v)
        if bad >= 0:
            return 1, bad, step, u, v
        t = t0 + (step + 1) * dt
        for j in range(n):
            u[j] = u[j] + dt / 6.0 * (k1u[j] + 2.0 * k2u[j] + 2.0 * k3u[j] + k4u[j])
            if tau[j] == 0.0:
                phat = ref_carrier[j, 0] * math.cos(2.0 * math.pi * ref_carrier[j, 1] * t + ref_carrier[j, 2])
                v[j] = phat * abs(u[j]) / r_ref[j]
            else:
                v[j] = vs[j] + dt / 6.0 * (k1v[j] + 2.0 * k2v[j] + 2.0 * k3v[j] + k4v[j])
            if not abs(u[j]) <= blow_limit:
                return 2, j, step, u, v
        if (step + 1) % stride == 0:
            out_t[k] = t
            out_u[k, :] = u
            out_v[k, :] = v
            k += 1
    return 0, -1, n_steps, u, v


# --- public API ---------------------------------------------------------------

def _packed(forcings: Sequence[ForcingTerm], params: StnoParams) -> PackedForcing:
    return pack_forcings(forcings, params.lam, params.b)


def rhs(state: NetworkState, params: StnoParams, forcings: Sequence[ForcingTerm],
        sign_tol: float = SIGN_TOLERANCE):
    """Time derivatives ``(du/dt, dv/dt)`` at ``state``.

    Outputs with ``tau = 0`` are algebraic; their entries of ``dv/dt`` are 0.
    """
    if len(forcings) != state.size:
        raise ValueError(f"{len(forcings)} forcings for a network of {state.size} nodes")
    pk = _packed(forcings, params)
    du = np.empty(state.size, dtype=complex)
    dv = np.empty(state.size)
    v = state.v.copy()
    bad = _rhs_kernel(float(state.t), state.u.astype(complex), v, state.tau, params.omega, params.lam,
                      params.b, params.floor, pk.start, pk.carrier, pk.coef, pk.gain, pk.ref_kind,
                      pk.ref_value, pk.bias, pk.ref_carrier, pk.r_ref, sign_tol, False, du, dv)
    if bad >= 0:
        raise UnresolvedReferenceError(bad, v[bad])
    return du, dv


def max_step(params: StnoParams, forcings: Sequence[ForcingTerm]) -> float:
    drive = max((f.max_amplitude for f in forcings), default=0.0)
    return 0.05 / max(1.0, abs(params.lam) + drive)


def blow_up_limit(params: StnoParams, forcings: Sequence[ForcingTerm]) -> float:
    drive = max((f.max_amplitude for f in forcings), default=0.0)
    return 10.0 * max(1.0, math.sqrt(max(0.0, (params.lam + drive) / params.b)))


def integrate(state0: NetworkState, params: StnoParams, forcings: Sequence[ForcingTerm], t_end: float,
              dt: float = DEFAULT_DT, stride: int = DEFAULT_STRIDE, unsettled: str = "raise",
              sign_tol: float = SIGN_TOLERANCE) -> Trajectory:
    """Fixed-step RK4 from ``state0`` to ``t_end``.

    The step count is ``ceil((t_end - t0) / dt)``; samples are kept at steps
    0, stride, 2*stride, ... and the last state is always in ``final``.
    ``unsettled="zero"`` lets a gate whose source node has ``|v| < sign_tol``
    contribute no forcing instead of raising.
    """
    if len(forcings) != state0.size:
        raise ValueError(f"{len(forcings)} forcings for a network of {state0.size} nodes")
    if unsettled not in ("raise", "zero"):
        raise ValueError(f"unsettled must be 'raise' or 'zero', got {unsettled!r}")
    if not dt > 0:
        raise StepSizeError(f"step must be positive, got {dt}")
    limit = max_step(params, forcings)
    if dt > limit * (1 + 1e-12):
        raise StepSizeError(f"dt={dt} exceeds the stability guard {limit:.4g}")
    if not t_end > state0.t:
        raise ValueError(f"t_end={t_end} must exceed the start time {state0.t}")
    if stride < 1:
        raise ValueError("stride must be a positive integer")
    n_steps = int(math.ceil((t_end - state0.t) / dt - 1e-9))
    n_samples = n_steps // stride + 1
    pk = _packed(forcings, params)
    out_t = np.empty(n_samples)
    out_u = np.empty((n_samples, state0.size), dtype=complex)
    out_v = np.empty((n_samples, state0.size))
    limit_u = blow_up_limit(params, forcings)
    status, node, step, u, v = _rk4_kernel(
        state0.u.astype(complex), state0.v.astype(float), float(state0.t), n_steps, float(dt), int(stride),
        state0.tau, params.omega, params.lam, params.b, params.floor,
        pk.start, pk.carrier, pk.coef, pk.gain, pk.ref_kind, pk.ref_value, pk.bias, pk.ref_carrier, pk.r_ref,
        sign_tol, unsettled == "zero", limit_u, out_t, out_u, out_v)
    if status == 1:
        raise UnresolvedReferenceError(node, float(v[node]))
    if status == 2:
        raise BlowUpError(f"|u_{node}| exceeded {limit_u:.3g} at step {step}; check forcing and parameters")
    final = NetworkState(state0.t + n_steps * dt, u, v, state0.tau.copy())
    return Trajectory(out_t, out_u, out_v, stride, dt, pk.r_ref.copy(), final,
                      [f.reference_carrier for f in forcings])


def radial_fixed_point(params: StnoParams, drive: float) -> float:
    """Squared amplitude the oscillator settles to under a constant drive."""
    return max(0.0, (params.lam + drive) / params.b)


def run_logic_gate(gate: Gate, a: int, b: int, params: StnoParams = LOGIC_PARAMS,
                   carrier: Carrier = DEFAULT_CARRIER, gain: float = DEFAULT_GAIN, n_periods: int = 3,
                   dt: float = DEFAULT_DT, stride: int = DEFAULT_STRIDE, u0: complex = DEFAULT_U0) -> Trajectory:
    """Drive a single oscillator with ``gain * p(t) * L(A, B)`` for ``n_periods`` carrier periods."""
    if n_periods < 3:
        raise ValueError("a gate run needs at least 3 carrier periods")
    forcing = gate_forcing(gate, a, b, carrier, gain)
    state = NetworkState.initial(1, u0=u0, tau=2 * carrier.period)
    return integrate(state, params, [forcing], n_periods * carrier.period, dt=dt, stride=stride)

