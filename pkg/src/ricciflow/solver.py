"""Implicit evolution of the cylindrical log-diffusion flow.

One step solves the backward-Euler system

    e^(w+) - e^(w_n) = dt * Lap_c w+

by Newton iteration with Jacobian diag(e^(w+)) - dt*Lap_c. The inner boundary
is closed by a ghost row enforcing the regular-origin slope dw/dzeta = 2; the
outer row carries the Dirichlet value log(2 t / zeta_max^2), which selects the
maximal (mass-shedding) branch. Radial systems are solved by a direct banded
factorization, 2D systems by Jacobi-preconditioned conjugate gradients on the
volume-symmetrized operator.
"""

from __future__ import annotations

import io
import json
import math
import os
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.linalg import solve_banded
from scipy.sparse.linalg import LinearOperator, cg

from . import diagnostics, rescale
from .core import CylGrid, FlowState, TWO_PI, mass
from .errors import (
    ConfigurationError,
    DegenerateError,
    DomainError,
    StepRejectedError,
    StiffnessFailureError,
)

DATUM_KINDS = ("disk", "smooth-bump", "two-bumps")


@dataclass(frozen=True)
class InitialDatum:
    """Compactly supported initial bump plus the regularizing far-field tail.

    kind       one of disk / smooth-bump / two-bumps
    height     bump amplitude
    rho        support radius (all mass inside |x| <= rho)
    offsets    bump centers for two-bumps, each strictly inside B_rho
    t0         absolute start time of the evolution
    floor_eps  multiplier in (0, 1] on the cusp-shaped tail floor
    """

    kind: str = "disk"
    height: float = 4.0
    rho: float = 1.0
    offsets: tuple[tuple[float, float], ...] = ()
    t0: float = 0.01
    floor_eps: float = 1.0

    def __post_init__(self):
        if self.kind not in DATUM_KINDS:
            raise ConfigurationError(f"kind must be one of {DATUM_KINDS}, got {self.kind!r}")
        if not (self.height > 0):
            raise ConfigurationError(f"height must be positive, got {self.height}")
        if not (self.rho > 0):
            raise ConfigurationError(f"rho must be positive, got {self.rho}")
        if not (self.t0 > 0):
            raise ConfigurationError(f"t0 must be positive, got {self.t0}")
        if not (0.0 < self.floor_eps <= 1.0):
            raise DegenerateError(
                f"floor_eps must lie in (0, 1] (0 would take log of zero), got {self.floor_eps}"
            )
        offsets = tuple(tuple(float(c) for c in off) for off in self.offsets)
        object.__setattr__(self, "offsets", offsets)
        if self.kind == "two-bumps":
            if len(offsets) != 2:
                raise ConfigurationError("two-bumps requires exactly 2 offsets")
            for off in offsets:
                if math.hypot(*off) >= self.rho:
                    raise ConfigurationError(
                        f"offset {off} must lie strictly inside B_rho (rho={self.rho})"
                    )
        elif offsets:
            raise ConfigurationError(f"offsets are only meaningful for two-bumps, got {offsets}")

    @property
    def is_radial(self) -> bool:
        return self.kind != "two-bumps" or all(c == (0.0, 0.0) for c in self.offsets)


@dataclass(frozen=True)
class SteppingPolicy:
    """Adaptive time-step policy and Newton controls.

    dt is capped by dt_max, by sigma*(T_est - t) (geometric approach to the
    estimated extinction time), by dtau_max per step in rescaled time
    tau = 1/(T_est - t), and by t_frac*t during the early transient.
    """

    dt_max: float = 0.05
    sigma: float = 0.1
    newton_tol: float = 1e-9
    newton_max_iter: int = 30
    tau_schedule: tuple[float, ...] = ()
    dtau_max: float = 0.04
    t_frac: float = 0.25
    dt_min: float = 1e-12
    max_rejects: int = 60

    def __post_init__(self):
        if not (0.0 < self.sigma < 1.0):
            raise ConfigurationError(f"sigma must lie in (0, 1), got {self.sigma}")
        if not (self.dt_max > 0):
            raise ConfigurationError(f"dt_max must be positive, got {self.dt_max}")
        if not (self.newton_tol > 0):
            raise ConfigurationError(f"newton_tol must be positive, got {self.newton_tol}")
        if self.newton_max_iter < 1:
            raise ConfigurationError("newton_max_iter must be >= 1")
        sched = tuple(float(s) for s in self.tau_schedule)
        object.__setattr__(self, "tau_schedule", sched)
        if any(s <= 0 for s in sched):
            raise ConfigurationError(f"tau_schedule must be positive, got {sched}")
        if any(b <= a for a, b in zip(sched, sched[1:])):
            raise ConfigurationError(f"tau_schedule must be strictly increasing, got {sched}")
        if not (self.dtau_max > 0 and self.t_frac > 0 and self.dt_min > 0):
            raise ConfigurationError("dtau_max, t_frac, dt_min must be positive")


# --- initial data ------------------------------------------------------------


def _bump_u0(datum: InitialDatum, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Compactly supported bump part of the initial plane density."""
    if datum.kind == "disk":
        r2 = x**2 + y**2
        return np.where(r2 <= datum.rho**2, datum.height, 0.0)
    if datum.kind == "smooth-bump":
        s = (x**2 + y**2) / datum.rho**2
        return datum.height * np.clip(1.0 - s, 0.0, None) ** 2
    sigma = datum.rho - max(math.hypot(*c) for c in datum.offsets)
    out = np.zeros(np.broadcast(x, y).shape, dtype=float)
    for cx, cy in datum.offsets:
        s = ((x - cx) ** 2 + (y - cy) ** 2) / sigma**2
        out += datum.height * np.clip(1.0 - s, 0.0, None) ** 2
    return out


def tail_floor(datum: InitialDatum, zeta) -> np.ndarray:
    """Positive cusp-shaped tail floor in v-form, defined on all of zeta.

    Above the join it is floor_eps * 2 t0 / zeta^2 (under the exact cusp branch
    for every zeta > 0 since floor_eps <= 1); below the join it continues with
    constant plane density (slope 2 in w), which keeps u bounded at the origin
    and doubles as the global positivity floor.
    """
    z = np.asarray(zeta, dtype=float)
    join = max(math.log(datum.rho), 1.0) + 0.5
    amp = datum.floor_eps * 2.0 * datum.t0
    above = amp / np.maximum(z, join) ** 2
    below = (amp / join**2) * np.exp(2.0 * (np.minimum(z, join) - join))
    return np.where(z >= join, above, below)


def initial_v(datum: InitialDatum, zeta, theta) -> np.ndarray:
    """Initial cylindrical density v0 = e^(2 zeta) u0 + tail floor."""
    z, th = np.broadcast_arrays(
        np.asarray(zeta, dtype=float), np.asarray(theta, dtype=float)
    )
    # the bump vanishes beyond rho; clamp the exponential there so very wide
    # grids do not overflow into inf * 0
    zc = np.minimum(z, math.log(datum.rho))
    r = np.exp(zc)
    u0 = _bump_u0(datum, r * np.cos(th), r * np.sin(th))
    bump = np.where(z <= math.log(datum.rho), np.exp(2.0 * zc) * u0, 0.0)
    return bump + tail_floor(datum, z)


def datum_bump_mass(datum: InitialDatum) -> float:
    """Closed-form plane integral of the bump part of u0."""
    if datum.kind == "disk":
        return math.pi * datum.rho**2 * datum.height
    if datum.kind == "smooth-bump":
        return math.pi * datum.rho**2 * datum.height / 3.0
    sigma = datum.rho - max(math.hypot(*c) for c in datum.offsets)
    return 2.0 * math.pi * sigma**2 * datum.height / 3.0


def check_datum_grid(datum: InitialDatum, grid: CylGrid) -> None:
    """Reject datum/grid combinations the discretization cannot represent."""
    if grid.zeta_split < math.log(datum.rho) + 2.0:
        raise ConfigurationError(
            f"zeta_split={grid.zeta_split} must exceed log(rho)+2={math.log(datum.rho) + 2.0:.3f}"
        )
    if not datum.is_radial and grid.n_theta < 8:
        raise ConfigurationError(
            f"datum {datum.kind} with offsets {datum.offsets} needs an angular grid"
        )


def init_state(datum: InitialDatum, grid: CylGrid) -> FlowState:
    """Sample the regularized initial datum onto the grid as w = log v0."""
    check_datum_grid(datum, grid)
    v0 = initial_v(datum, grid.zeta_nodes[:, None], grid.theta_nodes[None, :])
    return FlowState(grid=grid, w=np.log(v0), t=datum.t0)


def estimate_T(m: float, t: float) -> float:
    """Extinction-time estimate from the linear mass law: T = t + m/(4 pi)."""
    if not (m > 0):
        raise DegenerateError(f"mass must be positive, got {m}")
    return t + m / (2.0 * TWO_PI)


def outer_dirichlet(grid: CylGrid, t: float) -> float:
    """Maximal-branch boundary value w(zeta_max) = log(2 t / zeta_max^2)."""
    return math.log(2.0 * t / grid.zeta_max**2)


def ghost_row(state: FlowState) -> np.ndarray:
    """Virtual row below zeta_min enforcing dw/dzeta = 2 at spacing h0."""
    h0 = state.grid.spacings[0]
    return state.w[0, :] - 2.0 * h0


def boundary_conditions(state: FlowState) -> FlowState:
    """Return the state with the outer Dirichlet row imposed at its time."""
    new = state.copy()
    new.w[-1, :] = outer_dirichlet(state.grid, state.t)
    return new


# --- implicit step -----------------------------------------------------------


class _Stepper:
    """Cached geometry and assembly for the Newton solve on one grid."""

    def __init__(self, grid: CylGrid):
        self.grid = grid
        h = grid.spacings
        nz, nt = grid.shape
        m = nz - 1  # unknown zeta rows: all but the Dirichlet outer row
        self.m = m
        self.h = h
        # volumes of the unknown rows (ghost cell mirrors h0)
        vol = np.empty(m)
        vol[0] = h[0]
        vol[1:] = 0.5 * (h[:-1] + h[1:])[: m - 1]
        self.vol = vol
        # 3-point coefficients for rows 1..m-1 (row 0 is the ghost closure)
        hm = h[: m - 1]
        hp = h[1:m]
        pref = 2.0 / (hm + hp)
        self.c_lo = pref / hm
        self.c_up = pref / hp
        self.dth2 = grid.dtheta**2
        if nt > 1:
            self.A_sym = self._assemble_sym()

    def _assemble_sym(self) -> sp.csr_matrix:
        """Volume-weighted graph Laplacian of the unknown block (SPD as -L)."""
        grid, m, h, vol = self.grid, self.m, self.h, self.vol
        nt = grid.n_theta
        n = m * nt
        rows, cols, vals = [], [], []
        diag = np.zeros(n)

        def add_bond(a, b, wgt):
            rows.extend((a, b))
            cols.extend((b, a))
            vals.extend((-wgt, -wgt))
            diag[a] += wgt
            diag[b] += wgt

        idx = np.arange(n).reshape(m, nt)
        for i in range(m - 1):
            wgt = 1.0 / h[i]
            for j in range(nt):
                add_bond(idx[i, j], idx[i + 1, j], wgt)
        # Dirichlet bond of the outermost unknown row (neighbor value is data)
        diag[idx[m - 1, :]] += 1.0 / h[m - 1]
        if nt > 1:
            for i in range(m):
                wth = vol[i] / self.dth2
                for j in range(nt):
                    add_bond(idx[i, j], idx[i, (j + 1) % nt], wth)
        rows.extend(range(n))
        cols.extend(range(n))
        vals.extend(diag)
        return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))

    def lap_with_bc(self, W: np.ndarray, w_bc: np.ndarray) -> np.ndarray:
        """Lap_c on the unknown rows, closing with ghost slope and Dirichlet data."""
        m, h = self.m, self.h
        out = np.empty_like(W)
        out[0] = (W[1] - W[0]) / h[0] ** 2 - 2.0 / h[0]
        full_up = np.vstack([W[2:], w_bc[None, :]])
        out[1:] = self.c_up[:, None] * (full_up - W[1:]) - self.c_lo[:, None] * (
            W[1:] - W[:-1]
        )
        if self.grid.n_theta > 1:
            out += (np.roll(W, -1, axis=1) - 2.0 * W + np.roll(W, 1, axis=1)) / self.dth2
        return out

    def solve_radial(self, d_main: np.ndarray, dt: float, rhs: np.ndarray) -> np.ndarray:
        m, h = self.m, self.h
        ab = np.zeros((3, m))
        ab[1, :] = d_main
        ab[1, 0] += dt / h[0] ** 2
        ab[0, 1] = -dt / h[0] ** 2
        ab[1, 1:] += dt * (self.c_lo + self.c_up)
        ab[0, 2:] = -dt * self.c_up[:-1]
        ab[2, : m - 1] = -dt * self.c_lo
        return solve_banded((1, 1), ab, rhs)

    def solve_2d(self, ew: np.ndarray, dt: float, rhs_sym: np.ndarray, rtol: float):
        n = rhs_sym.size
        diag_e = (self.vol[:, None] * ew).ravel()
        A = sp.diags(diag_e) + dt * self.A_sym
        inv_diag = 1.0 / (diag_e + dt * self.A_sym.diagonal())
        M = LinearOperator((n, n), matvec=lambda x: inv_diag * x)
        sol, info = cg(A, rhs_sym, rtol=rtol, atol=0.0, M=M, maxiter=8000)
        if info != 0:
            raise StepRejectedError(f"conjugate gradients stalled (info={info})")
        return sol


_STEPPER_CACHE: dict[int, tuple[CylGrid, _Stepper]] = {}


def _stepper_for(grid: CylGrid) -> _Stepper:
    key = id(grid)
    hit = _STEPPER_CACHE.get(key)
    if hit is not None and hit[0] is grid:
        return hit[1]
    stepper = _Stepper(grid)
    if len(_STEPPER_CACHE) > 8:
        _STEPPER_CACHE.clear()
    _STEPPER_CACHE[key] = (grid, stepper)
    return stepper


def step_implicit(
    state: FlowState,
    dt: float,
    newton_tol: float = 1e-9,
    newton_max_iter: int = 30,
) -> FlowState:
    """Advance one backward-Euler step of size dt; raises StepRejectedError
    when Newton fails to reach the tolerance."""
    if not (dt > 0):
        raise ConfigurationError(f"dt must be positive, got {dt}")
    grid = state.grid
    stepper = _stepper_for(grid)
    m = stepper.m
    t_new = state.t + dt
    w_bc = np.full(grid.n_theta, outer_dirichlet(grid, t_new))

    W = state.w[:m, :].copy()
    v_n = np.exp(W)
    vol = stepper.vol[:, None]

    def scaled_residual(Wc):
        # Volume-weighted relative l2 residual. Per-row ratios are useless at
        # collapsed rows where v is many orders below the bulk: there |F| is
        # dominated by rounding of the Laplacian (and, in 2d, by iterative
        # solver noise), while the rows carry no mass and no diagnostic. The
        # global norm measures the step against the same scale the mass
        # budget telescopes over.
        lap = stepper.lap_with_bc(Wc, w_bc)
        F = np.exp(Wc) - v_n - dt * lap
        num = float(np.linalg.norm(vol * F))
        den = float(np.linalg.norm(vol * (v_n + dt * np.abs(lap)))) + 1e-300
        return F, num / den

    F, res = scaled_residual(W)
    converged = res <= newton_tol
    for _ in range(newton_max_iter):
        if converged:
            break
        ew = np.exp(W)
        if grid.n_theta == 1:
            delta = stepper.solve_radial(ew[:, 0], dt, -F[:, 0])[:, None]
        else:
            rhs = -(stepper.vol[:, None] * F).ravel()
            rtol = min(1e-8, max(1e-12, 1e-3 * res))
            delta = stepper.solve_2d(ew, dt, rhs, rtol).reshape(m, grid.n_theta)
        np.clip(delta, -4.0, 4.0, out=delta)
        # backtrack if the residual fails to decrease
        step_scale = 1.0
        for _ in range(6):
            F_try, res_try = scaled_residual(W + step_scale * delta)
            if res_try < res or res_try <= newton_tol:
                break
            step_scale *= 0.5
        W = W + step_scale * delta
        F, res = F_try, res_try
        converged = res <= newton_tol
    if not converged:
        raise StepRejectedError(
            f"Newton stalled at relative residual {res:.3e} (tol {newton_tol:.1e}, dt={dt:.3e})"
        )

    w_new = np.empty_like(state.w)
    w_new[:m, :] = W
    w_new[m, :] = w_bc
    return FlowState(
        grid=grid,
        w=w_new,
        t=t_new,
        step_index=state.step_index + 1,
        last_dt=dt,
    )


def adapt_dt(state: FlowState, policy: SteppingPolicy, t_est: float) -> float:
    """Extinction-aware step size min(dt_max, sigma*(T_est - t))."""
    remaining = t_est - state.t
    if remaining <= 0:
        raise DomainError(f"t={state.t} is at or past the estimated extinction {t_est}")
    return min(policy.dt_max, policy.sigma * remaining)


# --- run orchestration --------------------------------------------------------


@dataclass
class Trajectory:
    """Everything a run produces: records, profile snapshots, retained states."""

    t_est: float
    m0: float
    status: str
    records: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    snapshot_states: list[FlowState] = field(default_factory=list)
    final_state: FlowState | None = None
    hook_values: dict[str, list[tuple[float, float]]] = field(default_factory=dict)


StateHook = Callable[[FlowState, float], float]


def run(
    datum: InitialDatum,
    grid: CylGrid,
    policy: SteppingPolicy,
    *,
    record_stride: int = 10,
    seed: int = 0,
    hooks: dict[str, StateHook] | None = None,
    snapshot_y_max: float = 3.0,
    checkpoint_dir: str | None = None,
    on_record: Callable | None = None,
    on_snapshot: Callable | None = None,
) -> Trajectory:
    """Advance the flow from the datum until tau reaches the schedule's end.

    Emits a diagnostics record at the initial state, every record_stride
    accepted steps, at every scheduled snapshot tau, and at the final state.
    Stops early (status "mass-floor") if the grid mass drops below 1e-3 of the
    initial mass. Step rejections halve dt; persistent rejection below dt_min
    raises StiffnessFailureError after dumping a checkpoint when a directory
    is given.
    """
    if record_stride < 1:
        raise ConfigurationError(f"record_stride must be >= 1, got {record_stride}")
    state = init_state(datum, grid)
    m0 = mass(state)
    t_est = estimate_T(m0, datum.t0)
    hooks = hooks or {}

    traj = Trajectory(t_est=t_est, m0=m0, status="completed")

    def emit_record(st: FlowState):
        rec = diagnostics.build_record(st, t_est, rho=datum.rho, seed=seed)
        traj.records.append(rec)
        for name, fn in hooks.items():
            traj.hook_values.setdefault(name, []).append((st.t, float(fn(st, t_est))))
        if on_record is not None:
            on_record(rec)

    def emit_snapshot(st: FlowState):
        snap = rescale.build_snapshot(st, t_est, y_max=snapshot_y_max)
        traj.snapshots.append(snap)
        traj.snapshot_states.append(st.copy())
        if on_snapshot is not None:
            on_snapshot(snap, st)

    emit_record(state)
    schedule = list(policy.tau_schedule)
    if not schedule:
        traj.final_state = state
        return traj

    tau_max = schedule[-1]
    # schedule entries already reached at t0 are snapshotted immediately
    tau0 = 1.0 / (t_est - state.t)
    while schedule and schedule[0] <= tau0 * (1 + 1e-12):
        emit_snapshot(state)
        schedule.pop(0)

    steps_since_record = 0
    rejects = 0
    while True:
        tau_now = 1.0 / (t_est - state.t)
        if tau_now >= tau_max * (1.0 - 1e-12):
            break
        if mass(state) < 1e-3 * m0:
            traj.status = "mass-floor"
            break
        remaining = t_est - state.t
        dt = min(
            adapt_dt(state, policy, t_est),
            policy.dtau_max * remaining**2 / (1.0 + policy.dtau_max * remaining),
            policy.t_frac * state.t,
        )
        hit_snapshot = False
        if schedule:
            t_target = t_est - 1.0 / schedule[0]
            if state.t + dt >= t_target - 1e-15:
                dt = t_target - state.t
                hit_snapshot = True
        if dt <= 0:
            # target already passed within rounding; snapshot in place
            if schedule:
                emit_snapshot(state)
                schedule.pop(0)
            continue
        attempt_dt = dt
        while True:
            try:
                state = step_implicit(
                    state, attempt_dt, policy.newton_tol, policy.newton_max_iter
                )
                break
            except StepRejectedError:
                rejects += 1
                attempt_dt /= 2.0
                hit_snapshot = False  # the shrunken step no longer lands on target
                if attempt_dt < policy.dt_min or rejects > policy.max_rejects:
                    ckpt = None
                    if checkpoint_dir is not None:
                        os.makedirs(checkpoint_dir, exist_ok=True)
                        ckpt = os.path.join(checkpoint_dir, "stiffness_failure.ckpt")
                        save_checkpoint(ckpt, state)
                    raise StiffnessFailureError(
                        f"step rejected below dt_min={policy.dt_min} at t={state.t}",
                        checkpoint_path=ckpt,
                    )
        steps_since_record += 1
        if hit_snapshot and schedule:
            emit_snapshot(state)
            schedule.pop(0)
            emit_record(state)
            steps_since_record = 0
        elif steps_since_record >= record_stride:
            emit_record(state)
            steps_since_record = 0

    if steps_since_record > 0:
        emit_record(state)
    traj.final_state = state
    return traj


# --- checkpoint files ---------------------------------------------------------

_CKPT_MAGIC = "RICCIFLOW-CKPT"
_CKPT_VERSION = 1


def save_checkpoint(path: str, state: FlowState, config_hash: str = "") -> None:
    """Write a structured-text header plus little-endian float64 blocks
    (zeta nodes, then w row-major: zeta outer, theta inner). Bit-exact."""
    grid = state.grid
    header = {
        "format": _CKPT_MAGIC,
        "version": _CKPT_VERSION,
        "n_zeta": grid.n_zeta,
        "n_theta": grid.n_theta,
        "zeta_min": grid.zeta_min,
        "zeta_split": grid.zeta_split,
        "zeta_max": grid.zeta_max,
        "t": state.t,
        "step_index": state.step_index,
        "last_dt": state.last_dt,
        "config_hash": config_hash,
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(f"{_CKPT_MAGIC} {_CKPT_VERSION} {len(header_bytes)}\n".encode("ascii"))
        fh.write(header_bytes)
        fh.write(b"\n")
        fh.write(np.ascontiguousarray(grid.zeta_nodes, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(state.w, dtype="<f8").tobytes())


def load_checkpoint(path: str) -> tuple[FlowState, dict]:
    """Read a checkpoint written by save_checkpoint; bit-exact round-trip."""
    with open(path, "rb") as fh:
        magic_line = fh.readline().decode("ascii").split()
        if len(magic_line) != 3 or magic_line[0] != _CKPT_MAGIC:
            raise ConfigurationError(f"{path} is not a checkpoint file")
        header = json.loads(fh.read(int(magic_line[2])).decode("utf-8"))
        fh.read(1)  # newline separator
        nz, nt = header["n_zeta"], header["n_theta"]
        nodes = np.frombuffer(fh.read(8 * nz), dtype="<f8").copy()
        w = np.frombuffer(fh.read(8 * nz * nt), dtype="<f8").copy().reshape(nz, nt)
    grid = CylGrid(
        zeta_nodes=nodes,
        n_theta=nt,
        zeta_min=header["zeta_min"],
        zeta_split=header["zeta_split"],
        zeta_max=header["zeta_max"],
    )
    state = FlowState(
        grid=grid,
        w=w,
        t=header["t"],
        step_index=header["step_index"],
        last_dt=header["last_dt"],
    )
    return state, header
