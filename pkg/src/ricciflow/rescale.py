"""Extinction-rescaled profiles of the flow.

With tau = 1/(T - t) and alpha = 1/(tau^2 u(0, t)):

  inner   u_tilde(y) = alpha tau^2 u(sqrt(alpha) y, t), limit 1/((T/2)|y|^2 + 1)
  outer   v_tilde(xi, theta) = tau^2 v(tau xi, theta),  limit 2T/xi^2 for xi > T
  front   xi_front = log(alpha)/(2 tau)                 -> T

Both profiles interpolate w bilinearly and then map, so they agree exactly
wherever they overlap. The inner limit is fit by least squares in the
linearized variable 1/u_tilde - 1 = lambda |y|^2, whose slope estimates T/2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _json
from .core import FlowState, curvature_field, interp, resolvable_mask, u_at_origin
from .errors import (
    DegenerateError,
    DomainError,
    InsufficientDataError,
    RangeError,
)


def default_y_grid(y_max: float = 3.0, n: int = 61) -> np.ndarray:
    return np.linspace(0.0, y_max, n)


def default_xi_grid(tau: float, zeta_max: float, n: int = 81) -> np.ndarray:
    """Outer radii [0.25, min(5, 0.98 zeta_max/tau)], inside the grid."""
    hi = min(5.0, 0.98 * zeta_max / tau)
    if hi <= 0.25:
        raise RangeError(f"grid reach zeta_max/tau={zeta_max / tau:.3g} leaves no outer range")
    return np.linspace(0.25, hi, n)


def tau_of(state: FlowState, t_est: float) -> float:
    remaining = t_est - state.t
    if remaining <= 0:
        raise DomainError(f"t={state.t} is at or past the estimated extinction {t_est}")
    return 1.0 / remaining


def alpha(state: FlowState, t_est: float) -> float:
    """Inner scale alpha = 1/(tau^2 u(0, t)); sqrt(alpha) is the core radius."""
    tau = tau_of(state, t_est)
    u0 = u_at_origin(state)
    if u0 <= 0:
        raise DegenerateError(f"origin density must be positive, got {u0}")
    return 1.0 / (tau**2 * u0)


def xi_front(alpha_val: float, tau: float) -> float:
    """Interface position in outer coordinates, log(alpha)/(2 tau)."""
    if alpha_val <= 0:
        raise DomainError(f"alpha must be positive, got {alpha_val}")
    if tau <= 0:
        raise DomainError(f"tau must be positive, got {tau}")
    return math.log(alpha_val) / (2.0 * tau)


def inner_profile(
    state: FlowState,
    t_est: float,
    y_grid: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Theta-averaged rescaled core profile u_tilde on the given radii.

    u_tilde(0) = 1 by construction (alpha is defined from the same origin
    value). Radii mapping below the grid stay in the flat core, where u equals
    u(0); radii mapping above zeta_max raise RangeError.
    """
    y = default_y_grid() if y_grid is None else np.asarray(y_grid, dtype=float)
    if y.ndim != 1 or y.size < 1 or np.any(y < 0):
        raise DomainError("y_grid must be 1-d with nonnegative radii")
    tau = tau_of(state, t_est)
    a = alpha(state, t_est)
    grid = state.grid
    half_log_a = 0.5 * math.log(a)
    y_top = float(np.max(y))
    if y_top > 0 and half_log_a + math.log(y_top) > grid.zeta_max:
        y_feasible = math.exp(grid.zeta_max - half_log_a)
        raise RangeError(
            f"sqrt(alpha)*y leaves the grid; max feasible y is {y_feasible:.6g}"
        )
    u0 = u_at_origin(state)
    prof = np.empty(y.size)
    for k, yk in enumerate(y):
        if yk == 0.0:
            prof[k] = a * tau**2 * u0
            continue
        zeta = half_log_a + math.log(yk)
        if zeta <= grid.zeta_min:
            prof[k] = a * tau**2 * u0
            continue
        vals = interp(state.w, grid, np.full(grid.n_theta, zeta), grid.theta_nodes)
        u_vals = np.exp(np.asarray(vals) - 2.0 * zeta)
        prof[k] = a * tau**2 * float(np.mean(u_vals))
    return y, prof


def fit_lambda(y: np.ndarray, profile: np.ndarray) -> tuple[float, float]:
    """Least-squares slope of 1/u_tilde - 1 against |y|^2, with sup misfit
    relative to the profile scale."""
    y = np.asarray(y, dtype=float)
    profile = np.asarray(profile, dtype=float)
    if y.shape != profile.shape or y.ndim != 1:
        raise DomainError("y and profile must be matching 1-d arrays")
    if y.size < 8:
        raise InsufficientDataError(f"need at least 8 radii to fit, got {y.size}")
    if not np.all(np.isfinite(profile)) or np.any(profile <= 0):
        raise DomainError("profile values must be finite and positive")
    scale = float(np.max(profile))
    if np.ptp(profile) <= 1e-13 * scale:
        raise DegenerateError("constant profile carries no curvature information")
    y2 = y**2
    denom = float(np.sum(y2**2))
    if denom == 0.0:
        raise DegenerateError("all radii vanish; slope is undetermined")
    z = 1.0 / profile - 1.0
    lam = float(np.sum(z * y2) / denom)
    if lam <= 0:
        raise DegenerateError(f"fitted slope {lam:.3e} is not a valid profile parameter")
    residual = float(np.max(np.abs(profile - 1.0 / (lam * y2 + 1.0)))) / scale
    return lam, residual


def outer_profile(
    state: FlowState,
    t_est: float,
    xi_grid: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Rescaled far-field profile v_tilde(xi, theta) = tau^2 e^(w(tau xi, theta)).

    Returns (xi, values) with values of shape (n_xi, n_theta).
    """
    tau = tau_of(state, t_est)
    grid = state.grid
    xi = (
        default_xi_grid(tau, grid.zeta_max)
        if xi_grid is None
        else np.asarray(xi_grid, dtype=float)
    )
    if xi.ndim != 1 or xi.size < 1:
        raise DomainError("xi_grid must be a 1-d array")
    zeta = tau * xi
    if np.max(zeta) > grid.zeta_max or np.min(zeta) < grid.zeta_min:
        raise RangeError(
            f"tau*xi range [{zeta.min():.3g}, {zeta.max():.3g}] leaves the grid "
            f"[{grid.zeta_min}, {grid.zeta_max}]; max feasible xi is "
            f"{grid.zeta_max / tau:.6g}"
        )
    prof = np.empty((xi.size, grid.n_theta))
    for k in range(xi.size):
        vals = interp(state.w, grid, np.full(grid.n_theta, zeta[k]), grid.theta_nodes)
        prof[k, :] = tau**2 * np.exp(np.asarray(vals))
    return xi, prof


def rescaled_origin_curvature(state: FlowState, t_est: float) -> float:
    """(T - t)^2 times the curvature on the innermost resolvable rows.

    Rows closer to the origin than the resolvability threshold carry only
    rounding noise in the discrete Laplacian and are excluded; the first
    resolvable rows still sit deep inside the flat core, where the curvature
    equals its origin value to high accuracy. A state with no resolvable
    curvature anywhere is flat to machine precision and maps to 0.
    """
    mask = resolvable_mask(state)
    rows = np.nonzero(mask.all(axis=1))[0]
    if rows.size == 0:
        return 0.0
    i0 = int(rows[0])
    i1 = min(i0 + 3, state.grid.n_zeta - 1)
    R = curvature_field(state, masked=True)
    val = float(np.mean(R[i0:i1, :]))
    return (t_est - state.t) ** 2 * val


def anisotropy_ratio(state: FlowState, t_est: float, xi: float | None = None) -> float:
    """max/min over theta of v at the outer radius zeta = tau*xi.

    Defaults to xi = 1.5 * t_est, safely outside the front; the sample radius
    is clamped to the uniformly resolved region. Radial states return 1.
    """
    grid = state.grid
    if grid.n_theta == 1:
        return 1.0
    tau = tau_of(state, t_est)
    if xi is None:
        xi = 1.5 * t_est
    zeta = min(tau * xi, grid.zeta_split)
    vals = np.exp(
        np.asarray(interp(state.w, grid, np.full(grid.n_theta, zeta), grid.theta_nodes))
    )
    vmin = float(np.min(vals))
    if vmin <= 0:
        raise DegenerateError(f"angular minimum of v vanished at zeta={zeta}")
    return float(np.max(vals)) / vmin


@dataclass
class ProfileSnapshot:
    """Rescaled profiles and fit summaries captured at one scheduled tau.

    outer has shape (n_xi, n_theta); inner is the theta-averaged radial core
    profile on y_grid.
    """

    tau: float
    t: float
    t_est: float
    alpha: float
    y_grid: np.ndarray
    inner: np.ndarray
    xi_grid: np.ndarray
    outer: np.ndarray
    lambda_fit: float
    lambda_residual: float
    anisotropy: float
    n_theta: int

    def outer_mean(self) -> np.ndarray:
        """Theta-averaged outer profile."""
        return np.mean(self.outer, axis=1)


def build_snapshot(state: FlowState, t_est: float, y_max: float = 3.0) -> ProfileSnapshot:
    tau = tau_of(state, t_est)
    a = alpha(state, t_est)
    y, inner = inner_profile(state, t_est, default_y_grid(y_max=y_max))
    lam, lam_res = fit_lambda(y, inner)
    xi, outer = outer_profile(state, t_est)
    return ProfileSnapshot(
        tau=tau,
        t=state.t,
        t_est=t_est,
        alpha=a,
        y_grid=y,
        inner=inner,
        xi_grid=xi,
        outer=outer,
        lambda_fit=lam,
        lambda_residual=lam_res,
        anisotropy=anisotropy_ratio(state, t_est),
        n_theta=state.grid.n_theta,
    )


def save_snapshot(path: str, snap: ProfileSnapshot) -> None:
    """Write the snapshot as JSON with 17-significant-digit floats."""
    payload = {
        "format": "ricciflow-snapshot",
        "version": 1,
        "tau": snap.tau,
        "t": snap.t,
        "t_est": snap.t_est,
        "alpha": snap.alpha,
        "lambda_fit": snap.lambda_fit,
        "lambda_residual": snap.lambda_residual,
        "anisotropy": snap.anisotropy,
        "n_theta": snap.n_theta,
        "y_grid": [float(v) for v in snap.y_grid],
        "inner": [float(v) for v in snap.inner],
        "xi_grid": [float(v) for v in snap.xi_grid],
        "outer": [[float(v) for v in row] for row in snap.outer],
    }
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_json.dumps17(payload))


def load_snapshot(path: str) -> ProfileSnapshot:
    with open(path, "r", encoding="utf-8") as fh:
        data = _json.loads(fh.read())
    if data.get("format") != "ricciflow-snapshot":
        raise DomainError(f"{path} is not a profile snapshot file")
    return ProfileSnapshot(
        tau=data["tau"],
        t=data["t"],
        t_est=data["t_est"],
        alpha=data["alpha"],
        y_grid=np.asarray(data["y_grid"], dtype=float),
        inner=np.asarray(data["inner"], dtype=float),
        xi_grid=np.asarray(data["xi_grid"], dtype=float),
        outer=np.asarray(data["outer"], dtype=float),
        lambda_fit=data["lambda_fit"],
        lambda_residual=data["lambda_residual"],
        anisotropy=data["anisotropy"],
        n_theta=data["n_theta"],
    )
