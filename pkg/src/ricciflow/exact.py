"""Closed-form solutions of u_t = Delta(log u) and finite-difference oracles.

These are the reference objects the numerics are verified against:

  cigar                eternal soliton 1/(lam*|y|^2 + e^(4*lam_bar*tau));
                       an exact solution of the flow when lam_bar = lam
  cusp                 maximal far-field branch 2(t+A)/(r^2 log^2 r), r > 1
  inner_profile_limit  collapsing-core limit 1/((T/2)|y|^2 + 1)
  outer_profile_limit  rescaled far-field limit 2T/xi^2 (xi > T), 0 (xi < T)

pde_residual measures u_t - Delta(log u) for an arbitrary positive sampler by
centered differences (5-point Laplacian), converging at second order; the
steady residuals do the same for the two limit profiles' stationary equations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigurationError, DomainError, OracleDomainError


@dataclass(frozen=True)
class SolitonParams:
    """Cigar soliton rates: opening rate lam and collapse rate lam_bar.

    The profile solves the flow exactly only when the two rates agree; they
    are kept independent so fitted values can be compared.
    """

    lam: float
    lam_bar: float

    def __post_init__(self):
        if not (self.lam > 0 and self.lam_bar > 0):
            raise ConfigurationError(
                f"soliton rates must be positive, got lam={self.lam}, lam_bar={self.lam_bar}"
            )


@dataclass(frozen=True)
class CuspParams:
    """Time offset A >= 0 of the exact cusp branch 2(t+A)/(r^2 log^2 r)."""

    a: float = 0.0

    def __post_init__(self):
        if self.a < 0:
            raise ConfigurationError(f"cusp offset must be >= 0, got {self.a}")


def _sq_norm(y) -> np.ndarray:
    """|y|^2 for scalar radii or points (last axis of length 2)."""
    arr = np.asarray(y, dtype=float)
    if arr.ndim >= 1 and arr.shape[-1] == 2:
        return np.sum(arr**2, axis=-1)
    return arr**2


def cigar(y, tau: float, p: SolitonParams):
    """Soliton profile 1/(lam*|y|^2 + e^(4*lam_bar*tau))."""
    f = p.lam * _sq_norm(y) + math.exp(4.0 * p.lam_bar * tau)
    return 1.0 / f


def cigar_curvature(y, tau: float, p: SolitonParams):
    """Scalar curvature of the soliton metric: R = 4*lam*a/f with a = e^(4*lam_bar*tau)."""
    a = math.exp(4.0 * p.lam_bar * tau)
    f = p.lam * _sq_norm(y) + a
    return 4.0 * p.lam * a / f


def cusp(r, t: float, p: CuspParams = CuspParams()):
    """Exact maximal branch 2(t+A)/(r^2 log^2 r); defined for r > 1."""
    r_arr = np.asarray(r, dtype=float)
    if np.any(r_arr <= 1.0):
        raise DomainError(f"cusp profile requires r > 1, got min r = {r_arr.min()}")
    out = 2.0 * (t + p.a) / (r_arr**2 * np.log(r_arr) ** 2)
    return float(out) if np.isscalar(r) or r_arr.ndim == 0 else out


def cusp_v(zeta, t: float, p: CuspParams = CuspParams()):
    """The cusp branch in cylindrical form: v = r^2 u = 2(t+A)/zeta^2, zeta > 0."""
    z = np.asarray(zeta, dtype=float)
    if np.any(z <= 0.0):
        raise DomainError("cusp_v requires zeta > 0")
    out = 2.0 * (t + p.a) / z**2
    return float(out) if np.isscalar(zeta) or z.ndim == 0 else out


def inner_profile_limit(y, t_ext: float):
    """Collapsing-core limit profile 1/((T/2)|y|^2 + 1) for extinction time T > 0."""
    if not (t_ext > 0):
        raise DomainError(f"extinction time must be positive, got {t_ext}")
    return 1.0 / (0.5 * t_ext * _sq_norm(y) + 1.0)


def outer_profile_limit(xi, t_ext: float):
    """Rescaled far-field limit: 2T/xi^2 for xi > T, 0 for 0 <= xi < T.

    The profile jumps at xi = T; evaluation exactly there is refused.
    """
    if not (t_ext > 0):
        raise DomainError(f"extinction time must be positive, got {t_ext}")
    x = np.asarray(xi, dtype=float)
    if np.any(x < 0):
        raise DomainError("xi must be nonnegative")
    if np.any(x == t_ext):
        raise DomainError(f"outer profile is discontinuous at xi = T = {t_ext}")
    with np.errstate(divide="ignore"):
        out = np.where(x > t_ext, 2.0 * t_ext / np.maximum(x, 1e-300) ** 2, 0.0)
    return float(out) if np.isscalar(xi) or x.ndim == 0 else out


Sampler = Callable[[np.ndarray, float], float]


def _sample_positive(sampler: Sampler, x: np.ndarray, t: float) -> float:
    val = float(sampler(x, t))
    if not (val > 0.0) or not math.isfinite(val):
        raise OracleDomainError(
            f"sampler must be positive/finite on the stencil; got {val} at x={x}, t={t}"
        )
    return val


def pde_residual(sampler: Sampler, x, t: float, h: float = 1e-3, dt: float = 1e-3) -> float:
    """Centered-difference estimate of u_t - Delta(log u) at (x, t).

    5-point Laplacian of log(sampler) at spatial step h, centered time
    difference at step dt; both second order. The sampler must be positive on
    the whole stencil.
    """
    if h <= 0 or dt <= 0:
        raise ConfigurationError(f"steps must be positive, got h={h}, dt={dt}")
    x = np.asarray(x, dtype=float).reshape(2)
    center = _sample_positive(sampler, x, t)
    u_t = (_sample_positive(sampler, x, t + dt) - _sample_positive(sampler, x, t - dt)) / (
        2.0 * dt
    )
    lap_log = -4.0 * math.log(center)
    for offset in ((h, 0.0), (-h, 0.0), (0.0, h), (0.0, -h)):
        lap_log += math.log(_sample_positive(sampler, x + offset, t))
    lap_log /= h * h
    return u_t - lap_log


def inner_steady_residual(y, t_ext: float, h: float = 1e-3) -> float:
    """FD residual of the steady core equation Delta(log U) + T div(y U) = 0."""
    if h <= 0:
        raise ConfigurationError(f"step must be positive, got h={h}")
    y = np.asarray(y, dtype=float).reshape(2)

    def u(pt):
        return inner_profile_limit(pt, t_ext)

    lap_log = -4.0 * math.log(u(y))
    for offset in ((h, 0.0), (-h, 0.0), (0.0, h), (0.0, -h)):
        lap_log += math.log(u(y + offset))
    lap_log /= h * h

    div = (
        (y[0] + h) * u(y + (h, 0.0))
        - (y[0] - h) * u(y - (h, 0.0))
        + (y[1] + h) * u(y + (0.0, h))
        - (y[1] - h) * u(y - (0.0, h))
    ) / (2.0 * h)
    return lap_log + t_ext * div


def outer_steady_residual(xi: float, t_ext: float, h: float = 1e-3) -> float:
    """FD residual of the steady far-field equation xi*V' + 2V = 0.

    On the vanishing branch (stencil entirely below T) this is exactly zero.
    """
    if h <= 0:
        raise ConfigurationError(f"step must be positive, got h={h}")
    if xi > t_ext and xi - h <= t_ext:
        raise DomainError(
            f"stencil [{xi - h}, {xi + h}] straddles the front at xi = T = {t_ext}"
        )
    v_p = outer_profile_limit(xi + h, t_ext)
    v_m = outer_profile_limit(xi - h, t_ext)
    v_0 = outer_profile_limit(xi, t_ext)
    return xi * (v_p - v_m) / (2.0 * h) + 2.0 * v_0


# --- fixed sample sets for the verification cases ---------------------------

_CIGAR_POINTS = [(0.3, 0.1), (-0.5, 0.4), (1.0, -0.7), (0.2, 1.5), (-1.2, -0.9)]
_CIGAR_TIMES = [-0.2, 0.1, 0.35]
_CUSP_POINTS = [(1.8, 0.0), (1.9, 1.6), (-3.1, 0.8), (4.2, -4.0), (7.5, 2.0)]
_CUSP_TIMES = [0.3, 1.0]
_INNER_POINTS = [(0.2, 0.1), (0.5, -0.4), (-1.0, 0.6), (1.6, 1.1), (2.4, -0.5)]
_OUTER_POINTS = [1.35, 1.8, 2.6, 4.0]

VERIFY_CASES = ("cigar", "cusp", "inner-steady", "outer-steady")


def case_residual(case: str, h: float, t_ext: float = 1.0) -> float:
    """Max |residual| of one verification case at differencing step h.

    Time steps scale with h so Richardson halvings probe a single order.
    """
    if case == "cigar":
        p = SolitonParams(lam=0.5, lam_bar=0.5)

        def sampler(x, t):
            return cigar(x, t, p)

        return max(
            abs(pde_residual(sampler, pt, t, h=h, dt=h))
            for pt in _CIGAR_POINTS
            for t in _CIGAR_TIMES
        )
    if case == "cusp":
        p = CuspParams(a=0.5)

        def sampler(x, t):
            return cusp(float(np.hypot(x[0], x[1])), t, p)

        return max(
            abs(pde_residual(sampler, pt, t, h=h, dt=h))
            for pt in _CUSP_POINTS
            for t in _CUSP_TIMES
        )
    if case == "inner-steady":
        return max(abs(inner_steady_residual(pt, t_ext, h=h)) for pt in _INNER_POINTS)
    if case == "outer-steady":
        return max(abs(outer_steady_residual(xi, t_ext, h=h)) for xi in _OUTER_POINTS)
    raise ConfigurationError(f"unknown case {case!r}; expected one of {VERIFY_CASES}")


def convergence_table(
    residual_at: Callable[[float], float], h0: float, refinements: int
) -> list[dict]:
    """Residuals under step halving with measured orders log2(res_k / res_{k+1})."""
    if refinements < 2:
        raise ConfigurationError(f"refinements must be >= 2, got {refinements}")
    rows: list[dict] = []
    residuals: list[float] = []
    for k in range(refinements + 1):
        h = h0 / 2**k
        res = abs(residual_at(h))
        order = None
        if k > 0 and res > 0 and residuals[-1] > 0:
            order = math.log2(residuals[-1] / res)
        residuals.append(res)
        rows.append({"h": h, "residual": res, "order": order})
    return rows


def measured_order(rows: Sequence[dict]) -> float | None:
    """Mean of the per-halving orders; None for the identically-zero branch."""
    orders = [r["order"] for r in rows if r["order"] is not None]
    if not orders:
        return None
    return float(np.mean(orders))
