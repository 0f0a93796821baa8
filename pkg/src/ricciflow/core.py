"""Cylindrical grids and the discrete operators of the planar log-diffusion flow.

The flow u_t = Delta(log u) on R^2 is evolved in cylindrical coordinates
zeta = log r. With v = r^2 u and w = log v, the flow reads (e^w)_t = Lap_c w
where Lap_c = d^2/dzeta^2 + d^2/dtheta^2. Quantities recovered from w:

    u    = e^(w - 2*zeta)                 plane density
    mass = int v dzeta dtheta             area integral of u over the plane
    R    = -(Lap_c w) * e^(-w)            scalar curvature of u*(dx^2 + dy^2)

Grids are uniform in zeta up to a split point and geometrically stretched
beyond it; the theta direction is uniform and periodic. A single-column grid
(n_theta = 1) represents radially symmetric states and carries the full 2*pi
angular measure.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, PrecisionWarning, RangeError

TWO_PI = 2.0 * np.pi

# Stretched spacings may grow by at most this factor per cell.
MAX_STRETCH = 1.2

# Multiple of float64 rounding noise below which a discrete Laplacian value
# cannot be distinguished from zero (used by the curvature resolvability mask).
_RESOLVABLE_FACTOR = 256.0


@dataclass(frozen=True)
class CylGrid:
    """Tensor grid in (zeta, theta) with trapezoid weights in zeta.

    zeta_nodes must be strictly increasing with zeta_min/zeta_max equal to its
    endpoints and zeta_split strictly between them. Spacings may never shrink
    and may grow by at most MAX_STRETCH per cell.
    """

    zeta_nodes: np.ndarray
    n_theta: int
    zeta_min: float
    zeta_split: float
    zeta_max: float

    def __post_init__(self):
        nodes = np.asarray(self.zeta_nodes, dtype=float)
        object.__setattr__(self, "zeta_nodes", nodes)
        if nodes.ndim != 1 or nodes.size < 3:
            raise ConfigurationError("zeta_nodes must be 1-d with at least 3 nodes")
        if not np.all(np.isfinite(nodes)):
            raise ConfigurationError("zeta_nodes must be finite")
        h = np.diff(nodes)
        if np.any(h <= 0):
            raise ConfigurationError("zeta_nodes must be strictly increasing")
        ratios = h[1:] / h[:-1]
        if ratios.size and (ratios.min() < 1.0 - 1e-9 or ratios.max() > MAX_STRETCH + 1e-9):
            raise ConfigurationError(
                f"spacing ratios must lie in [1, {MAX_STRETCH}]; "
                f"got [{ratios.min():.6g}, {ratios.max():.6g}]"
            )
        if self.n_theta < 1:
            raise ConfigurationError(f"n_theta must be >= 1, got {self.n_theta}")
        if not (self.zeta_min < self.zeta_split < self.zeta_max):
            raise ConfigurationError(
                f"need zeta_min < zeta_split < zeta_max, got "
                f"({self.zeta_min}, {self.zeta_split}, {self.zeta_max})"
            )
        if abs(nodes[0] - self.zeta_min) > 1e-12 or abs(nodes[-1] - self.zeta_max) > 1e-12:
            raise ConfigurationError("zeta_nodes endpoints must match zeta_min/zeta_max")

    @property
    def n_zeta(self) -> int:
        return self.zeta_nodes.size

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_zeta, self.n_theta)

    @property
    def spacings(self) -> np.ndarray:
        return np.diff(self.zeta_nodes)

    @property
    def dtheta(self) -> float:
        return TWO_PI / self.n_theta

    @property
    def theta_nodes(self) -> np.ndarray:
        return np.arange(self.n_theta) * self.dtheta

    @property
    def zeta_weights(self) -> np.ndarray:
        """Trapezoid quadrature weights over the zeta nodes."""
        h = self.spacings
        w = np.zeros(self.n_zeta)
        w[:-1] += 0.5 * h
        w[1:] += 0.5 * h
        return w


def build_grid(
    n_zeta: int,
    zeta_min: float = -8.0,
    zeta_split: float = 54.0,
    zeta_max: float = 60.0,
    n_theta: int = 1,
    stretch: float = 1.2,
    h_max: float = 2.0,
) -> CylGrid:
    """Lay out n_zeta nodes: uniform on [zeta_min, zeta_split], stretched above.

    The stretched block starts from the uniform spacing, grows geometrically
    by at most `stretch` per cell, is capped at `h_max`, and its effective
    ratio is solved so the block lands exactly on zeta_max.
    """
    if not (zeta_min < zeta_split < zeta_max):
        raise ConfigurationError(
            f"need zeta_min < zeta_split < zeta_max, got ({zeta_min}, {zeta_split}, {zeta_max})"
        )
    if not (1.0 < stretch <= MAX_STRETCH):
        raise ConfigurationError(f"stretch must lie in (1, {MAX_STRETCH}], got {stretch}")
    if h_max <= 0:
        raise ConfigurationError(f"h_max must be positive, got {h_max}")
    if n_zeta < 16:
        raise ConfigurationError(f"n_zeta must be >= 16, got {n_zeta}")

    span_u = zeta_split - zeta_min
    span_s = zeta_max - zeta_split
    n_cells = n_zeta - 1

    def count_stretched(h: float) -> int:
        # Minimal number of cells reaching span_s at the maximal ratio.
        total, cur, n = 0.0, h, 0
        while total < span_s:
            cur = min(cur * stretch, h_max)
            total += cur
            n += 1
            if n > n_cells:
                break
        return n

    h = span_u / max(4, int(0.8 * n_cells))
    for _ in range(80):
        n_s = count_stretched(h)
        n_u = n_cells - n_s
        if n_u < 4:
            raise ConfigurationError(
                f"n_zeta={n_zeta} is too small for the requested zeta range"
            )
        h_new = span_u / n_u
        if abs(h_new - h) <= 1e-13 * h:
            h = h_new
            break
        h = h_new
    n_s = count_stretched(h)
    n_u = n_cells - n_s
    h = span_u / n_u

    def stretched_sum(r: float) -> float:
        cur, total = h, 0.0
        for _ in range(n_s):
            cur = min(cur * r, h_max)
            total += cur
        return total

    if stretched_sum(1.0) >= span_s:
        # Uniform continuation already covers the stretched span.
        hs = np.full(n_s, span_s / n_s)
    else:
        lo, hi = 1.0, stretch
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if stretched_sum(mid) < span_s:
                lo = mid
            else:
                hi = mid
        r = hi
        hs = []
        cur = h
        for _ in range(n_s):
            cur = min(cur * r, h_max)
            hs.append(cur)
        hs = np.asarray(hs)
        hs *= span_s / hs.sum()

    nodes = np.empty(n_zeta)
    nodes[: n_u + 1] = zeta_min + h * np.arange(n_u + 1)
    nodes[n_u:] = zeta_split + np.concatenate([[0.0], np.cumsum(hs)])
    nodes[n_u] = zeta_split
    nodes[-1] = zeta_max
    return CylGrid(
        zeta_nodes=nodes,
        n_theta=n_theta,
        zeta_min=zeta_min,
        zeta_split=zeta_split,
        zeta_max=zeta_max,
    )


@dataclass
class FlowState:
    """Log-density field w = log(r^2 u) on a grid at absolute time t > 0."""

    grid: CylGrid
    w: np.ndarray
    t: float
    step_index: int = 0
    last_dt: float = 0.0

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float)
        if w.shape != self.grid.shape:
            raise ConfigurationError(
                f"w shape {w.shape} does not match grid shape {self.grid.shape}"
            )
        if not np.all(np.isfinite(w)):
            raise ConfigurationError("w must be finite everywhere")
        if not (self.t > 0.0):
            raise ConfigurationError(f"t must be positive, got {self.t}")
        self.w = w

    def copy(self) -> "FlowState":
        return FlowState(
            grid=self.grid,
            w=self.w.copy(),
            t=self.t,
            step_index=self.step_index,
            last_dt=self.last_dt,
        )


def _as_columns(w: np.ndarray) -> tuple[np.ndarray, bool]:
    w = np.asarray(w, dtype=float)
    if w.ndim == 1:
        return w[:, None], True
    return w, False


def laplacian_c(w: np.ndarray, grid: CylGrid) -> np.ndarray:
    """Discrete cylindrical Laplacian w_zz + w_tt on interior zeta rows.

    Second-order three-point stencil in zeta (exact on quadratics, also on
    nonuniform spacings), periodic second difference in theta. Boundary zeta
    rows are left at zero; the solver closes them with its own conditions.
    """
    W, squeeze = _as_columns(w)
    if W.shape != grid.shape:
        raise ConfigurationError(f"w shape {np.shape(w)} does not match grid {grid.shape}")
    if grid.n_zeta < 3:
        raise ConfigurationError("laplacian_c needs at least 3 zeta nodes")
    h = grid.spacings
    hm = h[:-1][:, None]
    hp = h[1:][:, None]
    out = np.zeros_like(W)
    out[1:-1] = (2.0 / (hm + hp)) * ((W[2:] - W[1:-1]) / hp - (W[1:-1] - W[:-2]) / hm)
    if grid.n_theta > 1:
        dth2 = grid.dtheta**2
        out[1:-1] += (
            np.roll(W, -1, axis=1)[1:-1] - 2.0 * W[1:-1] + np.roll(W, 1, axis=1)[1:-1]
        ) / dth2
    return out[:, 0] if squeeze else out


def mass(state: FlowState, include_tail: bool = True) -> float:
    """Total area integral of u: trapezoid of e^w plus the analytic far tail.

    The far tail assumes the maximal branch v -> 2t/zeta^2 beyond zeta_max,
    contributing 4*pi*t/zeta_max.
    """
    grid = state.grid
    v = np.exp(state.w)
    grid_mass = float(v.sum(axis=1) @ grid.zeta_weights) * grid.dtheta
    if include_tail:
        grid_mass += 2.0 * TWO_PI * state.t / grid.zeta_max
    return grid_mass


def resolvable_mask(state: FlowState) -> np.ndarray:
    """Interior nodes where |Lap_c w| exceeds float64 cancellation noise.

    In the deep collapsed core w is affine to within rounding, so its discrete
    Laplacian is pure cancellation noise; dividing that noise by the tiny e^w
    would fabricate huge curvature values. Diagnostics restrict to this mask.
    """
    grid = state.grid
    lap = laplacian_c(state.w, grid)
    h = grid.spacings
    hm = h[:-1][:, None]
    hp = h[1:][:, None]
    wabs = max(1.0, float(np.max(np.abs(state.w))))
    stencil = np.zeros(grid.shape)
    stencil[1:-1] = (2.0 / (hm + hp)) * (1.0 / hp + 1.0 / hm)
    if grid.n_theta > 1:
        stencil[1:-1] += 4.0 / grid.dtheta**2
    noise = _RESOLVABLE_FACTOR * np.finfo(float).eps * wabs * stencil
    mask = np.abs(lap) > noise
    mask[0, :] = False
    mask[-1, :] = False
    return mask


def curvature_field(state: FlowState, masked: bool = False) -> np.ndarray:
    """Scalar curvature R = -(Lap_c w) e^(-w) on interior rows.

    Boundary zeta rows are filled with their interior neighbors. With
    masked=True, nodes whose Laplacian is below rounding noise are set to 0
    instead of amplifying cancellation error through e^(-w).
    """
    lap = laplacian_c(state.w, state.grid)
    R = -lap * np.exp(-state.w)
    if masked:
        R = np.where(resolvable_mask(state), R, 0.0)
    R[0, :] = R[1, :]
    R[-1, :] = R[-2, :]
    return R


def u_at_origin(state: FlowState) -> float:
    """Estimate u(0, t) as the theta-average of e^(w - 2 zeta) at the innermost row.

    Reliable when the grid reaches deep into the flat core (zeta_min <= -6);
    shallower grids get a PrecisionWarning.
    """
    grid = state.grid
    if grid.zeta_min > -6.0:
        warnings.warn(
            f"u_at_origin: zeta_min={grid.zeta_min} is shallower than -6; "
            "origin estimate may be biased",
            PrecisionWarning,
            stacklevel=2,
        )
    return float(np.mean(np.exp(state.w[0, :] - 2.0 * grid.zeta_nodes[0])))


def interp(w: np.ndarray, grid: CylGrid, zeta, theta):
    """Bilinear interpolation of a field, periodic in theta.

    zeta queries must lie within [zeta_min, zeta_max]; theta is wrapped.
    Exact on grid nodes and on fields affine in zeta.
    """
    W, _ = _as_columns(w)
    if W.shape != grid.shape:
        raise ConfigurationError(f"w shape {np.shape(w)} does not match grid {grid.shape}")
    z = np.asarray(zeta, dtype=float)
    th = np.asarray(theta, dtype=float)
    scalar = z.ndim == 0 and th.ndim == 0
    z, th = np.broadcast_arrays(np.atleast_1d(z), np.atleast_1d(th))

    nodes = grid.zeta_nodes
    slack = 1e-12 * (grid.zeta_max - grid.zeta_min)
    if np.any(z < grid.zeta_min - slack) or np.any(z > grid.zeta_max + slack):
        raise RangeError(
            f"zeta query outside [{grid.zeta_min}, {grid.zeta_max}]: "
            f"range [{z.min():.6g}, {z.max():.6g}]"
        )
    zc = np.clip(z, grid.zeta_min, grid.zeta_max)
    i = np.clip(np.searchsorted(nodes, zc, side="right") - 1, 0, grid.n_zeta - 2)
    fz = (zc - nodes[i]) / (nodes[i + 1] - nodes[i])

    if grid.n_theta == 1:
        vals = (1.0 - fz) * W[i, 0] + fz * W[i + 1, 0]
    else:
        dth = grid.dtheta
        tpos = np.mod(th, TWO_PI) / dth
        j = np.floor(tpos).astype(int) % grid.n_theta
        ft = tpos - np.floor(tpos)
        j2 = (j + 1) % grid.n_theta
        vals = (1.0 - fz) * ((1.0 - ft) * W[i, j] + ft * W[i, j2]) + fz * (
            (1.0 - ft) * W[i + 1, j] + ft * W[i + 1, j2]
        )
    return float(vals[0]) if scalar else vals


def u_field(state: FlowState) -> np.ndarray:
    """Plane density u = e^(w - 2 zeta) on the grid."""
    return np.exp(state.w - 2.0 * state.grid.zeta_nodes[:, None])


def u_at(state: FlowState, r, theta):
    """Plane density u at radii r (interpolating w; r below the grid is clamped
    to the innermost row, where the core is flat in u)."""
    r = np.asarray(r, dtype=float)
    th = np.asarray(theta, dtype=float)
    scalar = r.ndim == 0 and th.ndim == 0
    r, th = np.broadcast_arrays(np.atleast_1d(r), np.atleast_1d(th))
    if np.any(r < 0):
        raise RangeError("radius must be nonnegative")
    grid = state.grid
    with np.errstate(divide="ignore"):
        z = np.where(r > 0, np.log(np.maximum(r, 1e-300)), -np.inf)
    z = np.clip(z, grid.zeta_min, None)
    wq = interp(state.w, grid, z, th)
    vals = np.exp(np.asarray(wq) - 2.0 * z)
    return float(vals[0]) if scalar else vals
