"""Inequalities and limit functionals evaluated on states and snapshots.

Scalar diagnostics per state: max curvature and width with their extinction
scalings, the core scale alpha with its front coordinate, the origin-curvature
limit, angular anisotropy, the Aronson-Benilan margin min(u/t - u_t), and the
radial-monotonicity deficit. Snapshot functionals: tail area, theta-averaged
log profile, anisotropy at a reference radius. Trajectory checks: mass law
audit and the curvature Harnack gap over sampled space-time pairs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields as dc_fields

import numpy as np

from . import rescale
from .core import (
    FlowState,
    TWO_PI,
    curvature_field,
    interp,
    laplacian_c,
    mass,
    resolvable_mask,
    u_at,
)
from .errors import (
    ConfigurationError,
    DegenerateError,
    DomainError,
    InsufficientDataError,
    RangeError,
)

RECORD_FIELDS = (
    "t",
    "tau",
    "mass",
    "rmax",
    "rmax_scaled",
    "width",
    "width_scaled",
    "alpha",
    "xi_front",
    "origin_curv_scaled",
    "anisotropy",
    "ab_margin",
    "mono_violation",
)


@dataclass(frozen=True)
class DiagnosticsRecord:
    """One row of scalar diagnostics; field order is the CSV column order."""

    t: float
    tau: float
    mass: float
    rmax: float
    rmax_scaled: float
    width: float
    width_scaled: float
    alpha: float
    xi_front: float
    origin_curv_scaled: float
    anisotropy: float
    ab_margin: float
    mono_violation: float

    def __post_init__(self):
        for f in dc_fields(self):
            val = getattr(self, f.name)
            if not math.isfinite(val):
                raise DomainError(f"record field {f.name} is not finite: {val}")


@dataclass(frozen=True)
class HarnackConstants:
    """Curvature shift E = 1 + 2/T and the two path constants of the gap."""

    E: float
    C1: float
    C2: float
    pairs: tuple = ()

    def __post_init__(self):
        if not (self.E > 1.0):
            raise ConfigurationError(f"E must exceed 1, got {self.E}")
        if self.C1 < 0 or self.C2 < 0:
            raise ConfigurationError(f"C1, C2 must be >= 0, got {self.C1}, {self.C2}")


# --- per-state scalars ---------------------------------------------------------


def rmax_scaling(state: FlowState, t_est: float) -> float:
    """(T - t)^2 times the max interior curvature (resolvable nodes only)."""
    R = curvature_field(state, masked=True)
    rmax = float(np.max(R[1:-1, :])) if state.grid.n_zeta > 2 else 0.0
    return (t_est - state.t) ** 2 * max(rmax, 0.0)


def width(state: FlowState) -> float:
    """Max over zeta of the metric length of the circle |x| = e^zeta,
    integral of e^(w/2) d theta; reduces to max 2 pi e^(w/2) radially."""
    lengths = state.grid.dtheta * np.sum(np.exp(0.5 * state.w), axis=1)
    return float(np.max(lengths))


def aronson_benilan(state: FlowState) -> float:
    """Unweighted margin min(R + 1/t) over resolvable interior nodes.

    Unresolvable nodes (flat core) carry R = 0 in the masked field, so they
    contribute 1/t > 0 and never produce a spurious minimum.
    """
    R = curvature_field(state, masked=True)
    return float(np.min(R[1:-1, :])) + 1.0 / state.t


def ab_margin_weighted(state: FlowState) -> float:
    """Density-weighted margin min(u/t - u_t) = min u (R + 1/t) over interior.

    u_t = e^(-2 zeta) Lap_c w; the e^(-2 zeta) weight avoids the 1/u noise
    amplification of the raw curvature in low-density regions. Unresolvable
    Laplacian values are treated as 0 (their true curvature is positive).
    """
    lap = laplacian_c(state.w, state.grid)
    lap = np.where(resolvable_mask(state), lap, 0.0)
    z = state.grid.zeta_nodes[:, None]
    margin = np.exp(-2.0 * z) * (np.exp(state.w) / state.t - lap)
    return float(np.min(margin[1:-1, :]))


def monotonicity_check(
    state: FlowState,
    rho: float,
    pairs=None,
    n_pairs: int = 128,
    seed: int = 0,
) -> float:
    """Max over pairs (x, y) with |y| >= |x| + rho of u(y) - u(x).

    A nonpositive value means radial quasi-monotonicity holds on the sample.
    Default pairs are drawn from a seeded generator around the support scale;
    explicit pairs are filtered to the qualifying set.
    """
    if rho <= 0:
        raise DomainError(f"rho must be positive, got {rho}")
    grid = state.grid
    if pairs is None:
        rng = np.random.default_rng(seed)
        log_rho = math.log(rho)
        lo = max(grid.zeta_min + 0.3, log_rho - 4.0)
        hi = min(grid.zeta_split - 1.0, log_rho + 4.0)
        if hi <= lo:
            raise DomainError("grid too small to sample monotonicity pairs")
        z1 = rng.uniform(lo, hi, n_pairs)
        gap = rho * np.exp(rng.uniform(math.log(1e-3), math.log(20.0), n_pairs))
        th1 = rng.uniform(0.0, TWO_PI, n_pairs)
        th2 = rng.uniform(0.0, TWO_PI, n_pairs)
        r1 = np.exp(z1)
        r2 = np.minimum(r1 + rho + gap, math.exp(grid.zeta_split - 0.2))
        keep = r2 >= r1 + rho
        r1, r2, th1, th2 = r1[keep], r2[keep], th1[keep], th2[keep]
    else:
        r1l, r2l, th1l, th2l = [], [], [], []
        for (x1, y1), (x2, y2) in pairs:
            ra, ta = math.hypot(x1, y1), math.atan2(y1, x1) % TWO_PI
            rb, tb = math.hypot(x2, y2), math.atan2(y2, x2) % TWO_PI
            if rb >= ra + rho - 1e-12:
                r1l.append(ra)
                r2l.append(rb)
                th1l.append(ta)
                th2l.append(tb)
        if not r1l:
            raise InsufficientDataError("no provided pair satisfies |y| >= |x| + rho")
        r1, r2 = np.asarray(r1l), np.asarray(r2l)
        th1, th2 = np.asarray(th1l), np.asarray(th2l)
    worst = -math.inf
    for ra, rb, ta, tb in zip(r1, r2, th1, th2):
        worst = max(worst, u_at(state, rb, tb) - u_at(state, ra, ta))
    return float(worst)


def build_record(state: FlowState, t_est: float, rho: float, seed: int = 0) -> DiagnosticsRecord:
    tau = rescale.tau_of(state, t_est)
    a = rescale.alpha(state, t_est)
    w_val = width(state)
    rmax_sc = rmax_scaling(state, t_est)
    return DiagnosticsRecord(
        t=state.t,
        tau=tau,
        mass=mass(state),
        rmax=rmax_sc * tau**2,
        rmax_scaled=rmax_sc,
        width=w_val,
        width_scaled=w_val * tau,
        alpha=a,
        xi_front=rescale.xi_front(a, tau),
        origin_curv_scaled=rescale.rescaled_origin_curvature(state, t_est),
        anisotropy=rescale.anisotropy_ratio(state, t_est),
        ab_margin=ab_margin_weighted(state),
        mono_violation=monotonicity_check(state, rho, seed=seed),
    )


# --- Harnack gap ----------------------------------------------------------------


def _trapz(y: np.ndarray, x: np.ndarray) -> float:
    return float(np.sum(0.5 * (y[1:] + y[:-1]) * np.diff(x)))


def metric_distance(state: FlowState, x1, x2, n_quad: int = 33) -> float:
    """Length of the straight segment x1 -> x2 under the metric u(x) dx^2."""
    p1 = np.asarray(x1, dtype=float)
    p2 = np.asarray(x2, dtype=float)
    chord = float(np.hypot(*(p2 - p1)))
    if chord == 0.0:
        return 0.0
    s = np.linspace(0.0, 1.0, n_quad)
    pts = p1[None, :] + s[:, None] * (p2 - p1)[None, :]
    r = np.hypot(pts[:, 0], pts[:, 1])
    th = np.mod(np.arctan2(pts[:, 1], pts[:, 0]), TWO_PI)
    vals = np.array([math.sqrt(u_at(state, rr, tt)) for rr, tt in zip(r, th)])
    return chord * _trapz(vals, s)


def _point_curvature(state: FlowState, x) -> float:
    r = math.hypot(*x)
    grid = state.grid
    R = curvature_field(state, masked=True)
    zeta = math.log(r) if r > 0 else -math.inf
    if zeta <= grid.zeta_min:
        return float(R[1, 0])
    theta = math.atan2(x[1], x[0]) % TWO_PI
    return float(interp(R, grid, zeta, theta))


def harnack_gap(states, pairs, k: HarnackConstants) -> list[float]:
    """Gap of the curvature Harnack estimate per pair, required >= 0.

    Each pair is (i1, i2, x1, x2) indexing two states with t1 < t2; the gap is

        1/sqrt(R(x1,t1)+E) - 1/sqrt(R(x2,t2)+E)
          + C1 (t2-t1) + C2 dist_{t1}(x1,x2)^2 / (t2-t1)

    with distance measured as straight-segment length under g(t1). The value
    depends only on the (t1, t2, x1, x2) values, not on indexing.
    """
    states = list(getattr(states, "snapshot_states", states))
    gaps = []
    for i1, i2, x1, x2 in pairs:
        s1, s2 = states[i1], states[i2]
        if s2.t <= s1.t:
            raise DomainError(f"pair needs t1 < t2, got {s1.t} >= {s2.t}")
        R1 = _point_curvature(s1, x1)
        R2 = _point_curvature(s2, x2)
        if R1 + k.E <= 0 or R2 + k.E <= 0:
            raise DegenerateError("curvature below the -E bound; shift E too small")
        dt = s2.t - s1.t
        d = metric_distance(s1, x1, x2)
        gaps.append(
            1.0 / math.sqrt(R1 + k.E)
            - 1.0 / math.sqrt(R2 + k.E)
            + k.C1 * dt
            + k.C2 * d**2 / dt
        )
    return gaps


def sample_harnack_pairs(states, n: int, seed: int = 0, t_min: float | None = None):
    """Draw n (i1, i2, x1, x2) pairs from states with t > t_min, points in the
    resolvable annulus of both states."""
    states = list(getattr(states, "snapshot_states", states))
    if t_min is not None:
        eligible = [i for i, s in enumerate(states) if s.t > t_min]
    else:
        eligible = list(range(len(states)))
    if len(eligible) < 2:
        raise InsufficientDataError("need at least two states after the time cut")
    rng = np.random.default_rng(seed)
    pairs = []
    for _ in range(n):
        i1, i2 = sorted(rng.choice(eligible, size=2, replace=False))
        if states[i1].t == states[i2].t:
            i2 = eligible[-1] if i1 != eligible[-1] else eligible[0]
            i1, i2 = min(i1, i2), max(i1, i2)
        lo, hi = _common_resolvable_range(states[i1], states[i2])
        z = rng.uniform(lo, hi, 2)
        th = rng.uniform(0.0, TWO_PI, 2)
        x1 = (math.exp(z[0]) * math.cos(th[0]), math.exp(z[0]) * math.sin(th[0]))
        x2 = (math.exp(z[1]) * math.cos(th[1]), math.exp(z[1]) * math.sin(th[1]))
        pairs.append((int(i1), int(i2), x1, x2))
    return pairs


def _common_resolvable_range(s1: FlowState, s2: FlowState) -> tuple[float, float]:
    los, his = [], []
    for s in (s1, s2):
        rows = np.nonzero(resolvable_mask(s).all(axis=1))[0]
        if rows.size == 0:
            raise DegenerateError("state has no resolvable curvature rows")
        z = s.grid.zeta_nodes
        los.append(z[rows[0]])
        his.append(min(z[rows[-1]], s.grid.zeta_split))
    lo, hi = max(los) + 0.2, min(his) - 0.2
    if hi <= lo:
        raise DegenerateError("states share no resolvable zeta range")
    return lo, hi


def harnack_lattice_search(
    states,
    pairs,
    E: float,
    lattice=None,
    tol: float = 1e-6,
) -> HarnackConstants | None:
    """Smallest (C1, C2) on a log lattice making every gap >= -tol, or None."""
    if lattice is None:
        lattice = [10.0**k for k in range(-3, 4)]
    best = None
    for c1 in lattice:
        for c2 in lattice:
            k = HarnackConstants(E=E, C1=c1, C2=c2, pairs=tuple(pairs))
            if min(harnack_gap(states, pairs, k)) >= -tol:
                if best is None or (c1 + c2) < (best.C1 + best.C2):
                    best = k
    return best


# --- snapshot functionals --------------------------------------------------------


def tail_area(snapshot: rescale.ProfileSnapshot, eta: float) -> float:
    """Area integral of v_tilde over xi >= eta, theta in [0, 2 pi].

    Quadrature over the stored grid plus an analytic continuation beyond
    xi_hi with the cusp-bound shape c/xi^2, amplitude matched at the edge.
    """
    xi = snapshot.xi_grid
    if eta < xi[0] - 1e-12:
        raise RangeError(f"eta={eta} below snapshot xi_lo={xi[0]}")
    if eta > xi[-1]:
        raise RangeError(f"eta={eta} beyond snapshot xi_hi={xi[-1]}")
    prof = snapshot.outer_mean()
    sel = xi >= eta
    xs = np.concatenate(([eta], xi[sel]))
    ys = np.concatenate(([np.interp(eta, xi, prof)], prof[sel]))
    area_grid = TWO_PI * _trapz(ys, xs)
    c_edge = prof[-1] * xi[-1] ** 2
    return area_grid + TWO_PI * c_edge / xi[-1]


def log_theta_avg(snapshot: rescale.ProfileSnapshot, xi: float) -> float:
    """Integral over theta of log v_tilde(xi, theta), trapezoid in theta."""
    grid_xi = snapshot.xi_grid
    if xi < grid_xi[0] - 1e-12 or xi > grid_xi[-1] + 1e-12:
        raise RangeError(f"xi={xi} outside snapshot range [{grid_xi[0]}, {grid_xi[-1]}]")
    vals = np.array(
        [np.interp(xi, grid_xi, snapshot.outer[:, j]) for j in range(snapshot.outer.shape[1])]
    )
    if np.any(vals <= 0):
        raise DomainError(f"profile has nonpositive values at xi={xi}")
    dtheta = TWO_PI / snapshot.outer.shape[1]
    return dtheta * float(np.sum(np.log(vals)))


def anisotropy(snapshot: rescale.ProfileSnapshot, xi: float) -> float:
    """max over theta / min over theta of v_tilde at the given xi."""
    grid_xi = snapshot.xi_grid
    if xi < grid_xi[0] - 1e-12 or xi > grid_xi[-1] + 1e-12:
        raise RangeError(f"xi={xi} outside snapshot range [{grid_xi[0]}, {grid_xi[-1]}]")
    if snapshot.outer.shape[1] == 1:
        return 1.0
    vals = np.array(
        [np.interp(xi, grid_xi, snapshot.outer[:, j]) for j in range(snapshot.outer.shape[1])]
    )
    vmin = float(np.min(vals))
    if vmin <= 0:
        raise DegenerateError(f"angular minimum of v_tilde vanished at xi={xi}")
    return float(np.max(vals)) / vmin


def mass_audit(traj) -> float:
    """Max relative deviation of the records from the linear mass law."""
    records = list(getattr(traj, "records", traj))
    if len(records) < 2:
        raise InsufficientDataError("mass audit needs at least 2 records")
    t0, m0 = records[0].t, records[0].mass
    dev = 0.0
    for rec in records:
        expected = m0 - 2.0 * TWO_PI * (rec.t - t0)
        dev = max(dev, abs(rec.mass - expected) / m0)
    return dev


# --- records CSV -----------------------------------------------------------------


def save_records(path: str, records) -> None:
    """Write records as CSV: mandatory header, 17-significant-digit decimals."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(RECORD_FIELDS) + "\n")
        for rec in records:
            fh.write(
                ",".join(format(getattr(rec, f), ".17g") for f in RECORD_FIELDS) + "\n"
            )


def load_records(path: str) -> list[DiagnosticsRecord]:
    """Read a records CSV; malformed content reports the offending line."""
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        if header.split(",") != list(RECORD_FIELDS):
            raise ConfigurationError(f"{path}:1: header must be {','.join(RECORD_FIELDS)}")
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != len(RECORD_FIELDS):
                raise ConfigurationError(
                    f"{path}:{lineno}: expected {len(RECORD_FIELDS)} fields, got {len(parts)}"
                )
            try:
                values = [float(p) for p in parts]
            except ValueError as exc:
                raise ConfigurationError(f"{path}:{lineno}: {exc}") from exc
            records.append(DiagnosticsRecord(**dict(zip(RECORD_FIELDS, values))))
    return records
