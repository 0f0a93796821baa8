"""Check evaluation and report rendering for completed runs.

Verdicts are a pure function of the run directory contents. Each enabled
check yields exactly one verdict:

    pass  measured value inside its tolerance
    fail  measured value outside its tolerance
    flag  check not evaluable on this run (insufficient tau, missing
          snapshots, radial run for an angular check); flags never fail a run

All asymptotic comparisons use T_est = t0 + M(t0)/(4*pi), the mass-law
extinction estimate of the regularized problem; the true extinction time of
the unregularized flow is never claimed. Masses follow the 4*pi-consistent
normalization (total rescaled area 4*pi, tail limit 4*pi*T/eta).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__
from .config import CHECK_NAMES, TolerancesConfig
from .diagnostics import (
    harnack_gap,
    harnack_lattice_search,
    log_theta_avg,
    mass_audit,
    sample_harnack_pairs,
    tail_area,
)
from .errors import ConfigurationError, DomainError, RangeError
from .rescale import ProfileSnapshot
from .runio import RunData, load_run
from .solver import load_checkpoint

# Evaluation points fixed by the acceptance setup, not user-tunable:
# asymptotic checks need tau ~ 50 (inner) / tau ~ 12 (outer).
INNER_MIN_TAU = 45.0
OUTER_TAU_WINDOW = (8.0, 16.0)
BAND_MIN_TAU = 10.0
AB_THRESHOLD = -1e-3
MONO_THRESHOLD = 1e-3
ANISOTROPY_LIMIT = 1.1


@dataclass(frozen=True)
class CheckResult:
    name: str
    verdict: str  # pass | fail | flag
    detail: str
    measured: dict = field(default_factory=dict)
    curve: tuple | None = None  # (column names, rows) for the plot CSV


@dataclass(frozen=True)
class Report:
    run_dir: str
    t_est: float
    config_hash: str
    version: str
    results: tuple[CheckResult, ...]

    @property
    def failed(self) -> tuple[CheckResult, ...]:
        return tuple(r for r in self.results if r.verdict == "fail")

    @property
    def passed_all(self) -> bool:
        return not self.failed


class _Ctx:
    """Lazy access to run contents shared across checks."""

    def __init__(self, data: RunData):
        self.data = data
        self.cfg = data.config
        self.records = data.records
        self.snapshots = data.snapshots
        self.t_est = data.t_est
        self.tol = data.config.checks.tolerances
        self._states = None

    @property
    def tau_max(self) -> float:
        return self.records[-1].tau if self.records else 0.0

    def band_records(self):
        return [r for r in self.records if BAND_MIN_TAU <= r.tau]

    def outer_snapshot(self) -> ProfileSnapshot | None:
        lo, hi = OUTER_TAU_WINDOW
        cands = [s for s in self.snapshots if lo <= s.tau <= hi]
        if not cands:
            return None
        return min(cands, key=lambda s: abs(s.tau - 12.0))

    def checkpoint_states(self):
        if self._states is None:
            self._states = []
            for p in self.data.checkpoint_paths:
                state, _ = load_checkpoint(p)
                self._states.append(state)
            self._states.sort(key=lambda s: s.t)
        return self._states


def _flag(name: str, why: str) -> CheckResult:
    return CheckResult(name, "flag", why)


def _verdict(ok: bool) -> str:
    return "pass" if ok else "fail"


def _check_mass_law(ctx: _Ctx) -> CheckResult:
    if len(ctx.records) < 2:
        return _flag("mass-law", "needs at least two records")
    dev = mass_audit(ctx.records)
    m0, t0 = ctx.records[0].mass, ctx.records[0].t
    rows = [(r.t, r.mass, m0 - 4.0 * math.pi * (r.t - t0)) for r in ctx.records]
    return CheckResult(
        "mass-law",
        _verdict(dev <= ctx.tol.mass_law),
        f"max relative deviation from M(t0) - 4*pi*(t-t0): {dev:.3e} (tol {ctx.tol.mass_law:g})",
        {"deviation": dev},
        (("t", "mass", "mass_theory"), rows),
    )


def _check_curvature_band(ctx: _Ctx) -> CheckResult:
    recs = ctx.band_records()
    if not recs or ctx.tau_max < BAND_MIN_TAU:
        return _flag("curvature-band", f"insufficient tau (needs tau >= {BAND_MIN_TAU:g})")
    T = ctx.t_est
    vals = [r.rmax_scaled for r in recs]
    lo, hi = min(vals), max(vals)
    ok = lo >= T and hi <= 6.0 * T
    rows = [(r.tau, r.rmax_scaled, T, 6.0 * T) for r in recs]
    return CheckResult(
        "curvature-band",
        _verdict(ok),
        f"(T_est-t)^2 R_max in [{lo:.4f}, {hi:.4f}], band [{T:.4f}, {6 * T:.4f}] for tau >= {BAND_MIN_TAU:g}",
        {"min": lo, "max": hi},
        (("tau", "rmax_scaled", "band_lo", "band_hi"), rows),
    )


def _check_origin_curvature(ctx: _Ctx) -> CheckResult:
    if ctx.tau_max < INNER_MIN_TAU:
        return _flag("origin-curvature", f"insufficient tau (needs tau >= {INNER_MIN_TAU:g})")
    T = ctx.t_est
    last = ctx.records[-1]
    rel = abs(last.origin_curv_scaled - 2.0 * T) / (2.0 * T)
    rows = [(r.tau, r.origin_curv_scaled, 2.0 * T) for r in ctx.records if r.tau >= 1.0]
    return CheckResult(
        "origin-curvature",
        _verdict(rel <= ctx.tol.curvature),
        f"(T_est-t)^2 R(0) = {last.origin_curv_scaled:.4f} vs 2 T_est = {2 * T:.4f} "
        f"at tau = {last.tau:.1f} ({100 * rel:.2f}%, tol {100 * ctx.tol.curvature:g}%)",
        {"value": last.origin_curv_scaled, "relative_error": rel},
        (("tau", "origin_curv_scaled", "limit"), rows),
    )


def _check_width_band(ctx: _Ctx) -> CheckResult:
    recs = ctx.band_records()
    if not recs or ctx.tau_max < BAND_MIN_TAU:
        return _flag("width-band", f"insufficient tau (needs tau >= {BAND_MIN_TAU:g})")
    vals = [r.width_scaled for r in recs]
    lo, hi = min(vals), max(vals)
    plateau = vals[-1]
    # monotone approach to the plateau, 5% slack for record-time jitter
    gaps = [abs(v - plateau) for v in vals]
    trend = all(g2 <= g1 + 0.05 * plateau for g1, g2 in zip(gaps, gaps[1:]))
    ok = lo > 0.0 and trend
    rows = [(r.tau, r.width_scaled) for r in recs]
    return CheckResult(
        "width-band",
        _verdict(ok),
        f"W/(T_est-t) in [{lo:.4f}, {hi:.4f}] for tau >= {BAND_MIN_TAU:g}; "
        f"plateau {plateau:.4f}; monotone approach: {trend}",
        {"min": lo, "max": hi, "plateau": plateau},
        (("tau", "width_scaled"), rows),
    )


def _check_inner_profile(ctx: _Ctx) -> CheckResult:
    if not ctx.snapshots:
        return _flag("inner-profile", "no snapshots in run directory")
    snap = ctx.snapshots[-1]
    if snap.tau < INNER_MIN_TAU:
        return _flag("inner-profile", f"insufficient tau (last snapshot at tau = {snap.tau:g})")
    T = ctx.t_est
    limit = 1.0 / ((T / 2.0) * snap.y_grid**2 + 1.0)
    sup = float(np.max(np.abs(snap.inner - limit)))
    lam_rel = abs(snap.lambda_fit - T / 2.0) / (T / 2.0)
    ok = sup <= ctx.tol.inner_profile and lam_rel <= ctx.tol.inner_profile
    rows = list(zip(snap.y_grid.tolist(), snap.inner.tolist(), limit.tolist()))
    return CheckResult(
        "inner-profile",
        _verdict(ok),
        f"sup distance to 1/((T_est/2)|y|^2+1) on |y| <= {snap.y_grid[-1]:g}: {sup:.4f}; "
        f"lambda_fit = {snap.lambda_fit:.4f} vs T_est/2 = {T / 2:.4f} ({100 * lam_rel:.2f}%); "
        f"tol {100 * ctx.tol.inner_profile:g}%",
        {"sup_distance": sup, "lambda_fit": snap.lambda_fit, "lambda_rel": lam_rel},
        (("y", "u_tilde", "limit"), rows),
    )


def _check_alpha_slope(ctx: _Ctx) -> CheckResult:
    if ctx.tau_max < BAND_MIN_TAU:
        return _flag("alpha-slope", f"insufficient tau (needs tau >= {BAND_MIN_TAU:g})")
    T = ctx.t_est
    decade = [r for r in ctx.records if r.tau >= ctx.tau_max / 10.0]
    if len(decade) < 3:
        return _flag("alpha-slope", "fewer than 3 records in the last tau-decade")
    taus = np.array([r.tau for r in decade])
    la = np.array([math.log(r.alpha) for r in decade])
    design = np.vstack([taus, np.ones_like(taus)]).T
    (slope, intercept), *_ = np.linalg.lstsq(design, la, rcond=None)
    rel = abs(slope - 2.0 * T) / (2.0 * T)
    ok = slope > 0.0 and rel <= ctx.tol.functionals
    rows = [(t, v, slope * t + intercept) for t, v in zip(taus.tolist(), la.tolist())]
    return CheckResult(
        "alpha-slope",
        _verdict(ok),
        f"log alpha vs tau slope over tau in [{decade[0].tau:.1f}, {ctx.tau_max:.1f}]: "
        f"{slope:.4f} vs 2 T_est = {2 * T:.4f} ({100 * rel:.2f}%, tol {100 * ctx.tol.functionals:g}%)",
        {"slope": float(slope), "relative_error": rel},
        (("tau", "log_alpha", "fit"), rows),
    )


def _check_outer_profile(ctx: _Ctx) -> CheckResult:
    snap = ctx.outer_snapshot()
    if snap is None:
        lo, hi = OUTER_TAU_WINDOW
        return _flag("outer-profile", f"no snapshot with tau in [{lo:g}, {hi:g}]")
    T = ctx.t_est
    xi = snap.xi_grid
    prof = snap.outer_mean()
    sel = (xi >= T + 0.3) & (xi <= 3.0)
    if not np.any(sel):
        return _flag("outer-profile", "xi window [T_est+0.3, 3] not covered by snapshot grid")
    limit = 2.0 * T / xi[sel] ** 2
    sup = float(np.max(np.abs(prof[sel] - limit) / limit))
    # emptiness of the hole interior
    xi_hole = 0.5 * T
    k = int(np.argmin(np.abs(xi - xi_hole)))
    hole = float(prof[k])
    ok = sup <= ctx.tol.outer_profile and hole <= 0.05
    rows = [
        (x, v, 2.0 * T / x**2 if x > T else 0.0)
        for x, v in zip(xi.tolist(), prof.tolist())
    ]
    return CheckResult(
        "outer-profile",
        _verdict(ok),
        f"sup relative distance to 2 T_est/xi^2 on [{T + 0.3:.3f}, 3] at tau = {snap.tau:g}: "
        f"{sup:.4f} (tol {ctx.tol.outer_profile:g}); v_tilde({xi[k]:.3f}) = {hole:.4f} (<= 0.05)",
        {"sup_distance": sup, "hole_value": hole, "tau": snap.tau},
        (("xi", "v_tilde", "limit"), rows),
    )


def _check_tail_area(ctx: _Ctx) -> CheckResult:
    snap = ctx.outer_snapshot()
    if snap is None:
        return _flag("tail-area", "no snapshot near tau = 12")
    T = ctx.t_est
    etas = [e for e in (1.5, 2.0, 2.5, 3.0) if e > T + 0.1]
    if not etas:
        return _flag("tail-area", f"all probes inside the hole (T_est = {T:.3f})")
    worst, rows = 0.0, []
    for eta in etas:
        measured = tail_area(snap, eta)
        target = 4.0 * math.pi * T / eta
        rel = abs(measured - target) / target
        worst = max(worst, rel)
        rows.append((eta, measured, target))
    return CheckResult(
        "tail-area",
        _verdict(worst <= ctx.tol.functionals),
        f"area beyond eta vs 4*pi*T_est/eta for eta in {etas}: worst relative "
        f"deviation {worst:.4f} (tol {ctx.tol.functionals:g})",
        {"worst_rel": worst},
        (("eta", "area", "limit"), rows),
    )


def _check_log_theta_avg(ctx: _Ctx) -> CheckResult:
    snap = ctx.outer_snapshot()
    if snap is None:
        return _flag("log-theta-avg", "no snapshot near tau = 12")
    T = ctx.t_est
    probes = [x for x in (1.5, 2.0, 3.0) if x >= T + 0.3]
    if not probes:
        return _flag("log-theta-avg", f"all probes inside the hole (T_est = {T:.3f})")
    # |Z - Z_limit| = 2*pi*|log ratio|; tolerance is multiplicative on the
    # geometric mean, so the allowance is 2*pi*log(1 + tol)
    allow = 2.0 * math.pi * math.log1p(ctx.tol.functionals)
    worst, rows = 0.0, []
    for x in probes:
        z = log_theta_avg(snap, x)
        zt = 2.0 * math.pi * math.log(2.0 * T / x**2)
        worst = max(worst, abs(z - zt))
        rows.append((x, z, zt))
    return CheckResult(
        "log-theta-avg",
        _verdict(worst <= allow),
        f"Z(xi) vs 2*pi*log(2 T_est/xi^2) at xi in {probes}: worst |diff| {worst:.4f} "
        f"(allowance {allow:.4f} = 2*pi*log(1+{ctx.tol.functionals:g}))",
        {"worst_diff": worst, "allowance": allow},
        (("xi", "Z", "Z_limit"), rows),
    )


def _check_xi_front(ctx: _Ctx) -> CheckResult:
    if ctx.tau_max < INNER_MIN_TAU:
        return _flag("xi-front", f"insufficient tau (needs tau >= {INNER_MIN_TAU:g})")
    T = ctx.t_est
    last = ctx.records[-1]
    rel = abs(last.xi_front - T) / T
    rows = [(r.tau, r.xi_front, T) for r in ctx.records if r.tau >= 1.0]
    return CheckResult(
        "xi-front",
        _verdict(rel <= ctx.tol.functionals),
        f"xi_front = log(alpha)/(2 tau) = {last.xi_front:.4f} vs T_est = {T:.4f} "
        f"at tau = {last.tau:.1f} ({100 * rel:.2f}%, tol {100 * ctx.tol.functionals:g}%)",
        {"xi_front": last.xi_front, "relative_error": rel},
        (("tau", "xi_front", "limit"), rows),
    )


def _check_aronson_benilan(ctx: _Ctx) -> CheckResult:
    t0 = ctx.records[0].t if ctx.records else 0.0
    evolved = [r for r in ctx.records if r.t > t0]
    if not evolved:
        return _flag("aronson-benilan", "no evolved records (only the initial datum row)")
    worst = min(r.ab_margin for r in evolved)
    rows = [(r.tau, r.ab_margin) for r in evolved]
    return CheckResult(
        "aronson-benilan",
        _verdict(worst >= AB_THRESHOLD),
        f"min over evolved records of min(u/t - u_t): {worst:.3e} (threshold {AB_THRESHOLD:g}; "
        "the t0 row is the constructed datum, not a flow image, and is excluded)",
        {"min_margin": worst},
        (("tau", "ab_margin"), rows),
    )


def _check_monotonicity(ctx: _Ctx) -> CheckResult:
    if not ctx.records:
        return _flag("monotonicity", "no records")
    worst = max(r.mono_violation for r in ctx.records)
    rows = [(r.tau, r.mono_violation) for r in ctx.records]
    return CheckResult(
        "monotonicity",
        _verdict(worst <= MONO_THRESHOLD),
        f"max radial monotonicity violation outside B_rho: {worst:.3e} (threshold {MONO_THRESHOLD:g})",
        {"max_violation": worst},
        (("tau", "mono_violation"), rows),
    )


def _check_anisotropy(ctx: _Ctx) -> CheckResult:
    if ctx.cfg.grid.n_theta == 1:
        return _flag("anisotropy", "radial run (n_theta = 1); ratio is 1 by construction")
    if not ctx.snapshots:
        return _flag("anisotropy", "no snapshots in run directory")
    vals = [(s.tau, s.anisotropy) for s in ctx.snapshots]
    final = vals[-1][1]
    trend = all(b <= a * 1.05 for (_, a), (_, b) in zip(vals, vals[1:]))
    ok = final <= ANISOTROPY_LIMIT and trend
    return CheckResult(
        "anisotropy",
        _verdict(ok),
        f"max/min over theta at xi = 1.5 T_est across snapshots: "
        f"{' -> '.join(f'{v:.3f}' for _, v in vals)}; final <= {ANISOTROPY_LIMIT} and decreasing: {ok}",
        {"final": final, "decreasing": trend},
        (("tau", "anisotropy"), vals),
    )


def _check_harnack(ctx: _Ctx) -> CheckResult:
    states = ctx.checkpoint_states()
    T = ctx.t_est
    usable = [s for s in states if s.t > T / 2.0]
    if len(usable) < 2:
        return _flag("harnack", "needs at least two checkpoints with t > T_est/2")
    E = 1.0 + 2.0 / T
    seed = int(ctx.cfg.seed)
    pairs = sample_harnack_pairs(usable, 100, seed=seed, t_min=T / 2.0)
    found = harnack_lattice_search(usable, pairs, E)
    if found is None:
        return CheckResult(
            "harnack",
            "fail",
            f"no lattice (C1, C2) in 10^-3..10^3 gives nonnegative gap for all "
            f"{len(pairs)} pairs (E = 1 + 2/T_est = {E:.4f})",
            {"E": E},
        )
    min_gap = min(harnack_gap(usable, pairs, found))
    return CheckResult(
        "harnack",
        "pass",
        f"gap >= {min_gap:.3e} for all {len(pairs)} pairs at (C1, C2) = "
        f"({found.C1:g}, {found.C2:g}), E = 1 + 2/T_est = {E:.4f}",
        {"C1": found.C1, "C2": found.C2, "min_gap": min_gap, "E": E},
    )


CHECK_FUNCS: dict[str, Callable[[_Ctx], CheckResult]] = {
    "mass-law": _check_mass_law,
    "curvature-band": _check_curvature_band,
    "origin-curvature": _check_origin_curvature,
    "width-band": _check_width_band,
    "inner-profile": _check_inner_profile,
    "alpha-slope": _check_alpha_slope,
    "outer-profile": _check_outer_profile,
    "tail-area": _check_tail_area,
    "log-theta-avg": _check_log_theta_avg,
    "xi-front": _check_xi_front,
    "aronson-benilan": _check_aronson_benilan,
    "monotonicity": _check_monotonicity,
    "anisotropy": _check_anisotropy,
    "harnack": _check_harnack,
}


def evaluate_checks(
    run_dir: str,
    checks: tuple[str, ...] | None = None,
    tolerances: TolerancesConfig | None = None,
) -> Report:
    """Evaluate the enabled checks against a run directory."""
    if checks is not None:
        unknown = [c for c in checks if c not in CHECK_NAMES]
        if unknown:
            raise ConfigurationError(
                f"unknown checks: {unknown}; valid names: {list(CHECK_NAMES)}"
            )
    data = load_run(run_dir)
    ctx = _Ctx(data)
    if tolerances is not None:
        ctx.tol = tolerances
    enabled = checks if checks is not None else data.config.checks.enabled
    results = []
    for name in enabled:
        try:
            results.append(CHECK_FUNCS[name](ctx))
        except (DomainError, RangeError, ValueError) as exc:
            results.append(_flag(name, f"not evaluable: {exc}"))
    return Report(
        run_dir=data.run_dir,
        t_est=data.t_est,
        config_hash=data.summary.get("config_hash", ""),
        version=__version__,
        results=tuple(results),
    )


def render_report(report: Report) -> str:
    lines = [
        "ricciflow run report",
        f"  run directory : {report.run_dir}",
        f"  code version  : {report.version}",
        f"  config hash   : {report.config_hash}",
        f"  T_est         : {report.t_est:.6f}",
        "  T_est is the mass-law extinction estimate t0 + M(t0)/(4*pi) of the",
        "  regularized problem; all asymptotic comparisons use T_est, never the",
        "  true extinction time of the unregularized flow. Mass normalization is",
        "  4*pi-consistent (total rescaled area 4*pi; tail limit 4*pi*T/eta).",
        "",
    ]
    width = max(len(r.name) for r in report.results) if report.results else 0
    for r in report.results:
        lines.append(f"  {r.name:<{width}}  {r.verdict.upper():<4}  {r.detail}")
    lines.append("")
    n_fail = len(report.failed)
    n_flag = sum(1 for r in report.results if r.verdict == "flag")
    lines.append(
        f"  {len(report.results)} checks: "
        f"{sum(1 for r in report.results if r.verdict == 'pass')} pass, "
        f"{n_fail} fail, {n_flag} flagged"
    )
    return "\n".join(lines) + "\n"


def write_report_files(report: Report, dest: str | None = None) -> str:
    """Write report.txt plus one plot-ready CSV per check with a curve.

    Returns the report directory path.
    """
    out = Path(dest) if dest is not None else Path(report.run_dir) / "report"
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.txt").write_text(render_report(report))
    for r in report.results:
        if r.curve is None:
            continue
        cols, rows = r.curve
        name = r.name.replace("-", "_") + ".csv"
        with open(out / name, "w") as fh:
            fh.write(",".join(cols) + "\n")
            for row in rows:
                fh.write(",".join(format(float(v), ".17g") for v in row) + "\n")
    return str(out)
