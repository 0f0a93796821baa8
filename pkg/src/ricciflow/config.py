"""Experiment configuration: schema, YAML round-trip, and materializers.

A config document has five sections (datum, grid, policy, outputs, checks)
plus a seed. Unknown keys are rejected, defaults are filled, and
parse_config(render_config(cfg)) returns an identical config.
"""

from __future__ import annotations

import hashlib
from typing import Literal

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .core import CylGrid, build_grid
from .errors import ConfigurationError
from .solver import InitialDatum, SteppingPolicy, check_datum_grid

CHECK_NAMES = (
    "mass-law",
    "curvature-band",
    "origin-curvature",
    "width-band",
    "inner-profile",
    "alpha-slope",
    "outer-profile",
    "tail-area",
    "log-theta-avg",
    "xi-front",
    "aronson-benilan",
    "monotonicity",
    "anisotropy",
    "harnack",
)


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class DatumConfig(_Section):
    kind: Literal["disk", "smooth-bump", "two-bumps"] = "disk"
    height: float = Field(default=4.0, gt=0)
    rho: float = Field(default=1.0, gt=0)
    offsets: tuple[tuple[float, float], ...] = ()
    t0: float = Field(default=0.01, gt=0)
    floor_eps: float = Field(default=1.0, gt=0, le=1)


class GridConfig(_Section):
    n_zeta: int = Field(default=512, ge=3)
    zeta_min: float = -8.0
    zeta_split: float = 54.0
    zeta_max: float = 60.0
    n_theta: int = Field(default=1, ge=1)
    stretch: float = Field(default=1.2, gt=1)
    h_max: float = Field(default=2.0, gt=0)


class PolicyConfig(_Section):
    dt_max: float = Field(default=0.05, gt=0)
    sigma: float = 0.1
    newton_tol: float = Field(default=1e-9, gt=0)
    newton_max_iter: int = Field(default=30, ge=1)
    dtau_max: float = Field(default=0.04, gt=0)
    t_frac: float = Field(default=0.25, gt=0)
    dt_min: float = Field(default=1e-12, gt=0)
    max_rejects: int = Field(default=60, ge=1)

    @field_validator("sigma")
    @classmethod
    def _sigma_open_interval(cls, v: float) -> float:
        if not (0.0 < v < 1.0):
            raise ValueError(f"sigma must lie in (0, 1), got {v}")
        return v


class OutputsConfig(_Section):
    directory: str = "runs/out"
    record_stride: int = Field(default=10, ge=1)
    tau_schedule: tuple[float, ...] = ()

    @field_validator("tau_schedule")
    @classmethod
    def _increasing_positive(cls, v):
        if any(s <= 0 for s in v):
            raise ValueError(f"tau_schedule must be positive, got {list(v)}")
        if any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError(f"tau_schedule must be strictly increasing, got {list(v)}")
        return v


class TolerancesConfig(_Section):
    mass_law: float = Field(default=0.01, gt=0)
    inner_profile: float = Field(default=0.05, gt=0)
    outer_profile: float = Field(default=0.10, gt=0)
    curvature: float = Field(default=0.15, gt=0)
    functionals: float = Field(default=0.10, gt=0)


class ChecksConfig(_Section):
    enabled: tuple[Literal[CHECK_NAMES], ...] = CHECK_NAMES
    tolerances: TolerancesConfig = TolerancesConfig()


class ExperimentConfig(_Section):
    datum: DatumConfig = DatumConfig()
    grid: GridConfig = GridConfig()
    policy: PolicyConfig = PolicyConfig()
    outputs: OutputsConfig = OutputsConfig()
    checks: ChecksConfig = ChecksConfig()
    seed: int = Field(default=0, ge=0)


def parse_config(text: str) -> ExperimentConfig:
    """Validate a YAML config document; unknown keys and bad values are
    rejected with the offending key named."""
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"config is not well-formed YAML: {exc}") from exc
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigurationError(
            f"config must be a key-value document, got {type(raw).__name__}"
        )
    try:
        cfg = ExperimentConfig.model_validate(raw)
    except ValidationError as exc:
        lines = []
        for err in exc.errors():
            loc = ".".join(str(p) for p in err["loc"]) or "<root>"
            lines.append(f"{loc}: {err['msg']}")
        raise ConfigurationError("invalid config: " + "; ".join(lines)) from exc
    # materialize eagerly so datum/grid consistency errors surface at parse time
    check_datum_grid(make_datum(cfg), make_grid(cfg))
    make_policy(cfg)
    return cfg


def parse_config_file(path: str) -> ExperimentConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return parse_config(fh.read())
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc


def render_config(cfg: ExperimentConfig) -> str:
    """Canonical YAML form; parse_config(render_config(cfg)) == cfg."""
    return yaml.safe_dump(cfg.model_dump(), sort_keys=False)


def config_hash(cfg: ExperimentConfig) -> str:
    return hashlib.sha256(render_config(cfg).encode("utf-8")).hexdigest()


def make_datum(cfg: ExperimentConfig) -> InitialDatum:
    d = cfg.datum
    return InitialDatum(
        kind=d.kind,
        height=d.height,
        rho=d.rho,
        offsets=d.offsets,
        t0=d.t0,
        floor_eps=d.floor_eps,
    )


def make_grid(cfg: ExperimentConfig) -> CylGrid:
    g = cfg.grid
    return build_grid(
        n_zeta=g.n_zeta,
        zeta_min=g.zeta_min,
        zeta_split=g.zeta_split,
        zeta_max=g.zeta_max,
        n_theta=g.n_theta,
        stretch=g.stretch,
        h_max=g.h_max,
    )


def make_policy(cfg: ExperimentConfig) -> SteppingPolicy:
    p = cfg.policy
    return SteppingPolicy(
        dt_max=p.dt_max,
        sigma=p.sigma,
        newton_tol=p.newton_tol,
        newton_max_iter=p.newton_max_iter,
        tau_schedule=cfg.outputs.tau_schedule,
        dtau_max=p.dtau_max,
        t_frac=p.t_frac,
        dt_min=p.dt_min,
        max_rejects=p.max_rejects,
    )
