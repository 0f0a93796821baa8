"""Config schema: defaults, rejection messages, canonical round-trip, hashing."""

import math

import pytest

from ricciflow.config import (
    CHECK_NAMES,
    ExperimentConfig,
    config_hash,
    make_datum,
    make_grid,
    make_policy,
    parse_config,
    parse_config_file,
    render_config,
)
from ricciflow.errors import ConfigurationError

from conftest import CONFIGS


def test_empty_document_gives_defaults():
    cfg = parse_config("")
    assert cfg == ExperimentConfig()
    assert cfg.datum.kind == "disk"
    assert cfg.grid.n_zeta == 512
    assert cfg.policy.sigma == 0.1
    assert cfg.outputs.tau_schedule == ()
    assert cfg.checks.enabled == CHECK_NAMES
    assert cfg.checks.tolerances.mass_law == 0.01
    assert cfg.checks.tolerances.inner_profile == 0.05
    assert cfg.checks.tolerances.outer_profile == 0.10
    assert cfg.checks.tolerances.curvature == 0.15
    assert cfg.checks.tolerances.functionals == 0.10
    assert cfg.seed == 0


def test_sigma_bounds_message():
    with pytest.raises(ConfigurationError, match=r"sigma must lie in \(0, 1\)"):
        parse_config("policy:\n  sigma: 1.5\n")


def test_unknown_keys_are_named():
    with pytest.raises(ConfigurationError, match="gamma"):
        parse_config("gamma: 2\n")
    with pytest.raises(ConfigurationError, match="policy.gamma"):
        parse_config("policy:\n  gamma: 2\n")


def test_bad_yaml_and_non_mapping():
    with pytest.raises(ConfigurationError, match="well-formed"):
        parse_config("datum: [unclosed\n")
    with pytest.raises(ConfigurationError, match="key-value"):
        parse_config("- just\n- a\n- list\n")


def test_tau_schedule_validation():
    with pytest.raises(ConfigurationError, match="strictly increasing"):
        parse_config("outputs:\n  tau_schedule: [2.0, 2.0]\n")
    with pytest.raises(ConfigurationError, match="positive"):
        parse_config("outputs:\n  tau_schedule: [-1.0]\n")


def test_unknown_check_name_rejected():
    with pytest.raises(ConfigurationError, match="checks.enabled"):
        parse_config("checks:\n  enabled: [mass-law, made-up-check]\n")


def test_grid_errors_surface_at_parse_time():
    # 16 nodes cannot cover the default [-8, 54, 60] layout
    with pytest.raises(ConfigurationError):
        parse_config("grid:\n  n_zeta: 16\n")


def test_datum_grid_consistency_at_parse_time():
    text = "datum:\n  kind: two-bumps\n  offsets: [[0.3, 0.0], [-0.3, 0.0]]\n"
    with pytest.raises(ConfigurationError, match="angular"):
        parse_config(text)  # default grid is radial


def test_roundtrip_default_and_desk_configs():
    for source in [render_config(ExperimentConfig())] + [
        p.read_text() for p in sorted(CONFIGS.glob("*.yaml"))
    ]:
        cfg = parse_config(source)
        assert parse_config(render_config(cfg)) == cfg
        assert config_hash(cfg) == config_hash(parse_config(render_config(cfg)))


def test_config_hash_tracks_content():
    a = parse_config("")
    b = parse_config("seed: 1\n")
    assert config_hash(a) == config_hash(parse_config(""))
    assert config_hash(a) != config_hash(b)
    assert len(config_hash(a)) == 64


def test_materializers_mirror_sections():
    text = (
        "datum: {kind: smooth-bump, height: 12.0, rho: 1.0, t0: 0.01}\n"
        "grid: {n_zeta: 192, zeta_min: -8.0, zeta_split: 54.0, zeta_max: 60.0}\n"
        "policy: {sigma: 0.2}\n"
        "outputs: {tau_schedule: [2.0, 5.0]}\n"
        "seed: 3\n"
    )
    cfg = parse_config(text)
    datum = make_datum(cfg)
    assert datum.kind == "smooth-bump" and datum.height == 12.0
    grid = make_grid(cfg)
    assert grid.n_zeta == 192 and grid.zeta_max == 60.0
    pol = make_policy(cfg)
    assert pol.sigma == 0.2
    assert pol.tau_schedule == (2.0, 5.0)  # schedule rides in outputs


def test_parse_config_file_missing_path(tmp_path):
    with pytest.raises(ConfigurationError, match="cannot read"):
        parse_config_file(str(tmp_path / "nope.yaml"))
    p = tmp_path / "ok.yaml"
    p.write_text("seed: 7\n")
    assert parse_config_file(str(p)).seed == 7


def test_desk_configs_parse_and_name_valid_checks():
    for p in sorted(CONFIGS.glob("*.yaml")):
        cfg = parse_config(p.read_text())
        assert set(cfg.checks.enabled) <= set(CHECK_NAMES)
        assert cfg.outputs.tau_schedule  # desk runs all schedule snapshots
        assert math.isfinite(cfg.datum.height)
