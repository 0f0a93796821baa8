"""Check evaluation on run directories: verdict purity, flags, overrides, files."""

import shutil
from pathlib import Path

import pytest

from ricciflow.config import CHECK_NAMES, TolerancesConfig
from ricciflow.errors import ConfigurationError
from ricciflow.report import evaluate_checks, render_report, write_report_files


def test_evaluation_is_pure(tiny_run):
    r1 = evaluate_checks(tiny_run.run_dir)
    r2 = evaluate_checks(tiny_run.run_dir)
    assert r1.results == r2.results
    assert r1.t_est == r2.t_est


def test_tiny_run_verdicts(tiny_run):
    report = evaluate_checks(tiny_run.run_dir, checks=CHECK_NAMES)
    verdicts = {r.name: r.verdict for r in report.results}
    # tau only reaches 5: every asymptotic check must flag, not fail
    for name in (
        "curvature-band",
        "origin-curvature",
        "width-band",
        "inner-profile",
        "alpha-slope",
        "outer-profile",
        "tail-area",
        "log-theta-avg",
        "xi-front",
        "anisotropy",
    ):
        assert verdicts[name] == "flag", (name, verdicts[name])
    for name in ("mass-law", "aronson-benilan", "monotonicity", "harnack"):
        assert verdicts[name] == "pass", (name, verdicts[name])
    assert report.passed_all  # flags never fail a run
    assert report.failed == ()


def test_flag_details_give_reasons(tiny_run):
    report = evaluate_checks(tiny_run.run_dir, checks=("origin-curvature", "anisotropy"))
    details = {r.name: r.detail for r in report.results}
    assert "insufficient tau" in details["origin-curvature"]
    assert "radial run" in details["anisotropy"]


def test_unknown_check_rejected_before_reading_anything(tmp_path):
    # name validation must not depend on the run directory existing
    with pytest.raises(ConfigurationError, match="unknown checks"):
        evaluate_checks(str(tmp_path / "absent"), checks=("made-up",))


def test_missing_run_directory(tmp_path):
    with pytest.raises(FileNotFoundError):
        evaluate_checks(str(tmp_path / "absent"), checks=("mass-law",))


def test_checks_subset_is_respected(tiny_run):
    report = evaluate_checks(tiny_run.run_dir, checks=("mass-law",))
    assert [r.name for r in report.results] == ["mass-law"]


def test_tolerance_override_flips_verdict(tiny_run):
    default = evaluate_checks(tiny_run.run_dir, checks=("mass-law",))
    assert default.results[0].verdict == "pass"
    strict = evaluate_checks(
        tiny_run.run_dir,
        checks=("mass-law",),
        tolerances=TolerancesConfig(mass_law=1e-12),
    )
    assert strict.results[0].verdict == "fail"
    assert not strict.passed_all


def test_missing_snapshots_flag_profile_checks(tiny_run, tmp_path):
    clone = tmp_path / "clone"
    shutil.copytree(tiny_run.run_dir, clone)
    shutil.rmtree(clone / "snapshots")
    report = evaluate_checks(str(clone), checks=("inner-profile", "outer-profile"))
    assert all(r.verdict == "flag" for r in report.results)
    assert "no snapshot" in report.results[0].detail


def test_corrupted_records_surface_with_location(tiny_run, tmp_path):
    clone = tmp_path / "clone"
    shutil.copytree(tiny_run.run_dir, clone)
    (clone / "records.csv").write_text("t,tau\n0.5,2.0\n")
    with pytest.raises(ConfigurationError, match=r"records\.csv:1"):
        evaluate_checks(str(clone), checks=("mass-law",))


def test_render_report_layout(tiny_run):
    report = evaluate_checks(tiny_run.run_dir, checks=("mass-law", "origin-curvature"))
    text = render_report(report)
    assert text.startswith("ricciflow run report")
    assert "T_est" in text
    assert "mass-law" in text and "PASS" in text
    assert "origin-curvature" in text and "FLAG" in text
    assert "2 checks: 1 pass, 0 fail, 1 flagged" in text


def test_write_report_files(tiny_run, tmp_path):
    report = evaluate_checks(tiny_run.run_dir, checks=("mass-law", "harnack"))
    out = write_report_files(report, dest=str(tmp_path / "rep"))
    outp = Path(out)
    assert (outp / "report.txt").is_file()
    assert render_report(report) == (outp / "report.txt").read_text()
    # dashes become underscores in plot CSV names; checks without a curve are skipped
    csv = (outp / "mass_law.csv").read_text().splitlines()
    assert csv[0] == "t,mass,mass_theory"
    assert len(csv) > 1
    assert not (outp / "harnack.csv").exists()


def test_write_report_files_default_location(tiny_run):
    report = evaluate_checks(tiny_run.run_dir, checks=("mass-law",))
    out = write_report_files(report)
    assert Path(out) == Path(tiny_run.run_dir) / "report"
    assert (Path(out) / "report.txt").is_file()
