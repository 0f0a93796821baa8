"""HTTP endpoints: validation, runs, exact verification, reports, error codes."""

import shutil
import time
from pathlib import Path

import pytest
from fastapi.testclient import TestClient

from ricciflow import __version__
from ricciflow.config import config_hash, parse_config
from ricciflow.service import create_app

from conftest import tiny_config_text


@pytest.fixture(scope="module")
def client():
    return TestClient(create_app())


def test_health(client):
    r = client.get("/health")
    assert r.status_code == 200
    assert r.json() == {"status": "ok", "version": __version__}


def test_validate_accepts_good_config(client):
    text = tiny_config_text()
    r = client.post("/configs/validate", json={"config_text": text})
    assert r.status_code == 200
    body = r.json()
    assert body["valid"] is True
    assert body["error"] is None
    # canonical form hashes to the reported hash
    assert body["config_hash"] == config_hash(parse_config(body["canonical"]))


def test_validate_reports_field_errors(client):
    bad = tiny_config_text().replace("t0: 0.01", "t0: -3.0")
    r = client.post("/configs/validate", json={"config_text": bad})
    assert r.status_code == 200
    body = r.json()
    assert body["valid"] is False
    assert "t0" in body["error"]
    assert body["config_hash"] is None


def test_validate_rejects_non_yaml(client):
    r = client.post("/configs/validate", json={"config_text": "a: [b,"})
    assert r.json()["valid"] is False
    assert "well-formed" in r.json()["error"]


def test_run_wait_and_status_lookup(client, tmp_path):
    out = tmp_path / "svc_run"
    r = client.post("/runs", json={"config_text": tiny_config_text(str(out))})
    assert r.status_code == 200
    body = r.json()
    assert body["status"] == "completed"
    assert body["steps"] > 0
    assert body["t_est"] > 0
    assert Path(body["run_dir"]) == out
    assert (out / "run.json").is_file()

    again = client.get(f"/runs/{body['run_id']}")
    assert again.status_code == 200
    assert again.json() == body


def test_run_unknown_id_is_404(client):
    r = client.get("/runs/deadbeef0000")
    assert r.status_code == 404
    assert "unknown run id" in r.json()["detail"]


def test_run_invalid_config_is_422(client):
    r = client.post("/runs", json={"config_text": "policy: {sigma: 2.0}"})
    assert r.status_code == 422
    assert "sigma" in r.json()["detail"]


def test_run_background_polls_to_completion(client, tmp_path):
    out = tmp_path / "bg_run"
    r = client.post(
        "/runs", json={"config_text": tiny_config_text(str(out)), "wait": False}
    )
    run_id = r.json()["run_id"]
    assert r.json()["status"] in ("running", "completed")
    deadline = time.monotonic() + 120.0
    while time.monotonic() < deadline:
        state = client.get(f"/runs/{run_id}").json()
        if state["status"] != "running":
            break
        time.sleep(0.2)
    assert state["status"] == "completed"
    assert Path(state["run_dir"]) == out


def test_run_seed_override(client, tmp_path):
    out = tmp_path / "seeded"
    r = client.post(
        "/runs", json={"config_text": tiny_config_text(str(out)), "seed": 11}
    )
    assert r.json()["status"] == "completed"
    assert '"seed": 11' in (out / "run.json").read_text()


def test_verify_exact_passes_for_cigar(client):
    r = client.post("/verify-exact", json={"case": "cigar", "refinements": 3})
    assert r.status_code == 200
    body = r.json()
    assert body["passed"] is True
    assert 1.7 <= body["measured_order"] <= 2.3
    hs = [row["h"] for row in body["rows"]]
    assert len(hs) == 4  # base mesh plus three halvings
    assert hs[0] == pytest.approx(2.0 * hs[1])
    assert body["rows"][0]["order"] is None


def test_verify_exact_rejects_unknown_case(client):
    r = client.post("/verify-exact", json={"case": "bogus", "refinements": 3})
    assert r.status_code == 422
    assert "unknown case" in r.json()["detail"]


def test_verify_exact_rejects_single_level(client):
    r = client.post("/verify-exact", json={"case": "cigar", "refinements": 1})
    assert r.status_code == 422
    assert "refinements" in r.json()["detail"]


def test_report_endpoint(client, tiny_run):
    r = client.post(
        "/reports", json={"run_dir": tiny_run.run_dir, "checks": ["mass-law"]}
    )
    assert r.status_code == 200
    body = r.json()
    assert body["passed"] is True
    assert [c["name"] for c in body["results"]] == ["mass-law"]
    assert body["results"][0]["verdict"] == "pass"
    assert "mass-law" in body["text"]
    assert body["report_dir"] is None


def test_report_write_files(client, tiny_run):
    r = client.post(
        "/reports",
        json={"run_dir": tiny_run.run_dir, "checks": ["mass-law"], "write_files": True},
    )
    rep = r.json()["report_dir"]
    assert rep is not None
    assert (Path(rep) / "report.txt").is_file()


def test_report_unknown_check_is_422(client, tiny_run):
    r = client.post(
        "/reports", json={"run_dir": tiny_run.run_dir, "checks": ["nope"]}
    )
    assert r.status_code == 422
    assert "unknown checks" in r.json()["detail"]


def test_report_missing_dir_is_404(client, tmp_path):
    r = client.post("/reports", json={"run_dir": str(tmp_path / "absent")})
    assert r.status_code == 404


def test_report_corrupted_run_is_409(client, tiny_run, tmp_path):
    clone = tmp_path / "clone"
    shutil.copytree(tiny_run.run_dir, clone)
    (clone / "records.csv").write_text("garbage\n")
    r = client.post("/reports", json={"run_dir": str(clone), "checks": ["mass-law"]})
    assert r.status_code == 409
    assert "records.csv" in r.json()["detail"]
