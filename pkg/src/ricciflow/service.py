"""HTTP service wrapping the solver, verification oracles, and reports.

The CLI is a thin client of this app; it runs the same code paths whether the
app is served over the network or mounted in-process.
"""

from __future__ import annotations

import threading
import uuid

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from . import __version__
from .config import CHECK_NAMES, config_hash, parse_config, render_config
from .errors import ConfigurationError, StiffnessFailureError
from .exact import VERIFY_CASES, case_residual, convergence_table, measured_order
from .report import evaluate_checks, render_report, write_report_files
from .runio import execute_run

ORDER_BAND = (1.7, 2.3)


class HealthResponse(BaseModel):
    status: str
    version: str


class ValidateRequest(BaseModel):
    config_text: str


class ValidateResponse(BaseModel):
    valid: bool
    config_hash: str | None = None
    canonical: str | None = None
    error: str | None = None


class RunRequest(BaseModel):
    config_text: str
    out_dir: str | None = None
    seed: int | None = Field(default=None, ge=0)
    wait: bool = True


class RunState(BaseModel):
    run_id: str
    status: str
    run_dir: str | None = None
    t_est: float | None = None
    m0: float | None = None
    steps: int | None = None
    config_hash: str | None = None
    error: str | None = None


class VerifyRequest(BaseModel):
    case: str
    refinements: int
    h0: float = Field(default=0.02, gt=0)


class VerifyRow(BaseModel):
    h: float
    residual: float
    order: float | None


class VerifyResponse(BaseModel):
    case: str
    rows: list[VerifyRow]
    measured_order: float | None
    passed: bool


class ReportRequest(BaseModel):
    run_dir: str
    checks: list[str] | None = None
    write_files: bool = False


class CheckOut(BaseModel):
    name: str
    verdict: str
    detail: str
    measured: dict


class ReportResponse(BaseModel):
    run_dir: str
    t_est: float
    config_hash: str
    results: list[CheckOut]
    text: str
    report_dir: str | None = None
    passed: bool


def create_app() -> FastAPI:
    app = FastAPI(title="ricciflow", version=__version__)
    runs: dict[str, RunState] = {}
    lock = threading.Lock()

    @app.get("/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(status="ok", version=__version__)

    @app.post("/configs/validate", response_model=ValidateResponse)
    def validate(req: ValidateRequest) -> ValidateResponse:
        try:
            cfg = parse_config(req.config_text)
        except ConfigurationError as exc:
            return ValidateResponse(valid=False, error=str(exc))
        return ValidateResponse(
            valid=True, config_hash=config_hash(cfg), canonical=render_config(cfg)
        )

    def _execute(run_id: str, req: RunRequest) -> None:
        cfg = parse_config(req.config_text)
        try:
            summary = execute_run(cfg, out_dir=req.out_dir, seed=req.seed)
        except StiffnessFailureError as exc:
            detail = str(exc)
            if exc.checkpoint_path:
                detail += f" (rescue checkpoint: {exc.checkpoint_path})"
            with lock:
                runs[run_id] = RunState(run_id=run_id, status="stiffness-failure", error=detail)
            return
        except OSError as exc:
            with lock:
                runs[run_id] = RunState(run_id=run_id, status="io-error", error=str(exc))
            return
        with lock:
            runs[run_id] = RunState(
                run_id=run_id,
                status=summary.status,
                run_dir=summary.run_dir,
                t_est=summary.t_est,
                m0=summary.m0,
                steps=summary.steps,
                config_hash=summary.config_hash,
            )

    @app.post("/runs", response_model=RunState)
    def start_run(req: RunRequest) -> RunState:
        try:
            parse_config(req.config_text)
        except ConfigurationError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        run_id = uuid.uuid4().hex[:12]
        if req.wait:
            _execute(run_id, req)
            return runs[run_id]
        with lock:
            runs[run_id] = RunState(run_id=run_id, status="running")
        thread = threading.Thread(target=_execute, args=(run_id, req), daemon=True)
        thread.start()
        return runs[run_id]

    @app.get("/runs/{run_id}", response_model=RunState)
    def run_status(run_id: str) -> RunState:
        with lock:
            state = runs.get(run_id)
        if state is None:
            raise HTTPException(status_code=404, detail=f"unknown run id: {run_id}")
        return state

    @app.post("/verify-exact", response_model=VerifyResponse)
    def verify_exact(req: VerifyRequest) -> VerifyResponse:
        if req.case not in VERIFY_CASES:
            raise HTTPException(
                status_code=422,
                detail=f"unknown case {req.case!r}; valid cases: {list(VERIFY_CASES)}",
            )
        if req.refinements < 2:
            raise HTTPException(status_code=422, detail="refinements must be >= 2")
        rows = convergence_table(lambda h: case_residual(req.case, h), req.h0, req.refinements)
        order = measured_order(rows)
        passed = order is not None and ORDER_BAND[0] <= order <= ORDER_BAND[1]
        return VerifyResponse(
            case=req.case,
            rows=[VerifyRow(**row) for row in rows],
            measured_order=order,
            passed=passed,
        )

    @app.post("/reports", response_model=ReportResponse)
    def make_report(req: ReportRequest) -> ReportResponse:
        if req.checks:
            unknown = [c for c in req.checks if c not in CHECK_NAMES]
            if unknown:
                raise HTTPException(
                    status_code=422,
                    detail=f"unknown checks: {unknown}; valid names: {list(CHECK_NAMES)}",
                )
        try:
            report = evaluate_checks(
                req.run_dir, checks=tuple(req.checks) if req.checks else None
            )
        except FileNotFoundError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        except ValueError as exc:
            # run directory contents are unreadable or corrupted
            raise HTTPException(status_code=409, detail=str(exc))
        report_dir = write_report_files(report) if req.write_files else None
        return ReportResponse(
            run_dir=report.run_dir,
            t_est=report.t_est,
            config_hash=report.config_hash,
            results=[
                CheckOut(name=r.name, verdict=r.verdict, detail=r.detail, measured=r.measured)
                for r in report.results
            ],
            text=render_report(report),
            report_dir=report_dir,
            passed=report.passed_all,
        )

    return app
