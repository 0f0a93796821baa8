"""Command-line client for the ricciflow service.

Subcommands run / verify-exact / report / serve. By default the service app
is mounted in-process, so no server is needed; --server points the same
client at a remote instance.

Exit codes: 0 pass or complete, 1 check failure, 2 solver stiffness failure,
3 I/O error, 4 usage error.
"""

from __future__ import annotations

import argparse
import sys

import httpx

from . import __version__
from .exact import VERIFY_CASES

EXIT_OK = 0
EXIT_CHECK_FAILURE = 1
EXIT_STIFFNESS = 2
EXIT_IO = 3
EXIT_USAGE = 4


class _Parser(argparse.ArgumentParser):
    # our exit-code contract reserves 4 for usage errors (argparse defaults to 2)
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _build_parser() -> _Parser:
    parser = _Parser(prog="ricciflow", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"ricciflow {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p_run = sub.add_parser("run", help="run an experiment from a config file")
    p_run.add_argument("--config", required=True, help="path to the YAML config")
    p_run.add_argument("--out", default=None, help="output directory (overrides config)")
    p_run.add_argument("--seed", type=int, default=None, help="seed override")
    p_run.add_argument("--server", default=None, help="remote service URL")
    p_run.add_argument(
        "--no-wait", action="store_true", help="start in background and print the run id"
    )

    p_ver = sub.add_parser("verify-exact", help="exact-solution convergence study")
    p_ver.add_argument(
        "--case", default="all", choices=VERIFY_CASES + ("all",), help="verification case"
    )
    p_ver.add_argument("--refine", type=int, default=3, help="number of step halvings (>= 2)")
    p_ver.add_argument("--h0", type=float, default=0.02, help="coarsest differencing step")
    p_ver.add_argument("--server", default=None, help="remote service URL")

    p_rep = sub.add_parser("report", help="evaluate checks against a run directory")
    p_rep.add_argument("run_dir", help="completed run directory")
    p_rep.add_argument(
        "--checks", default=None, help="comma-separated check names (default: config's list)"
    )
    p_rep.add_argument("--out", default=None, help="report directory (default: RUN_DIR/report)")
    p_rep.add_argument("--server", default=None, help="remote service URL")

    p_srv = sub.add_parser("serve", help="serve the HTTP API")
    p_srv.add_argument("--host", default="127.0.0.1")
    p_srv.add_argument("--port", type=int, default=8000)
    return parser


def _client(server: str | None) -> httpx.Client:
    if server is not None:
        return httpx.Client(base_url=server, timeout=None)
    from fastapi.testclient import TestClient

    from .service import create_app

    return TestClient(create_app())


def _http_exit(resp: httpx.Response) -> int:
    try:
        detail = resp.json().get("detail", resp.text)
    except ValueError:
        detail = resp.text
    print(f"error: {detail}", file=sys.stderr)
    if resp.status_code == 422:
        return EXIT_USAGE
    if resp.status_code in (404, 409):
        return EXIT_IO
    return EXIT_CHECK_FAILURE


def _cmd_run(args) -> int:
    try:
        text = open(args.config).read()
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO
    payload = {
        "config_text": text,
        "out_dir": args.out,
        "seed": args.seed,
        "wait": not args.no_wait,
    }
    with _client(args.server) as client:
        resp = client.post("/runs", json=payload)
        if resp.status_code != 200:
            return _http_exit(resp)
        state = resp.json()
    if args.no_wait:
        print(f"run {state['run_id']} started")
        return EXIT_OK
    status = state["status"]
    if status in ("completed", "mass-floor"):
        print(
            f"run {state['run_id']}: {status}  T_est={state['t_est']:.6f}  "
            f"steps={state['steps']}  dir={state['run_dir']}"
        )
        return EXIT_OK
    print(f"run {state['run_id']}: {status}: {state.get('error', '')}", file=sys.stderr)
    if status == "stiffness-failure":
        return EXIT_STIFFNESS
    return EXIT_IO


def _cmd_verify(args) -> int:
    if args.refine < 2:
        print("error: --refine must be >= 2", file=sys.stderr)
        return EXIT_USAGE
    cases = VERIFY_CASES if args.case == "all" else (args.case,)
    all_passed = True
    with _client(args.server) as client:
        for case in cases:
            resp = client.post(
                "/verify-exact",
                json={"case": case, "refinements": args.refine, "h0": args.h0},
            )
            if resp.status_code != 200:
                return _http_exit(resp)
            table = resp.json()
            print(f"{case}:")
            print(f"  {'h':>12}  {'residual':>14}  {'order':>7}")
            for row in table["rows"]:
                order = f"{row['order']:.3f}" if row["order"] is not None else "-"
                print(f"  {row['h']:12.6g}  {row['residual']:14.6e}  {order:>7}")
            order = table["measured_order"]
            word = "pass" if table["passed"] else "FAIL"
            print(f"  measured order {order:.3f} -> {word}" if order is not None else "  no order")
            all_passed = all_passed and table["passed"]
    return EXIT_OK if all_passed else EXIT_CHECK_FAILURE


def _cmd_report(args) -> int:
    if args.out is not None and args.server is not None:
        print("error: --out requires the in-process service (drop --server)", file=sys.stderr)
        return EXIT_USAGE
    checks = [c.strip() for c in args.checks.split(",") if c.strip()] if args.checks else None
    payload = {"run_dir": args.run_dir, "checks": checks, "write_files": args.out is None}
    with _client(args.server) as client:
        resp = client.post("/reports", json=payload)
        if resp.status_code != 200:
            return _http_exit(resp)
        body = resp.json()
    print(body["text"], end="")
    report_dir = body.get("report_dir")
    if args.out is not None:
        # local re-write to the requested directory
        from .report import evaluate_checks, write_report_files

        report = evaluate_checks(args.run_dir, checks=tuple(checks) if checks else None)
        report_dir = write_report_files(report, args.out)
    if report_dir:
        print(f"plot-ready CSVs in {report_dir}")
    return EXIT_OK if body["passed"] else EXIT_CHECK_FAILURE


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port)
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.command == "run":
        return _cmd_run(args)
    if args.command == "verify-exact":
        return _cmd_verify(args)
    if args.command == "report":
        return _cmd_report(args)
    return _cmd_serve(args)


if __name__ == "__main__":
    sys.exit(main())
