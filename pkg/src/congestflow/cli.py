"""Command-line client.

Every subcommand builds a request and posts it to the HTTP service: to a
remote server when ``--server`` is given, otherwise to the same app mounted
in-process. Exit codes: 0 success, 1 input error, 2 solver retries
exhausted, 3 verify found a failing check.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_RETRIES = 2
EXIT_VERIFY = 3


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_INPUT):
        super().__init__(message)
        self.code = code


def _common(p: argparse.ArgumentParser, need_input: bool = True) -> None:
    p.add_argument("--input", required=need_input, help="graph file")
    p.add_argument("--format", choices=("dimacs", "json"), default=None,
                   help="input format (default: from the file suffix, else dimacs)")
    p.add_argument("--seed", type=int, default=None, help="falls back to $CONGESTFLOW_SEED")
    p.add_argument("--epsilon", type=float, default=0.1)
    p.add_argument("--alpha", type=float, default=None, help="initial solver alpha")
    p.add_argument("--trees", type=int, default=None, help="sampled trees in the approximator")
    p.add_argument("--beta", type=int, default=None)
    p.add_argument("--stop-threshold", type=int, default=None)
    p.add_argument("--budget-words", type=int, default=4)
    p.add_argument("--strict-budget", action="store_true")
    p.add_argument("--max-iters", type=int, default=10**6)
    p.add_argument("--output", default=None, help="JSON-lines report (default: stdout)")
    p.add_argument("--server", default=None, help="service URL; in-process when omitted")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="congestflow")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("solve", help="approximate maximum s-t flow")
    _common(p)
    p.add_argument("--flow-output", default=None, help="write per-edge flow (u v cap flow)")
    p = sub.add_parser("approx-stats", help="build the approximator and sweep its guarantees")
    _common(p)
    p.add_argument("--pairs", type=int, default=50, help="s-t pairs in the sandwich sweep")
    p = sub.add_parser("verify", help="run the structural property checks")
    _common(p, need_input=False)
    p.add_argument("--inject-fault", action="store_true",
                   help="corrupt the checked cluster graph to exercise failure reporting")
    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    return parser


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("CONGESTFLOW_SEED")
    if env is None:
        raise CliError("a seed is required: pass --seed or set CONGESTFLOW_SEED")
    try:
        return int(env)
    except ValueError:
        raise CliError(f"CONGESTFLOW_SEED is not an integer: {env!r}") from None


def _config(args) -> dict:
    cfg = {
        "seed": _seed(args), "epsilon": args.epsilon, "alpha": args.alpha, "trees": args.trees,
        "beta": args.beta, "stop_threshold": args.stop_threshold,
        "budget_words": args.budget_words, "strict_budget": args.strict_budget,
        "max_iters": args.max_iters,
    }
    if getattr(args, "pairs", None) is not None:
        cfg["pairs"] = args.pairs
    if getattr(args, "inject_fault", False):
        cfg["inject_fault"] = True
    return cfg


def _graph(path: str, fmt: str | None) -> dict:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror or exc}") from None
    if fmt is None:
        fmt = "json" if p.suffix == ".json" else "dimacs"
    return {"text": text, "format": fmt, "name": p.name}


def _client(server: str | None):
    if server:
        import httpx

        return httpx.Client(base_url=server, timeout=None)
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # starlette nags about its httpx transport
        from fastapi.testclient import TestClient

    from .service import app

    return TestClient(app)


def _post(client, path: str, body: dict, params: dict | None = None) -> dict:
    resp = client.post(path, json=body, params=params or {})
    if resp.status_code == 200:
        return resp.json()
    try:
        detail = resp.json().get("detail", resp.text)
    except ValueError:
        detail = resp.text
    if resp.status_code == 409:
        raise CliError(f"solver gave up: {detail}", EXIT_RETRIES)
    if not isinstance(detail, str):
        detail = json.dumps(detail, sort_keys=True)
    raise CliError(f"request rejected: {detail}")


def _emit(lines: list[str], output: str | None) -> None:
    text = "".join(line + "\n" for line in lines)
    if output:
        try:
            Path(output).write_text(text)
        except OSError as exc:
            raise CliError(f"cannot write {output}: {exc.strerror or exc}") from None
    else:
        sys.stdout.write(text)


def _lines(kind: str, doc: dict) -> list[str]:
    from .schemas import ApproxStatsReport, SolveReport, VerifyReport
    from .service import report_lines

    model = {"solve": SolveReport, "approx-stats": ApproxStatsReport, "verify": VerifyReport}[kind]
    return report_lines(model.model_validate(doc))


def _summary(kind: str, doc: dict) -> str:
    if kind == "solve":
        return (f"value {doc['value']:.6g}  congestion {doc['congestion']:.6g}  "
                f"alpha {doc['alpha']:g}  iterations {doc['iterations']}  rounds {doc['rounds']}")
    if kind == "approx-stats":
        return (f"alpha_hat {doc['alpha_hat']:.4g} (alpha_cfg {doc['alpha_cfg']:g})  "
                f"lower violations {doc['lower_violations']}/{doc['pairs']}  "
                f"cut violations {doc['cut_violations']}/{doc['cut_checks']}  rounds {doc['rounds']}")
    rows = [f"{check:18s} " + " ".join(f"{g}={'pass' if ok else 'FAIL'}" for g, ok in cols.items())
            for check, cols in doc["matrix"].items()]
    return "\n".join(rows + ["all checks passed" if doc["passed"] else "some checks FAILED"])


def run(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "serve":
        import uvicorn

        uvicorn.run("congestflow.service:app", host=args.host, port=args.port)
        return EXIT_OK
    try:
        config = _config(args)
        client = _client(args.server)
        if args.command == "solve":
            body = {"graph": _graph(args.input, args.format), "config": config}
            doc = _post(client, "/solve", body, {"flow": bool(args.flow_output)})
            flow = doc.pop("flow", None)
            if args.flow_output:
                _write_flow(args.flow_output, body["graph"], flow)
        elif args.command == "approx-stats":
            body = {"graph": _graph(args.input, args.format), "config": config}
            doc = _post(client, "/approx-stats", body)
        else:
            graphs = [_graph(args.input, args.format)] if args.input else []
            doc = _post(client, "/verify", {"graphs": graphs, "config": config})
        _emit(_lines(args.command, doc), args.output)
    except CliError as exc:
        print(f"congestflow: {exc}", file=sys.stderr)
        return exc.code
    if args.output:
        print(_summary(args.command, doc))
    else:
        print(_summary(args.command, doc), file=sys.stderr)
    if args.command == "verify" and not doc["passed"]:
        return EXIT_VERIFY
    return EXIT_OK


def _write_flow(path: str, graph: dict, flow: list[float]) -> None:
    from .graph import load_graph

    g = load_graph(graph["text"], graph["format"])
    rows = [f"{a} {b} {c} {f!r}" for (a, b, c, _), f in zip(g.edges(), flow)]
    try:
        Path(path).write_text("\n".join(rows) + "\n")
    except OSError as exc:
        raise CliError(f"cannot write {path}: {exc.strerror or exc}") from None


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
