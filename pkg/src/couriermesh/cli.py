"""Command-line entry point: serve, simulate, verify, export, routes."""

from __future__ import annotations

import argparse
import json
import random
import sys
from typing import Optional

from .clock import SystemClock, from_iso
from .config import InstanceConfig, load_config
from .disclosure import export_csv
from .errors import ProtocolError
from .gateway import Gateway, REGISTRY_ROUTES, RegistryGateway, ROUTE_TABLE, make_http_server
from .harness import run_scenario, verify_log
from .instance import InstanceService
from .lifecycle import Delivery
from .store import FileStore, MemoryStore


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="couriermesh",
        description="Federated delivery coordination: instance server, registry, simulator.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    serve = sub.add_parser("serve", help="run one instance server")
    serve.add_argument("--config", help="instance config JSON path")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8700)
    serve.add_argument("--store", help="append-only store file (default: in-memory)")

    registry = sub.add_parser("registry", help="registry service commands")
    reg_sub = registry.add_subparsers(dest="registry_command", required=True)
    reg_serve = reg_sub.add_parser("serve", help="run the discovery registry")
    reg_serve.add_argument("--host", default="127.0.0.1")
    reg_serve.add_argument("--port", type=int, default=8701)

    sim = sub.add_parser("sim", help="deterministic ecosystem simulation")
    sim_sub = sim.add_subparsers(dest="sim_command", required=True)
    sim_run = sim_sub.add_parser("run", help="execute a scenario file")
    sim_run.add_argument("scenario", help="scenario JSON path")
    sim_run.add_argument("--seed", type=int, help="override the scenario seed")
    sim_run.add_argument("--out", help="write the event log here (default: stdout)")
    sim_verify = sim_sub.add_parser("verify", help="replay-check an event log")
    sim_verify.add_argument("log", help="JSON-lines event log path")

    export = sub.add_parser("export", help="anonymized disclosure CSV from a store file")
    export.add_argument("--store", required=True, help="append-only store file")
    export.add_argument("--from", dest="from_", required=True, metavar="FROM",
                        help="range start, ISO-8601")
    export.add_argument("--to", required=True, help="range end, ISO-8601 (exclusive)")
    export.add_argument("--out", help="write CSV here (default: stdout)")
    export.add_argument("--salt", help="pin the anonymization salt (hex) for reproducible runs")

    sub.add_parser("routes", help="print the served route table")
    return parser


def cmd_serve(args: argparse.Namespace) -> int:
    cfg = load_config(args.config) if args.config else InstanceConfig()
    store = FileStore(args.store) if args.store else MemoryStore()
    svc = InstanceService(cfg, store, SystemClock(), random.Random())
    gw = Gateway(svc)
    server = make_http_server(gw, args.host, args.port)
    host, port = server.server_address[:2]
    print(f"instance {cfg.domainName} listening on http://{host}:{port}", flush=True)
    print(f"admin token: {svc.admin.token}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
        store.close()
    return 0


def cmd_registry_serve(args: argparse.Namespace) -> int:
    rg = RegistryGateway()
    server = make_http_server(rg, args.host, args.port)
    host, port = server.server_address[:2]
    print(f"registry listening on http://{host}:{port}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


def cmd_sim_run(args: argparse.Namespace) -> int:
    try:
        with open(args.scenario, encoding="utf-8") as f:
            raw = json.load(f)
    except OSError as e:
        print(f"cannot read scenario: {e}", file=sys.stderr)
        return 1
    except json.JSONDecodeError as e:
        print(f"scenario is not valid JSON: {e}", file=sys.stderr)
        return 1
    if args.seed is not None:
        if not isinstance(raw, dict):
            print("scenario must be a JSON object", file=sys.stderr)
            return 1
        raw = {**raw, "seed": args.seed}
    try:
        lines, snapshot = run_scenario(raw)
    except ProtocolError as e:
        print(f"{e.code}: {e.args[0]}", file=sys.stderr)
        if e.details:
            print(json.dumps(e.details, sort_keys=True), file=sys.stderr)
        return 1
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        totals = snapshot["totals"]
        print(
            f"{len(lines)} events -> {args.out} "
            f"(finalized {totals['finalized']}, delivered {totals['delivered']})",
            flush=True,
        )
    else:
        sys.stdout.write(text)
    return 0


def cmd_sim_verify(args: argparse.Namespace) -> int:
    try:
        with open(args.log, encoding="utf-8") as f:
            lines = f.read().splitlines()
    except OSError as e:
        print(f"cannot read log: {e}", file=sys.stderr)
        return 1
    problems = verify_log(lines)
    if problems:
        for p in problems:
            print(p, file=sys.stderr)
        return 1
    print(f"ok: {len([l for l in lines if l.strip()])} events verified")
    return 0


def cmd_export(args: argparse.Namespace) -> int:
    try:
        frm = from_iso(args.from_)
        to = from_iso(args.to)
    except ProtocolError:
        print("--from and --to must be ISO-8601 instants", file=sys.stderr)
        return 1
    try:
        store = FileStore(args.store)
    except (OSError, ProtocolError) as e:
        print(f"cannot open store: {e}", file=sys.stderr)
        return 1
    try:
        rows = [Delivery.from_dict(rec.value) for _, rec in store.scan("delivery/")]
        csv_text = export_csv(rows, frm, to, salt=args.salt)
    except ProtocolError as e:
        print(f"{e.code}: {e.args[0]}", file=sys.stderr)
        return 1
    finally:
        store.close()
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as f:
            f.write(csv_text)
        print(f"{len(csv_text.splitlines()) - 1} rows -> {args.out}")
    else:
        sys.stdout.write(csv_text)
    return 0


def cmd_routes(_args: argparse.Namespace) -> int:
    for route in ROUTE_TABLE + REGISTRY_ROUTES:
        print(f"{route.method:6s} {route.path}")
    return 0


def main(argv: Optional[list[str]] = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.command == "serve":
        return cmd_serve(args)
    if args.command == "registry":
        return cmd_registry_serve(args)
    if args.command == "sim":
        return cmd_sim_run(args) if args.sim_command == "run" else cmd_sim_verify(args)
    if args.command == "export":
        return cmd_export(args)
    return cmd_routes(args)


if __name__ == "__main__":
    sys.exit(main())
