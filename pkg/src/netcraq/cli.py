"""Command-line front door.

    netcraq sim --experiment distance --out-dir out/        one experiment
    netcraq bench-all --out-dir out/                        all four experiments
    netcraq check out/histories/mixed_netcraq_wf0.25.history.jsonl
    netcraq serve --config real.json --node-index 0         real-UDP node
    netcraq ctl --config real.json install                  real-mode control plane

Exit code 0 on success, nonzero when any run violates an acceptance-relevant
invariant (checker violations, conservation failures, bad input).
"""

from __future__ import annotations

import argparse
import json
import socket
import sys
import time
from pathlib import Path

from . import bench, verify
from .bench import NODE_BASE, PROTOCOLS
from .config import RunConfig, load_config
from .controller import build_chain
from .net import udp_serve, write_trace

EXPERIMENTS = ("distance", "latency", "mixed", "scaling")


def _resolve_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "chain_length", None) is not None:
        cfg.chain_length = args.chain_length
    return cfg


def _run_experiment(name: str, cfg: RunConfig, protocols):
    store = cfg.store_config()
    link = cfg.link_model()
    runs = []
    if name == "distance":
        spec = bench.WorkloadSpec(total_ops=cfg.distance_reads, seed=cfg.seed)
        rows = bench.run_distance_sweep(cfg.chain_length, spec, store_config=store,
                                        link=link, protocols=protocols, runs_out=runs)
    elif name == "latency":
        rows = bench.run_latency_sweep(cfg.chain_length, cfg.latency_rates,
                                       total_ops=cfg.latency_ops, seed=cfg.seed,
                                       store_config=store, link=link,
                                       protocols=protocols, runs_out=runs)
    elif name == "mixed":
        rows = bench.run_mixed_workload(cfg.chain_length, cfg.mixed_fractions,
                                        total_ops=cfg.mixed_ops, seed=cfg.seed,
                                        store_config=store, link=link,
                                        protocols=protocols, runs_out=runs)
    elif name == "scaling":
        rows = bench.run_chain_scaling(cfg.scaling_lengths, reads=cfg.scaling_reads,
                                       seed=cfg.seed, store_config=store, link=link,
                                       protocols=protocols, runs_out=runs)
    else:
        raise ValueError(f"unknown experiment {name!r}")
    return rows, runs


def _write_artifacts(name: str, rows, runs, out_dir: Path) -> int:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "histories").mkdir(exist_ok=True)
    (out_dir / "traces").mkdir(exist_ok=True)
    bench.emit_csv(rows, out_dir / f"{name}.csv")
    failures = 0
    for label, result in runs:
        verify.save_history(result.history, out_dir / "histories" / f"{label}.history.jsonl")
        write_trace(result.trace, out_dir / "traces" / f"{label}.trace.txt")
        pending = sum(1 for e in result.history if e.outcome == verify.PENDING)
        if pending:
            failures += 1
            print(f"FAIL conservation: {label}: {pending} ops never settled", file=sys.stderr)
        verdict = verify.check_per_key(result.history)
        if not verdict.ok:
            failures += 1
            print(f"FAIL consistency: {label}\n{verdict.report()}", file=sys.stderr)
    print(f"wrote {out_dir / f'{name}.csv'} ({len(rows)} rows, {len(runs)} runs)")
    return failures


def cmd_sim(args) -> int:
    cfg = _resolve_config(args)
    protocols = (args.protocol,) if args.protocol else PROTOCOLS
    rows, runs = _run_experiment(args.experiment, cfg, protocols)
    return 1 if _write_artifacts(args.experiment, rows, runs, Path(args.out_dir)) else 0


def cmd_bench_all(args) -> int:
    cfg = _resolve_config(args)
    protocols = (args.protocol,) if args.protocol else PROTOCOLS
    failures = 0
    for name in EXPERIMENTS:
        rows, runs = _run_experiment(name, cfg, protocols)
        failures += _write_artifacts(name, rows, runs, Path(args.out_dir))
    return 1 if failures else 0


def cmd_check(args) -> int:
    history = verify.load_history(args.history)
    verdict = verify.check_per_key(history)
    print(verdict.report())
    if args.report:
        Path(args.report).write_text(verdict.report() + "\n")
    return 0 if verdict.ok else 1


def _udp_addr_map(cfg: RunConfig) -> dict[int, tuple[str, int]]:
    if not cfg.udp_addrs:
        raise ValueError("config has no udp_addrs")
    addr_map = {}
    for i, spec in enumerate(cfg.udp_addrs):
        host, port = spec.rsplit(":", 1)
        addr_map[NODE_BASE + i] = (host, int(port))
    return addr_map


def cmd_serve(args) -> int:
    cfg = _resolve_config(args)
    addr_map = _udp_addr_map(cfg)
    _, contexts = build_chain(sorted(addr_map), cfg.store_config())
    my_id = NODE_BASE + args.node_index
    server = udp_serve(contexts[my_id], args.protocol or "netcraq", addr_map)
    print(f"serving node {args.node_index} on {server.bound_address}")
    try:
        while True:
            time.sleep(1)
    except KeyboardInterrupt:
        server.stop()
    return 0


def cmd_ctl(args) -> int:
    cfg = _resolve_config(args)
    addr_map = _udp_addr_map(cfg)
    chain = sorted(addr_map)
    sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
    sock.settimeout(2.0)
    if args.action == "ping":
        ok = True
        for addr, sockaddr in addr_map.items():
            sock.sendto(json.dumps({"cmd": "ping"}).encode(), sockaddr)
            try:
                data, _ = sock.recvfrom(4096)
                print(f"{sockaddr}: {json.loads(data)}")
            except socket.timeout:
                print(f"{sockaddr}: no response")
                ok = False
        return 0 if ok else 1
    # install: push roles, tail address and multicast membership to every node
    for i, addr in enumerate(chain):
        role = "head" if i == 0 else ("tail" if i == len(chain) - 1 else "replica")
        msg = {
            "cmd": "install",
            "role": role,
            "tail": chain[-1],
            "successor": chain[i + 1] if i + 1 < len(chain) else None,
            "members": [a for a in chain if a != addr],
            "epoch": args.epoch,
        }
        sock.sendto(json.dumps(msg).encode(), addr_map[addr])
        try:
            data, _ = sock.recvfrom(4096)
            print(f"{addr_map[addr]}: {json.loads(data)}")
        except socket.timeout:
            print(f"{addr_map[addr]}: no response")
            return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="netcraq", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_dir=False):
        p.add_argument("--config", help="run-configuration JSON file")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--chain-length", type=int, help="override the chain length")
        p.add_argument("--protocol", choices=PROTOCOLS)
        if out_dir:
            p.add_argument("--out-dir", default="out", help="artifact directory")

    p = sub.add_parser("sim", help="run one experiment")
    p.add_argument("--experiment", choices=EXPERIMENTS, default="distance")
    common(p, out_dir=True)
    p.set_defaults(fn=cmd_sim)

    p = sub.add_parser("bench-all", help="run all four experiments")
    common(p, out_dir=True)
    p.set_defaults(fn=cmd_bench_all)

    p = sub.add_parser("check", help="verify a recorded history")
    p.add_argument("history", help="history JSON-lines file written by bench")
    p.add_argument("--report", help="also write the verdict report here")
    p.set_defaults(fn=cmd_check)

    p = sub.add_parser("serve", help="serve one chain node over real UDP")
    p.add_argument("--node-index", type=int, required=True)
    common(p)
    p.set_defaults(fn=cmd_serve)

    p = sub.add_parser("ctl", help="real-mode control plane")
    p.add_argument("action", choices=("install", "ping"))
    p.add_argument("--epoch", type=int, default=1)
    common(p)
    p.set_defaults(fn=cmd_ctl)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, OSError, verify.HistoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
