"""Command-line surface: run, sweep, topology, verify.

Exit codes: 0 success, 1 runtime or data-validation failure, 2 config error.
Output is plain text (no colour), so NO_COLOR needs no special handling.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .chain import (
    HEADER_SIZE,
    CompactBitsError,
    MerkleProof,
    deserialize_header,
    hash_from_hex,
    hash_to_hex,
    hash_header,
    header_meets_target,
    verify_header_link,
)
from .config import ConfigError, load_config, load_raw
from .harness import run_sweep, write_run
from .spv import CONFIRMED, SpvClient
from .topology import (
    LatencySpec,
    TopologySpec,
    TopologyError,
    avg_path_length,
    clustering_coefficient,
    generate_topology,
    miner_hop_diameter,
)


def _cmd_run(args: argparse.Namespace) -> int:
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        manifest = write_run(cfg, args.output)
    except Exception as exc:  # noqa: BLE001 - surfaced as exit code 1
        print(f"run failed: {exc}", file=sys.stderr)
        return 1
    print(json.dumps(manifest, sort_keys=True))
    return 0


def _cmd_sweep(args: argparse.Namespace) -> int:
    try:
        raw = load_raw(args.config)
        if "sweep" not in raw:
            raise ConfigError("sweep", "config has no sweep block")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        panel_path = run_sweep(raw, args.output, jobs=args.jobs, gnuplot=args.gnuplot)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        print(f"sweep failed: {exc}", file=sys.stderr)
        return 1
    print(panel_path)
    return 0


def _cmd_topology(args: argparse.Namespace) -> int:
    spec = TopologySpec(
        kind=args.kind,
        n=args.n,
        k=args.k,
        beta=args.beta,
        p=args.p,
        m=args.m,
        o=args.observers,
        latency=LatencySpec(kind="constant", ms=args.latency_ms),
        seed=args.seed,
    )
    try:
        spec.validate()
        graph = generate_topology(spec, miner_count=args.miners if args.kind != "miner-backbone" else None)
    except TopologyError as exc:
        print(f"invalid topology: {exc}", file=sys.stderr)
        return 2
    stats = {
        "n": graph.n,
        "edges": len(graph.edges),
        "avg_path_length": avg_path_length(graph),
        "clustering": clustering_coefficient(graph),
        "miner_hop_diameter": miner_hop_diameter(graph) if graph.miner_nodes else None,
    }
    print(json.dumps(stats, sort_keys=True))
    if args.export:
        Path(args.export).write_text(graph.edge_list_text())
    return 0


def _cmd_verify(args: argparse.Namespace) -> int:
    try:
        lines = [
            line.strip()
            for line in Path(args.headers).read_text().splitlines()
            if line.strip()
        ]
        headers = []
        for i, line in enumerate(lines):
            raw = bytes.fromhex(line)
            if len(raw) != HEADER_SIZE:
                raise ValueError(f"line {i}: expected {HEADER_SIZE * 2} hex chars")
            headers.append(deserialize_header(raw))
    except ValueError as exc:
        print(f"cannot parse header file: {exc}", file=sys.stderr)
        return 1
    if not headers:
        print("header file is empty", file=sys.stderr)
        return 1

    prev_hash = None
    for i, header in enumerate(headers):
        try:
            if i == 0:
                ok = header_meets_target(header)
                reason = "pow"
            else:
                ok = verify_header_link(header, prev_hash)
                reason = "link" if header.prev_hash != prev_hash else "pow"
        except CompactBitsError:
            ok, reason = False, "bits"
        if not ok:
            print(f"header {i}: FAIL ({reason})")
            return 1
        prev_hash = hash_header(header)
        print(f"header {i}: ok {hash_to_hex(prev_hash)}")

    if args.proof:
        try:
            proof_raw = json.loads(Path(args.proof).read_text())
            tx_id = hash_from_hex(proof_raw["tx_id"])
            block_hash = hash_from_hex(proof_raw["block_hash"])
            proof = MerkleProof(
                leaf_index=int(proof_raw["leaf_index"]),
                siblings=tuple(hash_from_hex(s) for s in proof_raw["siblings"]),
            )
        except (ValueError, KeyError, json.JSONDecodeError) as exc:
            print(f"cannot parse proof file: {exc}", file=sys.stderr)
            return 1
        client = SpvClient(headers[0])
        for header in headers[1:]:
            client.ingest_header(header, source="verify-cli", time=0)
        status, depth = client.verify_spv(tx_id, proof, block_hash)
        print(f"proof: {status}" + (f" depth={depth}" if status == CONFIRMED else ""))
        if status != CONFIRMED:
            return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="chainsim")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute one scenario")
    p_run.add_argument("config")
    p_run.add_argument("-o", "--output", required=True)
    p_run.set_defaults(func=_cmd_run)

    p_sweep = sub.add_parser("sweep", help="execute a sweep and emit panel.csv")
    p_sweep.add_argument("config")
    p_sweep.add_argument("-o", "--output", required=True)
    p_sweep.add_argument("-j", "--jobs", type=int, default=1)
    p_sweep.add_argument("--gnuplot", action="store_true")
    p_sweep.set_defaults(func=_cmd_sweep)

    p_topo = sub.add_parser("topology", help="generate a topology and print stats")
    p_topo.add_argument("kind")
    p_topo.add_argument("-n", type=int, default=0)
    p_topo.add_argument("-k", type=int, default=4)
    p_topo.add_argument("--beta", type=float, default=0.1)
    p_topo.add_argument("-p", type=float, default=0.1)
    p_topo.add_argument("-m", type=int, default=0)
    p_topo.add_argument("--observers", type=int, default=0)
    p_topo.add_argument("--miners", type=int, default=0)
    p_topo.add_argument("--latency-ms", type=float, default=10.0)
    p_topo.add_argument("--seed", type=int, default=0)
    p_topo.add_argument("--export")
    p_topo.set_defaults(func=_cmd_topology)

    p_verify = sub.add_parser("verify", help="verify a header chain file")
    p_verify.add_argument("headers")
    p_verify.add_argument("--proof")
    p_verify.set_defaults(func=_cmd_verify)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


def entry() -> None:  # console-script hook
    sys.exit(main())


if __name__ == "__main__":
    entry()
