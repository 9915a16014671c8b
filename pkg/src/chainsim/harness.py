"""Experiment orchestration: single runs, resumable sweeps, report emission.

Outputs are byte-deterministic functions of (config, seed, tool version):
no wall clock, no network, no environment leakage. A run directory holds
trace.csv, blocks.csv, metrics.json and manifest.json; a sweep directory
holds one run directory per sweep value plus panel.csv.
"""
from __future__ import annotations

import hashlib
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from . import __version__
from .config import (
    ScenarioConfig,
    apply_override,
    config_digest,
    derive_child_seed,
    parse_config,
)
from .metrics import (
    RunSummary,
    centrality_from_trace,
    entropy_bits,
    finality_error,
    is_decentralised,
    panel_to_csv,
    participation_ratio,
    throughput,
    trilemma_panel,
)
from .mining import miner_profit
from .netsim import SimResult, run_simulation, t_secure_ms
from .topology import generate_topology

TRACE_COLUMNS = "message_id,node_id,role,first_receipt_us"
BLOCK_COLUMNS = (
    "height,hash,parent,producer_node,producer_id,found_us,tx_count,"
    "content_bytes,fees,subsidy,on_best_chain"
)


@dataclass
class RunOutput:
    config: ScenarioConfig
    result: SimResult
    metrics: dict
    summary: RunSummary


def _metric_seed(seed: int, label: str) -> int:
    digest = hashlib.sha256(f"{seed}/{label}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def execute(cfg: ScenarioConfig) -> RunOutput:
    graph = generate_topology(cfg.topology, miner_count=len(cfg.miners))
    result = run_simulation(
        graph,
        list(cfg.miners),
        cfg.relay,
        cfg.duration_s,
        cfg.seed,
        block_params=cfg.block,
        default_bandwidth_bps=cfg.default_bandwidth_bps,
    )
    metrics, summary = compute_metrics(cfg, result)
    return RunOutput(cfg, result, metrics, summary)


def compute_metrics(cfg: ScenarioConfig, result: SimResult) -> tuple[dict, RunSummary]:
    chain_records = result.best_chain_records()
    producer_counts: dict[str, int] = {m.id: 0 for m in cfg.miners}
    for record in chain_records:
        producer_counts[record.producer_id] += 1
    d_bits = entropy_bits(producer_counts) if chain_records else 0.0

    finality = finality_error(
        cfg.metrics.attacker_alpha,
        cfg.metrics.z,
        cfg.metrics.s_trials,
        cfg.metrics.s_horizon,
        seed=_metric_seed(cfg.seed, "finality"),
    )
    thr = throughput(result, cfg.metrics.tau_bound_ms, cfg.block.ceiling_tps())
    coalition = is_decentralised(
        {m.id: m.alpha for m in cfg.miners}, cfg.metrics.epsilon_coalition
    )
    centrality = centrality_from_trace(result.trace) if result.trace.bytes_by_edge else {}
    participation = participation_ratio(result.graph.n, result.blocks)
    t_secure = t_secure_ms(result.trace, cfg.metrics.delta_margin_ms)

    secure = finality.error_rate < cfg.metrics.epsilon_s

    # Revenue accrues only on best-chain blocks; costs are charged per block
    # the miner actually produced, stale or not.
    best_set = set(result.best_chain)
    miner_economics = {}
    for agent in cfg.miners:
        mined = [b for b in result.blocks if b.producer_id == agent.id]
        on_best = [b for b in mined if b.hash in best_set]
        reward = sum(b.subsidy for b in on_best)
        fees = sum(b.fees for b in on_best)
        cost = (agent.electricity_cost_rate + agent.hardware_cost) * len(mined)
        miner_economics[agent.id] = {
            "blocks_mined": len(mined),
            "blocks_on_best_chain": len(on_best),
            "revenue": reward + fees,
            "cost": cost,
            "profit": miner_profit(reward, fees, cost),
        }

    # Fraction of best-chain headers a reference observer received over at
    # least min_spv_receipts distinct first-hop paths (report-only figure).
    reference = result.clients[result.graph.n - 1]
    ref_chain = [h for h in reference.best_chain() if h != result.genesis_hash]
    anchored = sum(
        1
        for h in ref_chain
        if h in reference.anchors
        and len(reference.anchors[h].first_hop_sources) >= cfg.metrics.min_spv_receipts
    )
    anchor_ratio = anchored / len(ref_chain) if ref_chain else 0.0

    metrics = {
        "scenario": cfg.name,
        "tool_version": __version__,
        "seed": cfg.seed,
        "duration_s": cfg.duration_s,
        "config_digest": config_digest(cfg.raw),
        "D": {"entropy_bits": d_bits, "producer_counts": producer_counts},
        "S": {
            "error_rate": finality.error_rate,
            "stderr": finality.stderr,
            "trials": finality.trials,
            "wins": finality.wins,
            "z": finality.z,
            "attacker_alpha": finality.attacker_alpha,
            "epsilon_s": cfg.metrics.epsilon_s,
        },
        "C": {
            "tps": thr.tps,
            "ceiling_tps": thr.ceiling_tps,
            "counted_blocks": thr.counted_blocks,
            "counted_txs": thr.counted_txs,
            "chain_blocks": thr.chain_blocks,
            "tau_bound_ms": thr.tau_bound_ms,
        },
        "participation_ratio": participation,
        "trust_anchor_ratio": anchor_ratio,
        "min_spv_receipts": cfg.metrics.min_spv_receipts,
        "miner_economics": miner_economics,
        "decentralised": {
            "flag": coalition.decentralised,
            "epsilon": coalition.epsilon,
            "violating_coalition": list(coalition.violating_coalition or []) or None,
            "method": coalition.method,
        },
        "secure": secure,
        "centrality": {str(node): share for node, share in sorted(centrality.items())},
        "t_secure_ms": t_secure,
        "block_count": len(result.blocks),
        "best_chain_length": len(result.best_chain) - 1,
        "config": cfg.raw,
    }
    summary = RunSummary(
        scenario=cfg.name,
        d_bits=d_bits,
        s_rate=finality.error_rate,
        s_stderr=finality.stderr,
        c_tps=thr.tps,
        tau_ms=cfg.metrics.tau_bound_ms,
        decentralised=coalition.decentralised,
        secure=secure,
    )
    return metrics, summary


def trace_csv(result: SimResult) -> str:
    lines = [TRACE_COLUMNS]
    for msg in result.trace.messages.values():
        for node, time_us in sorted(msg.receipts.items(), key=lambda kv: (kv[1], kv[0])):
            lines.append(f"{msg.msg_id},{node},{result.graph.roles[node]},{time_us}")
    return "\n".join(lines) + "\n"


def blocks_csv(result: SimResult) -> str:
    on_best = set(result.best_chain)
    lines = [BLOCK_COLUMNS]
    for b in result.blocks:
        lines.append(
            f"{b.height},{b.hash_hex},{b.parent[::-1].hex()},{b.producer_node},"
            f"{b.producer_id},{b.found_us},{b.tx_count},{b.content_bytes},"
            f"{b.fees!r},{b.subsidy!r},{b.hash in on_best}"
        )
    return "\n".join(lines) + "\n"


def _sha256_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_run(cfg: ScenarioConfig, outdir: str | Path) -> dict:
    """Execute one scenario, write its four artifacts, return the manifest."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    output = execute(cfg)
    (outdir / "trace.csv").write_text(trace_csv(output.result))
    (outdir / "blocks.csv").write_text(blocks_csv(output.result))
    (outdir / "metrics.json").write_text(
        json.dumps(output.metrics, sort_keys=True, indent=1) + "\n"
    )
    manifest = {
        "config_digest": config_digest(cfg.raw),
        "tool_version": __version__,
        "files": {
            name: _sha256_file(outdir / name)
            for name in ("trace.csv", "blocks.csv", "metrics.json")
        },
    }
    (outdir / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=1) + "\n")
    return manifest


def _manifest_valid(run_dir: Path, expected_digest: str) -> bool:
    manifest_path = run_dir / "manifest.json"
    if not manifest_path.exists():
        return False
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError:
        return False
    if manifest.get("config_digest") != expected_digest:
        return False
    if manifest.get("tool_version") != __version__:
        return False
    for name, digest in manifest.get("files", {}).items():
        path = run_dir / name
        if not path.exists() or _sha256_file(path) != digest:
            return False
    return True


def sweep_point_raw(raw: dict, index: int) -> dict:
    """Raw config for sweep point `index`: value applied, child seed, no sweep."""
    sweep = raw["sweep"]
    point = apply_override(raw, sweep["path"], sweep["values"][index])
    point["seed"] = derive_child_seed(raw["seed"], index)
    point["name"] = f"{raw['name']}@{sweep['path']}={sweep['values'][index]}"
    del point["sweep"]
    return point


def _run_point(args: tuple[dict, str]) -> str:
    point_raw, run_dir = args
    write_run(parse_config(point_raw), run_dir)
    return run_dir


def run_sweep(raw: dict, outdir: str | Path, jobs: int = 1, gnuplot: bool = False) -> Path:
    """One run per sweep value (skipping intact completed runs), then panel.csv."""
    cfg = parse_config(raw)
    if cfg.sweep is None:
        raise ValueError("config has no sweep block")
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)

    pending: list[tuple[dict, str]] = []
    run_dirs: list[Path] = []
    for index in range(len(cfg.sweep.values)):
        point_raw = sweep_point_raw(raw, index)
        run_dir = outdir / f"run_{index:03d}"
        run_dirs.append(run_dir)
        if not _manifest_valid(run_dir, config_digest(point_raw)):
            pending.append((point_raw, str(run_dir)))

    if jobs > 1 and len(pending) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            list(pool.map(_run_point, pending))
    else:
        for item in pending:
            _run_point(item)

    summaries = []
    for run_dir in run_dirs:
        data = json.loads((run_dir / "metrics.json").read_text())
        summaries.append(
            RunSummary(
                scenario=data["scenario"],
                d_bits=data["D"]["entropy_bits"],
                s_rate=data["S"]["error_rate"],
                s_stderr=data["S"]["stderr"],
                c_tps=data["C"]["tps"],
                tau_ms=data["C"]["tau_bound_ms"],
                decentralised=data["decentralised"]["flag"],
                secure=data["secure"],
            )
        )
    panel = trilemma_panel(summaries)
    panel_path = outdir / "panel.csv"
    panel_path.write_text(panel_to_csv(panel))
    if gnuplot:
        (outdir / "panel.gp").write_text(_gnuplot_script())
    return panel_path


def _gnuplot_script() -> str:
    return (
        "set datafile separator ','\n"
        "set key autotitle columnhead\n"
        "set ylabel 'C (tps)'\n"
        "set xlabel 'sweep point'\n"
        "plot 'panel.csv' using 0:5 with linespoints title 'C_tps'\n"
    )
