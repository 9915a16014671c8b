"""Operational decentralisation/security/scalability metrics.

All three are measured quantities over completed runs: producer entropy and
coalition control for D, Monte-Carlo finality error for S, and latency-bounded
confirmed throughput for C. Nothing here mutates simulation state.
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass
from itertools import combinations

from .mining import run_private_attack
from .netsim import BlockRecord, PropagationTrace, SimResult, t_fraction_ms

EXHAUSTIVE_LIMIT = 20


def entropy_bits(producer_counts: dict[str, int]) -> float:
    """Shannon entropy (bits) of the block-producer distribution."""
    total = sum(producer_counts.values())
    if not producer_counts or total < 1:
        raise ValueError("entropy requires at least one produced block")
    out = 0.0
    for count in producer_counts.values():
        if count == 0:
            continue
        p = count / total
        out -= p * math.log2(p)
    return out


@dataclass(frozen=True)
class FinalityEstimate:
    error_rate: float
    stderr: float
    trials: int
    wins: int
    z: int
    attacker_alpha: float


def finality_error(
    attacker_alpha: float,
    z: int,
    trials: int,
    horizon: int,
    seed: int,
) -> FinalityEstimate:
    """Monte-Carlo estimate of the z-confirmation revert probability."""
    if trials < 100:
        raise ValueError("finality estimates need at least 100 trials")
    rng = random.Random(seed)
    honest = 1.0 - attacker_alpha
    wins = 0
    for _ in range(trials):
        if run_private_attack(honest, attacker_alpha, z, horizon, rng):
            wins += 1
    rate = wins / trials
    stderr = math.sqrt(rate * (1.0 - rate) / trials)
    return FinalityEstimate(rate, stderr, trials, wins, z, attacker_alpha)


@dataclass(frozen=True)
class ThroughputResult:
    tps: float
    ceiling_tps: float
    counted_blocks: int
    counted_txs: int
    chain_blocks: int
    tau_bound_ms: float


def throughput(
    result: SimResult,
    tau_bound_ms: float,
    ceiling_tps: float,
    fraction: float = 0.95,
) -> ThroughputResult:
    """Confirmed transactions per second, counting only best-chain blocks
    whose block message reached the miner audience within the bound."""
    counted_blocks = 0
    counted_txs = 0
    chain_blocks = 0
    for record in result.best_chain_records():
        chain_blocks += 1
        delay = t_fraction_ms(result.trace, f"block:{record.hash_hex}", fraction)
        if delay is not None and delay <= tau_bound_ms:
            counted_blocks += 1
            counted_txs += record.tx_count
    tps = counted_txs / result.duration_s if result.duration_s > 0 else 0.0
    return ThroughputResult(tps, ceiling_tps, counted_blocks, counted_txs, chain_blocks, tau_bound_ms)


def participation_ratio(total_nodes: int, blocks: list[BlockRecord]) -> float:
    """Fraction of nodes that produced at least one valid block."""
    if total_nodes < 1:
        raise ValueError("node roster is empty")
    producers = {b.producer_node for b in blocks}
    return len(producers) / total_nodes


@dataclass(frozen=True)
class CoalitionControlResult:
    epsilon: float
    decentralised: bool
    violating_coalition: tuple[str, ...] | None
    method: str


def is_decentralised(alphas: dict[str, float], epsilon: float) -> CoalitionControlResult:
    """No coalition smaller than epsilon * N may hold a strict hash majority.

    Exhaustive subset search up to 20 miners, greedy largest-first
    certificate search beyond that.
    """
    if not 0.0 < epsilon <= 1.0:
        raise ValueError("epsilon must lie in (0, 1]")
    ids = sorted(alphas)
    n = len(ids)
    max_size = math.ceil(epsilon * n) - 1  # strictly fewer than epsilon * N members
    if max_size < 1:
        return CoalitionControlResult(epsilon, True, None, "exhaustive")
    if n <= EXHAUSTIVE_LIMIT:
        for size in range(1, max_size + 1):
            for combo in combinations(ids, size):
                if sum(alphas[i] for i in combo) > 0.5:
                    return CoalitionControlResult(epsilon, False, combo, "exhaustive")
        return CoalitionControlResult(epsilon, True, None, "exhaustive")
    ranked = sorted(ids, key=lambda i: (-alphas[i], i))
    coalition: list[str] = []
    total = 0.0
    for miner in ranked[:max_size]:
        coalition.append(miner)
        total += alphas[miner]
        if total > 0.5:
            return CoalitionControlResult(epsilon, False, tuple(coalition), "greedy")
    return CoalitionControlResult(epsilon, True, None, "greedy")


def economic_centrality(flows: dict[tuple[int, int], float]) -> dict[int, float]:
    """Per-node share of total outbound byte flow; shares sum to one."""
    total = sum(flows.values())
    if any(v < 0 for v in flows.values()):
        raise ValueError("flows must be non-negative")
    if total <= 0:
        raise ValueError("flow matrix is all zero")
    nodes = sorted({a for a, _ in flows} | {b for _, b in flows})
    return {node: sum(v for (a, _), v in flows.items() if a == node) / total for node in nodes}


def centrality_from_trace(trace: PropagationTrace) -> dict[int, float]:
    return economic_centrality({k: float(v) for k, v in trace.bytes_by_edge.items()})


@dataclass(frozen=True)
class RunSummary:
    scenario: str
    d_bits: float
    s_rate: float
    s_stderr: float
    c_tps: float
    tau_ms: float
    decentralised: bool
    secure: bool


@dataclass(frozen=True)
class PanelRow:
    scenario: str
    d_bits: float
    s_rate: float
    s_stderr: float
    c_tps: float
    tau_ms: float
    decentralised: bool
    secure: bool
    scalable: bool
    joint: bool


def strictly_increasing(values: list[float]) -> bool:
    return len(values) >= 2 and all(b > a for a, b in zip(values, values[1:]))


def trilemma_panel(summaries: list[RunSummary]) -> list[PanelRow]:
    """One row per run; `scalable` is the sweep-level verdict (strict growth
    of latency-bounded throughput across the sweep) stamped on every row."""
    if not summaries:
        raise ValueError("panel requires at least one completed scenario")
    scalable = strictly_increasing([s.c_tps for s in summaries])
    rows = []
    for s in summaries:
        joint = s.decentralised and s.secure and scalable
        rows.append(
            PanelRow(
                s.scenario, s.d_bits, s.s_rate, s.s_stderr, s.c_tps, s.tau_ms,
                s.decentralised, s.secure, scalable, joint,
            )
        )
    return rows


def attack_curve_csv(
    alphas: list[float],
    z: int,
    trials: int,
    horizon: int,
    seed: int,
) -> str:
    """CSV of Monte-Carlo revert rates: alpha,z,trials,wins,win_rate,stderr."""
    lines = ["alpha,z,trials,wins,win_rate,stderr"]
    for i, alpha in enumerate(alphas):
        est = finality_error(alpha, z, trials, horizon, seed=seed + i)
        lines.append(
            f"{alpha!r},{z},{est.trials},{est.wins},{est.error_rate!r},{est.stderr!r}"
        )
    return "\n".join(lines) + "\n"


PANEL_COLUMNS = "scenario,D_bits,S_rate,S_stderr,C_tps,tau_ms,decentralised,secure,scalable,joint"


def panel_to_csv(rows: list[PanelRow]) -> str:
    lines = [PANEL_COLUMNS]
    for r in rows:
        lines.append(
            f"{r.scenario},{r.d_bits!r},{r.s_rate!r},{r.s_stderr!r},{r.c_tps!r},"
            f"{r.tau_ms!r},{r.decentralised},{r.secure},{r.scalable},{r.joint}"
        )
    return "\n".join(lines) + "\n"
