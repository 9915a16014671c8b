"""Miner agents, fee-greedy block templates, profit, and attack racing."""
from __future__ import annotations

import random
from dataclasses import dataclass

from .chain import Transaction

ALPHA_TOLERANCE = 1e-9


@dataclass
class MinerAgent:
    id: str
    alpha: float
    bandwidth_bps: int | None = None
    min_feerate: float = 0.0
    electricity_cost_rate: float = 0.0
    hardware_cost: float = 0.0


def validate_roster(miners: list[MinerAgent]) -> None:
    if not miners:
        raise ValueError("miner roster is empty")
    seen: set[str] = set()
    for m in miners:
        if m.id in seen:
            raise ValueError(f"duplicate miner id {m.id!r}")
        seen.add(m.id)
        if m.alpha < 0:
            raise ValueError(f"miner {m.id!r} has negative hash share {m.alpha}")
        if m.bandwidth_bps is not None and m.bandwidth_bps <= 0:
            raise ValueError(f"miner {m.id!r} has non-positive bandwidth")
    total = sum(m.alpha for m in miners)
    if abs(total - 1.0) > ALPHA_TOLERANCE:
        raise ValueError(f"miner hash shares sum to {total}, expected 1.0")


class Mempool:
    """Pending transactions in deterministic feerate-descending order."""

    def __init__(self) -> None:
        self._by_id: dict[bytes, Transaction] = {}
        self._sorted: list[Transaction] | None = []

    def add(self, tx: Transaction) -> bool:
        if tx.tx_id in self._by_id:
            return False
        self._by_id[tx.tx_id] = tx
        self._sorted = None
        return True

    def remove(self, tx_ids: list[bytes] | set[bytes]) -> None:
        for tx_id in tx_ids:
            self._by_id.pop(tx_id, None)
        self._sorted = None

    def __len__(self) -> int:
        return len(self._by_id)

    def __contains__(self, tx_id: bytes) -> bool:
        return tx_id in self._by_id

    def ordered(self) -> list[Transaction]:
        if self._sorted is None:
            self._sorted = sorted(self._by_id.values(), key=lambda t: (-t.feerate, t.tx_id))
        return self._sorted


def sample_next_producer(miners: list[MinerAgent], rng: random.Random) -> str:
    """Pick miner i with probability alpha_i."""
    if not miners:
        raise ValueError("cannot sample a producer from an empty roster")
    u = rng.random()
    acc = 0.0
    for m in miners:
        acc += m.alpha
        if u < acc:
            return m.id
    return miners[-1].id


def sample_block_interval(total_rate: float, rng: random.Random) -> float:
    """Exponential inter-block interval in seconds, mean 1/total_rate."""
    if total_rate <= 0:
        raise ValueError("block discovery rate must be positive")
    return rng.expovariate(total_rate)


def build_block_template(
    mempool: Mempool,
    max_block_bytes: int,
    min_feerate: float,
) -> list[Transaction]:
    """Greedy feerate-descending selection under the byte cap.

    Transactions below min_feerate are never included; a transaction that
    does not fit is skipped and scanning continues.
    """
    if max_block_bytes <= 0:
        raise ValueError("max_block_bytes must be positive")
    template: list[Transaction] = []
    used = 0
    for tx in mempool.ordered():
        if tx.feerate < min_feerate:
            break
        if used + tx.size <= max_block_bytes:
            template.append(tx)
            used += tx.size
    return template


def miner_profit(reward: float, fees: float, costs: float) -> float:
    return reward + fees - costs


@dataclass(frozen=True)
class ForkUtilityParams:
    delta_profit: float
    infra_depreciation: float
    migration_risk: float


def fork_utility(params: ForkUtilityParams) -> float:
    """Expected gain of forking over staying; positive means fork-rational."""
    return params.delta_profit - params.infra_depreciation - params.migration_risk


def run_private_attack(
    honest_alpha: float,
    attacker_alpha: float,
    z: int,
    horizon: int,
    rng: random.Random,
) -> bool:
    """Race a private chain from z blocks behind; True if it ever catches up.

    Each of the next `horizon` blocks goes to the attacker with probability
    attacker_alpha. The attacker wins the moment its cumulative work reaches
    the honest chain's, i.e. the deficit hits zero.
    """
    if abs(honest_alpha + attacker_alpha - 1.0) > ALPHA_TOLERANCE:
        raise ValueError("honest and attacker shares must sum to 1")
    if z < 1:
        raise ValueError("confirmation depth z must be at least 1")
    if attacker_alpha <= 0.0:
        return False
    deficit = z
    remaining = horizon
    rand = rng.random
    while remaining > 0:
        if deficit > remaining:
            # Even an all-attacker suffix cannot close the gap.
            return False
        if rand() < attacker_alpha:
            deficit -= 1
            if deficit == 0:
                return True
        else:
            deficit += 1
        remaining -= 1
    return False
