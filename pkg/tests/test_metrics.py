"""D/S/C metric computations against hand values and enumeration oracles."""
from __future__ import annotations

import math
import random
from itertools import combinations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chainsim.metrics import (
    CoalitionControlResult,
    RunSummary,
    economic_centrality,
    entropy_bits,
    finality_error,
    is_decentralised,
    panel_to_csv,
    participation_ratio,
    strictly_increasing,
    throughput,
    trilemma_panel,
)
from chainsim.mining import MinerAgent
from chainsim.netsim import (
    BlockParams,
    BlockRecord,
    MessageTrace,
    PropagationTrace,
    RelayPlan,
    SimResult,
    run_simulation,
)
from chainsim.topology import LatencySpec, TopologySpec, generate_topology


class TestEntropy:
    def test_uniform_four_producers(self):
        assert entropy_bits({"a": 5, "b": 5, "c": 5, "d": 5}) == pytest.approx(2.0)

    def test_single_producer_zero_bits(self):
        assert entropy_bits({"a": 17}) == 0.0

    def test_three_one_split(self):
        assert entropy_bits({"a": 3, "b": 1}) == pytest.approx(0.811278, abs=1e-6)

    def test_empty_errors(self):
        with pytest.raises(ValueError):
            entropy_bits({})

    @given(st.lists(st.integers(0, 50), min_size=1, max_size=8).filter(lambda c: sum(c) > 0))
    @settings(max_examples=150)
    def test_bounds_property(self, counts):
        table = {f"m{i}": c for i, c in enumerate(counts)}
        value = entropy_bits(table)
        nonzero = sum(1 for c in counts if c > 0)
        assert -1e-12 <= value <= math.log2(len(counts)) + 1e-12
        assert value <= math.log2(nonzero) + 1e-12 if nonzero else value == 0.0
        if nonzero == 1:
            assert value == 0.0
        if nonzero == len(counts) and len(set(counts)) == 1:
            assert value == pytest.approx(math.log2(len(counts)))


class TestFinality:
    def test_zero_attacker_share(self):
        est = finality_error(0.0, 6, 1000, 400, seed=1)
        assert est.error_rate == 0.0
        assert est.stderr == 0.0

    def test_matches_closed_form(self):
        est = finality_error(0.3, 6, 20_000, 400, seed=2)
        expected = (0.3 / 0.7) ** 6
        assert abs(est.error_rate - expected) <= 2 * max(est.stderr, 1e-4)

    def test_monotone_in_z(self):
        shallow = finality_error(0.3, 1, 10_000, 400, seed=3)
        deep = finality_error(0.3, 6, 10_000, 400, seed=3)
        assert shallow.error_rate > deep.error_rate

    def test_too_few_trials_errors(self):
        with pytest.raises(ValueError):
            finality_error(0.3, 6, 50, 400, seed=1)


def synthetic_result(block_specs, duration_s, audience=3):
    """Minimal SimResult for throughput tests.

    block_specs: list of (tx_count, receipt_delays_ms, on_best_chain).
    """
    blocks = []
    best = []
    trace = PropagationTrace()
    for i, (tx_count, delays_ms, on_best) in enumerate(block_specs):
        h = bytes([i]) * 32
        record = BlockRecord(
            hash=h, parent=bytes(32), producer_node=0, producer_id="m0",
            height=i + 1, found_us=i * 1000, content_bytes=tx_count * 400,
            tx_count=tx_count, fees=0.0, subsidy=50.0,
        )
        blocks.append(record)
        if on_best:
            best.append(h)
        receipts = {0: record.found_us}
        for node, delay in enumerate(delays_ms, start=1):
            receipts[node] = record.found_us + int(delay * 1000)
        trace.messages[f"block:{record.hash_hex}"] = MessageTrace(
            f"block:{record.hash_hex}", "block", 0, 80, record.found_us,
            audience, receipts,
        )
    return SimResult(
        graph=None, roster=[], genesis_hash=bytes(32), blocks=blocks,
        block_store={}, clients={}, trace=trace, tree=None,
        best_tip=best[-1] if best else bytes(32), best_chain=best,
        duration_s=duration_s, seed=0,
    )


class TestThroughput:
    def test_simple_rate_arithmetic(self):
        result = synthetic_result([(100, [5.0, 6.0], True)] * 10, duration_s=1000)
        thr = throughput(result, tau_bound_ms=100.0, ceiling_tps=5.0)
        assert thr.tps == pytest.approx(1.0)
        assert thr.counted_blocks == 10

    def test_bound_below_every_t95_gives_zero(self):
        result = synthetic_result([(100, [5.0, 6.0], True)] * 10, duration_s=1000)
        thr = throughput(result, tau_bound_ms=4.0, ceiling_tps=5.0)
        assert thr.tps == 0.0
        assert thr.counted_blocks == 0

    def test_stale_blocks_do_not_count(self):
        result = synthetic_result(
            [(100, [1.0, 1.0], True), (900, [1.0, 1.0], False)], duration_s=100
        )
        thr = throughput(result, tau_bound_ms=10.0, ceiling_tps=50.0)
        assert thr.counted_txs == 100

    def test_mixed_latencies_filter_per_block(self):
        result = synthetic_result(
            [(100, [1.0, 1.0], True), (100, [50.0, 60.0], True)], duration_s=100
        )
        thr = throughput(result, tau_bound_ms=10.0, ceiling_tps=50.0)
        assert thr.counted_blocks == 1
        assert thr.tps == pytest.approx(1.0)

    def test_simulated_tps_never_beats_ceiling_by_noise_margin(self):
        spec = TopologySpec(kind="miner-backbone", m=3, o=0,
                            latency=LatencySpec(kind="constant", ms=10), seed=2)
        graph = generate_topology(spec)
        miners = [MinerAgent(f"m{i}", 1 / 3) for i in range(3)]
        params = BlockParams(
            max_bytes=100_000, avg_tx_bytes=400, target_interval_s=600,
            tx_rate_per_s=2 * 100_000 / 400 / 600,  # saturating demand
        )
        duration = 360 * 3600.0  # ~600 expected blocks
        result = run_simulation(
            graph, miners, RelayPlan(), duration_s=duration, seed=77,
            block_params=params, default_bandwidth_bps=1_000_000_000,
        )
        assert len(result.blocks) >= 50
        thr = throughput(result, tau_bound_ms=5000.0, ceiling_tps=params.ceiling_tps())
        assert thr.tps <= params.ceiling_tps() * 1.05


class TestParticipation:
    def test_three_of_ten(self):
        blocks = [
            BlockRecord(bytes([i]) * 32, bytes(32), i % 3, f"m{i % 3}", 1, 0, 0, 0, 0.0, 0.0)
            for i in range(9)
        ]
        assert participation_ratio(10, blocks) == pytest.approx(0.3)

    def test_no_blocks_zero(self):
        assert participation_ratio(10, []) == 0.0

    def test_empty_roster_errors(self):
        with pytest.raises(ValueError):
            participation_ratio(0, [])

    def test_long_run_all_miners_produce(self):
        # P(some miner has zero blocks) ~ (1 - 0.1)^n, negligible at n >= 100
        spec = TopologySpec(kind="miner-backbone", m=3, o=7,
                            latency=LatencySpec(kind="constant", ms=10), seed=5)
        graph = generate_topology(spec)
        miners = [MinerAgent("m1", 0.6), MinerAgent("m2", 0.3), MinerAgent("m3", 0.1)]
        result = run_simulation(
            graph, miners, RelayPlan(), duration_s=100 * 600, seed=99,
            block_params=BlockParams(max_bytes=10_000, target_interval_s=600),
            default_bandwidth_bps=1_000_000_000,
        )
        assert len(result.blocks) >= 60
        assert participation_ratio(graph.n, result.blocks) == pytest.approx(0.3)


def oracle_decentralised(alphas: dict[str, float], epsilon: float) -> tuple[bool, float]:
    """Independent subset enumeration (no size-first shortcuts)."""
    ids = list(alphas)
    n = len(ids)
    best = None
    for r in range(1, n + 1):
        for combo in combinations(ids, r):
            if len(combo) < epsilon * n and sum(alphas[c] for c in combo) > 0.5:
                if best is None or len(combo) < len(best):
                    best = combo
    return best is None, 0.0 if best is None else sum(alphas[c] for c in best)


class TestDecentralised:
    def test_balanced_three_miners(self):
        result = is_decentralised({"a": 0.34, "b": 0.33, "c": 0.33}, epsilon=0.5)
        assert result.decentralised
        assert result.violating_coalition is None

    def test_single_majority_miner(self):
        result = is_decentralised({"a": 0.6, "b": 0.4}, epsilon=0.6)
        assert not result.decentralised
        assert result.violating_coalition == ("a",)

    def test_epsilon_too_small_for_any_coalition(self):
        result = is_decentralised({"a": 1.0}, epsilon=0.5)
        assert result.decentralised  # no subset has size < 0.5

    def test_matches_enumeration_oracle_on_random_rosters(self):
        rng = random.Random(31337)
        for trial in range(30):
            n = rng.randint(2, 10)
            weights = [rng.random() for _ in range(n)]
            total = sum(weights)
            alphas = {f"m{i}": w / total for i, w in enumerate(weights)}
            epsilon = rng.choice([0.3, 0.5, 0.8, 1.0])
            mine = is_decentralised(alphas, epsilon)
            expected_flag, _ = oracle_decentralised(alphas, epsilon)
            assert mine.decentralised == expected_flag, (alphas, epsilon)
            if not mine.decentralised:
                coalition = mine.violating_coalition
                assert len(coalition) < epsilon * n
                assert sum(alphas[c] for c in coalition) > 0.5

    def test_greedy_mode_used_above_limit(self):
        alphas = {f"m{i}": 1 / 30 for i in range(30)}
        alphas["m0"] = 1 / 30 + 0.6
        total = sum(alphas.values())
        alphas = {k: v / total for k, v in alphas.items()}
        result = is_decentralised(alphas, epsilon=0.5)
        assert result.method == "greedy"
        assert not result.decentralised

    def test_invalid_epsilon_errors(self):
        with pytest.raises(ValueError):
            is_decentralised({"a": 1.0}, epsilon=0.0)


class TestCentrality:
    def test_single_edge(self):
        shares = economic_centrality({(0, 1): 5.0})
        assert shares == {0: 1.0, 1: 0.0}

    def test_symmetric_uniform_flows(self):
        flows = {(i, j): 1.0 for i in range(4) for j in range(4) if i != j}
        shares = economic_centrality(flows)
        for node in range(4):
            assert shares[node] == pytest.approx(0.25)

    def test_matches_row_sum_oracle(self):
        rng = random.Random(5)
        flows = {(i, j): rng.uniform(0, 9) for i in range(5) for j in range(5) if i != j}
        shares = economic_centrality(flows)
        total = sum(flows.values())
        for node in range(5):
            expected = sum(v for (a, _), v in flows.items() if a == node) / total
            assert shares[node] == pytest.approx(expected)
        assert sum(shares.values()) == pytest.approx(1.0)

    def test_all_zero_errors(self):
        with pytest.raises(ValueError):
            economic_centrality({(0, 1): 0.0})


class TestAttackCurveCsv:
    def test_csv_shape_and_monotone_rates(self):
        from chainsim.metrics import attack_curve_csv

        text = attack_curve_csv([0.1, 0.3, 0.45], z=4, trials=2000, horizon=300, seed=70)
        lines = text.strip().splitlines()
        assert lines[0] == "alpha,z,trials,wins,win_rate,stderr"
        assert len(lines) == 4
        rates = [float(line.split(",")[4]) for line in lines[1:]]
        assert rates == sorted(rates)
        for line in lines[1:]:
            cells = line.split(",")
            assert int(cells[1]) == 4
            assert int(cells[2]) == 2000
            assert int(cells[3]) == round(float(cells[4]) * 2000)


def summary(name, c_tps, decentralised=True, secure=True, d_bits=1.5):
    return RunSummary(name, d_bits, 0.005, 0.001, c_tps, 5000.0, decentralised, secure)


class TestPanel:
    def test_strictly_increasing_helper(self):
        assert strictly_increasing([1.0, 2.0, 3.0])
        assert not strictly_increasing([1.0, 2.0, 2.0])
        assert not strictly_increasing([2.0])

    def test_all_flags_true_for_growing_sweep(self):
        rows = trilemma_panel([summary("a", 1.0), summary("b", 2.0), summary("c", 3.0)])
        assert all(r.scalable and r.joint for r in rows)

    def test_single_miner_flips_decentralised_only(self):
        rows = trilemma_panel(
            [summary(n, c, decentralised=False) for n, c in (("a", 1.0), ("b", 2.0))]
        )
        assert all(not r.decentralised and r.secure and r.scalable for r in rows)
        assert all(not r.joint for r in rows)

    def test_attacker_majority_flips_secure_only(self):
        rows = trilemma_panel(
            [summary(n, c, secure=False) for n, c in (("a", 1.0), ("b", 2.0))]
        )
        assert all(r.decentralised and not r.secure and r.scalable for r in rows)

    def test_flat_throughput_flips_scalable_only(self):
        rows = trilemma_panel([summary("a", 0.0), summary("b", 0.0)])
        assert all(r.decentralised and r.secure and not r.scalable for r in rows)

    def test_csv_round_trip(self):
        rows = trilemma_panel([summary("a", 1.0), summary("b", 2.0)])
        text = panel_to_csv(rows)
        lines = text.strip().splitlines()
        assert lines[0] == (
            "scenario,D_bits,S_rate,S_stderr,C_tps,tau_ms,decentralised,secure,scalable,joint"
        )
        assert len(lines) == 3
        first = lines[1].split(",")
        assert first[0] == "a"
        assert float(first[4]) == 1.0
        assert first[6] == "True"

    def test_empty_panel_errors(self):
        with pytest.raises(ValueError):
            trilemma_panel([])
