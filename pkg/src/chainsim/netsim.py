"""Seeded discrete-event simulation of header/block propagation.

Simulated time is integer microseconds end to end, so event ordering never
depends on floating-point rounding. Same-time events pop in insertion order.

Relay model: headers travel ahead of full blocks and reach every node; full
blocks travel only between miners, and a miner extends a block only once it
holds that block's entire ancestry. Per-edge delivery time is propagation
latency plus size / min(sender bandwidth, receiver bandwidth).

Block discovery is a marked Poisson process drawn up front from a dedicated
stream: discovery times and producers are fixed by (seed, roster, duration)
alone, which is what makes passive observers provably unable to perturb the
consensus-critical path.
"""
from __future__ import annotations

import hashlib
import heapq
import math
import random
from dataclasses import dataclass, field

from .chain import (
    EASY_BITS,
    BlockHeader,
    Transaction,
    bits_to_target,
    hash_header,
    hash_to_hex,
    merkle_root,
    sha256d,
)
from .mining import (
    Mempool,
    MinerAgent,
    build_block_template,
    sample_block_interval,
    sample_next_producer,
    validate_roster,
)
from .spv import HeaderTree, SpvClient
from .topology import MINER, NetworkGraph, shortest_delay_us

HEADER_BYTES = 80
COINBASE_BYTES = 120

RELAY_KINDS = ("unicast-flood", "gossip", "multicast", "miner-direct")


@dataclass(frozen=True)
class RelayPlan:
    kind: str = "unicast-flood"
    fanout: int = 8
    overhead_bytes: int = HEADER_BYTES

    def validate(self) -> None:
        if self.kind not in RELAY_KINDS:
            raise ValueError(f"unknown relay strategy {self.kind!r}")
        if self.fanout < 1:
            raise ValueError("gossip fanout must be >= 1")


@dataclass(frozen=True)
class BlockParams:
    max_bytes: int = 8_000_000
    avg_tx_bytes: int = 400
    target_interval_s: float = 600.0
    tx_rate_per_s: float | None = None
    feerate: float = 1.0
    subsidy: int = 50
    bits: int = EASY_BITS
    pow_mode: str = "abstract"

    def demand_bytes_per_s(self) -> float:
        if self.tx_rate_per_s is not None:
            return self.tx_rate_per_s * self.avg_tx_bytes
        # Default demand exactly fills an average-interval block.
        return self.max_bytes / self.target_interval_s

    def ceiling_tps(self) -> float:
        return self.max_bytes / (self.avg_tx_bytes * self.target_interval_s)


@dataclass
class BlockRecord:
    hash: bytes
    parent: bytes
    producer_node: int
    producer_id: str
    height: int
    found_us: int
    content_bytes: int
    tx_count: int
    fees: float
    subsidy: float

    @property
    def hash_hex(self) -> str:
        return hash_to_hex(self.hash)


@dataclass
class MessageTrace:
    msg_id: str
    kind: str
    origin: int
    size_bytes: int
    origin_us: int
    audience: int
    receipts: dict[int, int] = field(default_factory=dict)


@dataclass
class PropagationTrace:
    messages: dict[str, MessageTrace] = field(default_factory=dict)
    bytes_sent: dict[int, int] = field(default_factory=dict)
    bytes_by_edge: dict[tuple[int, int], int] = field(default_factory=dict)

    def record_send(self, sender: int, receiver: int, size: int, cost: int) -> None:
        self.bytes_sent[sender] = self.bytes_sent.get(sender, 0) + cost
        key = (sender, receiver)
        self.bytes_by_edge[key] = self.bytes_by_edge.get(key, 0) + size


@dataclass
class SimResult:
    graph: NetworkGraph
    roster: list[MinerAgent]
    genesis_hash: bytes
    blocks: list[BlockRecord]
    block_store: dict[bytes, tuple[Transaction, ...] | None]
    clients: dict[int, SpvClient]
    trace: PropagationTrace
    tree: HeaderTree
    best_tip: bytes
    best_chain: list[bytes]
    duration_s: float
    seed: int

    def best_chain_records(self) -> list[BlockRecord]:
        on_best = set(self.best_chain)
        return [b for b in self.blocks if b.hash in on_best]


def _sub_seed(seed: int, label: str) -> int:
    digest = hashlib.sha256(f"{seed}/{label}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def _serialization_us(size_bytes: int, bps: int) -> int:
    return (size_bytes * 8 * 1_000_000 + bps - 1) // bps


def _grind_header(
    prev_hash: bytes, root: bytes, timestamp: int, bits: int
) -> BlockHeader:
    target = bits_to_target(bits)
    for nonce in range(1 << 24):
        header = BlockHeader(1, prev_hash, root, timestamp, bits, nonce)
        if int.from_bytes(hash_header(header), "little") < target:
            return header
    raise ValueError(
        f"simulated target {bits:#x} is too hard to grind; use an easy target"
    )


class _Sim:
    def __init__(
        self,
        graph: NetworkGraph,
        miners: list[MinerAgent],
        relay: RelayPlan,
        duration_s: float,
        seed: int,
        block_params: BlockParams,
        default_bandwidth_bps: int,
        forced_blocks: list[tuple[float, str]],
    ):
        validate_roster(miners)
        relay.validate()
        miner_nodes = graph.miner_nodes
        if len(miner_nodes) != len(miners):
            raise ValueError(
                f"roster has {len(miners)} miners but graph has {len(miner_nodes)} miner nodes"
            )
        self.graph = graph
        self.roster = miners
        self.relay = relay
        self.params = block_params
        self.duration_us = int(round(duration_s * 1_000_000))
        self.duration_s = duration_s
        self.seed = seed

        self.node_of_miner = dict(zip((m.id for m in miners), miner_nodes))
        self.miner_of_node = {v: k for k, v in self.node_of_miner.items()}
        self.miner_nodes = miner_nodes
        self.bandwidth = [default_bandwidth_bps] * graph.n
        for agent in miners:
            if agent.bandwidth_bps is not None:
                self.bandwidth[self.node_of_miner[agent.id]] = agent.bandwidth_bps
        self.agent_by_id = {m.id: m for m in miners}

        self.rng_mining = random.Random(_sub_seed(seed, "mining"))
        self.rng_relay = {
            "header": random.Random(_sub_seed(seed, "relay-header")),
            "block": random.Random(_sub_seed(seed, "relay-block")),
            "tx": random.Random(_sub_seed(seed, "relay-tx")),
        }
        self.rng_txgen = random.Random(_sub_seed(seed, "txgen"))

        genesis_root = sha256d(b"chainsim-genesis")
        self.genesis_header = _grind_header(b"\x00" * 32, genesis_root, 0, block_params.bits)
        self.genesis_hash = hash_header(self.genesis_header)
        self.tree = HeaderTree(self.genesis_header)
        self.headers: dict[bytes, BlockHeader] = {self.genesis_hash: self.genesis_header}
        self.block_sizes: dict[bytes, int] = {self.genesis_hash: HEADER_BYTES}
        self.block_store: dict[bytes, tuple[Transaction, ...] | None] = {self.genesis_hash: None}
        self.blocks: list[BlockRecord] = []

        self.clients = {node: SpvClient(self.genesis_header) for node in range(graph.n)}
        self.validated: dict[int, set[bytes]] = {n: {self.genesis_hash} for n in miner_nodes}
        self.pending_blocks: dict[int, dict[bytes, list[bytes]]] = {n: {} for n in miner_nodes}
        self.mining_tip: dict[int, bytes] = {n: self.genesis_hash for n in miner_nodes}
        self.mempools: dict[int, Mempool] = {n: Mempool() for n in miner_nodes}
        self.seen_txs: dict[int, set[bytes]] = {n: set() for n in miner_nodes}
        self.tx_payloads: dict[bytes, Transaction] = {}

        self.trace = PropagationTrace()
        self.events: list[tuple[int, int, str, tuple]] = []
        self._seq = 0

        self.pool_bytes = 0.0
        self.pool_accrued_us = 0
        self.total_rate = 1.0 / block_params.target_interval_s

        self._schedule_discoveries(forced_blocks)
        if block_params.pow_mode == "concrete":
            self._schedule_transactions()

    # -- scheduling ---------------------------------------------------------

    def _push(self, time_us: int, kind: str, payload: tuple) -> None:
        heapq.heappush(self.events, (time_us, self._seq, kind, payload))
        self._seq += 1

    def _schedule_discoveries(self, forced: list[tuple[float, str]]) -> None:
        entries: list[tuple[int, str]] = []
        t = 0.0
        while True:
            t += sample_block_interval(self.total_rate, self.rng_mining)
            time_us = int(round(t * 1_000_000))
            if time_us > self.duration_us:
                break
            entries.append((time_us, sample_next_producer(self.roster, self.rng_mining)))
        for time_s, miner_id in forced:
            if miner_id not in self.node_of_miner:
                raise ValueError(f"forced block names unknown miner {miner_id!r}")
            entries.append((int(round(time_s * 1_000_000)), miner_id))
        entries.sort(key=lambda e: e[0])
        for time_us, miner_id in entries:
            self._push(time_us, "block-found", (miner_id,))

    def _schedule_transactions(self) -> None:
        rate = self.params.demand_bytes_per_s() / self.params.avg_tx_bytes
        t = 0.0
        counter = 0
        while True:
            t += self.rng_txgen.expovariate(rate)
            time_us = int(round(t * 1_000_000))
            if time_us > self.duration_us:
                break
            origin = self.rng_txgen.choice(self.miner_nodes)
            feerate = self.rng_txgen.uniform(1.0, 4.0)
            size = self.params.avg_tx_bytes
            tx = Transaction(
                tx_id=sha256d(b"tx:%d" % counter),
                size=size,
                fee=max(0, int(feerate * size)),
            )
            counter += 1
            self.tx_payloads[tx.tx_id] = tx
            self._push(time_us, "deliver-tx", (origin, origin, tx.tx_id))

    # -- relay --------------------------------------------------------------

    def _edge_delay_us(self, a: int, b: int, latency_us: int, size: int) -> int:
        bps = min(self.bandwidth[a], self.bandwidth[b])
        return latency_us + _serialization_us(size, bps)

    def _relay_targets(self, node: int, exclude: int | None, kind: str) -> list[tuple[int, int]]:
        if kind == "header":
            candidates = [(peer, lat) for peer, lat in self.graph.neighbors[node] if peer != exclude]
        else:
            candidates = [
                (peer, lat)
                for peer, lat in self.graph.neighbors[node]
                if peer != exclude and self.graph.roles[peer] == MINER
            ]
        if self.relay.kind == "gossip" and len(candidates) > self.relay.fanout:
            rng = self.rng_relay[kind]
            candidates = sorted(rng.sample(candidates, self.relay.fanout))
        return candidates

    def _send(self, time_us: int, frm: int, msg_kind: str, ref: bytes, exclude: int | None, origin_send: bool) -> None:
        size = HEADER_BYTES if msg_kind == "header" else self.block_sizes.get(ref, HEADER_BYTES)
        if msg_kind == "tx":
            size = self.tx_payloads[ref].size
        if msg_kind == "block" and self.relay.kind == "miner-direct" and origin_send:
            self._send_miner_direct(time_us, frm, ref, size)
            return
        targets = self._relay_targets(frm, exclude, msg_kind)
        multicast = self.relay.kind == "multicast"
        if multicast and targets:
            cost = (size + self.relay.overhead_bytes) if origin_send else 0
            self.trace.bytes_sent[frm] = self.trace.bytes_sent.get(frm, 0) + cost
        for peer, lat in targets:
            delay = self._edge_delay_us(frm, peer, lat, size)
            if not multicast:
                self.trace.record_send(frm, peer, size, size)
            else:
                key = (frm, peer)
                self.trace.bytes_by_edge[key] = self.trace.bytes_by_edge.get(key, 0) + size
            self._push(time_us + delay, f"deliver-{msg_kind}", (frm, peer, ref))

    def _send_miner_direct(self, time_us: int, frm: int, ref: bytes, size: int) -> None:
        def cost(a: int, b: int, lat: int) -> int:
            return self._edge_delay_us(a, b, lat, size)

        dists = shortest_delay_us(self.graph, frm, cost)
        for peer in self.miner_nodes:
            if peer == frm or dists[peer] is None:
                continue
            self.trace.record_send(frm, peer, size, size)
            self._push(time_us + dists[peer], "deliver-block", (frm, peer, ref))

    # -- event handlers -----------------------------------------------------

    def _accrue_pool(self, time_us: int) -> None:
        if time_us > self.pool_accrued_us:
            elapsed = (time_us - self.pool_accrued_us) / 1_000_000.0
            self.pool_bytes += self.params.demand_bytes_per_s() * elapsed
            self.pool_accrued_us = time_us

    def _record_receipt(self, msg_id: str, node: int, time_us: int) -> bool:
        trace = self.trace.messages[msg_id]
        if node in trace.receipts:
            return False
        trace.receipts[node] = time_us
        return True

    def _on_block_found(self, time_us: int, miner_id: str) -> None:
        producer = self.node_of_miner[miner_id]
        parent = self.mining_tip[producer]
        parent_node = self.tree.nodes[parent]
        timestamp = time_us // 1_000_000

        if self.params.pow_mode == "concrete":
            agent = self.agent_by_id[miner_id]
            coinbase = Transaction(
                tx_id=sha256d(b"coinbase:%d:%s" % (len(self.blocks) + 1, miner_id.encode())),
                size=COINBASE_BYTES,
                fee=0,
            )
            template = build_block_template(
                self.mempools[producer],
                max(1, self.params.max_bytes - COINBASE_BYTES),
                agent.min_feerate,
            )
            txs: tuple[Transaction, ...] = (coinbase, *template)
            root = merkle_root(txs)
            content = sum(tx.size for tx in txs)
            tx_count = len(txs)
            fees = float(sum(tx.fee for tx in template))
            self.mempools[producer].remove([tx.tx_id for tx in template])
        else:
            self._accrue_pool(time_us)
            content = min(self.params.max_bytes, int(self.pool_bytes))
            self.pool_bytes -= content
            tx_count = content // self.params.avg_tx_bytes
            fees = tx_count * self.params.avg_tx_bytes * self.params.feerate
            txs = ()
            root = sha256d(
                b"content:%b:%d:%d:%d" % (parent, producer, time_us, tx_count)
            )

        header = _grind_header(parent, root, timestamp, self.params.bits)
        block_hash = hash_header(header)
        if block_hash in self.headers:
            return  # astronomically unlikely duplicate; drop
        self.headers[block_hash] = header
        self.block_sizes[block_hash] = HEADER_BYTES + content
        self.block_store[block_hash] = txs if self.params.pow_mode == "concrete" else None
        record = BlockRecord(
            hash=block_hash,
            parent=parent,
            producer_node=producer,
            producer_id=miner_id,
            height=parent_node.height + 1,
            found_us=time_us,
            content_bytes=content,
            tx_count=tx_count,
            fees=fees,
            subsidy=float(self.params.subsidy),
        )
        self.blocks.append(record)
        self.tree.add(header)

        hex_id = record.hash_hex
        self.trace.messages[f"header:{hex_id}"] = MessageTrace(
            f"header:{hex_id}", "header", producer, HEADER_BYTES, time_us, self.graph.n,
            receipts={producer: time_us},
        )
        self.trace.messages[f"block:{hex_id}"] = MessageTrace(
            f"block:{hex_id}", "block", producer, HEADER_BYTES + content, time_us,
            len(self.miner_nodes), receipts={producer: time_us},
        )

        self.clients[producer].ingest_header(header, source=f"miner:{miner_id}", time=time_us)
        self._hold_block(producer, block_hash)
        self._send(time_us, producer, "header", block_hash, exclude=None, origin_send=True)
        self._send(time_us, producer, "block", block_hash, exclude=None, origin_send=True)

    def _hold_block(self, node: int, block_hash: bytes) -> None:
        """Mark the block held; promote it (and buffered children) when its
        full ancestry is held, then advance the mining tip on strictly
        greater cumulative work."""
        parent = self.headers[block_hash].prev_hash
        validated = self.validated[node]
        if parent not in validated:
            self.pending_blocks[node].setdefault(parent, []).append(block_hash)
            return
        queue = [block_hash]
        while queue:
            h = queue.pop(0)
            if h in validated:
                continue
            validated.add(h)
            node_entry = self.tree.nodes[h]
            tip_entry = self.tree.nodes[self.mining_tip[node]]
            if node_entry.cumulative_work > tip_entry.cumulative_work:
                self.mining_tip[node] = h
            queue.extend(self.pending_blocks[node].pop(h, []))

    def _on_deliver_header(self, time_us: int, frm: int, to: int, block_hash: bytes) -> None:
        header = self.headers[block_hash]
        self.clients[to].ingest_header(header, source=f"node:{frm}", time=time_us)
        if self._record_receipt(f"header:{hash_to_hex(block_hash)}", to, time_us):
            self._send(time_us, to, "header", block_hash, exclude=frm, origin_send=False)

    def _on_deliver_block(self, time_us: int, frm: int, to: int, block_hash: bytes) -> None:
        header = self.headers[block_hash]
        # Header-first normally guarantees the header beat the block here,
        # but ingest again defensively (a duplicate at worst).
        self.clients[to].ingest_header(header, source=f"node:{frm}", time=time_us)
        if self._record_receipt(f"block:{hash_to_hex(block_hash)}", to, time_us):
            self._hold_block(to, block_hash)
            if self.params.pow_mode == "concrete":
                txs = self.block_store[block_hash]
                if txs:
                    self.mempools[to].remove([tx.tx_id for tx in txs])
            if self.relay.kind != "miner-direct":
                self._send(time_us, to, "block", block_hash, exclude=frm, origin_send=False)

    def _on_deliver_tx(self, time_us: int, frm: int, to: int, tx_id: bytes) -> None:
        if tx_id in self.seen_txs[to]:
            return
        self.seen_txs[to].add(tx_id)
        self.mempools[to].add(self.tx_payloads[tx_id])
        msg_id = f"tx:{tx_id.hex()}"
        if msg_id not in self.trace.messages:
            self.trace.messages[msg_id] = MessageTrace(
                msg_id, "tx", to, self.tx_payloads[tx_id].size, time_us,
                len(self.miner_nodes), receipts={},
            )
        self.trace.messages[msg_id].receipts.setdefault(to, time_us)
        self._send(time_us, to, "tx", tx_id, exclude=frm if frm != to else None, origin_send=frm == to)

    # -- main loop ----------------------------------------------------------

    def run(self) -> SimResult:
        handlers = {
            "block-found": lambda t, p: self._on_block_found(t, *p),
            "deliver-header": lambda t, p: self._on_deliver_header(t, *p),
            "deliver-block": lambda t, p: self._on_deliver_block(t, *p),
            "deliver-tx": lambda t, p: self._on_deliver_tx(t, *p),
        }
        while self.events:
            time_us, _, kind, payload = heapq.heappop(self.events)
            handlers[kind](time_us, payload)

        best_tip = self.tree.genesis_hash
        best = self.tree.nodes[best_tip]
        for tip in self.tree.tips:
            node = self.tree.nodes[tip]
            if node.cumulative_work > best.cumulative_work or (
                node.cumulative_work == best.cumulative_work
                and node.receipt_seq < best.receipt_seq
            ):
                best_tip, best = tip, node
        best_chain = list(reversed(self.tree.ancestors(best_tip)))

        return SimResult(
            graph=self.graph,
            roster=self.roster,
            genesis_hash=self.genesis_hash,
            blocks=self.blocks,
            block_store=self.block_store,
            clients=self.clients,
            trace=self.trace,
            tree=self.tree,
            best_tip=best_tip,
            best_chain=best_chain,
            duration_s=self.duration_s,
            seed=self.seed,
        )


def run_simulation(
    graph: NetworkGraph,
    miners: list[MinerAgent],
    relay: RelayPlan,
    duration_s: float,
    seed: int,
    block_params: BlockParams | None = None,
    default_bandwidth_bps: int = 100_000_000,
    forced_blocks: list[tuple[float, str]] | None = None,
) -> SimResult:
    sim = _Sim(
        graph,
        miners,
        relay,
        duration_s,
        seed,
        block_params or BlockParams(),
        default_bandwidth_bps,
        list(forced_blocks or []),
    )
    return sim.run()


# -- trace analysis ----------------------------------------------------------


def t_fraction_ms(trace: PropagationTrace, msg_id: str, fraction: float = 0.95) -> float | None:
    """Delay (ms after origin) by which >= fraction of the audience holds the
    message; None when the message never reached that many nodes."""
    if msg_id not in trace.messages:
        raise KeyError(f"unknown message {msg_id!r}")
    msg = trace.messages[msg_id]
    needed = math.ceil(fraction * msg.audience)
    times = sorted(msg.receipts.values())
    if needed < 1 or len(times) < needed:
        return None
    return (times[needed - 1] - msg.origin_us) / 1000.0


def t95(trace: PropagationTrace, msg_id: str) -> float | None:
    return t_fraction_ms(trace, msg_id, 0.95)


def t_secure_ms(trace: PropagationTrace, delta_margin_ms: float = 0.0) -> float:
    """Worst observed miner-to-miner block first-receipt delay plus margin."""
    worst = 0.0
    for msg in trace.messages.values():
        if msg.kind != "block":
            continue
        for node, time_us in msg.receipts.items():
            if node != msg.origin:
                worst = max(worst, (time_us - msg.origin_us) / 1000.0)
    return worst + delta_margin_ms


def sender_cost(strategy: str, group_size: int, message_bytes: int, fanout: int = 8,
                overhead_bytes: int = HEADER_BYTES) -> int:
    """Bytes the origin transmits to serve a group of the given size."""
    if group_size < 1 or message_bytes < 1:
        raise ValueError("group size and message bytes must be positive")
    if strategy == "unicast-flood":
        return group_size * message_bytes
    if strategy == "gossip":
        return fanout * message_bytes
    if strategy == "multicast":
        return message_bytes + overhead_bytes
    if strategy == "miner-direct":
        return group_size * message_bytes
    raise ValueError(f"unknown relay strategy {strategy!r}")
