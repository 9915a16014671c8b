"""Stateless lightweight clients: header trees, trust anchors, SPV checks.

A client ingests headers only, keeps every valid branch forever (stale
branches are evidence, never garbage), and decides its best tip purely by
cumulative work with a first-seen tie rule.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from .chain import (
    BlockHeader,
    CompactBitsError,
    MerkleProof,
    deserialize_header,
    hash_header,
    header_meets_target,
    serialize_header,
    verify_merkle_proof,
    work_from_bits,
)

ACCEPT = "accept"
DUPLICATE = "duplicate"
REJECT = "reject"

CONFIRMED = "confirmed"
NOT_ON_BEST_CHAIN = "not_on_best_chain"
INVALID_PROOF = "invalid_proof"
UNKNOWN_BLOCK = "unknown_block"

DEFAULT_ORPHAN_LIMIT = 1024
DEFAULT_K_PATHS = 2


@dataclass(frozen=True)
class IngestResult:
    status: str
    reason: str | None = None


@dataclass
class TreeNode:
    header: BlockHeader
    parent: bytes | None
    height: int
    cumulative_work: int
    receipt_seq: int


@dataclass
class TrustAnchorEvidence:
    first_hop_sources: set[str] = field(default_factory=set)
    receipt_times: list[int] = field(default_factory=list)


@dataclass(frozen=True)
class StaleBranch:
    fork_point: bytes
    tip: bytes
    length: int
    cumulative_work: int


class HeaderTree:
    """Append-only store of all valid headers, stale branches included."""

    def __init__(self, genesis: BlockHeader):
        self.genesis_hash = hash_header(genesis)
        self.nodes: dict[bytes, TreeNode] = {
            self.genesis_hash: TreeNode(
                header=genesis,
                parent=None,
                height=0,
                cumulative_work=work_from_bits(genesis.bits),
                receipt_seq=0,
            )
        }
        self.tips: set[bytes] = {self.genesis_hash}
        self._next_seq = 1

    def __contains__(self, header_hash: bytes) -> bool:
        return header_hash in self.nodes

    def __len__(self) -> int:
        return len(self.nodes)

    def add(self, header: BlockHeader) -> TreeNode:
        parent = self.nodes[header.prev_hash]
        header_hash = hash_header(header)
        node = TreeNode(
            header=header,
            parent=header.prev_hash,
            height=parent.height + 1,
            cumulative_work=parent.cumulative_work + work_from_bits(header.bits),
            receipt_seq=self._next_seq,
        )
        self._next_seq += 1
        self.nodes[header_hash] = node
        self.tips.discard(header.prev_hash)
        self.tips.add(header_hash)
        return node

    def ancestors(self, header_hash: bytes) -> list[bytes]:
        """Hashes from the given header down to genesis, inclusive."""
        out = []
        cursor: bytes | None = header_hash
        while cursor is not None:
            out.append(cursor)
            cursor = self.nodes[cursor].parent
        return out


class SpvClient:
    """Header-only validator with an orphan retry buffer and anchor evidence."""

    def __init__(
        self,
        genesis: BlockHeader,
        k_paths: int = DEFAULT_K_PATHS,
        orphan_limit: int = DEFAULT_ORPHAN_LIMIT,
    ):
        self.tree = HeaderTree(genesis)
        self.k_paths = k_paths
        self.orphan_limit = orphan_limit
        self.anchors: dict[bytes, TrustAnchorEvidence] = {}
        self.best_tip: bytes = self.tree.genesis_hash
        # prev_hash -> buffered (header, source, time) awaiting that parent
        self._orphans: dict[bytes, list[tuple[BlockHeader, str, int]]] = {}
        self._orphan_count = 0
        self.receipt_log: list[tuple[bytes, str, int]] = []

    def ingest_header(self, header: BlockHeader, source: str, time: int) -> IngestResult:
        header_hash = hash_header(header)
        if header_hash in self.tree:
            self._record_evidence(header_hash, source, time)
            return IngestResult(DUPLICATE)
        try:
            if not header_meets_target(header):
                return IngestResult(REJECT, "pow")
        except CompactBitsError:
            return IngestResult(REJECT, "bits")
        if header.prev_hash not in self.tree:
            self._buffer_orphan(header, source, time)
            return IngestResult(REJECT, "orphan")
        self._attach(header, header_hash, source, time)
        return IngestResult(ACCEPT)

    def _attach(self, header: BlockHeader, header_hash: bytes, source: str, time: int) -> None:
        # Iterative worklist: a deep buffered orphan chain must not recurse.
        pending = [(header, header_hash, source, time)]
        while pending:
            hdr, hdr_hash, src, when = pending.pop(0)
            node = self.tree.add(hdr)
            self._record_evidence(hdr_hash, src, when)
            if node.cumulative_work > self.tree.nodes[self.best_tip].cumulative_work:
                self.best_tip = hdr_hash
            for child, child_source, child_time in self._orphans.pop(hdr_hash, []):
                self._orphan_count -= 1
                child_hash = hash_header(child)
                if child_hash not in self.tree:
                    pending.append((child, child_hash, child_source, child_time))

    def _buffer_orphan(self, header: BlockHeader, source: str, time: int) -> None:
        if self._orphan_count >= self.orphan_limit:
            return
        self._orphans.setdefault(header.prev_hash, []).append((header, source, time))
        self._orphan_count += 1

    def _record_evidence(self, header_hash: bytes, source: str, time: int) -> None:
        evidence = self.anchors.setdefault(header_hash, TrustAnchorEvidence())
        evidence.first_hop_sources.add(source)
        evidence.receipt_times.append(time)
        self.receipt_log.append((header_hash, source, time))

    def height_of(self, header_hash: bytes) -> int:
        return self.tree.nodes[header_hash].height

    def best_chain(self) -> list[bytes]:
        """Best-tip ancestry, genesis first."""
        return list(reversed(self.tree.ancestors(self.best_tip)))

    def verify_spv(self, tx_id: bytes, proof: MerkleProof, block_hash: bytes) -> tuple[str, int | None]:
        if block_hash not in self.tree:
            return UNKNOWN_BLOCK, None
        node = self.tree.nodes[block_hash]
        if not verify_merkle_proof(tx_id, proof, node.header.merkle_root):
            return INVALID_PROOF, None
        cursor: bytes | None = self.best_tip
        depth = 0
        while cursor is not None:
            if cursor == block_hash:
                return CONFIRMED, depth
            cursor = self.tree.nodes[cursor].parent
            depth += 1
        return NOT_ON_BEST_CHAIN, None

    def is_trust_anchor(self, header_hash: bytes) -> bool:
        if header_hash not in self.tree:
            raise KeyError(f"unknown header {header_hash.hex()}")
        evidence = self.anchors.get(header_hash)
        if evidence is None or len(evidence.first_hop_sources) < self.k_paths:
            return False
        return header_hash in set(self.tree.ancestors(self.best_tip))

    def stale_branches(self) -> list[StaleBranch]:
        best = set(self.tree.ancestors(self.best_tip))
        out = []
        for tip in sorted(self.tree.tips):
            if tip == self.best_tip:
                continue
            length = 0
            cursor = tip
            while cursor not in best:
                length += 1
                parent = self.tree.nodes[cursor].parent
                assert parent is not None, "non-genesis branch must meet the best chain"
                cursor = parent
            out.append(
                StaleBranch(
                    fork_point=cursor,
                    tip=tip,
                    length=length,
                    cumulative_work=self.tree.nodes[tip].cumulative_work,
                )
            )
        return out

    def export_snapshot(self) -> dict:
        """JSON-ready snapshot: headers in receipt order plus the receipt log."""
        ordered = sorted(self.tree.nodes.items(), key=lambda kv: kv[1].receipt_seq)
        return {
            "headers": [serialize_header(node.header).hex() for _, node in ordered],
            "receipt": [
                {"hash": h.hex(), "source": source, "time": time}
                for h, source, time in self.receipt_log
            ],
        }


def import_snapshot(snapshot: dict, k_paths: int = DEFAULT_K_PATHS) -> SpvClient:
    headers = [deserialize_header(bytes.fromhex(line)) for line in snapshot["headers"]]
    if not headers:
        raise ValueError("snapshot contains no headers")
    client = SpvClient(headers[0], k_paths=k_paths)
    by_hash = {hash_header(h): h for h in headers}
    for entry in snapshot["receipt"]:
        header = by_hash[bytes.fromhex(entry["hash"])]
        client.ingest_header(header, entry["source"], entry["time"])
    return client


def clients_converged(clients: list[SpvClient]) -> bool:
    if not clients:
        return True
    genesis = clients[0].tree.genesis_hash
    if any(c.tree.genesis_hash != genesis for c in clients):
        raise ValueError("clients do not share a genesis")
    tips = {c.best_tip for c in clients}
    return len(tips) == 1
