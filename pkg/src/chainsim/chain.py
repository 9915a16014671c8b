"""Block, header, and Merkle primitives plus the cumulative-work chain rules.

Byte layouts follow the Bitcoin wire conventions (80-byte headers, double
SHA-256, compact "bits" targets, odd-leaf duplication in Merkle trees) so
everything here can be cross-checked against real mainnet data.

References:
    - https://en.bitcoin.it/wiki/Block_hashing_algorithm
    - https://en.bitcoin.it/wiki/Difficulty
"""
from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass

HEADER_SIZE = 80
MAX_TARGET = (1 << 256) - 1

# Compact target of the original mainnet difficulty-1 blocks.
MAINNET_BITS = 0x1D00FFFF
# Near-maximal target used for simulated mining (a nonce grinds in ~2 tries).
EASY_BITS = 0x207FFFFF

_HEADER_STRUCT = struct.Struct("<i32s32sIII")


class CompactBitsError(ValueError):
    """Compact target is malformed (mantissa/exponent out of range)."""


def sha256d(data: bytes) -> bytes:
    return hashlib.sha256(hashlib.sha256(data).digest()).digest()


def hash_to_hex(digest: bytes) -> str:
    """Display convention: hex of the byte-reversed digest (RPC order)."""
    return digest[::-1].hex()


def hash_from_hex(text: str) -> bytes:
    raw = bytes.fromhex(text)
    if len(raw) != 32:
        raise ValueError(f"expected 32-byte hash, got {len(raw)} bytes")
    return raw[::-1]


@dataclass(frozen=True)
class BlockHeader:
    version: int
    prev_hash: bytes
    merkle_root: bytes
    timestamp: int
    bits: int
    nonce: int

    def __post_init__(self) -> None:
        if len(self.prev_hash) != 32 or len(self.merkle_root) != 32:
            raise ValueError("prev_hash and merkle_root must be 32 bytes")


@dataclass(frozen=True)
class Transaction:
    tx_id: bytes
    size: int
    fee: int

    def __post_init__(self) -> None:
        if len(self.tx_id) != 32:
            raise ValueError("tx_id must be 32 bytes")
        if self.size < 1:
            raise ValueError("transaction payload must be at least 1 byte")
        if self.fee < 0:
            raise ValueError("fee must be non-negative")

    @property
    def feerate(self) -> float:
        return self.fee / self.size


@dataclass(frozen=True)
class Block:
    header: BlockHeader
    transactions: tuple[Transaction, ...]


@dataclass(frozen=True)
class MerkleProof:
    leaf_index: int
    siblings: tuple[bytes, ...]


def make_transaction(payload: bytes, size: int, fee: int) -> Transaction:
    """Transaction with id = double SHA-256 of its payload."""
    return Transaction(tx_id=sha256d(payload), size=size, fee=fee)


def serialize_header(header: BlockHeader) -> bytes:
    return _HEADER_STRUCT.pack(
        header.version,
        header.prev_hash,
        header.merkle_root,
        header.timestamp,
        header.bits,
        header.nonce,
    )


def deserialize_header(raw: bytes) -> BlockHeader:
    if len(raw) != HEADER_SIZE:
        raise ValueError(f"header must be {HEADER_SIZE} bytes, got {len(raw)}")
    version, prev_hash, merkle_root, timestamp, bits, nonce = _HEADER_STRUCT.unpack(raw)
    return BlockHeader(version, prev_hash, merkle_root, timestamp, bits, nonce)


def hash_header(header: BlockHeader) -> bytes:
    return sha256d(serialize_header(header))


def bits_to_target(bits: int) -> int:
    """Decode a compact target; raises CompactBitsError on malformed input."""
    if not 0 <= bits <= 0xFFFFFFFF:
        raise CompactBitsError(f"bits out of 32-bit range: {bits:#x}")
    exponent = bits >> 24
    mantissa = bits & 0x00FFFFFF
    if mantissa > 0x7FFFFF:
        raise CompactBitsError(f"negative compact target: {bits:#x}")
    if mantissa == 0:
        raise CompactBitsError(f"zero compact target: {bits:#x}")
    if exponent <= 3:
        target = mantissa >> (8 * (3 - exponent))
    else:
        target = mantissa << (8 * (exponent - 3))
    if target == 0:
        raise CompactBitsError(f"compact target underflows to zero: {bits:#x}")
    if target > MAX_TARGET:
        raise CompactBitsError(f"compact target overflows 256 bits: {bits:#x}")
    return target


def work_from_bits(bits: int) -> int:
    """Expected hashes to meet the target: floor(2^256 / (target + 1))."""
    target = bits_to_target(bits)
    return (1 << 256) // (target + 1)


def header_meets_target(header: BlockHeader) -> bool:
    target = bits_to_target(header.bits)
    return int.from_bytes(hash_header(header), "little") < target


def verify_header_link(child: BlockHeader, parent_hash: bytes) -> bool:
    """True iff child references parent_hash and its digest meets its target."""
    if child.prev_hash != parent_hash:
        return False
    return header_meets_target(child)


def merkle_root(transactions: list[Transaction] | tuple[Transaction, ...]) -> bytes:
    if not transactions:
        raise ValueError("merkle root of an empty transaction list is undefined")
    return merkle_root_from_ids([tx.tx_id for tx in transactions])


def merkle_root_from_ids(tx_ids: list[bytes]) -> bytes:
    if not tx_ids:
        raise ValueError("merkle root of an empty id list is undefined")
    level = list(tx_ids)
    while len(level) > 1:
        if len(level) % 2 == 1:
            level.append(level[-1])
        level = [sha256d(level[i] + level[i + 1]) for i in range(0, len(level), 2)]
    return level[0]


def build_merkle_proof(transactions: list[Transaction] | tuple[Transaction, ...], index: int) -> MerkleProof:
    if not 0 <= index < len(transactions):
        raise IndexError(f"leaf index {index} out of range for {len(transactions)} leaves")
    siblings: list[bytes] = []
    level = [tx.tx_id for tx in transactions]
    pos = index
    while len(level) > 1:
        if len(level) % 2 == 1:
            level.append(level[-1])
        sibling_pos = pos ^ 1
        siblings.append(level[sibling_pos])
        level = [sha256d(level[i] + level[i + 1]) for i in range(0, len(level), 2)]
        pos //= 2
    return MerkleProof(leaf_index=index, siblings=tuple(siblings))


def verify_merkle_proof(tx_id: bytes, proof: MerkleProof, root: bytes) -> bool:
    node = tx_id
    pos = proof.leaf_index
    for sibling in proof.siblings:
        if pos & 1:
            node = sha256d(sibling + node)
        else:
            node = sha256d(node + sibling)
        pos //= 2
    return node == root


def validate_block(block: Block, parent_hash: bytes) -> tuple[bool, str | None]:
    """Full structural validity; returns (ok, reason) with reason on failure.

    Transaction validity is the structural subset: well-formed objects,
    unique ids, non-negative fees (enforced at construction).
    """
    if block.header.prev_hash != parent_hash:
        return False, "link"
    try:
        if not header_meets_target(block.header):
            return False, "pow"
    except CompactBitsError:
        return False, "bits"
    if not block.transactions:
        return False, "empty"
    seen: set[bytes] = set()
    for tx in block.transactions:
        if tx.tx_id in seen:
            return False, "duplicate-tx"
        seen.add(tx.tx_id)
    if merkle_root(block.transactions) != block.header.merkle_root:
        return False, "merkle-mismatch"
    return True, None


def chain_work(headers: list[BlockHeader] | tuple[BlockHeader, ...]) -> int:
    return sum(work_from_bits(h.bits) for h in headers)


def select_best_chain(
    candidates: list[list[BlockHeader]],
    receipt_order: list[int] | None = None,
) -> int:
    """Index of the candidate with strictly greatest cumulative work.

    Exact work ties retain the earliest-received candidate; receipt_order
    defaults to list position, so callers holding chains out of receipt
    order must pass the true order explicitly.
    """
    if not candidates:
        raise ValueError("no candidate chains")
    if receipt_order is None:
        receipt_order = list(range(len(candidates)))
    best = 0
    best_work = chain_work(candidates[0])
    for i in range(1, len(candidates)):
        work = chain_work(candidates[i])
        if work > best_work or (work == best_work and receipt_order[i] < receipt_order[best]):
            best, best_work = i, work
    return best


def mine_block_concrete(
    parent_hash: bytes,
    transactions: list[Transaction] | tuple[Transaction, ...],
    bits: int,
    nonce_start: int = 0,
    timestamp: int = 0,
    version: int = 1,
    max_tries: int = 1 << 22,
) -> Block:
    """Grind a nonce until the header meets the target; easy targets only.

    Raises RuntimeError when the bounded nonce search is exhausted.
    """
    target = bits_to_target(bits)
    txs = tuple(transactions)
    root = merkle_root(txs)
    for attempt in range(max_tries):
        nonce = (nonce_start + attempt) & 0xFFFFFFFF
        header = BlockHeader(version, parent_hash, root, timestamp, bits, nonce)
        if int.from_bytes(hash_header(header), "little") < target:
            return Block(header=header, transactions=txs)
    raise RuntimeError(f"nonce space exhausted after {max_tries} tries; lower the difficulty")


def build_merkle_vector(tx_ids: list[bytes], index: int) -> dict:
    """Self-contained JSON test vector: {leaves, index, proof, root} in hex."""
    txs = [Transaction(tx_id=i, size=1, fee=0) for i in tx_ids]
    proof = build_merkle_proof(txs, index)
    return {
        "leaves": [hash_to_hex(i) for i in tx_ids],
        "index": index,
        "proof": [hash_to_hex(s) for s in proof.siblings],
        "root": hash_to_hex(merkle_root_from_ids(tx_ids)),
    }


def check_merkle_vector(vector: dict) -> bool:
    """True iff the vector's proof binds its indexed leaf to its root."""
    leaves = [hash_from_hex(leaf) for leaf in vector["leaves"]]
    index = int(vector["index"])
    if not 0 <= index < len(leaves):
        return False
    proof = MerkleProof(
        leaf_index=index,
        siblings=tuple(hash_from_hex(s) for s in vector["proof"]),
    )
    return verify_merkle_proof(leaves[index], proof, hash_from_hex(vector["root"]))


# The mainnet genesis header, used as a cross-validation vector.
GENESIS_HEADER = BlockHeader(
    version=1,
    prev_hash=b"\x00" * 32,
    merkle_root=hash_from_hex("4a5e1e4baab89f3a32518a88c31bc87f618f76673e2cc77ab2127b7afdeda33b"),
    timestamp=1231006505,
    bits=MAINNET_BITS,
    nonce=2083236893,
)

GENESIS_HASH_HEX = "000000000019d6689c085ae165831e934ff763ae46a2a6c172b3f1b60a8ce26f"
