"""Content-addressed blocks, chunking, and Merkle DAG construction/traversal.

Every stored unit is named by the SHA-256 of its exact bytes. Files are split
into fixed-size chunks and assembled bottom-up into a balanced DAG whose inner
nodes carry child digests plus subtree payload lengths, so a reader can map
any subtree back onto a contiguous leaf range without out-of-band state.
"""

from __future__ import annotations

import hashlib
import os
import struct
import threading
from dataclasses import dataclass, field
from enum import IntEnum

from .errors import IntegrityMismatch, NotFound, RootMissing

DIGEST_LEN = 32


class BlockKind(IntEnum):
    DATA_LEAF = 0
    DAG_NODE = 1
    PARITY_LEAF = 2
    METADATA = 3


@dataclass(frozen=True, order=True)
class BlockId:
    """Content identifier: hash of the block bytes plus a role tag."""

    digest: bytes
    kind: BlockKind = BlockKind.DATA_LEAF

    def hex(self) -> str:
        # external rendering: 1-byte kind prefix, then the digest, lowercase hex
        return f"{self.kind:02x}{self.digest.hex()}"

    @classmethod
    def from_hex(cls, text: str) -> "BlockId":
        raw = bytes.fromhex(text)
        if len(raw) != DIGEST_LEN + 1:
            raise ValueError(f"block id must be {DIGEST_LEN + 1} bytes, got {len(raw)}")
        return cls(digest=raw[1:], kind=BlockKind(raw[0]))

    def __repr__(self):
        return f"BlockId({self.kind.name}:{self.digest.hex()[:12]})"


@dataclass
class DagConfig:
    chunk_size: int = 262144
    fanout: int = 174

    def __post_init__(self):
        if self.chunk_size < 1:
            raise ValueError("chunk_size must be >= 1")
        if self.fanout < 2:
            raise ValueError("fanout must be >= 2")


def cid_of(data: bytes, kind: BlockKind = BlockKind.DATA_LEAF) -> BlockId:
    return BlockId(digest=hashlib.sha256(data).digest(), kind=kind)


def verify(block_id: BlockId, data: bytes) -> bool:
    return hashlib.sha256(data).digest() == block_id.digest


def chunk(file_bytes: bytes, cfg: DagConfig) -> list[bytes]:
    """Split bytes into chunk_size pieces; empty input yields one empty leaf."""
    if not file_bytes:
        return [b""]
    size = cfg.chunk_size
    return [file_bytes[i : i + size] for i in range(0, len(file_bytes), size)]


@dataclass(frozen=True)
class MerkleNode:
    """Inner DAG node: ordered children with their subtree payload lengths."""

    children: tuple[BlockId, ...]
    child_payloads: tuple[int, ...]

    @property
    def payload_len(self) -> int:
        return sum(self.child_payloads)

    def encode(self, kind: BlockKind = BlockKind.DAG_NODE) -> bytes:
        parts = [struct.pack("<BI", int(kind), len(self.children))]
        for cid, plen in zip(self.children, self.child_payloads):
            parts.append(cid.digest + struct.pack("<Q", plen))
        return b"".join(parts)

    @classmethod
    def decode(cls, data: bytes) -> "MerkleNode":
        node, _ = cls.try_decode(data)
        if node is None:
            raise ValueError("bytes do not encode a MerkleNode")
        return node

    @classmethod
    def try_decode(cls, data: bytes):
        """Strict parse; returns (node, kind) or (None, None) if the layout is off."""
        if len(data) < 5:
            return None, None
        kind_byte, count = struct.unpack_from("<BI", data, 0)
        if kind_byte not in (int(BlockKind.DAG_NODE), int(BlockKind.METADATA)):
            return None, None
        if count < 1 or len(data) != 5 + count * (DIGEST_LEN + 8):
            return None, None
        children = []
        payloads = []
        off = 5
        for _ in range(count):
            digest = data[off : off + DIGEST_LEN]
            (plen,) = struct.unpack_from("<Q", data, off + DIGEST_LEN)
            children.append(BlockId(digest=digest, kind=BlockKind.DAG_NODE))
            payloads.append(plen)
            off += DIGEST_LEN + 8
        return cls(children=tuple(children), child_payloads=tuple(payloads)), BlockKind(kind_byte)


def build_dag(
    leaves: list[tuple[BlockId, int]],
    cfg: DagConfig,
    leaf_kind: BlockKind = BlockKind.DATA_LEAF,
) -> tuple[BlockId, list[tuple[BlockId, MerkleNode]]]:
    """Build a balanced DAG over (leaf id, byte length) pairs, left to right.

    A single-leaf file still gets a root node so every file has uniform shape.
    Returns the root id and all inner nodes paired with their ids.
    """
    if not leaves:
        raise ValueError("build_dag requires at least one leaf")
    nodes: list[tuple[BlockId, MerkleNode]] = []
    level: list[tuple[BlockId, int]] = [
        (BlockId(digest=cid.digest, kind=leaf_kind), length) for cid, length in leaves
    ]
    first = True
    while len(level) > 1 or first:
        first = False
        nxt: list[tuple[BlockId, int]] = []
        for i in range(0, len(level), cfg.fanout):
            group = level[i : i + cfg.fanout]
            node = MerkleNode(
                children=tuple(cid for cid, _ in group),
                child_payloads=tuple(length for _, length in group),
            )
            node_id = cid_of(node.encode(), BlockKind.DAG_NODE)
            nodes.append((node_id, node))
            nxt.append((node_id, node.payload_len))
        level = nxt
    return level[0][0], nodes


@dataclass
class LeafSlot:
    """One leaf position in traversal order."""

    index: int
    block_id: BlockId | None  # None when an ancestor node was missing
    length: int
    present: bool


@dataclass
class WalkReport:
    leaves: list[LeafSlot]
    missing_nodes: list[BlockId] = field(default_factory=list)

    @property
    def all_present(self) -> bool:
        return not self.missing_nodes and all(s.present for s in self.leaves)


def walk_dag(
    root: BlockId,
    store: "BlockStore",
    leaf_lengths: list[int] | None = None,
    leaf_kind: BlockKind = BlockKind.DATA_LEAF,
) -> WalkReport:
    """Depth-first, child-order traversal of the DAG under root.

    The tree is uniform-depth by construction, so leaf level is found by
    probing any present root-to-leaf path. Missing inner nodes are reported
    and their leaf span is reconstructed from payload lengths (callers pass
    leaf_lengths when they know the chunking, e.g. from file metadata);
    traversal continues over available siblings. Raises RootMissing when the
    root block itself is gone.
    """
    try:
        root_bytes = store.get(root)
    except NotFound:
        raise RootMissing(f"root {root!r} absent") from None

    root_node, _ = MerkleNode.try_decode(root_bytes)
    if root_node is None:
        raise ValueError("root bytes do not decode as a DAG node")

    # phase 1: the tree is uniform-depth, real inner nodes always decode and
    # leaf bytes essentially never do, so the leaf level is one past the
    # deepest present decodable node; a reachable leaf settles it directly
    max_inner_depth = 0

    def probe(node: MerkleNode, depth: int) -> int | None:
        nonlocal max_inner_depth
        max_inner_depth = max(max_inner_depth, depth)
        for child, plen in zip(node.children, node.child_payloads):
            try:
                data = store.get(child)
            except (NotFound, IntegrityMismatch):
                continue
            sub, _ = MerkleNode.try_decode(data)
            if sub is None or sub.payload_len != plen:
                return depth + 1
            found = probe(sub, depth + 1)
            if found is not None:
                return found
        return None

    leaf_depth = probe(root_node, 0) or (max_inner_depth + 1)

    leaves: list[LeafSlot] = []
    missing: list[BlockId] = []
    lengths = leaf_lengths

    def span_slots(payload: int, cursor: int) -> int:
        # how many leaves a subtree with this payload covers, starting at cursor
        if lengths is None:
            return 1
        if payload == 0:
            return 1
        total, count = 0, 0
        while total < payload and cursor + count < len(lengths):
            total += lengths[cursor + count]
            count += 1
        return max(count, 1)

    def emit_leaf(digest: bytes | None, length: int, present: bool):
        block_id = BlockId(digest=digest, kind=leaf_kind) if digest is not None else None
        leaves.append(
            LeafSlot(index=len(leaves), block_id=block_id, length=length, present=present)
        )

    def visit(node: MerkleNode, depth: int):
        at_leaf_level = depth + 1 == leaf_depth
        for child, plen in zip(node.children, node.child_payloads):
            child_span = span_slots(plen, len(leaves))
            if at_leaf_level:
                if child_span > 1:
                    # depth was under-estimated because this whole subtree is
                    # unreachable; report it as a missing inner node
                    missing.append(child)
                    for _ in range(child_span):
                        emit_leaf(None, 0, present=False)
                else:
                    leaf_id = BlockId(digest=child.digest, kind=leaf_kind)
                    emit_leaf(child.digest, plen, present=store.has(leaf_id))
                continue
            try:
                child_bytes = store.get(child)
            except (NotFound, IntegrityMismatch):
                missing.append(child)
                for _ in range(child_span):
                    emit_leaf(None, 0, present=False)
                continue
            sub, _ = MerkleNode.try_decode(child_bytes)
            if sub is None or sub.payload_len != plen:
                raise ValueError(f"expected an inner node at depth {depth + 1}")
            visit(sub, depth + 1)

    visit(root_node, 0)
    return WalkReport(leaves=leaves, missing_nodes=missing)


class BlockStore:
    """put/get/has/delete over content-addressed blocks."""

    def put(self, block_id: BlockId, data: bytes) -> None:
        raise NotImplementedError

    def get(self, block_id: BlockId) -> bytes:
        raise NotImplementedError

    def has(self, block_id: BlockId) -> bool:
        raise NotImplementedError

    def delete(self, block_id: BlockId) -> None:
        raise NotImplementedError

    def put_bytes(self, data: bytes, kind: BlockKind = BlockKind.DATA_LEAF) -> BlockId:
        block_id = cid_of(data, kind)
        self.put(block_id, data)
        return block_id


class MemoryBlockStore(BlockStore):
    """Dict-backed store, safe for concurrent readers/writers."""

    def __init__(self):
        self._blocks: dict[bytes, bytes] = {}
        self._lock = threading.Lock()

    def put(self, block_id: BlockId, data: bytes) -> None:
        if not verify(block_id, data):
            raise IntegrityMismatch(f"put of {block_id!r} with non-matching bytes")
        with self._lock:
            self._blocks[block_id.digest] = data

    def get(self, block_id: BlockId) -> bytes:
        with self._lock:
            data = self._blocks.get(block_id.digest)
        if data is None:
            raise NotFound(repr(block_id))
        if not verify(block_id, data):
            raise IntegrityMismatch(f"stored bytes for {block_id!r} fail hash check")
        return data

    def has(self, block_id: BlockId) -> bool:
        with self._lock:
            return block_id.digest in self._blocks

    def delete(self, block_id: BlockId) -> None:
        with self._lock:
            self._blocks.pop(block_id.digest, None)

    def __len__(self):
        return len(self._blocks)

    def digests(self) -> set[bytes]:
        with self._lock:
            return set(self._blocks)

    # test hook: corrupt stored bytes without touching the key
    def tamper(self, block_id: BlockId, data: bytes) -> None:
        with self._lock:
            self._blocks[block_id.digest] = data


class FileBlockStore(BlockStore):
    """One file per block at <root>/<first two hex chars>/<digest hex>."""

    def __init__(self, root: str):
        self.root = root
        os.makedirs(root, exist_ok=True)
        self._lock = threading.Lock()

    def _path(self, block_id: BlockId) -> str:
        hexd = block_id.digest.hex()
        return os.path.join(self.root, hexd[:2], hexd)

    def put(self, block_id: BlockId, data: bytes) -> None:
        if not verify(block_id, data):
            raise IntegrityMismatch(f"put of {block_id!r} with non-matching bytes")
        path = self._path(block_id)
        with self._lock:
            os.makedirs(os.path.dirname(path), exist_ok=True)
            tmp = path + ".tmp"
            with open(tmp, "wb") as fh:
                fh.write(data)
            os.replace(tmp, path)

    def get(self, block_id: BlockId) -> bytes:
        try:
            with open(self._path(block_id), "rb") as fh:
                data = fh.read()
        except FileNotFoundError:
            raise NotFound(repr(block_id)) from None
        if not verify(block_id, data):
            raise IntegrityMismatch(f"stored bytes for {block_id!r} fail hash check")
        return data

    def has(self, block_id: BlockId) -> bool:
        return os.path.exists(self._path(block_id))

    def delete(self, block_id: BlockId) -> None:
        try:
            os.remove(self._path(block_id))
        except FileNotFoundError:
            pass
