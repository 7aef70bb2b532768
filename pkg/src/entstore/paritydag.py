"""Parity Merkle DAGs and the compact per-file metadata block.

Each strand class gets its own DAG whose leaves are all parities of that
class in a fixed order (strand id ascending, then hop along the strand).
The order restores the lattice-edge -> leaf mapping implicitly, so no
per-block mapping table ever exists. The metadata block is a small,
canonically serialized descriptor; its own content id is the handle users
keep ("metacid").
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

from .blocks import BlockId, BlockKind, BlockStore, DagConfig, build_dag, cid_of, walk_dag
from .errors import MalformedMetadata, NotFound
from .lattice import (
    CodingParams,
    ParitySet,
    StrandClass,
    StrandEdge,
    chains_for_class,
    edge_out_of,
)


@dataclass
class ParityDag:
    """One strand class's DAG: root id plus the leaf blocks in canonical order."""

    cls: StrandClass
    root: BlockId
    leaf_edges: list[StrandEdge]
    leaf_blocks: list[tuple[BlockId, bytes]]
    nodes: list[tuple[BlockId, bytes]]


def build_parity_dags(pset: ParitySet, cfg: DagConfig) -> list[ParityDag]:
    """One DAG per class; deterministic leaf order (strand id, hop count)."""
    dags = []
    for cls in pset.params.classes:
        edges: list[StrandEdge] = []
        blocks: list[tuple[BlockId, bytes]] = []
        for chain in chains_for_class(cls, pset.n, pset.params):
            for pos in chain:
                edges.append(edge_out_of(pos, cls, pset.params))
                data = pset.get(cls, pos)
                blocks.append((cid_of(data, BlockKind.PARITY_LEAF), data))
        root, nodes = build_dag(
            [(cid, len(data)) for cid, data in blocks], cfg, leaf_kind=BlockKind.PARITY_LEAF
        )
        dags.append(
            ParityDag(
                cls=cls,
                root=root,
                leaf_edges=edges,
                leaf_blocks=blocks,
                nodes=[(nid, node.encode()) for nid, node in nodes],
            )
        )
    return dags


def edge_ordinal(edge: StrandEdge, n: int, params: CodingParams) -> int:
    """Leaf ordinal of a parity edge inside its class's DAG."""
    chains = chains_for_class(edge.cls, n, params)
    offset = 0
    for chain in chains:
        if edge.from_pos in chain:
            return offset + chain.index(edge.from_pos)
        offset += len(chain)
    raise ValueError(f"edge {edge} not in lattice of {n} positions")


@dataclass
class FileMetadata:
    """Compact descriptor replacing any per-block mapping artifact."""

    file_root: BlockId
    n: int
    block_size: int
    true_lengths: list[tuple[int, int]]  # run-length encoded (length, count)
    params: CodingParams
    edag_roots: list[tuple[StrandClass, BlockId]]
    direct_replication: int = 1
    internal_replication: int = 1

    def leaf_lengths(self) -> list[int]:
        out = []
        for length, count in self.true_lengths:
            out.extend([length] * count)
        return out

    def file_size(self) -> int:
        return sum(length * count for length, count in self.true_lengths)


def rle_lengths(lengths: list[int]) -> list[tuple[int, int]]:
    runs: list[tuple[int, int]] = []
    for length in lengths:
        if runs and runs[-1][0] == length:
            runs[-1] = (length, runs[-1][1] + 1)
        else:
            runs.append((length, 1))
    return runs


def _pack_id(block_id: BlockId) -> bytes:
    return struct.pack("<B", int(block_id.kind)) + block_id.digest


def encode_metadata(meta: FileMetadata) -> bytes:
    parts = [
        _pack_id(meta.file_root),
        struct.pack("<QQ", meta.n, meta.block_size),
        struct.pack("<I", len(meta.true_lengths)),
    ]
    for length, count in meta.true_lengths:
        parts.append(struct.pack("<QQ", length, count))
    parts.append(struct.pack("<BHH", meta.params.alpha, meta.params.s, meta.params.p))
    parts.append(struct.pack("<B", len(meta.edag_roots)))
    for cls, root in meta.edag_roots:
        parts.append(struct.pack("<B", int(cls)) + _pack_id(root))
    parts.append(struct.pack("<II", meta.direct_replication, meta.internal_replication))
    return b"".join(parts)


def decode_metadata(data: bytes) -> FileMetadata:
    try:
        off = 0

        def take(fmt):
            nonlocal off
            size = struct.calcsize(fmt)
            if off + size > len(data):
                raise MalformedMetadata("truncated metadata")
            vals = struct.unpack_from(fmt, data, off)
            off += size
            return vals

        def take_id():
            nonlocal off
            (kind,) = take("<B")
            if off + 32 > len(data):
                raise MalformedMetadata("truncated metadata")
            digest = data[off : off + 32]
            off += 32
            return BlockId(digest=digest, kind=BlockKind(kind))

        file_root = take_id()
        n, block_size = take("<QQ")
        (rle_count,) = take("<I")
        true_lengths = [tuple(take("<QQ")) for _ in range(rle_count)]
        alpha, s, p = take("<BHH")
        (root_count,) = take("<B")
        roots = []
        for _ in range(root_count):
            (cls,) = take("<B")
            roots.append((StrandClass(cls), take_id()))
        direct_rep, internal_rep = take("<II")
        if off != len(data):
            raise MalformedMetadata(f"{len(data) - off} trailing bytes")
        return FileMetadata(
            file_root=file_root,
            n=n,
            block_size=block_size,
            true_lengths=[(int(a), int(b)) for a, b in true_lengths],
            params=CodingParams(alpha=alpha, s=s, p=p),
            edag_roots=roots,
            direct_replication=direct_rep,
            internal_replication=internal_rep,
        )
    except MalformedMetadata:
        raise
    except (struct.error, ValueError) as exc:
        raise MalformedMetadata(str(exc)) from exc


def metadata_id(meta: FileMetadata) -> BlockId:
    return cid_of(encode_metadata(meta), BlockKind.METADATA)


def parity_leaf_ids(meta: FileMetadata, cls: StrandClass, store: BlockStore):
    """Ordered parity leaf slots of one class's DAG, via traversal only."""
    root = dict(meta.edag_roots)[cls]
    lengths = [meta.block_size] * meta.n
    return walk_dag(root, store, leaf_lengths=lengths, leaf_kind=BlockKind.PARITY_LEAF)


def parity_lookup(meta: FileMetadata, edge: StrandEdge, store: BlockStore) -> bytes:
    """Edge -> leaf ordinal -> block id via DAG walk -> bytes. No mapping table."""
    report = parity_leaf_ids(meta, edge.cls, store)
    ordinal = edge_ordinal(edge, meta.n, meta.params)
    slot = report.leaves[ordinal]
    if slot.block_id is None or not slot.present:
        raise NotFound(f"parity leaf for {edge} unavailable")
    return store.get(slot.block_id)


@dataclass
class OverheadQuery:
    """Inputs for the naive per-file mapping-table size estimate."""

    files: int
    peers: int
    blocks_per_file: int
    alpha: int
    bytes_per_entry: int = 40

    def __post_init__(self):
        for name in ("files", "peers", "blocks_per_file", "alpha", "bytes_per_entry"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


def estimate_total_storage(q: OverheadQuery) -> int:
    """Network-wide bytes a per-block mapping table would cost if every peer kept one."""
    return q.files * q.peers * (1 + q.alpha) * (q.blocks_per_file * q.bytes_per_entry)
