"""Upload orchestration: chunk, build DAGs, entangle, pin.

Pinning granularity is per block, but parity leaves are co-located per
strand chain through allocation overrides: one parity of the chain is
allocated normally and the rest of the chain follows it. This mirrors how
recursive pins keep a whole subtree on one node while keeping every parity
at replication factor 1, and it is what lets a surviving chain act as a
self-contained recovery path for its blocks.
"""

from __future__ import annotations

from dataclasses import dataclass

from .blocks import BlockId, BlockKind, DagConfig, build_dag, chunk, cid_of
from .lattice import CodingParams, chains_for_class, entangle
from .paritydag import (
    FileMetadata,
    build_parity_dags,
    encode_metadata,
    metadata_id,
    rle_lengths,
)


@dataclass
class UploadResult:
    file_root: BlockId
    meta_id: BlockId
    meta: FileMetadata
    n_blocks: int


def upload_file(
    connector,
    file_bytes: bytes,
    params: CodingParams,
    cfg: DagConfig | None = None,
    direct_replication: int = 1,
    internal_replication: int = 1,
    metadata_replication: int | None = None,
    strand_affinity: bool = True,
) -> UploadResult:
    """Chunk -> DAG -> entangle -> parity DAGs -> pin; returns both ids.

    direct_replication applies to data leaves, internal_replication to inner
    DAG nodes of both the file DAG and the parity DAGs; parity leaves are
    always pinned once.
    """
    params.require_square()
    cfg = cfg or DagConfig()

    leaves = chunk(file_bytes, cfg)
    leaf_ids = [cid_of(b, BlockKind.DATA_LEAF) for b in leaves]
    file_root, file_nodes = build_dag(
        [(cid, len(b)) for cid, b in zip(leaf_ids, leaves)], cfg
    )

    pset = entangle(leaves, params)
    dags = build_parity_dags(pset, cfg)

    meta = FileMetadata(
        file_root=file_root,
        n=len(leaves),
        block_size=pset.block_size,
        true_lengths=rle_lengths([len(b) for b in leaves]),
        params=params,
        edag_roots=[(d.cls, d.root) for d in dags],
        direct_replication=direct_replication,
        internal_replication=internal_replication,
    )
    meta_bytes = encode_metadata(meta)
    meta_cid = metadata_id(meta)

    # data leaves: spread individually
    for cid, data in zip(leaf_ids, leaves):
        connector.pin(cid, direct_replication, direct_replication, data=data)
    # inner nodes of the file DAG
    for nid, node in file_nodes:
        connector.pin(nid, internal_replication, internal_replication, data=node.encode())
    # parity DAGs: leaves chain-affine at rf 1, inner nodes like other structure.
    # The anchor is the chain's second parity: head parities share bytes (and
    # so content ids) with head data blocks, which would glue the chain onto
    # the data block's peer instead of an independent one.
    for dag in dags:
        offset = 0
        for chain in chains_for_class(dag.cls, pset.n, params):
            entries = [dag.leaf_blocks[offset + hop] for hop in range(len(chain))]
            offset += len(chain)
            anchor: list[bytes] | None = None
            if strand_affinity and len(entries) > 1:
                cid, data = entries[1]
                placed = connector.pin(cid, 1, 1, data=data)
                anchor = list(placed) if placed else None
            for hop, (cid, data) in enumerate(entries):
                if strand_affinity and hop == 1 and anchor is not None:
                    continue  # already pinned as the anchor
                overrides = anchor if (strand_affinity and anchor) else None
                placed = connector.pin(cid, 1, 1, data=data, overrides=overrides)
        for nid, raw in dag.nodes:
            connector.pin(nid, internal_replication, internal_replication, data=raw)
    # the metadata block itself
    meta_rf = metadata_replication or max(internal_replication, 1)
    connector.pin(meta_cid, 1, meta_rf, data=meta_bytes)

    return UploadResult(
        file_root=file_root, meta_id=meta_cid, meta=meta, n_blocks=len(leaves)
    )
