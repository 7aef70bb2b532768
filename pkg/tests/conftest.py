import os
import random
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from entstore.blocks import BlockKind, DagConfig, chunk, cid_of
from entstore.cluster import ClusterSim
from entstore.connector import SimConnector
from entstore.lattice import CodingParams
from entstore.service import upload_file

TEST_CFG = DagConfig(chunk_size=1024, fanout=4)


@pytest.fixture
def rng():
    return random.Random(1234)


@pytest.fixture
def small_params():
    return CodingParams(alpha=3, s=2, p=2)


@pytest.fixture
def square_params():
    return CodingParams(alpha=3, s=5, p=5)


def build_sim_with_file(
    n_peers=8,
    seed=7,
    size=60_000,
    params=None,
    cfg=None,
    internal_replication=None,
    file_seed=42,
):
    """Cluster with one uploaded file; returns (sim, upload result, bytes)."""
    params = params or CodingParams(3, 5, 5)
    cfg = cfg or TEST_CFG
    sim = ClusterSim(n_peers=n_peers, seed=seed, capacity=1 << 28)
    conn = SimConnector(sim)
    data = random.Random(file_seed).randbytes(size)
    result = upload_file(
        conn,
        data,
        params,
        cfg,
        internal_replication=internal_replication or n_peers,
        metadata_replication=n_peers,
    )
    return sim, result, data


def delete_data_leaf(sim, data, cfg, index):
    """Remove one data leaf from the peers its pin allocates (dedup-aware)."""
    piece = chunk(data, cfg)[index]
    cid = cid_of(piece, BlockKind.DATA_LEAF)
    entry = sim.pinset.get(cid)
    assert entry is not None
    for pid in entry.allocations:
        sim.peers[pid].store.delete(cid)
    return cid


def delete_all_data_leaves(sim, data, cfg):
    return [delete_data_leaf(sim, data, cfg, i) for i in range(len(chunk(data, cfg)))]
