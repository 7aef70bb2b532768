"""Cluster state persistence so one-shot CLI commands can share a simulation.

Block bytes live one file per block under <dir>/peers/<index>/<2-hex>/<hex>;
the pinset, peer liveness, and the clock go to a JSON sidecar. Peers are
recreated from the scenario seed, so ids are stable across invocations.
"""

from __future__ import annotations

import json
import os

from .blocks import BlockId
from .cluster import ClusterSim, PinEntry


def save_cluster(sim: ClusterSim, state_dir: str) -> None:
    os.makedirs(state_dir, exist_ok=True)
    peer_order = list(sim.peers)
    for idx, pid in enumerate(peer_order):
        peer = sim.peers[pid]
        peer_dir = os.path.join(state_dir, "peers", str(idx))
        os.makedirs(peer_dir, exist_ok=True)
        digests = peer.store.digests()
        for digest in digests:
            hexd = digest.hex()
            path = os.path.join(peer_dir, hexd[:2], hexd)
            if not os.path.exists(path):
                os.makedirs(os.path.dirname(path), exist_ok=True)
                with open(path, "wb") as fh:
                    fh.write(peer.store.get(BlockId(digest=digest)))
        hex_digests = {d.hex() for d in digests}
        for sub in os.listdir(peer_dir):
            subdir = os.path.join(peer_dir, sub)
            for name in os.listdir(subdir):
                if name not in hex_digests:
                    os.remove(os.path.join(subdir, name))
    meta = {
        "clock": sim.clock.now,
        "peers": [
            {"alive": sim.peers[pid].alive, "used": sim.peers[pid].used_bytes}
            for pid in peer_order
        ],
        "pins": [
            {
                "id": entry.block_id.hex(),
                "size": entry.size,
                "rf_min": entry.rf_min,
                "rf_max": entry.rf_max,
                "allocations": [peer_order.index(p) for p in entry.allocations],
            }
            for entry in sim.pinset.values()
        ],
    }
    with open(os.path.join(state_dir, "state.json"), "w") as fh:
        json.dump(meta, fh)


def load_cluster(sim: ClusterSim, state_dir: str) -> ClusterSim:
    """Overlay persisted state onto a freshly built (same-seed) cluster."""
    state_path = os.path.join(state_dir, "state.json")
    if not os.path.exists(state_path):
        return sim
    with open(state_path) as fh:
        meta = json.load(fh)
    peer_order = list(sim.peers)
    sim.clock.now = meta.get("clock", 0)
    for idx, info in enumerate(meta.get("peers", [])):
        if idx >= len(peer_order):
            break
        peer = sim.peers[peer_order[idx]]
        peer.alive = info["alive"]
        peer.used_bytes = info["used"]
        peer_dir = os.path.join(state_dir, "peers", str(idx))
        if os.path.isdir(peer_dir):
            for sub in os.listdir(peer_dir):
                subdir = os.path.join(peer_dir, sub)
                for name in os.listdir(subdir):
                    with open(os.path.join(subdir, name), "rb") as fh:
                        data = fh.read()
                    digest = bytes.fromhex(name)
                    peer.store.put(BlockId(digest=digest), data)
    for pin in meta.get("pins", []):
        block_id = BlockId.from_hex(pin["id"])
        sim.pinset[block_id] = PinEntry(
            block_id=block_id,
            size=pin["size"],
            rf_min=pin["rf_min"],
            rf_max=pin["rf_max"],
            allocations=[peer_order[i] for i in pin["allocations"]],
        )
    for pid in peer_order:
        sim.publish_metrics(sim.peers[pid])
    return sim
