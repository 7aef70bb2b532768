"""Deterministic multi-peer cluster simulation.

Peers hold local block stores; one authoritative pinset records which peers
store each block. Peers gossip TTL-stamped metrics off a virtual clock;
failure detection flags peers whose metrics have all expired, and the alive
peer closest by XOR distance re-pins the affected blocks. A centralized
discovery registry with periodic health checks backs collaborative repair.
Everything is driven by explicit ticks and a seeded RNG for reproducibility.
"""

from __future__ import annotations

import json
import random
import threading
from dataclasses import dataclass, field

from .blocks import BlockId, MemoryBlockStore
from .errors import InsufficientPeers, IntegrityMismatch, NotFound

DEFAULT_TTLS = {"freespace": 30}
DEFAULT_HEALTH_INTERVAL = 30


class SimClock:
    """Monotonic tick counter; all TTL/interval logic reads this only."""

    def __init__(self, now: int = 0):
        self.now = now

    def advance(self, ticks: int = 1) -> int:
        if ticks < 0:
            raise ValueError("clock cannot go backwards")
        self.now += ticks
        return self.now


@dataclass
class PeerMetric:
    name: str
    value: object
    expiry: int
    weight: float = 1.0
    partitionable: bool = False

    def expired(self, now: int) -> bool:
        return self.expiry <= now


@dataclass
class Peer:
    peer_id: bytes
    store: MemoryBlockStore
    capacity: int
    tags: dict[str, str] = field(default_factory=dict)
    alive: bool = True
    used_bytes: int = 0
    pin_count: int = 0

    @property
    def freespace(self) -> int:
        return max(self.capacity - self.used_bytes, 0)

    def hex(self) -> str:
        return self.peer_id.hex()[:16]


@dataclass
class PinEntry:
    block_id: BlockId
    size: int
    rf_min: int
    rf_max: int
    allocations: list[bytes] = field(default_factory=list)


def xor_distance(a: bytes, b: bytes) -> int:
    return int.from_bytes(bytes(x ^ y for x, y in zip(a, b)), "big")


class DiscoveryRegistry:
    """Centralized peer-address registry with interval health checks."""

    def __init__(self, health_check, health_interval: int = DEFAULT_HEALTH_INTERVAL):
        self._entries: dict[bytes, str] = {}
        self._healthy: dict[bytes, bool] = {}
        self._health_check = health_check
        self.health_interval = health_interval
        self.last_check_tick: int | None = None

    def register(self, peer_id: bytes, address: str) -> None:
        self._entries[peer_id] = address
        self._healthy[peer_id] = True

    def list_peers(self) -> list[tuple[bytes, str]]:
        return [
            (pid, addr)
            for pid, addr in sorted(self._entries.items())
            if self._healthy.get(pid, False)
        ]

    def health_tick(self, now: int) -> None:
        for pid in list(self._entries):
            self._healthy[pid] = bool(self._health_check(pid))
        self.last_check_tick = now


class ClusterSim:
    """The simulated cluster: peers, pinset, metrics, failures, discovery."""

    def __init__(
        self,
        n_peers: int = 20,
        capacity: int = 256 * 1024 * 1024,
        seed: int = 0,
        tags: list[dict[str, str]] | None = None,
        ttls: dict[str, int] | None = None,
        health_interval: int = DEFAULT_HEALTH_INTERVAL,
        capacities: list[int] | None = None,
    ):
        self.clock = SimClock()
        self.rng = random.Random(seed)
        self.seed = seed
        self.ttls = dict(DEFAULT_TTLS)
        if ttls:
            self.ttls.update(ttls)
        self.peers: dict[bytes, Peer] = {}
        self.pinset: dict[BlockId, PinEntry] = {}
        self.metrics: dict[bytes, dict[str, PeerMetric]] = {}
        self.events: list[dict] = []
        self._lock = threading.RLock()
        self._handled_suspects: set[bytes] = set()
        self.repair_leases: dict[BlockId, bytes] = {}
        self.discovery = DiscoveryRegistry(
            health_check=lambda pid: pid in self.peers and self.peers[pid].alive,
            health_interval=health_interval,
        )
        for i in range(n_peers):
            peer_tags = tags[i] if tags and i < len(tags) else {}
            cap = capacities[i] if capacities and i < len(capacities) else capacity
            self.add_peer(capacity=cap, tags=peer_tags)

    # ------------------------------------------------------------- peers

    def add_peer(self, capacity: int, tags: dict[str, str] | None = None) -> Peer:
        peer_id = self.rng.randbytes(32)
        peer = Peer(peer_id=peer_id, store=MemoryBlockStore(), capacity=capacity, tags=tags or {})
        self.peers[peer_id] = peer
        self.metrics[peer_id] = {}
        self.publish_metrics(peer)
        self.discovery.register(peer_id, f"sim://{peer.hex()}")
        return peer

    def alive_peers(self) -> list[Peer]:
        return [p for p in self.peers.values() if p.alive]

    def log(self, event: str, **payload) -> None:
        self.events.append({"tick": self.clock.now, "event": event, **payload})

    def dump_events(self, path: str) -> None:
        with open(path, "w") as fh:
            for rec in self.events:
                fh.write(json.dumps(rec) + "\n")

    # ------------------------------------------------------------ metrics

    def metric_names(self, peer: Peer) -> list[str]:
        return ["freespace", "reposize", "numpin", "pinqueue"] + [
            f"tag:{k}" for k in sorted(peer.tags)
        ]

    def _ttl(self, name: str) -> int:
        return self.ttls.get(name, self.ttls.get("freespace", 30))

    def publish_metrics(self, peer: Peer) -> None:
        now = self.clock.now
        values = {
            "freespace": peer.freespace,
            "reposize": peer.used_bytes,
            "numpin": peer.pin_count,
            "pinqueue": 0,
        }
        for name in self.metric_names(peer):
            partitionable = name.startswith("tag:")
            value = peer.tags[name[4:]] if partitionable else values[name]
            self.metrics[peer.peer_id][name] = PeerMetric(
                name=name,
                value=value,
                expiry=now + self._ttl(name),
                partitionable=partitionable,
            )

    def metrics_tick(self) -> list[tuple[bytes, str]]:
        """Re-publish metrics whose remaining TTL is at most half the smallest TTL."""
        published = []
        now = self.clock.now
        for peer in self.alive_peers():
            names = self.metric_names(peer)
            half_smallest = min(self._ttl(n) for n in names) / 2
            stale = [
                n
                for n in names
                if (m := self.metrics[peer.peer_id].get(n)) is None
                or m.expiry - now <= half_smallest
            ]
            if stale:
                self.publish_metrics(peer)
                published.extend((peer.peer_id, n) for n in stale)
        return published

    def live_metric(self, peer_id: bytes, name: str) -> PeerMetric | None:
        metric = self.metrics.get(peer_id, {}).get(name)
        if metric is None or metric.expired(self.clock.now):
            return None
        return metric

    # --------------------------------------------------------- allocation

    def _candidate_order(self, block_id: BlockId, exclude: set[bytes]) -> list[bytes]:
        """Preference order: partition by partitionable tag metrics round-robin,
        then freespace descending within each partition."""
        now = self.clock.now
        candidates = []
        for peer in self.alive_peers():
            if peer.peer_id in exclude:
                continue
            free = self.live_metric(peer.peer_id, "freespace")
            if free is None:
                continue
            part_key = tuple(
                (m.name, str(m.value))
                for m in sorted(
                    self.metrics[peer.peer_id].values(), key=lambda m: m.name
                )
                if m.partitionable and not m.expired(now)
            )
            candidates.append((part_key, -int(free.value), peer.peer_id.hex(), peer.peer_id))

        partitions: dict[tuple, list[bytes]] = {}
        for part_key, neg_free, hexid, pid in sorted(candidates):
            partitions.setdefault(part_key, []).append(pid)

        ordered: list[bytes] = []
        buckets = [partitions[k] for k in sorted(partitions)]
        while any(buckets):
            for bucket in buckets:
                if bucket:
                    ordered.append(bucket.pop(0))
        return ordered

    def allocate(
        self,
        block_id: BlockId,
        rf_min: int,
        rf_max: int,
        overrides: list[bytes] | None = None,
    ) -> list[bytes]:
        if overrides is not None:
            return list(overrides)
        if rf_min > rf_max:
            raise ValueError("rf_min > rf_max")
        kept = []
        entry = self.pinset.get(block_id)
        if entry is not None:
            kept = [pid for pid in entry.allocations if self.peers[pid].alive]
        order = self._candidate_order(block_id, exclude=set(kept))
        chosen = kept + order
        if len(chosen) < rf_min:
            raise InsufficientPeers(
                f"need {rf_min} peers for {block_id!r}, only {len(chosen)} available"
            )
        return chosen[:rf_max]

    # --------------------------------------------------------------- pins

    def _copy_to_peer(self, peer: Peer, block_id: BlockId, data: bytes) -> None:
        if not peer.store.has(block_id):
            peer.store.put(block_id, data)
            peer.used_bytes += len(data)
            self.publish_metrics(peer)

    def pin(
        self,
        block_id: BlockId,
        rf_min: int,
        rf_max: int,
        data: bytes | None = None,
        overrides: list[bytes] | None = None,
    ) -> PinEntry:
        """Copy the block to every allocated peer and record it in the pinset."""
        if data is None:
            data = self.fetch_from_any(block_id)
        with self._lock:
            targets = self.allocate(block_id, rf_min, rf_max, overrides=overrides)
            placed = []
            for pid in targets:
                peer = self.peers[pid]
                if not peer.alive:
                    continue
                if peer.used_bytes + len(data) > peer.capacity and not peer.store.has(block_id):
                    continue
                self._copy_to_peer(peer, block_id, data)
                placed.append(pid)
            if len(placed) < rf_min:
                raise InsufficientPeers(
                    f"placed {len(placed)} replicas of {block_id!r}, need {rf_min}"
                )
            existing = self.pinset.get(block_id)
            for pid in placed:
                if existing is None or pid not in existing.allocations:
                    self.peers[pid].pin_count += 1
            if existing is not None:
                # the same bytes pinned in a second role (content dedup):
                # merge allocations and keep the stronger replication bounds
                merged = existing.allocations + [p for p in placed if p not in existing.allocations]
                entry = PinEntry(
                    block_id=block_id,
                    size=len(data),
                    rf_min=max(existing.rf_min, rf_min),
                    rf_max=max(existing.rf_max, rf_max),
                    allocations=merged,
                )
            else:
                entry = PinEntry(
                    block_id=block_id,
                    size=len(data),
                    rf_min=rf_min,
                    rf_max=rf_max,
                    allocations=placed,
                )
            self.pinset[block_id] = entry
            self.log("pin", id=block_id.hex(), rf=f"{rf_min}..{rf_max}", peers=len(placed))
            return entry

    def unpin(self, block_id: BlockId) -> None:
        with self._lock:
            entry = self.pinset.pop(block_id, None)
            if entry is not None:
                for pid in entry.allocations:
                    if pid in self.peers:
                        self.peers[pid].pin_count = max(self.peers[pid].pin_count - 1, 0)
            self.log("unpin", id=block_id.hex())

    def gc_tick(self) -> int:
        """Drop stored blocks that no pin allocates to their peer."""
        removed = 0
        with self._lock:
            keep: dict[bytes, set[bytes]] = {pid: set() for pid in self.peers}
            for entry in self.pinset.values():
                for pid in entry.allocations:
                    keep[pid].add(entry.block_id.digest)
            for pid, peer in self.peers.items():
                for digest in peer.store.digests() - keep[pid]:
                    bid = BlockId(digest=digest)
                    size = len(peer.store.get(bid)) if peer.alive else 0
                    peer.store.delete(bid)
                    peer.used_bytes = max(peer.used_bytes - size, 0)
                    removed += 1
        return removed

    # ------------------------------------------------------------ fetches

    def fetch_from_any(self, block_id: BlockId) -> bytes:
        """Bytes from any live holder, skipping corrupted replicas."""
        entry = self.pinset.get(block_id)
        holders = entry.allocations if entry else []
        corrupted = False
        seen = set()
        for pid in list(holders) + [p.peer_id for p in self.alive_peers()]:
            if pid in seen:
                continue
            seen.add(pid)
            peer = self.peers[pid]
            if not (peer.alive and peer.store.has(block_id)):
                continue
            try:
                return peer.store.get(block_id)
            except IntegrityMismatch:
                corrupted = True
        if corrupted:
            raise IntegrityMismatch(f"every live replica of {block_id!r} is corrupt")
        raise NotFound(repr(block_id))

    def has_live(self, block_id: BlockId) -> bool:
        try:
            self.fetch_from_any(block_id)
            return True
        except NotFound:
            return False

    # ----------------------------------------------------------- failures

    def fail_peers(
        self,
        fraction: float | None = None,
        ids: list[bytes] | None = None,
        rng: random.Random | None = None,
    ) -> list[bytes]:
        """Kill peers: each alive peer independently with probability `fraction`,
        or exactly the given ids. Stores are kept for later healing."""
        victims: list[bytes] = []
        if ids is not None:
            victims = list(ids)
        elif fraction is not None:
            if not 0 <= fraction <= 1:
                raise ValueError("fraction must be in [0, 1]")
            r = rng or self.rng
            victims = [p.peer_id for p in self.alive_peers() if r.random() < fraction]
        for pid in victims:
            self.peers[pid].alive = False
            self.log("peer_failed", peer=self.peers[pid].hex())
        return victims

    def heal_peer(self, peer_id: bytes) -> None:
        peer = self.peers[peer_id]
        peer.alive = True
        self._handled_suspects.discard(peer_id)
        self.publish_metrics(peer)
        self.discovery.register(peer_id, f"sim://{peer.hex()}")
        self.log("peer_healed", peer=peer.hex())

    def detect_failures(self) -> list[tuple[bytes, list[BlockId]]]:
        """Suspect peers whose metrics have all expired; pure in the clock."""
        now = self.clock.now
        out = []
        for pid, metrics in self.metrics.items():
            if pid in self._handled_suspects:
                continue
            if not metrics or not all(m.expired(now) for m in metrics.values()):
                continue
            affected = [
                entry.block_id
                for entry in self.pinset.values()
                if pid in entry.allocations
            ]
            out.append((pid, affected))
        return out

    def repin_on_peer_failure(self, suspect: bytes) -> list[tuple[BlockId, bytes | None]]:
        """The closest alive peer re-pins every affected block; per-block DataLost
        when no live replica of the bytes remains anywhere."""
        alive = self.alive_peers()
        results: list[tuple[BlockId, bytes | None]] = []
        if not alive:
            return results
        initiator = min(alive, key=lambda p: xor_distance(p.peer_id, suspect))
        self._handled_suspects.add(suspect)
        self.log("repin_initiated", suspect=self.peers[suspect].hex(), initiator=initiator.hex())
        for entry in list(self.pinset.values()):
            if suspect not in entry.allocations:
                continue
            live_alloc = [pid for pid in entry.allocations if self.peers[pid].alive]
            if len(live_alloc) >= entry.rf_min:
                entry.allocations = live_alloc
                continue
            try:
                data = self.fetch_from_any(entry.block_id)
            except NotFound:
                self.log("data_lost", id=entry.block_id.hex())
                results.append((entry.block_id, None))
                continue
            try:
                targets = self.allocate(
                    entry.block_id, entry.rf_min, entry.rf_max, overrides=None
                )
            except InsufficientPeers:
                self.log("repin_blocked", id=entry.block_id.hex())
                results.append((entry.block_id, None))
                continue
            new_peer = None
            for pid in targets:
                if pid in live_alloc:
                    continue
                peer = self.peers[pid]
                if peer.used_bytes + entry.size > peer.capacity:
                    continue
                self._copy_to_peer(peer, entry.block_id, data)
                live_alloc.append(pid)
                peer.pin_count += 1
                new_peer = pid
                if len(live_alloc) >= entry.rf_min:
                    break
            entry.allocations = live_alloc
            self.log(
                "repin",
                id=entry.block_id.hex(),
                replicas=len(live_alloc),
                ok=len(live_alloc) >= entry.rf_min,
            )
            results.append((entry.block_id, new_peer))
        return results

    def pending_repins(self) -> list[BlockId]:
        out = []
        for entry in self.pinset.values():
            live = sum(1 for pid in entry.allocations if self.peers[pid].alive)
            if live < entry.rf_min:
                out.append(entry.block_id)
        return out

    # ---------------------------------------------------------- main loop

    def tick(self, auto_repin: bool = True) -> None:
        self.clock.advance(1)
        self.metrics_tick()
        if self.clock.now % self.discovery.health_interval == 0:
            self.discovery.health_tick(self.clock.now)
        if auto_repin:
            for suspect, _ in self.detect_failures():
                self.repin_on_peer_failure(suspect)

    def run_ticks(self, count: int, auto_repin: bool = True) -> None:
        for _ in range(count):
            self.tick(auto_repin=auto_repin)

    # ------------------------------------------------------ repair leases

    def acquire_repair_lease(self, meta_id: BlockId, owner: bytes) -> bool:
        with self._lock:
            holder = self.repair_leases.get(meta_id)
            if holder is not None and holder != owner:
                return False
            self.repair_leases[meta_id] = owner
            return True

    def release_repair_lease(self, meta_id: BlockId, owner: bytes) -> None:
        with self._lock:
            if self.repair_leases.get(meta_id) == owner:
                del self.repair_leases[meta_id]


def load_scenario(path: str) -> ClusterSim:
    """Build a cluster from a JSON scenario file.

    Keys: peers (int), capacity (bytes), seed, tags (list of per-peer maps),
    ttls (name -> ticks), health_interval, failure_schedule (list of
    {tick, fraction | ids}).
    """
    with open(path) as fh:
        cfg = json.load(fh)
    sim = ClusterSim(
        n_peers=cfg.get("peers", 20),
        capacity=cfg.get("capacity", 256 * 1024 * 1024),
        seed=cfg.get("seed", 0),
        tags=cfg.get("tags"),
        ttls=cfg.get("ttls"),
        health_interval=cfg.get("health_interval", DEFAULT_HEALTH_INTERVAL),
        capacities=cfg.get("capacities"),
    )
    sim.failure_schedule = cfg.get("failure_schedule", [])
    return sim


def apply_failure_schedule(sim: ClusterSim, upto_tick: int) -> None:
    """Fire any scheduled failures whose tick has arrived."""
    schedule = getattr(sim, "failure_schedule", [])
    remaining = []
    for item in schedule:
        if item.get("tick", 0) <= upto_tick:
            if "ids" in item:
                ids = [bytes.fromhex(h) for h in item["ids"]]
                sim.fail_peers(ids=ids)
            else:
                sim.fail_peers(fraction=item.get("fraction", 0.0))
        else:
            remaining.append(item)
    sim.failure_schedule = remaining
