"""Background file-health monitoring and preventive repair.

The peers allocated the parity-DAG root pins of a file act as its monitor
nodes. They periodically sample block presence; when the observed missing
fraction crosses the criticality threshold, exactly one collaborative
repair is triggered (a per-file lease suppresses duplicates). When a
monitor dies, the root re-pin path designates its replacement and the
health view carries over.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from .blocks import BlockId
from .errors import AbortedIntermediateNode, DataLost, MetadataMissing, NotPinned, PartialFailure
from .repair import (
    ClusterSource,
    RepairView,
    SimRepairEnv,
    collaborative_repair,
    fetch_metadata,
)
from .paritydag import parity_leaf_ids

DEFAULT_CHECK_INTERVAL = 60
DEFAULT_SAMPLE_FRACTION = 0.25
DEFAULT_THRESHOLD = 0.1


@dataclass
class MonitorAssignment:
    file: BlockId
    monitors: list[bytes]
    check_interval: int
    sample_fraction: float


@dataclass
class FileHealthView:
    observed_missing: list[int] = field(default_factory=list)
    last_check: int | None = None
    criticality: float = 0.0
    # named in the health model but not acted on by any rule yet
    failed_regions: dict = field(default_factory=dict)
    ticks_between_failures: list[int] = field(default_factory=list)


class MonitorService:
    """Drives monitoring for files on one cluster."""

    def __init__(
        self,
        cluster,
        check_interval: int = DEFAULT_CHECK_INTERVAL,
        sample_fraction: float = DEFAULT_SAMPLE_FRACTION,
        threshold: float = DEFAULT_THRESHOLD,
        repair_depth: int | None = None,
        peer_budget: int = 3,
        seed: int = 0,
    ):
        self.cluster = cluster
        self.check_interval = check_interval
        self.sample_fraction = sample_fraction
        self.threshold = threshold
        self.repair_depth = repair_depth
        self.peer_budget = peer_budget
        self.seed = seed
        self.assignments: dict[BlockId, MonitorAssignment] = {}
        self.views: dict[BlockId, FileHealthView] = {}
        self.repairs: list[tuple[int, BlockId, int, int]] = []
        self.data_loss_events: list[tuple[int, BlockId]] = []

    # ----------------------------------------------------------- lifecycle

    def _root_allocatees(self, meta) -> list[bytes]:
        monitors: list[bytes] = []
        for _, root in meta.edag_roots:
            entry = self.cluster.pinset.get(root)
            if entry is None:
                continue
            for pid in entry.allocations:
                if pid not in monitors:
                    monitors.append(pid)
        return monitors

    def start_monitoring(self, meta_id: BlockId) -> MonitorAssignment:
        """Idempotent; monitors are the allocatees of the strand-root pins."""
        if meta_id in self.assignments:
            return self.assignments[meta_id]
        view = RepairView(ClusterSource(self.cluster))
        meta = fetch_metadata(view, meta_id)
        monitors = self._root_allocatees(meta)
        if not monitors:
            raise NotPinned(f"strand roots of {meta_id.hex()[:12]} are unallocated")
        assignment = MonitorAssignment(
            file=meta_id,
            monitors=monitors,
            check_interval=self.check_interval,
            sample_fraction=self.sample_fraction,
        )
        self.assignments[meta_id] = assignment
        self.views[meta_id] = FileHealthView()
        self.cluster.log("monitor_start", file=meta_id.hex(), monitors=len(monitors))
        return assignment

    def refresh_monitors(self, meta_id: BlockId) -> None:
        """Keep the monitor set equal to the current strand-root allocations."""
        assignment = self.assignments.get(meta_id)
        if assignment is None:
            return
        view = RepairView(ClusterSource(self.cluster))
        meta = fetch_metadata(view, meta_id)
        assignment.monitors = self._root_allocatees(meta)

    def handover_on_monitor_failure(self, dead_monitor: bytes) -> None:
        """After the root re-pin, the new allocatee takes over; views persist."""
        for meta_id, assignment in self.assignments.items():
            if dead_monitor in assignment.monitors:
                self.refresh_monitors(meta_id)
                self.cluster.log(
                    "monitor_handover",
                    file=meta_id.hex(),
                    monitors=len(assignment.monitors),
                )

    # ------------------------------------------------------------ checking

    def block_inventory(self, meta_id: BlockId) -> list[tuple[int, BlockId | None]]:
        """Every leaf and parity position with its expected id (None when the
        structure above it is gone)."""
        view = RepairView(ClusterSource(self.cluster))
        meta = fetch_metadata(view, meta_id)
        out: list[tuple[int, BlockId | None]] = []
        from .blocks import walk_dag
        from .errors import RootMissing

        try:
            report = walk_dag(meta.file_root, view, leaf_lengths=meta.leaf_lengths())
            for slot in report.leaves:
                out.append((slot.index, slot.block_id))
        except RootMissing:
            out.extend((i, None) for i in range(meta.n))
        for c in meta.params.classes:
            try:
                preport = parity_leaf_ids(meta, c, view)
            except Exception:
                preport = None
            for ordinal in range(meta.n):
                pos = meta.n + int(c) * meta.n + ordinal
                slot_id = None
                if preport is not None and ordinal < len(preport.leaves):
                    slot_id = preport.leaves[ordinal].block_id
                out.append((pos, slot_id))
        return out

    def presence_check(self, meta_id: BlockId) -> FileHealthView:
        """Sample block presence; criticality is the missing fraction of the
        sampled scope."""
        assignment = self.assignments[meta_id]
        view = self.views[meta_id]
        now = self.cluster.clock.now
        inventory = self.block_inventory(meta_id)
        rng = random.Random(f"{self.seed}:{meta_id.digest.hex()}:{now}")
        k = max(1, round(assignment.sample_fraction * len(inventory)))
        sample = inventory if k >= len(inventory) else rng.sample(inventory, k)
        missing = [
            pos
            for pos, block_id in sample
            if block_id is None or not self.cluster.has_live(block_id)
        ]
        view.observed_missing = sorted(missing)
        view.criticality = min(len(missing) / len(sample), 1.0) if sample else 0.0
        view.last_check = now
        self.cluster.log(
            "presence_check",
            file=meta_id.hex(),
            criticality=round(view.criticality, 4),
            missing=len(missing),
        )
        return view

    def maybe_trigger_repair(self, meta_id: BlockId, monitor: bytes | None = None):
        """One collaborative repair when criticality crosses the threshold;
        suppressed while another repair for the file is in flight."""
        view = self.views.get(meta_id)
        assignment = self.assignments.get(meta_id)
        if view is None or assignment is None or view.last_check is None:
            return None
        now = self.cluster.clock.now
        if now - view.last_check > assignment.check_interval:
            return None  # stale view
        if view.criticality < self.threshold:
            return None
        owner = monitor or b"monitor"
        if not self.cluster.acquire_repair_lease(meta_id, owner):
            return None
        try:
            env = SimRepairEnv(self.cluster)
            try:
                outcome = collaborative_repair(
                    env,
                    meta_id,
                    peer_budget=self.peer_budget,
                    depth=self.repair_depth,
                    include_parities=True,
                    upload_recovery=True,
                )
            except PartialFailure as exc:
                outcome = exc.outcome
                for _ in exc.positions:
                    self.data_loss_events.append((now, meta_id))
            except (AbortedIntermediateNode, MetadataMissing) as exc:
                # the file's structure has no live replica: record and move on
                self.data_loss_events.append((now, meta_id))
                self.cluster.log("repair_aborted", file=meta_id.hex(), reason=str(exc))
                return None
            self.repairs.append(
                (now, meta_id, len(outcome.recovered), len(outcome.failed))
            )
            view.observed_missing = []
            view.criticality = 0.0
            return outcome
        except DataLost:
            self.data_loss_events.append((now, meta_id))
            raise
        finally:
            self.cluster.release_repair_lease(meta_id, owner)

    # ---------------------------------------------------------------- loop

    def tick(self) -> None:
        """Run due checks; call after the cluster's own tick."""
        now = self.cluster.clock.now
        for meta_id, assignment in self.assignments.items():
            self.refresh_monitors(meta_id)
            alive = [m for m in assignment.monitors if self.cluster.peers[m].alive]
            if not alive:
                continue
            view = self.views[meta_id]
            if view.last_check is None or now - view.last_check >= assignment.check_interval:
                self.presence_check(meta_id)
                self.maybe_trigger_repair(meta_id, monitor=alive[0])
