"""Block repair: depth-limited strand recursion, full closure decode, and the
coordinator/worker collaborative protocol.

A missing data block is rebuilt as in_parity XOR out_parity on any of its
strand classes (tried in fixed H, RH, LH order). Missing parities are
recovered recursively from their strand neighbors; every recovered parity
consumes one unit of that class's depth budget, while fetches of blocks that
are still present are free. Depth 0 forbids repair outright. Unlimited depth
runs a closure decoder that finds everything reachable by the local rules.

Every repaired block must hash to its expected id before it is accepted.
"""

from __future__ import annotations

import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .blocks import BlockId, BlockKind, verify
from .errors import (
    AbortedIntermediateNode,
    DepthExhausted,
    IntegrityMismatch,
    MetadataMissing,
    NotFound,
    PartialFailure,
    RepairFailed,
    RootMissing,
    Unrecoverable,
)
from .lattice import (
    StrandClass,
    chains_for_class,
    xor,
    zero_block,
)
from .paritydag import FileMetadata, decode_metadata, parity_leaf_ids
from .blocks import walk_dag

TICKS_PER_FETCH = 1.0
TICKS_PER_XOR = 0.01


class RepairView:
    """Read view over a block source with a private cache and transfer counters.

    A block is never downloaded twice through the same view; repaired blocks
    enter the cache without counting as downloads.
    """

    def __init__(self, source, label: str = "local"):
        self.source = source
        self.label = label
        self.cache: dict[bytes, bytes] = {}
        self.blocks_downloaded = 0
        self.xor_ops = 0

    def fetch(self, block_id: BlockId) -> bytes:
        hit = self.cache.get(block_id.digest)
        if hit is not None:
            return hit
        data = self.source.get(block_id)
        self.cache[block_id.digest] = data
        self.blocks_downloaded += 1
        return data

    def has(self, block_id: BlockId) -> bool:
        return block_id.digest in self.cache or self.source.has(block_id)

    def add_repaired(self, block_id: BlockId, data: bytes) -> None:
        self.cache[block_id.digest] = data

    def count_xor(self, n: int = 1) -> None:
        self.xor_ops += n

    # BlockStore protocol so walk_dag can traverse through the view
    def get(self, block_id: BlockId) -> bytes:
        return self.fetch(block_id)

    @property
    def elapsed_ticks(self) -> float:
        return self.blocks_downloaded * TICKS_PER_FETCH + self.xor_ops * TICKS_PER_XOR


@dataclass
class LatticeIndex:
    """Precomputed strand geometry for one file."""

    n: int
    params: object
    chains: dict[StrandClass, list[list[int]]] = field(default_factory=dict)
    succ: dict[StrandClass, dict[int, int]] = field(default_factory=dict)
    pred: dict[StrandClass, dict[int, int]] = field(default_factory=dict)

    @classmethod
    def build(cls, n, params):
        idx = cls(n=n, params=params)
        for c in params.classes:
            chains = chains_for_class(c, n, params)
            idx.chains[c] = chains
            succ = {}
            pred = {}
            for chain in chains:
                for a, b in zip(chain, chain[1:]):
                    succ[a] = b
                    pred[b] = a
                if chain:
                    pred[chain[0]] = 0
                    succ[chain[-1]] = 0  # tail: successor past the end
            idx.succ[c] = succ
            idx.pred[c] = pred
        return idx

    def ordinal_to_pos(self, c: StrandClass) -> list[int]:
        return [pos for chain in self.chains[c] for pos in chain]


DATA_KEY = 0  # derivation key spaces
PAR_KEY = 1


class FileRepairer:
    """Repairs one file's blocks against a view of the cluster."""

    def __init__(self, meta: FileMetadata, view: RepairView):
        self.meta = meta
        self.view = view
        self.params = meta.params
        self.block_size = meta.block_size
        self.lengths = meta.leaf_lengths()
        self.index = LatticeIndex.build(meta.n, meta.params)

        try:
            report = walk_dag(meta.file_root, view, leaf_lengths=self.lengths)
        except RootMissing as exc:
            raise AbortedIntermediateNode(str(exc)) from exc
        if report.missing_nodes:
            raise AbortedIntermediateNode(
                f"{len(report.missing_nodes)} inner nodes of the file DAG have no live replica"
            )
        self.leaf_slots = report.leaves

        # parity leaf ids per (class, position); a class whose DAG structure is
        # unreachable is simply unusable for repair
        self.parity_ids: dict[tuple[int, int], BlockId] = {}
        self.parity_present: dict[tuple[int, int], bool] = {}
        self.usable_classes: list[StrandClass] = []
        for c in self.params.classes:
            try:
                preport = parity_leaf_ids(meta, c, view)
            except (NotFound, RootMissing, IntegrityMismatch, ValueError, KeyError):
                continue
            if preport.missing_nodes and all(s.block_id is None for s in preport.leaves):
                continue
            order = self.index.ordinal_to_pos(c)
            for ordinal, slot in enumerate(preport.leaves):
                if ordinal >= len(order):
                    break
                key = (int(c), order[ordinal])
                if slot.block_id is not None:
                    self.parity_ids[key] = slot.block_id
                self.parity_present[key] = slot.present
            self.usable_classes.append(c)

        self._closure = None
        self._fail_memo: set[tuple] = set()

    # ------------------------------------------------------------ helpers

    def missing_leaf_positions(self) -> list[int]:
        return [slot.index for slot in self.leaf_slots if not slot.present]

    def missing_parity_positions(self) -> list[tuple[StrandClass, int]]:
        out = []
        for c in self.params.classes:
            for pos in range(1, self.meta.n + 1):
                key = (int(c), pos)
                if key in self.parity_ids and not self.parity_present[key]:
                    if not self.view.has(self.parity_ids[key]):
                        out.append((c, pos))
        return out

    def _pad(self, data: bytes) -> bytes:
        if len(data) < self.block_size:
            return data + b"\x00" * (self.block_size - len(data))
        return data

    def _leaf_true_len(self, pos: int) -> int:
        return self.lengths[pos]

    def _fetch_data_padded(self, pos: int) -> bytes | None:
        slot = self.leaf_slots[pos]
        if slot.block_id is None:
            return None
        if self.view.has(slot.block_id):
            return self._pad(self.view.fetch(slot.block_id))
        return None

    def _fetch_parity(self, cls: StrandClass, pos: int) -> bytes | None:
        key = (int(cls), pos)
        block_id = self.parity_ids.get(key)
        if block_id is None:
            return None
        if self.view.has(block_id):
            return self.view.fetch(block_id)
        return None

    # -------------------------------------------------- depth-limited path

    def repair_block(self, pos: int, depth: int | None) -> bytes:
        """Reconstruct the data leaf at 0-based position pos; returns true bytes.

        Classes are tried in fixed order; the first one whose in/out parities
        can be obtained within the depth budget wins. The result must hash to
        the expected leaf id.
        """
        if depth is None:
            return self._repair_via_closure(pos)
        padded = self._repair_data_padded(pos, depth, in_progress=set(), attempt_memo=set())
        return self._accept_leaf(pos, padded)

    def _accept_leaf(self, pos: int, padded: bytes) -> bytes:
        slot = self.leaf_slots[pos]
        true = padded[: self._leaf_true_len(pos)]
        if slot.block_id is None or not verify(slot.block_id, true):
            raise Unrecoverable(f"leaf {pos}: reconstructed bytes fail the id check")
        self.view.add_repaired(slot.block_id, true)
        return true

    def _repair_data_padded(self, pos: int, depth: int, in_progress: set,
                            attempt_memo: set) -> bytes:
        present = self._fetch_data_padded(pos)
        if present is not None:
            return present
        if depth == 0:
            raise DepthExhausted(f"leaf {pos}: depth 0 forbids any parity fetch")
        key = (DATA_KEY, pos)
        if key in in_progress:
            exc = Unrecoverable(f"leaf {pos}: circular dependency")
            exc.from_guard = True
            raise exc
        if key in self._fail_memo:
            raise Unrecoverable(f"leaf {pos}: known unrecoverable")
        if key in attempt_memo:
            # failed earlier in this top-level attempt; a retry from another
            # branch could only differ through the recursion guard, so treat
            # the hit like a guard block and skip the re-exploration
            exc = Unrecoverable(f"leaf {pos}: already failed in this attempt")
            exc.from_guard = True
            raise exc
        in_progress = in_progress | {key}
        exhausted = False
        tainted = False
        lattice_pos = pos + 1
        for cls in self.usable_classes:
            budget = [depth]
            try:
                in_p = self._obtain_parity(cls, self.index.pred[cls].get(lattice_pos, 0),
                                           budget, in_progress, depth, attempt_memo)
                out_p = self._obtain_parity(cls, lattice_pos, budget, in_progress, depth,
                                            attempt_memo)
                candidate = xor(in_p, out_p)
                self.view.count_xor()
            except DepthExhausted as exc:
                exhausted = True
                tainted |= getattr(exc, "from_guard", False)
                continue
            except (Unrecoverable, NotFound, IntegrityMismatch) as exc:
                tainted |= getattr(exc, "from_guard", False)
                continue
            slot = self.leaf_slots[pos]
            true = candidate[: self._leaf_true_len(pos)]
            if slot.block_id is not None and verify(slot.block_id, true):
                self.view.add_repaired(slot.block_id, true)
                return self._pad(true)
            # wrong bytes: some upstream block was corrupt; try the next class
        # a failure that never hit the recursion guard replays identically
        # (nested attempts always start from fresh budgets): memoize it
        if not tainted:
            self._fail_memo.add(key)
        attempt_memo.add(key)
        exc = DepthExhausted if exhausted else Unrecoverable
        err = exc(f"leaf {pos}: no strand class succeeded")
        err.from_guard = tainted
        raise err

    def _obtain_parity(self, cls: StrandClass, pos: int, budget: list,
                       in_progress: set, depth: int, attempt_memo: set) -> bytes:
        """Bytes of the parity on the edge out of lattice position pos.

        pos 0 is the zero IV entering a strand head. Present parities are
        free; recovering a missing one consumes one unit of the class budget.
        """
        if pos == 0:
            return zero_block(self.block_size)
        present = self._fetch_parity(cls, pos)
        if present is not None:
            return present
        if budget[0] <= 0:
            raise DepthExhausted(f"parity ({cls.name},{pos}): class budget exhausted")
        key = (PAR_KEY, int(cls), pos)
        if key in in_progress:
            exc = Unrecoverable(f"parity ({cls.name},{pos}): circular dependency")
            exc.from_guard = True
            raise exc
        in_progress = in_progress | {key}

        candidate = None
        tainted = False
        # forward: P_out(pos) = d_pos XOR P_in(pos)
        try:
            d = self._neighbor_data_padded(pos, in_progress, depth, attempt_memo)
            in_p = self._obtain_parity(cls, self.index.pred[cls].get(pos, 0),
                                       budget, in_progress, depth, attempt_memo)
            candidate = xor(d, in_p)
            self.view.count_xor()
        except (DepthExhausted, Unrecoverable, NotFound, IntegrityMismatch) as exc:
            tainted |= getattr(exc, "from_guard", False)
            candidate = None
        if candidate is None:
            # backward: P_out(pos) = d_succ XOR P_out(succ)
            succ = self.index.succ[cls].get(pos, 0)
            if succ == 0:
                err = Unrecoverable(f"parity ({cls.name},{pos}): no usable neighbor")
                err.from_guard = tainted
                raise err
            try:
                d = self._neighbor_data_padded(succ, in_progress, depth, attempt_memo)
                out_p = self._obtain_parity(cls, succ, budget, in_progress, depth, attempt_memo)
                candidate = xor(d, out_p)
                self.view.count_xor()
            except (DepthExhausted, Unrecoverable, NotFound, IntegrityMismatch) as exc:
                tainted |= getattr(exc, "from_guard", False)
                err = type(exc)(f"parity ({cls.name},{pos}): both directions failed")
                err.from_guard = tainted
                raise err

        expected = self.parity_ids.get((int(cls), pos))
        if expected is not None and not verify(expected, candidate):
            raise IntegrityMismatch(f"parity ({cls.name},{pos}): reconstruction fails id check")
        if budget[0] <= 0:
            # deeper links in this chain spent the rest of the class budget
            raise DepthExhausted(f"parity ({cls.name},{pos}): class budget exhausted")
        budget[0] -= 1
        if expected is not None:
            self.view.add_repaired(expected, candidate)
        return candidate

    def _neighbor_data_padded(self, lattice_pos: int, in_progress: set, depth: int,
                              attempt_memo: set) -> bytes:
        """Data block needed inside a parity recovery; nested repairs get
        fresh per-class budgets but share the in-progress guard."""
        pos = lattice_pos - 1
        present = self._fetch_data_padded(pos)
        if present is not None:
            return present
        return self._repair_data_padded(pos, depth, in_progress, attempt_memo)

    # ------------------------------------------------------- closure path

    def _repair_via_closure(self, pos: int) -> bytes:
        closure = self._get_closure()
        if not closure.data_ok[pos + 1]:
            raise Unrecoverable(f"leaf {pos}: outside the recoverable closure")
        padded = closure.materialize((DATA_KEY, pos + 1))
        return self._accept_leaf(pos, padded)

    def repair_parity(self, cls: StrandClass, pos: int, depth: int | None) -> bytes:
        """Reconstruct a parity block (for preventive repair of redundancy)."""
        if depth is None:
            closure = self._get_closure()
            key = (PAR_KEY, int(cls), pos)
            if not closure.par_ok.get((int(cls), pos), False):
                raise Unrecoverable(f"parity ({cls.name},{pos}) outside the closure")
            candidate = closure.materialize(key)
        else:
            candidate = self._obtain_parity(cls, pos, [depth], set(), depth, set())
        expected = self.parity_ids.get((int(cls), pos))
        if expected is not None:
            if not verify(expected, candidate):
                raise IntegrityMismatch(f"parity ({cls.name},{pos}) fails id check")
            self.view.add_repaired(expected, candidate)
        return candidate

    def _get_closure(self):
        if self._closure is None:
            self._closure = ClosureDecoder(self)
        return self._closure


class ClosureDecoder:
    """Fixpoint of the local recovery rules, with lazy byte materialization.

    Availability closure: a data position is reachable when both adjacent
    parities of some class are; a parity is reachable forward from its
    strand predecessor or backward from its successor. Materialization
    replays the recorded derivations, fetching only blocks actually used.
    """

    def __init__(self, rep: FileRepairer):
        self.rep = rep
        n = rep.meta.n
        self.data_ok = [False] * (n + 1)
        self.par_ok: dict[tuple[int, int], bool] = {}
        self.deriv: dict[tuple, tuple] = {}
        self.bytes_cache: dict[tuple, bytes] = {}

        for pos in range(1, n + 1):
            slot = rep.leaf_slots[pos - 1]
            if slot.present and slot.block_id is not None:
                self.data_ok[pos] = True
                self.deriv[(DATA_KEY, pos)] = ("fetch_data", pos)
        for c in rep.usable_classes:
            for pos in range(1, n + 1):
                key = (int(c), pos)
                ok = rep.parity_present.get(key, False)
                self.par_ok[key] = ok
                if ok:
                    self.deriv[(PAR_KEY, int(c), pos)] = ("fetch_par", int(c), pos)
        self._solve()

    def _in_ok(self, c: StrandClass, pos: int) -> bool:
        prev = self.rep.index.pred[c].get(pos, 0)
        return True if prev == 0 else self.par_ok.get((int(c), prev), False)

    def _solve(self):
        rep = self.rep
        n = rep.meta.n
        changed = True
        while changed:
            changed = False
            for sweep in (range(1, n + 1), range(n, 0, -1)):
                for pos in sweep:
                    for c in rep.usable_classes:
                        ckey = (int(c), pos)
                        if not self.data_ok[pos]:
                            if self._in_ok(c, pos) and self.par_ok.get(ckey, False):
                                prev = rep.index.pred[c].get(pos, 0)
                                self.data_ok[pos] = True
                                self.deriv[(DATA_KEY, pos)] = (
                                    "xor",
                                    self._par_key_or_zero(c, prev),
                                    (PAR_KEY, int(c), pos),
                                )
                                changed = True
                        if not self.par_ok.get(ckey, False):
                            # forward from d_pos and the incoming parity
                            if self.data_ok[pos] and self._in_ok(c, pos):
                                prev = rep.index.pred[c].get(pos, 0)
                                self.par_ok[ckey] = True
                                self.deriv[(PAR_KEY, int(c), pos)] = (
                                    "xor",
                                    (DATA_KEY, pos),
                                    self._par_key_or_zero(c, prev),
                                )
                                changed = True
                            else:
                                succ = rep.index.succ[c].get(pos, 0)
                                if (
                                    succ
                                    and self.data_ok[succ]
                                    and self.par_ok.get((int(c), succ), False)
                                ):
                                    self.par_ok[ckey] = True
                                    self.deriv[(PAR_KEY, int(c), pos)] = (
                                        "xor",
                                        (DATA_KEY, succ),
                                        (PAR_KEY, int(c), succ),
                                    )
                                    changed = True

    def _par_key_or_zero(self, c: StrandClass, pos: int):
        return ("zero",) if pos == 0 else (PAR_KEY, int(c), pos)

    def materialize(self, key: tuple) -> bytes:
        """Compute the bytes for a derived key, fetching only what is used."""
        rep = self.rep
        stack = [key]
        while stack:
            top = stack[-1]
            if top in self.bytes_cache:
                stack.pop()
                continue
            if top == ("zero",):
                self.bytes_cache[top] = zero_block(rep.block_size)
                stack.pop()
                continue
            rule = self.deriv.get(top)
            if rule is None:
                raise Unrecoverable(f"no derivation for {top}")
            if rule[0] == "fetch_data":
                data = rep._fetch_data_padded(rule[1] - 1)
                if data is None:
                    raise NotFound(f"leaf {rule[1] - 1} vanished during materialization")
                self.bytes_cache[top] = data
                stack.pop()
            elif rule[0] == "fetch_par":
                data = rep._fetch_parity(StrandClass(rule[1]), rule[2])
                if data is None:
                    raise NotFound(f"parity {rule[1:]} vanished during materialization")
                self.bytes_cache[top] = data
                stack.pop()
            else:
                _, k1, k2 = rule
                missing = [k for k in (k1, k2) if k not in self.bytes_cache]
                if missing:
                    stack.extend(missing)
                    continue
                self.bytes_cache[top] = xor(self.bytes_cache[k1], self.bytes_cache[k2])
                rep.view.count_xor()
                stack.pop()
        return self.bytes_cache[key]


# --------------------------------------------------------------- download


def fetch_metadata(view: RepairView, meta_id: BlockId) -> FileMetadata:
    try:
        raw = view.fetch(meta_id)
    except NotFound:
        raise MetadataMissing(f"metadata block {meta_id.hex()} unavailable") from None
    return decode_metadata(raw)


def download(
    source,
    meta_id: BlockId,
    depth: int | None = None,
    upload_recovery: bool = False,
    pinner=None,
    label: str = "local",
) -> tuple[bytes, RepairView]:
    """Fetch a file, repairing missing leaves within the depth budget.

    Returns the reassembled bytes and the view (for transfer accounting).
    Raises RepairFailed with the unrecoverable positions, MetadataMissing,
    or AbortedIntermediateNode when the file DAG structure is gone.
    """
    view = RepairView(source, label=label)
    meta = fetch_metadata(view, meta_id)
    rep = FileRepairer(meta, view)

    pieces: list[bytes] = []
    failed: list[int] = []
    repaired: list[tuple[BlockId, bytes]] = []
    for slot in rep.leaf_slots:
        if slot.present and slot.block_id is not None:
            try:
                pieces.append(view.fetch(slot.block_id))
                continue
            except (NotFound, IntegrityMismatch):
                pass  # present copy went away or is corrupt: repair it
        if slot.block_id is None:
            failed.append(slot.index)
            pieces.append(b"")
            continue
        try:
            true = rep.repair_block(slot.index, depth)
        except (DepthExhausted, Unrecoverable, NotFound, IntegrityMismatch):
            failed.append(slot.index)
            pieces.append(b"")
            continue
        pieces.append(true)
        repaired.append((slot.block_id, true))

    if failed:
        raise RepairFailed(failed)
    if upload_recovery and pinner is not None:
        for block_id, data in repaired:
            pinner.pin(block_id, meta.direct_replication, meta.direct_replication, data=data)
    return b"".join(pieces), view


# ----------------------------------------------------- wire serialization


def encode_repair_request(meta_id: BlockId, positions: list[int], depth: int | None) -> bytes:
    parts = [
        struct.pack("<B", int(meta_id.kind)),
        meta_id.digest,
        struct.pack("<i", -1 if depth is None else depth),
        struct.pack("<I", len(positions)),
    ]
    parts.extend(struct.pack("<Q", p) for p in positions)
    return b"".join(parts)


def decode_repair_request(data: bytes) -> tuple[BlockId, list[int], int | None]:
    kind = data[0]
    digest = data[1:33]
    (depth,) = struct.unpack_from("<i", data, 33)
    (count,) = struct.unpack_from("<I", data, 37)
    positions = list(struct.unpack_from(f"<{count}Q", data, 41))
    return (
        BlockId(digest=digest, kind=BlockKind(kind)),
        positions,
        None if depth < 0 else depth,
    )


def encode_repair_response(items: list[tuple[int, bool, bytes | None, int]]) -> bytes:
    """items: (position, ok, bytes-or-None, blocks_downloaded while on it)."""
    parts = [struct.pack("<I", len(items))]
    for pos, ok, blob, downloaded in items:
        blob = blob or b""
        parts.append(struct.pack("<QBIQ", pos, 1 if ok else 0, len(blob), downloaded))
        parts.append(blob)
    return b"".join(parts)


def decode_repair_response(data: bytes) -> list[tuple[int, bool, bytes | None, int]]:
    (count,) = struct.unpack_from("<I", data, 0)
    off = 4
    items = []
    for _ in range(count):
        pos, ok, blen, downloaded = struct.unpack_from("<QBIQ", data, off)
        off += struct.calcsize("<QBIQ")
        blob = data[off : off + blen]
        off += blen
        items.append((pos, bool(ok), blob if ok else None, downloaded))
    return items


# -------------------------------------------------------- collaborative


@dataclass
class RepairPlan:
    missing_leaves: list[int]
    assignments: dict[bytes, list[int]]
    coordinator: bytes


@dataclass
class RepairOutcome:
    recovered: dict[int, BlockId] = field(default_factory=dict)
    failed: list[int] = field(default_factory=list)
    blocks_downloaded: dict[str, int] = field(default_factory=dict)
    elapsed_ticks: dict[str, float] = field(default_factory=dict)
    total_ticks: float = 0.0

    @property
    def total_blocks_downloaded(self) -> int:
        return sum(self.blocks_downloaded.values())


def partition_positions(positions: list[int], buckets: int) -> list[list[int]]:
    """Contiguous ranges balanced by ceil division; sizes differ by at most 1."""
    if buckets <= 0 or not positions:
        return []
    buckets = min(buckets, len(positions))
    base, extra = divmod(len(positions), buckets)
    out = []
    start = 0
    for k in range(buckets):
        size = base + (1 if k < extra else 0)
        out.append(positions[start : start + size])
        start += size
    return out


def worker_repair(
    source,
    meta_id: BlockId,
    positions: list[int],
    depth: int | None,
    label: str = "worker",
) -> tuple[list[tuple[int, bool, bytes | None, int]], RepairView]:
    """Run repairs for the assigned positions with a private per-worker cache.

    Positions 0..n-1 are data leaves; position n + c*n + (pos-1) is the
    parity of class c at lattice position pos. Failures are reported per
    position; the batch never aborts as a whole.
    """
    view = RepairView(source, label=label)
    meta = fetch_metadata(view, meta_id)
    rep = FileRepairer(meta, view)
    setup_cost = view.blocks_downloaded  # metadata + DAG walks, charged to the batch
    items = []
    for pos in positions:
        before = view.blocks_downloaded
        try:
            if pos < meta.n:
                data = rep.repair_block(pos, depth)
            else:
                c, lattice_pos = divmod(pos - meta.n, meta.n)
                data = rep.repair_parity(StrandClass(c), lattice_pos + 1, depth)
            items.append((pos, True, data, view.blocks_downloaded - before))
        except Exception:
            items.append((pos, False, None, view.blocks_downloaded - before))
    if items:
        pos0, ok0, data0, d0 = items[0]
        items[0] = (pos0, ok0, data0, d0 + setup_cost)
    return items, view


class RepairEnv:
    """What the coordinator needs from its surroundings: a block source,
    discovered worker peers, a way to dispatch wire-format requests to them,
    a pinner for recovered blocks, and an event sink for the async report."""

    def source(self):
        raise NotImplementedError

    def discovery_peers(self) -> list[tuple[bytes, str]]:
        raise NotImplementedError

    def dispatch(self, peer: tuple[bytes, str], request: bytes) -> bytes:
        raise NotImplementedError

    def pin(self, block_id: BlockId, rf: int, data: bytes) -> None:
        raise NotImplementedError

    def log(self, event: str, **payload) -> None:
        raise NotImplementedError


class SimRepairEnv(RepairEnv):
    """Runs workers in-process against the simulated cluster; requests and
    responses still round-trip through the wire encoding."""

    def __init__(self, cluster):
        self.cluster = cluster

    def source(self):
        return ClusterSource(self.cluster)

    def discovery_peers(self):
        return self.cluster.discovery.list_peers()

    def dispatch(self, peer, request: bytes) -> bytes:
        pid, _ = peer
        meta_id, positions, depth = decode_repair_request(request)
        items, view = worker_repair(
            ClusterSource(self.cluster), meta_id, positions, depth, label=pid.hex()[:8]
        )
        self._last_views[pid] = view
        return encode_repair_response(items)

    def pin(self, block_id, rf, data):
        self.cluster.pin(block_id, rf, rf, data=data)

    def log(self, event, **payload):
        self.cluster.log(event, **payload)

    # per-dispatch view bookkeeping for tick accounting
    _last_views: dict = None

    def reset_views(self):
        self._last_views = {}

    def worker_ticks(self, pid: bytes) -> float:
        view = (self._last_views or {}).get(pid)
        return view.elapsed_ticks if view else 0.0


def collaborative_repair(
    env,
    meta_id: BlockId,
    peer_budget: int,
    depth: int | None,
    include_parities: bool = False,
    upload_recovery: bool = True,
    coordinator_label: str = "coordinator",
) -> RepairOutcome:
    """Seven-step coordinator/worker flow.

    The coordinator restores missing non-leaf DAG nodes (replica-only; any
    failure aborts the whole operation), collects missing leaves, partitions
    them contiguously across discovered peers, joins the workers' responses,
    verifies and optionally re-pins the recovered blocks, and reports the
    final state asynchronously via the event log.
    """
    if isinstance(env, SimRepairEnv):
        env.reset_views()
    coord_view = RepairView(env.source(), label=coordinator_label)
    meta = fetch_metadata(coord_view, meta_id)
    rep = FileRepairer(meta, coord_view)  # raises AbortedIntermediateNode on DAG damage

    targets = rep.missing_leaf_positions()
    if include_parities:
        for c, pos in rep.missing_parity_positions():
            targets.append(meta.n + int(c) * meta.n + (pos - 1))
    outcome = RepairOutcome()
    if not targets:
        outcome.elapsed_ticks[coordinator_label] = coord_view.elapsed_ticks
        outcome.blocks_downloaded[coordinator_label] = coord_view.blocks_downloaded
        outcome.total_ticks = coord_view.elapsed_ticks
        env.log("repair_report", file=meta_id.hex(), recovered=0, failed=0)
        return outcome

    peers = env.discovery_peers()[: max(peer_budget, 0)]
    if not peers:
        # no peers discovered: degrade to a single local worker
        peers = [(b"local-worker", "local")]
    parts = partition_positions(targets, len(peers))
    plan = RepairPlan(
        missing_leaves=targets,
        assignments={pid: part for (pid, _), part in zip(peers, parts)},
        coordinator=b"coordinator",
    )
    peer_by_id = dict(peers)

    responses: dict[bytes, tuple[list, int]] = {}

    def run_worker(pid: bytes):
        assigned = plan.assignments.get(pid, [])
        request = encode_repair_request(meta_id, assigned, depth)
        if pid == b"local-worker":
            rid, rpos, rdepth = decode_repair_request(request)
            items, view = worker_repair(env.source(), rid, rpos, rdepth, label="local-worker")
            return pid, encode_repair_response(items), view.blocks_downloaded
        blob = env.dispatch((pid, peer_by_id[pid]), request)
        items = decode_repair_response(blob)
        return pid, blob, sum(d for _, _, _, d in items)

    with ThreadPoolExecutor(max_workers=max(len(plan.assignments), 1)) as pool:
        for pid, blob, downloaded in pool.map(run_worker, plan.assignments):
            responses[pid] = (decode_repair_response(blob), downloaded)

    repaired_blocks: list[tuple[BlockId, bytes]] = []
    worker_ticks: list[float] = []
    for pid in sorted(responses):
        items, downloaded = responses[pid]
        label = pid.hex()[:8] if pid != b"local-worker" else "local-worker"
        xors = sum(1 for _, ok, _, _ in items if ok)
        ticks = (
            env.worker_ticks(pid)
            if isinstance(env, SimRepairEnv)
            else downloaded * TICKS_PER_FETCH + xors * TICKS_PER_XOR
        )
        if pid == b"local-worker":
            ticks = downloaded * TICKS_PER_FETCH + xors * TICKS_PER_XOR
        outcome.blocks_downloaded[label] = downloaded
        outcome.elapsed_ticks[label] = ticks
        worker_ticks.append(ticks)
        for pos, ok, blob, _ in items:
            if not ok:
                outcome.failed.append(pos)
                continue
            if pos < meta.n:
                expected = rep.leaf_slots[pos].block_id
            else:
                c, lattice_pos = divmod(pos - meta.n, meta.n)
                expected = rep.parity_ids.get((c, lattice_pos + 1))
            if expected is None or not verify(expected, blob):
                outcome.failed.append(pos)
                continue
            outcome.recovered[pos] = expected
            repaired_blocks.append((expected, blob))

    if upload_recovery:
        for block_id, data in repaired_blocks:
            rf = meta.direct_replication if block_id.kind == BlockKind.DATA_LEAF else 1
            try:
                env.pin(block_id, rf, data)
            except Exception:
                pass

    outcome.blocks_downloaded[coordinator_label] = coord_view.blocks_downloaded
    outcome.elapsed_ticks[coordinator_label] = coord_view.elapsed_ticks
    outcome.total_ticks = coord_view.elapsed_ticks + (max(worker_ticks) if worker_ticks else 0.0)
    outcome.failed.sort()

    # step 7: the final state goes back asynchronously; we log and move on
    env.log(
        "repair_report",
        file=meta_id.hex(),
        recovered=len(outcome.recovered),
        failed=len(outcome.failed),
    )
    if outcome.failed:
        raise PartialFailure(outcome.failed, outcome=outcome)
    return outcome


class ClusterSource:
    """Adapter giving RepairView get/has over live peers of a ClusterSim."""

    def __init__(self, cluster):
        self.cluster = cluster

    def get(self, block_id: BlockId) -> bytes:
        return self.cluster.fetch_from_any(block_id)

    def has(self, block_id: BlockId) -> bool:
        return self.cluster.has_live(block_id)
