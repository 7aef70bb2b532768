"""Acceptance suite: one test per criterion, each printing a PASS line.

Criteria run at their stated tolerances on the stated profiles; keep this
module self-contained so `pytest tests/test_acceptance.py -v -s` gives the
per-criterion verdicts on a clean checkout.
"""

import itertools
import random
import time

import numpy as np
import pytest

from entstore.blocks import (
    BlockKind,
    DagConfig,
    MemoryBlockStore,
    build_dag,
    chunk,
    cid_of,
)
from entstore.cluster import ClusterSim
from entstore.connector import SimConnector
from entstore.errors import DepthExhausted, Unrecoverable
from entstore.lattice import CodingParams, StrandClass, chains_for_class, entangle
from entstore.monitor import MonitorService
from entstore.paritydag import (
    FileMetadata,
    OverheadQuery,
    build_parity_dags,
    encode_metadata,
    estimate_total_storage,
    metadata_id,
    rle_lengths,
)
from entstore.repair import (
    ClusterSource,
    FileRepairer,
    RepairView,
    download,
    fetch_metadata,
)
from entstore.service import upload_file

from oracle_gf2 import BatchClosure, build_equations, geometry, gf2_determines, var_index


def _report(name, detail=""):
    print(f"\n[PASS] {name}" + (f" -- {detail}" if detail else ""))


# --------------------------------------------------------------------------
# Criterion 1: codec round trip, 200 random files, full data erasure,
# single intact parity class, byte-identical recovery, < 2 minutes.
# --------------------------------------------------------------------------


def _store_upload(data, params, cfg):
    """Encode straight into a block store: leaves, DAGs, parities, metadata."""
    store = MemoryBlockStore()
    leaves = chunk(data, cfg)
    leaf_ids = [store.put_bytes(b, BlockKind.DATA_LEAF) for b in leaves]
    file_root, nodes = build_dag([(i, len(b)) for i, b in zip(leaf_ids, leaves)], cfg)
    for nid, node in nodes:
        store.put(nid, node.encode())
    pset = entangle(leaves, params)
    dags = build_parity_dags(pset, cfg)
    for dag in dags:
        for cid, blob in dag.leaf_blocks:
            store.put(cid, blob)
        for nid, raw in dag.nodes:
            store.put(nid, raw)
    meta = FileMetadata(
        file_root=file_root,
        n=len(leaves),
        block_size=pset.block_size,
        true_lengths=rle_lengths([len(b) for b in leaves]),
        params=params,
        edag_roots=[(d.cls, d.root) for d in dags],
    )
    meta_cid = metadata_id(meta)
    store.put(meta_cid, encode_metadata(meta))
    return store, meta_cid, leaf_ids, pset


def test_codec_round_trip_200_files():
    started = time.time()
    params = CodingParams(3, 5, 5)
    cfg = DagConfig(chunk_size=4096, fanout=16)
    rng = random.Random(2024)
    classes = params.classes
    for trial in range(200):
        size = rng.randrange(0, 4 * 1024 * 1024 + 1)
        data = rng.randbytes(size)
        store, meta_cid, leaf_ids, pset = _store_upload(data, params, cfg)
        keep_cls = classes[trial % len(classes)]

        keep_digests = {
            cid_of(pset.get(keep_cls, pos), BlockKind.PARITY_LEAF).digest
            for pos in range(1, pset.n + 1)
        }
        # delete every data leaf (except bytes the intact class shares)
        for leaf_id in leaf_ids:
            if leaf_id.digest not in keep_digests:
                store.delete(leaf_id)
        # delete the other two parity classes (same dedup rule)
        for cls in classes:
            if cls == keep_cls:
                continue
            for pos in range(1, pset.n + 1):
                pid = cid_of(pset.get(cls, pos), BlockKind.PARITY_LEAF)
                if pid.digest not in keep_digests:
                    store.delete(pid)

        out, _ = download(store, meta_cid, depth=None)
        assert out == data, f"trial {trial}: mismatch at size {size}"
    elapsed = time.time() - started
    assert elapsed < 120, f"took {elapsed:.0f}s, budget 120s"
    _report("codec round trip", f"200 files, {elapsed:.1f}s")


# --------------------------------------------------------------------------
# Criterion 2: oracle equivalence, AE(3, s=2, p=2), n <= 16, every erasure
# pattern of up to 3 blocks, exhaustive, zero mismatches, < 5 minutes.
# --------------------------------------------------------------------------


def _pattern_closure_results(n, params, patterns):
    """Closure-recoverability of every erased variable, batched."""
    solver = BatchClosure(n, params)
    P = len(patterns)
    data = np.ones((P, n + 1), dtype=bool)
    parity = np.ones((params.alpha, P, n + 1), dtype=bool)
    for row, erased in enumerate(patterns):
        for v in erased:
            if v < n:
                data[row, v + 1] = False
            else:
                c, pos = divmod(v - n, n)
                parity[c, row, pos + 1] = False
    solver.solve(data, parity)
    out = np.ones(P, dtype=bool)
    for row, erased in enumerate(patterns):
        for v in erased:
            if v < n:
                out[row] &= data[row, v + 1]
            else:
                c, pos = divmod(v - n, n)
                out[row] &= parity[c, row, pos + 1]
    return out


def test_oracle_equivalence_exhaustive():
    started = time.time()
    params = CodingParams(3, 2, 2)
    total = 0
    for n in range(1, 17):
        equations = build_equations(n, params)
        nvars = 4 * n
        patterns = []
        for k in (1, 2, 3):
            patterns.extend(itertools.combinations(range(nvars), k))
        closure_ok = _pattern_closure_results(n, params, patterns)
        for row, erased in enumerate(patterns):
            lin = gf2_determines(equations, set(erased))
            assert closure_ok[row] == lin, (
                f"n={n} erased={erased}: closure={bool(closure_ok[row])} gf2={lin}"
            )
        total += len(patterns)

    # bind the byte-level repair path to the closure verdicts on a sample
    n = 12
    cfg = DagConfig(chunk_size=256, fanout=4)
    rng = random.Random(99)
    data = rng.randbytes(256 * n)
    sample_rng = random.Random(7)
    nvars = 4 * n
    sampled = [tuple(sorted(sample_rng.sample(range(nvars), k)))
               for k in (1, 2, 3) for _ in range(40)]
    verdicts = _pattern_closure_results(n, params, sampled)
    equations = build_equations(n, params)
    checked = 0
    for erased, expect in zip(sampled, verdicts):
        assert gf2_determines(equations, set(erased)) == bool(expect)
        store, meta_cid, leaf_ids, pset = _store_upload(data, params, cfg)
        for v in erased:
            if v < n:
                store.delete(leaf_ids[v])
            else:
                c, pos = divmod(v - n, n)
                store.delete(cid_of(pset.get(StrandClass(c), pos + 1), BlockKind.PARITY_LEAF))
        view = RepairView(store)
        rep = FileRepairer(fetch_metadata(view, meta_cid), view)
        ok = True
        try:
            for v in erased:
                if v < n:
                    rep.repair_block(v, None)
                else:
                    c, pos = divmod(v - n, n)
                    rep.repair_parity(StrandClass(c), pos + 1, None)
        except Exception:
            ok = False
        assert ok == bool(expect), f"sampled {erased}: repair={ok} oracle={bool(expect)}"
        checked += 1
    elapsed = time.time() - started
    assert elapsed < 300, f"took {elapsed:.0f}s, budget 300s"
    _report("oracle equivalence", f"{total} exhaustive patterns + {checked} byte-level samples, {elapsed:.1f}s")


# --------------------------------------------------------------------------
# Criterion 3: the mapping-table storage estimate, exact integer match.
# --------------------------------------------------------------------------


def test_overhead_formula_exact():
    q = OverheadQuery(files=1000, peers=300, blocks_per_file=200, alpha=3, bytes_per_entry=40)
    assert estimate_total_storage(q) == 9_600_000_000
    _report("mapping-table overhead formula", "9,600,000,000 bytes exactly")


# --------------------------------------------------------------------------
# Criterion 4: recovery sweep, 20 peers, AE(3,5,5), 10 reps, fractions
# 0..0.9: AE mean >= R=3 mean everywhere, replication means within +-5 of
# (1 - f^R), runtime < 10 minutes.
# --------------------------------------------------------------------------


def test_recovery_sweep_orderings(tmp_path):
    from entstore.bench import BenchProfile, run_recovery_sweep

    started = time.time()
    profile = BenchProfile(seed=20)  # 2.5 MB file, 1 KiB chunks, 20 peers, 10 reps
    fractions = [round(0.1 * i, 1) for i in range(10)]
    raw, summary = run_recovery_sweep(profile, fractions, out_dir=str(tmp_path))
    import csv

    series = {}
    with open(summary) as fh:
        for row in csv.DictReader(fh):
            series.setdefault(row["strategy"], {})[float(row["failure_fraction"])] = float(
                row["mean_pct"]
            )
    ae = series["AE(3,5,5)"]
    worst_gap = 0.0
    for f in fractions:
        assert ae[f] >= series["R=3"][f], (
            f"AE {ae[f]:.2f} < R=3 {series['R=3'][f]:.2f} at fraction {f}"
        )
        for rf in (3, 5, 7):
            gap = abs(series[f"R={rf}"][f] - (1 - f**rf) * 100)
            worst_gap = max(worst_gap, gap)
            assert gap <= 5.0, f"R={rf} off closed form by {gap:.2f} points at f={f}"
    elapsed = time.time() - started
    assert elapsed < 600, f"took {elapsed:.0f}s, budget 600s"
    _report(
        "recovery sweep",
        f"AE >= R3 at all 10 fractions; worst closed-form gap {worst_gap:.2f} pts; {elapsed:.0f}s",
    )


# --------------------------------------------------------------------------
# Criterion 5: collaborative vs single repair at depths 5/7/10,
# fractions >= 0.2, 10 reps: four directional mean-level takeaways.
# --------------------------------------------------------------------------


def test_collaborative_vs_single_directions(tmp_path):
    from entstore.bench import BenchProfile, run_repair_comparison

    started = time.time()
    profile = BenchProfile(file_size=1_048_576, seed=20)
    depths = (5, 7, 10)
    fractions = (0.2, 0.35, 0.5)
    raw, summary = run_repair_comparison(
        profile, depths=depths, fractions=fractions, peers_collab=3, out_dir=str(tmp_path)
    )
    import csv

    cells = {}
    with open(summary) as fh:
        for row in csv.DictReader(fh):
            cells[(row["mode"], int(row["depth"]), float(row["fraction"]))] = row
    for depth in depths:
        for fraction in fractions:
            single = cells[("single", depth, fraction)]
            collab = cells[("collab", depth, fraction)]
            s_ticks = float(single["mean_total_time_ticks"])
            s_blocks = float(single["mean_total_blocks_downloaded"])
            assert float(collab["mean_total_time_ticks"]) < s_ticks
            assert float(collab["mean_avg_peer_time_ticks"]) < s_ticks
            assert float(collab["mean_avg_blocks_per_peer"]) < s_blocks
            assert float(collab["mean_total_blocks_downloaded"]) >= s_blocks
    elapsed = time.time() - started
    _report(
        "collaborative vs single repair",
        f"4 takeaways at depths {depths}, fractions {fractions}; {elapsed:.0f}s",
    )


# --------------------------------------------------------------------------
# Criterion 6: failure-detection liveness: a killed rf=2 holder is replaced
# within 2x TTL on 50 seeded schedules.
# --------------------------------------------------------------------------


def test_failure_detection_liveness():
    ttl = 30
    failures = 0
    for schedule in range(50):
        rng = random.Random(1000 + schedule)
        sim = ClusterSim(n_peers=8, seed=schedule, ttls={"freespace": ttl})
        data = rng.randbytes(500)
        block_id = cid_of(data)
        entry = sim.pin(block_id, 2, 2, data=data)
        sim.run_ticks(rng.randrange(0, 40))
        victim = rng.choice(entry.allocations)
        sim.fail_peers(ids=[victim])
        deadline = sim.clock.now + 2 * ttl
        restored_at = None
        while sim.clock.now < deadline:
            sim.tick()
            live = [
                p for p in sim.pinset[block_id].allocations
                if sim.peers[p].alive and sim.peers[p].store.has(block_id)
            ]
            if len(live) >= 2:
                restored_at = sim.clock.now
                break
        assert restored_at is not None, f"schedule {schedule}: not restored within 2xTTL"
    _report("failure-detection liveness", "50 schedules, all re-pinned within 2xTTL")


# --------------------------------------------------------------------------
# Criterion 7: monitor prevention under gradual parity erosion: repairs
# trigger before anything becomes unrecoverable, 20 seeds, zero data loss.
# --------------------------------------------------------------------------


def _availability_closure_complete(sim, result):
    """Every data and parity block of the file is inside the closure."""
    meta = result.meta
    params = meta.params
    n = meta.n
    view = RepairView(ClusterSource(sim))
    rep = FileRepairer(fetch_metadata(view, result.meta_id), view)
    solver = BatchClosure(n, params)
    data = np.zeros((1, n + 1), dtype=bool)
    parity = np.zeros((params.alpha, 1, n + 1), dtype=bool)
    for slot in rep.leaf_slots:
        data[0, slot.index + 1] = slot.present
    for (c, pos), bid in rep.parity_ids.items():
        parity[c, 0, pos] = sim.has_live(bid)
    solver.solve(data, parity)
    return bool(data[0, 1:].all() and parity[:, 0, 1:].all())


def test_monitor_prevention_gradual_erosion():
    started = time.time()
    cfg = DagConfig(chunk_size=1024, fanout=8)
    params = CodingParams(3, 5, 5)
    for seed in range(20):
        rng = random.Random(7000 + seed)
        sim = ClusterSim(n_peers=10, seed=seed, capacity=1 << 28)
        conn = SimConnector(sim)
        data = rng.randbytes(160 * 1024)  # 160 leaves
        result = upload_file(
            conn, data, params, cfg, internal_replication=3, metadata_replication=3
        )
        service = MonitorService(
            sim, check_interval=60, sample_fraction=1.0, threshold=0.1, seed=seed
        )
        service.start_monitoring(result.meta_id)

        view = RepairView(ClusterSource(sim))
        rep = FileRepairer(fetch_metadata(view, result.meta_id), view)
        parity_count = len(rep.parity_ids)
        per_round = max(1, round(0.01 * parity_count))

        for tick in range(1, 481):
            sim.tick()
            service.tick()
            if tick % 10 == 0:
                # erode 1% of parity blocks: they silently vanish everywhere
                fresh_view = RepairView(ClusterSource(sim))
                fresh = FileRepairer(fetch_metadata(fresh_view, result.meta_id), fresh_view)
                candidates = [
                    bid for bid in fresh.parity_ids.values() if sim.has_live(bid)
                ]
                for bid in rng.sample(candidates, min(per_round, len(candidates))):
                    for peer in sim.peers.values():
                        peer.store.delete(bid)
                assert _availability_closure_complete(sim, result), (
                    f"seed {seed}: file became unrecoverable at tick {tick}"
                )
        assert service.data_loss_events == [], f"seed {seed}: data loss recorded"
        assert len(service.repairs) >= 1, f"seed {seed}: no preventive repair ran"
        out, _ = download(ClusterSource(sim), result.meta_id, depth=None)
        assert out == data
    elapsed = time.time() - started
    _report("monitor prevention", f"20 seeds, zero data loss, {elapsed:.0f}s")


# --------------------------------------------------------------------------
# Criterion 8: depth semantics: a pattern needing exactly k recursive parity
# recoveries fails at depth k-1 and succeeds at depth k, for k in {1,2,3}.
# --------------------------------------------------------------------------


def test_depth_semantics_exact_budgets():
    params = CodingParams(3, 2, 2)
    cfg = DagConfig(chunk_size=128, fanout=4)
    n = 8
    rng = random.Random(404)
    data = rng.randbytes(128 * n)
    target = 7  # lattice position, hop 4 of its H chain
    pred_chain = [5, 3, 1]  # H predecessors, nearest first

    equations = build_equations(n, params)
    _, succ = geometry(n, params)

    for k in (1, 2, 3):
        store, meta_cid, leaf_ids, pset = _store_upload(data, params, cfg)
        erased_vars = set()

        def erase_parity(cls, pos):
            store.delete(cid_of(pset.get(cls, pos), BlockKind.PARITY_LEAF))
            erased_vars.add(var_index(n, "p", int(cls), pos))

        store.delete(leaf_ids[target - 1])
        erased_vars.add(var_index(n, "d", 0, target))
        # k missing links on the incoming H chain; the out-parity stays
        for pos in pred_chain[:k]:
            erase_parity(StrandClass.H, pos)
        # kill the other classes: erase their strands through the target
        for cls in (StrandClass.RH, StrandClass.LH):
            for chain in chains_for_class(cls, n, params):
                if target in chain:
                    for pos in chain:
                        erase_parity(cls, pos)

        assert gf2_determines(equations, erased_vars), f"k={k}: oracle says unsolvable"

        view = RepairView(store)
        rep = FileRepairer(fetch_metadata(view, meta_cid), view)
        with pytest.raises((DepthExhausted, Unrecoverable)):
            rep.repair_block(target - 1, k - 1)

        view2 = RepairView(store)
        rep2 = FileRepairer(fetch_metadata(view2, meta_cid), view2)
        recovered = rep2.repair_block(target - 1, k)
        assert recovered == chunk(data, cfg)[target - 1]
    _report("depth semantics", "k in {1,2,3}: fails at k-1, succeeds at k")
