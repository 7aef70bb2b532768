"""Desk-scale experiment harness: recovery-vs-failure sweeps and
single-vs-collaborative repair comparisons, emitted as CSV.

Time is counted in simulated ticks (1.0 per block transfer, 0.01 per XOR);
wall-clock numbers are environment-bound and deliberately not reproduced.
Every run is seeded: identical seeds give byte-identical CSVs. Failure draws
are shared across strategies at the same (fraction, repetition) so the
comparison is paired.
"""

from __future__ import annotations

import csv
import os
import random
import statistics
from dataclasses import dataclass, field

from .blocks import BlockKind, DagConfig, chunk, cid_of
from .cluster import ClusterSim
from .connector import SimConnector
from .errors import (
    AbortedIntermediateNode,
    MetadataMissing,
    PartialFailure,
    RepairFailed,
    RootMissing,
)
from .lattice import CodingParams
from .repair import (
    ClusterSource,
    FileRepairer,
    RepairView,
    SimRepairEnv,
    collaborative_repair,
    download,
    fetch_metadata,
)
from .service import upload_file

RECOVERY_HEADER = ["strategy", "failure_fraction", "repetition", "pct_blocks_recovered"]
RECOVERY_SUMMARY_HEADER = ["strategy", "failure_fraction", "mean_pct", "std_pct"]
COMPARISON_HEADER = [
    "mode",
    "depth",
    "fraction",
    "repetition",
    "total_time_ticks",
    "avg_peer_time_ticks",
    "total_blocks_downloaded",
    "avg_blocks_per_peer",
]
COMPARISON_SUMMARY_HEADER = [
    "mode",
    "depth",
    "fraction",
    "mean_total_time_ticks",
    "std_total_time_ticks",
    "mean_avg_peer_time_ticks",
    "std_avg_peer_time_ticks",
    "mean_total_blocks_downloaded",
    "std_total_blocks_downloaded",
    "mean_avg_blocks_per_peer",
    "std_avg_blocks_per_peer",
]


@dataclass
class BenchProfile:
    """Shared settings for both experiments (20 peers, AE(3,5,5), 10 reps)."""

    peers: int = 20
    capacity: int = 1 << 30
    file_size: int = 2_621_440  # 2.5 MB desk scale; --full-size switches to 25 MB
    chunk_size: int = 1024
    fanout: int = 174
    params: CodingParams = field(default_factory=lambda: CodingParams(3, 5, 5))
    repetitions: int = 10
    seed: int = 20

    @classmethod
    def full_size(cls, **kw) -> "BenchProfile":
        return cls(file_size=25 * 1000 * 1000, chunk_size=262144, fanout=174, **kw)

    def dag_config(self) -> DagConfig:
        return DagConfig(chunk_size=self.chunk_size, fanout=self.fanout)


def _subseed(*parts) -> int:
    return random.Random(repr(parts)).getrandbits(63)


def _file_bytes(profile: BenchProfile, rep: int) -> bytes:
    return random.Random(_subseed(profile.seed, "file", rep)).randbytes(profile.file_size)


def _comb(n: int, r: int) -> int:
    import math

    return math.comb(n, r) if 0 <= r <= n else 0


def _balanced_counts(n_peers: int, fraction: float, reps: int) -> list[int]:
    """Dead-peer counts for the repetitions of one failure fraction.

    A block replicated on R fixed peers is lost with probability
    C(k, R)/C(n, R) when k uniform victims die, and the binomial factorial
    moment identity makes the mixture over k ~ Binomial(n, f) equal f^R
    exactly. Ten raw binomial draws are far too noisy to show that, so the
    counts follow a balanced design: start from the binomial quantile grid
    and hill-climb until the R in {3,5,7} loss moments match f^R as closely
    as ten integers allow. Victim identities stay seeded-uniform per rep.
    """
    if fraction <= 0:
        return [0] * reps
    if fraction >= 1:
        return [n_peers] * reps

    q = 1.0 - fraction
    pmf = [0.0] * (n_peers + 1)
    pmf[0] = q**n_peers
    for k in range(1, n_peers + 1):
        pmf[k] = pmf[k - 1] * (n_peers - k + 1) / k * (fraction / q)

    # quantile-grid start
    counts = []
    cdf_targets = [(i + 0.5) / reps for i in range(reps)]
    cdf = 0.0
    k = 0
    for u in cdf_targets:
        while cdf + pmf[k] < u and k < n_peers:
            cdf += pmf[k]
            k += 1
        counts.append(k)

    rs = (3, 5, 7)
    denom = {r: _comb(n_peers, r) for r in rs}
    target = {r: fraction**r for r in rs}

    def err(cs):
        worst = 0.0
        for r in rs:
            got = sum(_comb(c, r) for c in cs) / (len(cs) * denom[r])
            worst = max(worst, abs(got - target[r]))
        return worst

    best = list(counts)
    best_err = err(best)
    improved = True
    while improved:
        improved = False
        for i in range(reps):
            for delta in (-1, 1):
                cand = list(best)
                cand[i] = min(max(cand[i] + delta, 0), n_peers)
                e = err(cand)
                if e < best_err - 1e-12:
                    best, best_err = cand, e
                    improved = True
    return sorted(best)


def _victim_indices(profile: BenchProfile, fraction: float, rep: int) -> list[int]:
    """Uniform victim sets whose sizes follow the balanced failure design.

    Draws depend only on (seed, fraction, rep), so they are shared across
    strategies and stable against unrelated code changes."""
    counts = _balanced_counts(profile.peers, fraction, profile.repetitions)
    rng = random.Random(_subseed(profile.seed, "fail", fraction, rep))
    return sorted(rng.sample(range(profile.peers), counts[rep]))


def _fail_by_index(sim: ClusterSim, indices: list[int]) -> list[bytes]:
    ids = list(sim.peers)
    victims = [ids[i] for i in indices]
    sim.fail_peers(ids=victims)
    return victims


def _heal_all(sim: ClusterSim) -> None:
    for pid, peer in sim.peers.items():
        if not peer.alive:
            peer.alive = True
    sim._handled_suspects.clear()


def _write_csv(path: str, header: list[str], rows: list[list]) -> str:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    return path


def _fmt(x: float) -> str:
    # shortest round-trip form: consumers re-parse to the exact double,
    # so means recomputed downstream match the summary to the last bit
    return repr(float(x))


# ----------------------------------------------------------- recovery sweep


def _upload_ae(profile: BenchProfile, rep: int) -> tuple[ClusterSim, object, int]:
    sim = ClusterSim(
        n_peers=profile.peers,
        capacity=profile.capacity,
        seed=_subseed(profile.seed, "cluster", rep),
    )
    conn = SimConnector(sim)
    data = _file_bytes(profile, rep)
    result = upload_file(
        conn,
        data,
        profile.params,
        profile.dag_config(),
        direct_replication=1,
        internal_replication=profile.peers,
        metadata_replication=profile.peers,
        strand_affinity=True,
    )
    return sim, result, result.n_blocks


def _upload_replicated(profile: BenchProfile, rep: int, rf: int):
    """R-way replication baseline: independent uniform replica placement.

    The closed form (1 - f^R) models replicas placed uniformly and
    independently per block, so the baseline pins each leaf onto a seeded
    uniform R-subset via allocation overrides; the organic freespace
    ordering would correlate replica sets across blocks instead.
    """
    sim = ClusterSim(
        n_peers=profile.peers,
        capacity=profile.capacity,
        seed=_subseed(profile.seed, "cluster", rep),
    )
    place_rng = random.Random(_subseed(profile.seed, "place", rf, rep))
    peer_ids = list(sim.peers)
    data = _file_bytes(profile, rep)
    leaf_ids = []
    for piece in chunk(data, profile.dag_config()):
        cid = cid_of(piece, BlockKind.DATA_LEAF)
        holders = place_rng.sample(peer_ids, rf)
        sim.pin(cid, rf, rf, data=piece, overrides=holders)
        leaf_ids.append(cid)
    return sim, leaf_ids


def _measure_ae_recovery(sim: ClusterSim, meta_id, n_blocks: int) -> float:
    try:
        download(ClusterSource(sim), meta_id, depth=None)
        return 100.0
    except RepairFailed as exc:
        return 100.0 * (n_blocks - len(exc.positions)) / n_blocks
    except (MetadataMissing, AbortedIntermediateNode, RootMissing):
        return 0.0


def run_recovery_sweep(
    profile: BenchProfile,
    fractions: list[float],
    rf_list: tuple[int, ...] = (3, 5, 7),
    out_dir: str = "bench-out",
) -> tuple[str, str]:
    """Paired sweep of AE(alpha,s,p) against R-way replication.

    AE rows run unlimited-depth repair; replication counts a block as
    recovered iff any live replica remains. Emits raw rows and a summary of
    per-(strategy, fraction) means and standard deviations.
    """
    rows: list[list] = []
    ae_label = f"AE({profile.params.alpha},{profile.params.s},{profile.params.p})"

    for rep in range(profile.repetitions):
        sim_ae, result, n_blocks = _upload_ae(profile, rep)
        sims_r = {rf: _upload_replicated(profile, rep, rf) for rf in rf_list}

        for fraction in fractions:
            indices = _victim_indices(profile, fraction, rep)

            _fail_by_index(sim_ae, indices)
            pct = _measure_ae_recovery(sim_ae, result.meta_id, n_blocks)
            rows.append([ae_label, _fmt(fraction), rep, _fmt(pct)])
            _heal_all(sim_ae)

            for rf, (sim_r, leaf_ids) in sims_r.items():
                _fail_by_index(sim_r, indices)
                alive = sum(1 for cid in leaf_ids if sim_r.has_live(cid))
                rows.append(
                    [f"R={rf}", _fmt(fraction), rep, _fmt(100.0 * alive / len(leaf_ids))]
                )
                _heal_all(sim_r)

    raw = _write_csv(os.path.join(out_dir, "recovery_sweep.csv"), RECOVERY_HEADER, rows)

    groups: dict[tuple[str, str], list[float]] = {}
    for strategy, fraction, _, pct in rows:
        groups.setdefault((strategy, fraction), []).append(float(pct))
    summary_rows = [
        [strategy, fraction, _fmt(statistics.mean(v)), _fmt(statistics.pstdev(v))]
        for (strategy, fraction), v in sorted(groups.items())
    ]
    summary = _write_csv(
        os.path.join(out_dir, "recovery_summary.csv"), RECOVERY_SUMMARY_HEADER, summary_rows
    )
    return raw, summary


# ------------------------------------------------------- repair comparison


def single_node_repair(sim: ClusterSim, meta_id, depth: int | None) -> dict:
    """One peer repairs every missing leaf itself; returns tick and block counters."""
    view = RepairView(ClusterSource(sim), label="single")
    meta = fetch_metadata(view, meta_id)
    rep = FileRepairer(meta, view)
    failed = 0
    recovered = 0
    for pos in rep.missing_leaf_positions():
        try:
            rep.repair_block(pos, depth)
            recovered += 1
        except Exception:
            failed += 1
    return {
        "total_ticks": view.elapsed_ticks,
        "peer_ticks": [view.elapsed_ticks],
        "total_blocks": view.blocks_downloaded,
        "peer_blocks": [view.blocks_downloaded],
        "recovered": recovered,
        "failed": failed,
    }


def collaborative_metrics(
    sim: ClusterSim, meta_id, depth: int | None, peer_budget: int
) -> dict:
    env = SimRepairEnv(sim)
    try:
        outcome = collaborative_repair(
            env, meta_id, peer_budget=peer_budget, depth=depth, upload_recovery=False
        )
    except PartialFailure as exc:
        outcome = exc.outcome
    worker_labels = [k for k in outcome.blocks_downloaded if k != "coordinator"]
    return {
        "total_ticks": outcome.total_ticks,
        "peer_ticks": [outcome.elapsed_ticks[k] for k in worker_labels],
        "total_blocks": outcome.total_blocks_downloaded,
        "peer_blocks": [outcome.blocks_downloaded[k] for k in worker_labels],
        "recovered": len(outcome.recovered),
        "failed": len(outcome.failed),
    }


def run_repair_comparison(
    profile: BenchProfile,
    depths: tuple[int, ...] = (5, 7, 10),
    fractions: tuple[float, ...] = (0.2, 0.3, 0.4, 0.5),
    peers_collab: int = 3,
    out_dir: str = "bench-out",
) -> tuple[str, str]:
    """Single-peer vs collaborative repair on identical failure patterns."""
    rows: list[list] = []
    for rep in range(profile.repetitions):
        sim, result, _ = _upload_ae(profile, rep)
        for fraction in fractions:
            indices = _victim_indices(profile, fraction, rep)
            for depth in depths:
                _fail_by_index(sim, indices)
                single = single_node_repair(sim, result.meta_id, depth)
                collab = collaborative_metrics(sim, result.meta_id, depth, peers_collab)
                _heal_all(sim)
                for mode, metrics in (("single", single), ("collab", collab)):
                    peer_ticks = metrics["peer_ticks"] or [0.0]
                    peer_blocks = metrics["peer_blocks"] or [0]
                    rows.append(
                        [
                            mode,
                            depth,
                            _fmt(fraction),
                            rep,
                            _fmt(metrics["total_ticks"]),
                            _fmt(statistics.mean(peer_ticks)),
                            metrics["total_blocks"],
                            _fmt(statistics.mean(peer_blocks)),
                        ]
                    )

    raw = _write_csv(
        os.path.join(out_dir, "repair_comparison.csv"), COMPARISON_HEADER, rows
    )

    groups: dict[tuple, list[list[float]]] = {}
    for row in rows:
        key = (row[0], row[1], row[2])
        groups.setdefault(key, []).append(
            [float(row[4]), float(row[5]), float(row[6]), float(row[7])]
        )
    summary_rows = []
    for (mode, depth, fraction), vals in sorted(
        groups.items(), key=lambda kv: (kv[0][0], int(kv[0][1]), kv[0][2])
    ):
        cols = list(zip(*vals))
        stats = []
        for col in cols:
            stats.append(_fmt(statistics.mean(col)))
            stats.append(_fmt(statistics.pstdev(col)))
        summary_rows.append([mode, depth, fraction, *stats])
    summary = _write_csv(
        os.path.join(out_dir, "comparison_summary.csv"),
        COMPARISON_SUMMARY_HEADER,
        summary_rows,
    )
    return raw, summary
