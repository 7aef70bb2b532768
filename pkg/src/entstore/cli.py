"""Command line surface: daemon, upload, download, repair, bench, discovery.

All outputs are machine-parsable key=value lines. Commands run either
against a simulated cluster (--sim <scenario.json>, state persisted next to
the scenario) or against HTTP endpoints. Every flag can be supplied through
the environment with the ES_ prefix (ES_DEPTH, ES_METACID, ...).
"""

from __future__ import annotations

import argparse
import json
import os
import signal
import subprocess
import sys
import time

from .blocks import BlockId, DagConfig
from .cluster import ClusterSim, load_scenario
from .connector import ConnectorConfig, HttpConnector, SimConnector, StubStoreServer
from .errors import (
    AbortedIntermediateNode,
    EntstoreError,
    MetadataMissing,
    PartialFailure,
    RepairFailed,
    UnsupportedParams,
)
from .lattice import CodingParams
from .monitor import MonitorService
from .repair import ClusterSource, SimRepairEnv, collaborative_repair, download
from .service import upload_file
from .state import load_cluster, save_cluster

EXIT_REPAIR_FAILED = 2
EXIT_METADATA_MISSING = 3
EXIT_ABORTED_INTERMEDIATE = 4


def _env(name: str):
    return os.environ.get("ES_" + name.upper().replace("-", "_"))


def _flag_kw(name: str, **kw):
    env_val = _env(name)
    if env_val is not None:
        kw["default"] = env_val
        kw.pop("required", None)
    return kw


def _sim_state_dir(scenario_path: str) -> str:
    return scenario_path + ".state"


def _load_sim(scenario_path: str) -> ClusterSim:
    sim = load_scenario(scenario_path)
    return load_cluster(sim, _sim_state_dir(scenario_path))


def _emit(**kv):
    for key, value in kv.items():
        print(f"{key}={value}")


def cmd_daemon(args) -> int:
    if args.sim:
        sim = _load_sim(args.sim)
        monitor = MonitorService(sim)
        from .blocks import BlockKind

        for block_id in list(sim.pinset):
            if block_id.kind == BlockKind.METADATA:
                try:
                    monitor.start_monitoring(block_id)
                except EntstoreError:
                    pass
        from .cluster import apply_failure_schedule

        ticks = args.ticks if args.ticks is not None else 0
        for _ in range(ticks):
            sim.tick()
            apply_failure_schedule(sim, sim.clock.now)
            monitor.tick()
        save_cluster(sim, _sim_state_dir(args.sim))
        events_path = args.sim + ".events.jsonl"
        sim.dump_events(events_path)
        _emit(mode="sim", ticks=sim.clock.now, peers=len(sim.alive_peers()),
              monitored=len(monitor.assignments), events=events_path)
        return 0

    if not args.discovery:
        print("error=missing --discovery", file=sys.stderr)
        return 2
    import hashlib

    from .daemon import CommunityDaemon

    cfg = ConnectorConfig(
        backend="http",
        cluster_host=args.cluster_ip,
        cluster_port=int(args.cluster_port),
        node_host=args.ipfs_ip,
        node_port=int(args.ipfs_port),
    )
    connector = HttpConnector(cfg)
    peer_id = hashlib.sha256(f"{args.community_ip}:{args.port}".encode()).digest()
    try:
        daemon = CommunityDaemon(
            peer_id,
            connector,
            host=args.community_ip,
            port=int(args.port),
            discovery_url=args.discovery,
        ).start()
    except OSError as exc:
        print(f"error=bind: {exc}", file=sys.stderr)
        return 1
    _emit(mode="http", peer=peer_id.hex(), address=daemon.address)
    if args.ticks is not None:
        time.sleep(args.ticks)
        daemon.stop()
        return 0
    signal.sigwait({signal.SIGINT, signal.SIGTERM})
    daemon.stop()
    return 0


def cmd_upload(args) -> int:
    with open(args.file, "rb") as fh:
        data = fh.read()
    params = CodingParams(alpha=int(args.alpha), s=int(args.s), p=int(args.p))
    try:
        params.require_square()
    except UnsupportedParams as exc:
        print(f"error={exc}", file=sys.stderr)
        return 1
    cfg = DagConfig(chunk_size=int(args.chunk_size), fanout=int(args.fanout))
    if args.sim:
        sim = _load_sim(args.sim)
        connector = SimConnector(sim)
    else:
        connector = _http_connector(args)
    result = upload_file(
        connector,
        data,
        params,
        cfg,
        direct_replication=int(args.direct_replication),
        internal_replication=int(args.replication),
    )
    if args.sim:
        save_cluster(sim, _sim_state_dir(args.sim))
    _emit(
        file_cid=result.file_root.hex(),
        metadata_cid=result.meta_id.hex(),
        blocks=result.n_blocks,
    )
    return 0


def cmd_download(args) -> int:
    depth = None
    if args.depth is not None and str(args.depth) != "unlimited":
        depth = int(args.depth)
    if args.sim:
        sim = _load_sim(args.sim)
        source = ClusterSource(sim)
        pinner = sim
    else:
        source = pinner = _http_connector(args)
    if not args.metacid:
        # without the metadata id only a plain fetch is possible: walk the
        # file DAG and fail on anything missing, no repair capability
        if not args.cid:
            print("error=need --metacid (or --cid for a plain fetch)", file=sys.stderr)
            return 1
        from .blocks import walk_dag
        from .errors import RootMissing

        try:
            file_root = BlockId.from_hex(args.cid)
        except ValueError as exc:
            print(f"error={exc}", file=sys.stderr)
            return 1
        try:
            report = walk_dag(file_root, source)
        except RootMissing:
            _emit(status="repair_failed", failed_positions="root")
            return EXIT_REPAIR_FAILED
        missing = [s.index for s in report.leaves if not s.present or s.block_id is None]
        if missing:
            _emit(status="repair_failed", failed_positions=",".join(map(str, missing)))
            return EXIT_REPAIR_FAILED
        data = b"".join(source.get(s.block_id) for s in report.leaves)
        with open(args.output, "wb") as fh:
            fh.write(data)
        _emit(status="ok", output=args.output, bytes=len(data), plain=True)
        return 0
    try:
        meta_id = BlockId.from_hex(args.metacid)
    except ValueError as exc:
        print(f"error={exc}", file=sys.stderr)
        return 1
    upload_recovery = str(args.upload_recovery).lower() in ("1", "true", "yes")
    try:
        data, view = download(
            source,
            meta_id,
            depth=depth,
            upload_recovery=upload_recovery,
            pinner=pinner,
        )
    except RepairFailed as exc:
        _emit(status="repair_failed", failed_positions=",".join(map(str, exc.positions)))
        return EXIT_REPAIR_FAILED
    except MetadataMissing:
        _emit(status="metadata_missing")
        return EXIT_METADATA_MISSING
    except AbortedIntermediateNode:
        _emit(status="aborted_intermediate_node")
        return EXIT_ABORTED_INTERMEDIATE
    with open(args.output, "wb") as fh:
        fh.write(data)
    if args.sim and upload_recovery:
        save_cluster(sim, _sim_state_dir(args.sim))
    _emit(status="ok", output=args.output, bytes=len(data),
          blocks_downloaded=view.blocks_downloaded)
    return 0


def cmd_repair(args) -> int:
    depth = None if args.depth in (None, "unlimited") else int(args.depth)
    try:
        meta_id = BlockId.from_hex(args.metacid)
    except ValueError as exc:
        print(f"error={exc}", file=sys.stderr)
        return 1
    if args.sim:
        sim = _load_sim(args.sim)
        env = SimRepairEnv(sim)
    else:
        from .daemon import HttpRepairEnv

        env = HttpRepairEnv(_http_connector(args), args.discovery)
    try:
        outcome = collaborative_repair(
            env, meta_id, peer_budget=int(args.peers), depth=depth
        )
        status = "ok" if outcome.recovered or not outcome.failed else "partial"
    except PartialFailure as exc:
        outcome = exc.outcome
        status = "partial"
    except AbortedIntermediateNode:
        _emit(status="aborted_intermediate_node")
        return EXIT_ABORTED_INTERMEDIATE
    if args.sim:
        save_cluster(sim, _sim_state_dir(args.sim))
    _emit(
        status=status,
        recovered=len(outcome.recovered),
        failed=len(outcome.failed),
        total_blocks_downloaded=outcome.total_blocks_downloaded,
        total_ticks=f"{outcome.total_ticks:.2f}",
        peers=",".join(
            f"{label}:{count}"
            for label, count in sorted(outcome.blocks_downloaded.items())
        ),
    )
    return 0 if status == "ok" else EXIT_REPAIR_FAILED


def cmd_discovery(args) -> int:
    from .daemon import DiscoveryServer

    server = DiscoveryServer(port=int(args.port), interval=float(args.interval)).start()
    _emit(address=f"http://127.0.0.1:{server.port}")
    signal.sigwait({signal.SIGINT, signal.SIGTERM})
    server.stop()
    return 0


def cmd_stub_store(args) -> int:
    server = StubStoreServer(port=int(args.port)).start()
    _emit(address=f"http://127.0.0.1:{server.port}")
    signal.sigwait({signal.SIGINT, signal.SIGTERM})
    server.stop()
    return 0


def cmd_bench(args) -> int:
    from .bench import BenchProfile, run_recovery_sweep, run_repair_comparison

    if args.bench_cmd == "kernels":
        return _bench_kernels(args)

    if args.full_size:
        profile = BenchProfile.full_size(seed=int(args.seed))
    else:
        profile = BenchProfile(seed=int(args.seed))
    if args.sim:
        scenario = json.load(open(args.sim))
        profile.peers = scenario.get("peers", profile.peers)
        profile.seed = scenario.get("seed", profile.seed)
    if args.bench_cmd == "recovery":
        fractions = [float(x) for x in args.fractions.split(",")]
        raw, summary = run_recovery_sweep(profile, fractions, out_dir=args.out)
        _emit(raw=raw, summary=summary)
        return 0
    if args.bench_cmd == "comparison":
        depths = tuple(int(x) for x in args.depths.split(","))
        fractions = tuple(float(x) for x in args.fractions.split(","))
        raw, summary = run_repair_comparison(
            profile, depths=depths, fractions=fractions,
            peers_collab=int(args.peers), out_dir=args.out,
        )
        _emit(raw=raw, summary=summary)
        return 0
    print(f"error=unknown bench {args.bench_cmd}", file=sys.stderr)
    return 1


def _bench_kernels(args) -> int:
    """Entangle/decode timing for the numba lane vs the numpy fallback."""
    results = {}
    for lane in ("numpy", "numba"):
        env = dict(os.environ, ENTSTORE_KERNEL=lane)
        code = (
            "import time, numpy as np\n"
            "from entstore import _kernels, lattice\n"
            f"n, bs = {int(args.blocks)}, {int(args.block_size)}\n"
            "params = lattice.CodingParams(3, 5, 5)\n"
            "data = np.random.default_rng(0).integers(0, 256, size=(n, bs), dtype=np.uint8)\n"
            "chains = [[i - 1 for i in c] for c in lattice.chains_for_class(lattice.StrandClass.H, n, params)]\n"
            "_kernels.entangle_chains(data, chains)\n"  # warm-up / jit compile
            "t0 = time.perf_counter()\n"
            f"for _ in range({int(args.runs)}):\n"
            "    out = _kernels.entangle_chains(data, chains)\n"
            "dt = (time.perf_counter() - t0) / max(1, %d)\n" % int(args.runs)
            + "print(_kernels.active_lane(), dt)\n"
        )
        proc = subprocess.run(
            [sys.executable, "-c", code], capture_output=True, text=True, env=env
        )
        if proc.returncode != 0:
            print(proc.stderr, file=sys.stderr)
            return 1
        lane_name, dt = proc.stdout.split()[-2:]
        results[lane] = (lane_name, float(dt))
    for lane, (lane_name, dt) in results.items():
        _emit(**{f"{lane}_lane": lane_name, f"{lane}_seconds_per_run": f"{dt:.6f}"})
    if results["numba"][1] > 0:
        _emit(speedup=f"{results['numpy'][1] / results['numba'][1]:.3f}")
    return 0


def _http_connector(args) -> HttpConnector:
    cfg = ConnectorConfig(
        backend="http",
        cluster_host=getattr(args, "cluster_ip", "") or "127.0.0.1",
        cluster_port=int(getattr(args, "cluster_port", 0) or 0),
        node_host=getattr(args, "ipfs_ip", "") or "127.0.0.1",
        node_port=int(getattr(args, "ipfs_port", 0) or 0),
    )
    return HttpConnector(cfg)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="entstore")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("daemon", help="run a community node")
    p.add_argument("--cluster-ip", **_flag_kw("cluster-ip", default="127.0.0.1"))
    p.add_argument("--cluster-port", **_flag_kw("cluster-port", default=0))
    p.add_argument("--community-ip", **_flag_kw("community-ip", default="127.0.0.1"))
    p.add_argument("--port", **_flag_kw("port", default=0))
    p.add_argument("--discovery", **_flag_kw("discovery", default=None))
    p.add_argument("--ipfs-ip", **_flag_kw("ipfs-ip", default="127.0.0.1"))
    p.add_argument("--ipfs-port", **_flag_kw("ipfs-port", default=0))
    p.add_argument("--sim", **_flag_kw("sim", default=None))
    p.add_argument("--ticks", type=int, default=None)
    p.set_defaults(func=cmd_daemon)

    p = sub.add_parser("upload", help="chunk, entangle, and pin a file")
    p.add_argument("--address", **_flag_kw("address", default=""))
    p.add_argument("--alpha", **_flag_kw("alpha", default=3))
    p.add_argument("--p", **_flag_kw("p", default=5))
    p.add_argument("--s", **_flag_kw("s", default=5))
    p.add_argument("--direct-replication", **_flag_kw("direct-replication", default=1))
    p.add_argument("--replication", **_flag_kw("replication", default=1))
    p.add_argument("--chunk-size", **_flag_kw("chunk-size", default=262144))
    p.add_argument("--fanout", **_flag_kw("fanout", default=174))
    p.add_argument("--sim", **_flag_kw("sim", default=None))
    p.add_argument("--cluster-ip", **_flag_kw("cluster-ip", default=""))
    p.add_argument("--cluster-port", **_flag_kw("cluster-port", default=0))
    p.add_argument("--ipfs-ip", **_flag_kw("ipfs-ip", default=""))
    p.add_argument("--ipfs-port", **_flag_kw("ipfs-port", default=0))
    p.add_argument("file")
    p.set_defaults(func=cmd_upload)

    p = sub.add_parser("download", help="fetch a file, repairing within a depth budget")
    p.add_argument("--address", **_flag_kw("address", default=""))
    p.add_argument("--depth", **_flag_kw("depth", default=None))
    p.add_argument("--metacid", **_flag_kw("metacid", default=None))
    p.add_argument("--cid", **_flag_kw("cid", default=None))
    p.add_argument("--output", **_flag_kw("output", required=True))
    p.add_argument("--upload-recovery", **_flag_kw("upload-recovery", default="false"))
    p.add_argument("--sim", **_flag_kw("sim", default=None))
    p.add_argument("--cluster-ip", **_flag_kw("cluster-ip", default=""))
    p.add_argument("--cluster-port", **_flag_kw("cluster-port", default=0))
    p.add_argument("--ipfs-ip", **_flag_kw("ipfs-ip", default=""))
    p.add_argument("--ipfs-port", **_flag_kw("ipfs-port", default=0))
    p.set_defaults(func=cmd_download)

    p = sub.add_parser("repair", help="trigger a collaborative repair")
    p.add_argument("--metacid", **_flag_kw("metacid", required=True))
    p.add_argument("--peers", **_flag_kw("peers", default=3))
    p.add_argument("--depth", **_flag_kw("depth", default=None))
    p.add_argument("--sim", **_flag_kw("sim", default=None))
    p.add_argument("--discovery", **_flag_kw("discovery", default=None))
    p.add_argument("--cluster-ip", **_flag_kw("cluster-ip", default=""))
    p.add_argument("--cluster-port", **_flag_kw("cluster-port", default=0))
    p.add_argument("--ipfs-ip", **_flag_kw("ipfs-ip", default=""))
    p.add_argument("--ipfs-port", **_flag_kw("ipfs-port", default=0))
    p.set_defaults(func=cmd_repair)

    p = sub.add_parser("discovery", help="run the discovery server")
    p.add_argument("--port", **_flag_kw("port", default=0))
    p.add_argument("--interval", **_flag_kw("interval", default=5.0))
    p.set_defaults(func=cmd_discovery)

    p = sub.add_parser("stub-store", help="run the contract-test block store")
    p.add_argument("--port", **_flag_kw("port", default=0))
    p.set_defaults(func=cmd_stub_store)

    p = sub.add_parser("bench", help="experiment harness")
    p.add_argument("bench_cmd", choices=["recovery", "comparison", "kernels"])
    p.add_argument("--out", default="bench-out")
    p.add_argument("--seed", default=20)
    p.add_argument("--fractions", default="0.0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9")
    p.add_argument("--depths", default="5,7,10")
    p.add_argument("--peers", default=3)
    p.add_argument("--full-size", action="store_true")
    p.add_argument("--sim", default=None)
    p.add_argument("--blocks", default=2560, help="kernel bench: data blocks")
    p.add_argument("--block-size", default=1024, help="kernel bench: block bytes")
    p.add_argument("--runs", default=10, help="kernel bench: timed runs")
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except EntstoreError as exc:
        print(f"error={exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
