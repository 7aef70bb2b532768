import json
import os
import random
import subprocess
import sys

import pytest


def run_cli(*args, env_extra=None):
    env = dict(os.environ)
    if env_extra:
        env.update(env_extra)
    return subprocess.run(
        [sys.executable, "-m", "entstore.cli", *args],
        capture_output=True,
        text=True,
        env=env,
        timeout=300,
    )


def kv(proc):
    out = {}
    for line in proc.stdout.splitlines():
        if "=" in line:
            key, value = line.split("=", 1)
            out[key] = value
    return out


@pytest.fixture
def sim_env(tmp_path):
    scenario = tmp_path / "scenario.json"
    scenario.write_text(json.dumps({"peers": 8, "seed": 5, "capacity": 1 << 28}))
    source = tmp_path / "input.bin"
    source.write_bytes(random.Random(3).randbytes(60_000))
    return scenario, source, tmp_path


UPLOAD_FLAGS = [
    "--alpha", "3", "--p", "5", "--s", "5",
    "--direct-replication", "1", "--replication", "1",
    "--chunk-size", "1024", "--fanout", "4",
]


class TestUploadDownload:
    def test_round_trip_across_invocations(self, sim_env):
        scenario, source, tmp = sim_env
        up = run_cli("upload", "--sim", str(scenario), *UPLOAD_FLAGS, str(source))
        assert up.returncode == 0, up.stderr
        fields = kv(up)
        assert set(fields) >= {"file_cid", "metadata_cid", "blocks"}

        out = tmp / "out.bin"
        down = run_cli(
            "download", "--sim", str(scenario),
            "--metacid", fields["metadata_cid"], "--output", str(out),
        )
        assert down.returncode == 0, down.stderr
        assert out.read_bytes() == source.read_bytes()

    def test_same_file_twice_same_ids(self, sim_env):
        scenario, source, _ = sim_env
        first = kv(run_cli("upload", "--sim", str(scenario), *UPLOAD_FLAGS, str(source)))
        second = kv(run_cli("upload", "--sim", str(scenario), *UPLOAD_FLAGS, str(source)))
        assert first["file_cid"] == second["file_cid"]
        assert first["metadata_cid"] == second["metadata_cid"]

    def test_non_square_params_rejected(self, sim_env):
        scenario, source, _ = sim_env
        proc = run_cli(
            "upload", "--sim", str(scenario), "--alpha", "3", "--p", "7", "--s", "5",
            str(source),
        )
        assert proc.returncode != 0
        assert "square" in proc.stderr

    def test_unknown_flag_is_an_error(self, sim_env):
        scenario, source, _ = sim_env
        proc = run_cli("upload", "--sim", str(scenario), "--bogus-flag", "1", str(source))
        assert proc.returncode != 0

    def test_env_var_override(self, sim_env):
        scenario, source, tmp = sim_env
        fields = kv(run_cli("upload", "--sim", str(scenario), *UPLOAD_FLAGS, str(source)))
        out = tmp / "env-out.bin"
        down = run_cli(
            "download", "--sim", str(scenario), "--output", str(out),
            env_extra={"ES_METACID": fields["metadata_cid"]},
        )
        assert down.returncode == 0, down.stderr
        assert out.read_bytes() == source.read_bytes()


class TestExitCodes:
    def test_missing_leaf_at_depth_zero_exits_2(self, sim_env):
        scenario, source, tmp = sim_env
        fields = kv(run_cli("upload", "--sim", str(scenario), *UPLOAD_FLAGS, str(source)))

        # delete a non-head data leaf out-of-band
        sys.path.insert(0, os.path.dirname(__file__))
        from entstore.blocks import BlockKind, DagConfig, chunk, cid_of
        from entstore.cluster import load_scenario
        from entstore.state import load_cluster, save_cluster

        sim = load_cluster(load_scenario(str(scenario)), str(scenario) + ".state")
        piece = chunk(source.read_bytes(), DagConfig(chunk_size=1024, fanout=4))[8]
        victim = cid_of(piece, BlockKind.DATA_LEAF)
        for pid in sim.pinset[victim].allocations:
            sim.peers[pid].store.delete(victim)
        save_cluster(sim, str(scenario) + ".state")

        out = tmp / "out.bin"
        down = run_cli(
            "download", "--sim", str(scenario), "--depth", "0",
            "--metacid", fields["metadata_cid"], "--output", str(out),
        )
        assert down.returncode == 2
        assert kv(down)["status"] == "repair_failed"

        # with repair allowed it heals and re-pins
        down2 = run_cli(
            "download", "--sim", str(scenario), "--depth", "2",
            "--metacid", fields["metadata_cid"], "--output", str(out),
            "--upload-recovery", "true",
        )
        assert down2.returncode == 0, down2.stderr
        assert out.read_bytes() == source.read_bytes()
        sim = load_cluster(load_scenario(str(scenario)), str(scenario) + ".state")
        entry = sim.pinset[victim]
        assert any(
            sim.peers[p].alive and sim.peers[p].store.has(victim)
            for p in entry.allocations
        )

    def test_unknown_metacid_exits_3(self, sim_env):
        scenario, source, tmp = sim_env
        run_cli("upload", "--sim", str(scenario), *UPLOAD_FLAGS, str(source))
        bogus = "03" + "ab" * 32
        down = run_cli(
            "download", "--sim", str(scenario), "--metacid", bogus,
            "--output", str(tmp / "x.bin"),
        )
        assert down.returncode == 3
        assert kv(down)["status"] == "metadata_missing"


class TestRepairCommand:
    def test_healthy_file_nothing_to_repair(self, sim_env):
        scenario, source, _ = sim_env
        fields = kv(run_cli("upload", "--sim", str(scenario), *UPLOAD_FLAGS, str(source)))
        proc = run_cli("repair", "--sim", str(scenario), "--metacid", fields["metadata_cid"], "--peers", "3")
        assert proc.returncode == 0, proc.stderr
        summary = kv(proc)
        assert summary["recovered"] == "0" and summary["failed"] == "0"

    def test_requested_peers_clamped_to_available(self, sim_env):
        scenario, source, _ = sim_env
        fields = kv(run_cli("upload", "--sim", str(scenario), *UPLOAD_FLAGS, str(source)))
        proc = run_cli("repair", "--sim", str(scenario), "--metacid", fields["metadata_cid"], "--peers", "50")
        assert proc.returncode == 0, proc.stderr


class TestDaemonCommand:
    def test_sim_daemon_bounded_run(self, sim_env):
        scenario, source, _ = sim_env
        run_cli("upload", "--sim", str(scenario), *UPLOAD_FLAGS, str(source))
        proc = run_cli("daemon", "--sim", str(scenario), "--ticks", "3")
        assert proc.returncode == 0, proc.stderr
        fields = kv(proc)
        assert fields["mode"] == "sim" and fields["monitored"] == "1"

    def test_http_daemon_requires_discovery(self):
        proc = run_cli("daemon", "--port", "0")
        assert proc.returncode != 0
        assert "discovery" in proc.stderr


class TestKernelBench:
    def test_bench_kernels_reports_both_lanes(self, tmp_path):
        proc = run_cli(
            "bench", "kernels", "--blocks", "64", "--block-size", "256", "--runs", "2"
        )
        assert proc.returncode == 0, proc.stderr
        fields = kv(proc)
        assert fields["numpy_lane"] == "numpy"
        assert fields["numba_lane"] in ("numba", "numpy")
        assert float(fields["numpy_seconds_per_run"]) >= 0


class TestPlainFetch:
    def test_cid_only_download_no_repair(self, sim_env):
        scenario, source, tmp = sim_env
        fields = kv(run_cli("upload", "--sim", str(scenario), *UPLOAD_FLAGS, str(source)))
        out = tmp / "plain.bin"
        down = run_cli(
            "download", "--sim", str(scenario), "--cid", fields["file_cid"],
            "--output", str(out),
        )
        assert down.returncode == 0, down.stderr
        assert kv(down)["plain"] == "True"
        assert out.read_bytes() == source.read_bytes()

    def test_cid_only_fails_on_missing_leaf(self, sim_env):
        scenario, source, tmp = sim_env
        fields = kv(run_cli("upload", "--sim", str(scenario), *UPLOAD_FLAGS, str(source)))
        sys.path.insert(0, os.path.dirname(__file__))
        from entstore.blocks import BlockKind, DagConfig, chunk, cid_of
        from entstore.cluster import load_scenario
        from entstore.state import load_cluster, save_cluster

        sim = load_cluster(load_scenario(str(scenario)), str(scenario) + ".state")
        piece = chunk(source.read_bytes(), DagConfig(chunk_size=1024, fanout=4))[8]
        victim = cid_of(piece, BlockKind.DATA_LEAF)
        for pid in sim.pinset[victim].allocations:
            sim.peers[pid].store.delete(victim)
        save_cluster(sim, str(scenario) + ".state")
        down = run_cli(
            "download", "--sim", str(scenario), "--cid", fields["file_cid"],
            "--output", str(tmp / "x.bin"),
        )
        assert down.returncode == 2
