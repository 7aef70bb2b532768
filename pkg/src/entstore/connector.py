"""Boundary between storage logic and a backing cluster.

Two backends implement the same surface: the in-process simulator and an
external content-addressed HTTP store (block upload/fetch on the node
endpoint, pins on the cluster endpoint). A threaded stub server ships here
for contract tests.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlparse

import requests

from .blocks import BlockId, BlockKind, MemoryBlockStore, cid_of, verify
from .cluster import ClusterSim
from .errors import BackendUnavailable, IntegrityMismatch, NotFound


@dataclass
class ConnectorConfig:
    backend: str = "sim"  # "sim" | "http"
    cluster_host: str = ""
    cluster_port: int = 0
    node_host: str = ""
    node_port: int = 0
    timeout: float = 5.0

    def __post_init__(self):
        if self.backend not in ("sim", "http"):
            raise ValueError(f"unknown backend {self.backend!r}")
        if self.backend == "http" and not (
            self.cluster_host and self.cluster_port and self.node_host and self.node_port
        ):
            raise ValueError("http backend requires cluster and node endpoints")


class Connector:
    """put/get/has for blocks plus pin/unpin with replication bounds."""

    def put(self, data: bytes, kind: BlockKind = BlockKind.DATA_LEAF) -> BlockId:
        raise NotImplementedError

    def get(self, block_id: BlockId) -> bytes:
        raise NotImplementedError

    def has(self, block_id: BlockId) -> bool:
        raise NotImplementedError

    def pin(self, block_id: BlockId, rf_min: int, rf_max: int,
            data: bytes | None = None, overrides=None) -> list[bytes]:
        """Returns the peer ids the block was allocated to, when known."""
        raise NotImplementedError

    def unpin(self, block_id: BlockId) -> None:
        raise NotImplementedError


class SimConnector(Connector):
    """Delegates to a ClusterSim; bit-identical to direct cluster calls.

    put stages bytes on the local node; pin copies them onto allocated peers.
    """

    def __init__(self, cluster: ClusterSim):
        self.cluster = cluster
        self.local = MemoryBlockStore()

    def put(self, data: bytes, kind: BlockKind = BlockKind.DATA_LEAF) -> BlockId:
        return self.local.put_bytes(data, kind)

    def get(self, block_id: BlockId) -> bytes:
        try:
            return self.cluster.fetch_from_any(block_id)
        except NotFound:
            return self.local.get(block_id)

    def has(self, block_id: BlockId) -> bool:
        return self.cluster.has_live(block_id) or self.local.has(block_id)

    def pin(self, block_id: BlockId, rf_min: int, rf_max: int,
            data: bytes | None = None, overrides=None) -> list[bytes]:
        if data is None and self.local.has(block_id):
            data = self.local.get(block_id)
        entry = self.cluster.pin(block_id, rf_min, rf_max, data=data, overrides=overrides)
        return list(entry.allocations)

    def unpin(self, block_id: BlockId) -> None:
        self.cluster.unpin(block_id)


class HttpConnector(Connector):
    """Talks to a content-addressed HTTP store and pin service."""

    def __init__(self, cfg: ConnectorConfig):
        if cfg.backend != "http":
            raise ValueError("HttpConnector requires an http config")
        self.cfg = cfg
        self.node_url = f"http://{cfg.node_host}:{cfg.node_port}"
        self.cluster_url = f"http://{cfg.cluster_host}:{cfg.cluster_port}"
        self.session = requests.Session()

    def _request(self, method: str, url: str, **kw):
        try:
            return self.session.request(method, url, timeout=self.cfg.timeout, **kw)
        except (requests.Timeout, requests.ConnectionError) as exc:
            raise BackendUnavailable(f"{method} {url}: {exc}") from exc

    def put(self, data: bytes, kind: BlockKind = BlockKind.DATA_LEAF) -> BlockId:
        resp = self._request("PUT", f"{self.node_url}/block", params={"kind": int(kind)}, data=data)
        resp.raise_for_status()
        block_id = BlockId.from_hex(resp.text.strip())
        if not verify(block_id, data):
            raise IntegrityMismatch("server returned id that does not hash the payload")
        return block_id

    def get(self, block_id: BlockId) -> bytes:
        resp = self._request("GET", f"{self.node_url}/block/{block_id.hex()}")
        if resp.status_code == 404:
            raise NotFound(repr(block_id))
        resp.raise_for_status()
        data = resp.content
        if not verify(block_id, data):
            raise IntegrityMismatch(f"bytes for {block_id!r} fail hash check")
        return data

    def has(self, block_id: BlockId) -> bool:
        try:
            self.get(block_id)
            return True
        except NotFound:
            return False

    def pin(self, block_id: BlockId, rf_min: int, rf_max: int,
            data: bytes | None = None, overrides=None) -> None:
        if data is not None:
            self.put(data, block_id.kind)
        resp = self._request(
            "POST",
            f"{self.cluster_url}/pin/{block_id.hex()}",
            params={"rf-min": rf_min, "rf-max": rf_max},
        )
        resp.raise_for_status()
        return []

    def unpin(self, block_id: BlockId) -> None:
        resp = self._request("DELETE", f"{self.cluster_url}/pin/{block_id.hex()}")
        resp.raise_for_status()


class StubStoreServer:
    """In-memory HTTP store + pin service for connector contract tests.

    Records every handled call as (method, path, query) tuples.
    """

    def __init__(self, host: str = "127.0.0.1", port: int = 0):
        self.blocks: dict[str, bytes] = {}
        self.pins: dict[str, tuple[int, int]] = {}
        self.calls: list[tuple[str, str, dict]] = []
        stub = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *a):
                pass

            def _record(self):
                parsed = urlparse(self.path)
                query = {k: v[0] for k, v in parse_qs(parsed.query).items()}
                stub.calls.append((self.command, parsed.path, query))
                return parsed.path, query

            def do_PUT(self):
                path, query = self._record()
                if path != "/block":
                    self.send_error(404)
                    return
                length = int(self.headers.get("Content-Length", 0))
                data = self.rfile.read(length)
                kind = BlockKind(int(query.get("kind", 0)))
                block_id = cid_of(data, kind)
                stub.blocks[block_id.hex()] = data
                body = block_id.hex().encode()
                self.send_response(200)
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)

            def do_GET(self):
                path, _ = self._record()
                if path.startswith("/block/"):
                    data = stub.blocks.get(path.split("/block/", 1)[1])
                    if data is None:
                        self.send_error(404)
                        return
                    self.send_response(200)
                    self.send_header("Content-Length", str(len(data)))
                    self.end_headers()
                    self.wfile.write(data)
                    return
                self.send_error(404)

            def do_POST(self):
                path, query = self._record()
                if path.startswith("/pin/"):
                    hexid = path.split("/pin/", 1)[1]
                    stub.pins[hexid] = (
                        int(query.get("rf-min", 1)),
                        int(query.get("rf-max", 1)),
                    )
                    self.send_response(200)
                    self.send_header("Content-Length", "0")
                    self.end_headers()
                    return
                self.send_error(404)

            def do_DELETE(self):
                path, _ = self._record()
                if path.startswith("/pin/"):
                    stub.pins.pop(path.split("/pin/", 1)[1], None)
                    self.send_response(200)
                    self.send_header("Content-Length", "0")
                    self.end_headers()
                    return
                self.send_error(404)

        self.server = ThreadingHTTPServer((host, port), Handler)
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)

    @property
    def port(self) -> int:
        return self.server.server_address[1]

    def start(self) -> "StubStoreServer":
        self.thread.start()
        return self

    def stop(self) -> None:
        self.server.shutdown()
        self.server.server_close()
