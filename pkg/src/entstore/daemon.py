"""Community node daemon and the centralized discovery server.

The daemon serves worker repair requests over HTTP (wire format from the
repair module), answers health checks, and registers itself with the
discovery server. The discovery server keeps the peer-to-address map and
drops entries that fail its periodic health probe.
"""

from __future__ import annotations

import json
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlparse

import requests

from .repair import (
    RepairEnv,
    collaborative_repair,
    decode_repair_request,
    encode_repair_response,
    worker_repair,
)


class DiscoveryServer:
    """Registry of community nodes with periodic health checks."""

    def __init__(self, host: str = "127.0.0.1", port: int = 0, interval: float = 5.0):
        self.peers: dict[str, str] = {}
        self.healthy: dict[str, bool] = {}
        self.interval = interval
        server = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *a):
                pass

            def do_POST(self):
                parsed = urlparse(self.path)
                if parsed.path == "/register":
                    q = {k: v[0] for k, v in parse_qs(parsed.query).items()}
                    peer, address = q.get("peer"), q.get("address")
                    if peer and address:
                        server.peers[peer] = address
                        server.healthy[peer] = True
                        self.send_response(200)
                        self.send_header("Content-Length", "0")
                        self.end_headers()
                        return
                self.send_error(400)

            def do_GET(self):
                if urlparse(self.path).path == "/peers":
                    body = json.dumps(
                        [
                            {"peer": p, "address": a}
                            for p, a in sorted(server.peers.items())
                            if server.healthy.get(p)
                        ]
                    ).encode()
                    self.send_response(200)
                    self.send_header("Content-Type", "application/json")
                    self.send_header("Content-Length", str(len(body)))
                    self.end_headers()
                    self.wfile.write(body)
                    return
                self.send_error(404)

        self.http = ThreadingHTTPServer((host, port), Handler)
        self._serve_thread = threading.Thread(target=self.http.serve_forever, daemon=True)
        self._health_thread = threading.Thread(target=self._health_loop, daemon=True)
        self._stop = threading.Event()

    @property
    def port(self) -> int:
        return self.http.server_address[1]

    def start(self) -> "DiscoveryServer":
        self._serve_thread.start()
        self._health_thread.start()
        return self

    def stop(self) -> None:
        self._stop.set()
        self.http.shutdown()
        self.http.server_close()

    def _health_loop(self) -> None:
        while not self._stop.wait(self.interval):
            self.health_tick()

    def health_tick(self) -> None:
        for peer, address in list(self.peers.items()):
            try:
                resp = requests.get(f"{address}/health", timeout=2.0)
                self.healthy[peer] = resp.status_code == 200
            except requests.RequestException:
                self.healthy[peer] = False


class CommunityDaemon:
    """One community node: health endpoint plus the repair-worker service."""

    def __init__(
        self,
        peer_id: bytes,
        source,
        host: str = "127.0.0.1",
        port: int = 0,
        discovery_url: str | None = None,
    ):
        self.peer_id = peer_id
        self.source = source
        self.discovery_url = discovery_url
        daemon = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *a):
                pass

            def do_GET(self):
                if urlparse(self.path).path == "/health":
                    self.send_response(200)
                    self.send_header("Content-Length", "2")
                    self.end_headers()
                    self.wfile.write(b"ok")
                    return
                self.send_error(404)

            def do_POST(self):
                if urlparse(self.path).path == "/repair":
                    length = int(self.headers.get("Content-Length", 0))
                    request = self.rfile.read(length)
                    meta_id, positions, depth = decode_repair_request(request)
                    items, _ = worker_repair(
                        daemon.source,
                        meta_id,
                        positions,
                        depth,
                        label=daemon.peer_id.hex()[:8],
                    )
                    body = encode_repair_response(items)
                    self.send_response(200)
                    self.send_header("Content-Length", str(len(body)))
                    self.end_headers()
                    self.wfile.write(body)
                    return
                self.send_error(404)

        self.http = ThreadingHTTPServer((host, port), Handler)
        self._thread = threading.Thread(target=self.http.serve_forever, daemon=True)

    @property
    def address(self) -> str:
        host, port = self.http.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> "CommunityDaemon":
        self._thread.start()
        if self.discovery_url:
            self.register()
        return self

    def register(self) -> None:
        requests.post(
            f"{self.discovery_url}/register",
            params={"peer": self.peer_id.hex(), "address": self.address},
            timeout=5.0,
        )

    def stop(self) -> None:
        self.http.shutdown()
        self.http.server_close()


class HttpRepairEnv(RepairEnv):
    """Coordinator environment over HTTP peers and an external block store."""

    def __init__(self, connector, discovery_url: str, events: list | None = None):
        self.connector = connector
        self.discovery_url = discovery_url
        self.events = events if events is not None else []

    def source(self):
        return self.connector

    def discovery_peers(self):
        resp = requests.get(f"{self.discovery_url}/peers", timeout=5.0)
        resp.raise_for_status()
        return [(bytes.fromhex(e["peer"]), e["address"]) for e in resp.json()]

    def dispatch(self, peer, request: bytes) -> bytes:
        _, address = peer
        resp = requests.post(f"{address}/repair", data=request, timeout=600.0)
        resp.raise_for_status()
        return resp.content

    def pin(self, block_id, rf, data):
        self.connector.pin(block_id, rf, rf, data=data)

    def log(self, event, **payload):
        self.events.append({"time": time.time(), "event": event, **payload})


def run_collaborative_over_http(
    connector, discovery_url: str, meta_id, peer_budget: int, depth: int | None,
    upload_recovery: bool = True,
):
    env = HttpRepairEnv(connector, discovery_url)
    return collaborative_repair(
        env, meta_id, peer_budget, depth, upload_recovery=upload_recovery
    )
