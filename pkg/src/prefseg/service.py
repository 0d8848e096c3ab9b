"""HTTP/JSON feedback service: serves live comparisons to the reviewer UI and
accepts Better/Worse verdicts, bridging them into the blocking episode loop.

Design: one engine thread runs the loop; judge_human publishes a comparison
on the bridge and blocks. Clients long-poll GET /api/v1/session/next (up to
30 s per request) and POST verdicts. All mutations funnel through the
bridge's lock, verdicts are idempotent per comparison id, and a client
disconnect never advances the engine: the pending comparison is simply
re-served on reconnect. Auth is a bearer token from PREFSEG_API_TOKEN (unset
= open, for local use).
"""

from __future__ import annotations

import base64
import json
import logging
import mimetypes
import os
import threading
import uuid
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Optional

from .core import ImageRecord, Mask
from .tensor_io import image_to_netpbm_bytes, mask_to_pgm_bytes

logger = logging.getLogger(__name__)

LONG_POLL_CAP_S = 30.0
API_TOKEN_ENV = "PREFSEG_API_TOKEN"


class FeedbackBridge:
    """Rendezvous point between the engine thread and HTTP handlers."""

    def __init__(self, run_id: str = "run"):
        self.run_id = run_id
        self.session_id = uuid.uuid4().hex
        self._lock = threading.Condition()
        self._pending: Optional[dict] = None  # comparison payload awaiting a verdict
        self._verdicts: dict[str, str] = {}  # comparison_id -> "better"|"worse"
        self._counter = 0
        self._status = {"round": 0, "image_id": None, "total_rounds": 0,
                        "total_images": 0, "finished": False}
        self._closed = False

    # --- engine side ----------------------------------------------------------

    def update_status(self, round_index: int, image_id: str, total_rounds: int,
                      total_images: int) -> None:
        with self._lock:
            self._status.update(round=round_index, image_id=image_id,
                                total_rounds=total_rounds, total_images=total_images)

    def finish(self) -> None:
        with self._lock:
            self._status["finished"] = True
            self._closed = True
            self._lock.notify_all()

    def request_verdict(self, image_record: ImageRecord, mask_before: Mask,
                        mask_after: Mask, round_index: int, step_index: int,
                        timeout_s: Optional[float] = None) -> Optional[str]:
        """Publish a comparison and block until its verdict (None on timeout)."""
        with self._lock:
            self._counter += 1
            comparison_id = f"cmp-{self._counter:06d}"
            self._pending = {
                "comparison_id": comparison_id,
                "image_id": image_record.id,
                "image": base64.b64encode(image_to_netpbm_bytes(image_record.image)).decode(),
                "mask_before": base64.b64encode(mask_to_pgm_bytes(mask_before.bits)).decode(),
                "mask_after": base64.b64encode(mask_to_pgm_bytes(mask_after.bits)).decode(),
                "round": round_index,
                "step": step_index,
            }
            self._lock.notify_all()
            got = self._lock.wait_for(lambda: comparison_id in self._verdicts or self._closed,
                                      timeout=timeout_s)
            self._pending = None
            if not got or comparison_id not in self._verdicts:
                return None
            return self._verdicts[comparison_id]

    # --- HTTP side --------------------------------------------------------------

    def next_comparison(self, wait_s: float) -> Optional[dict]:
        deadline_wait = min(max(wait_s, 0.0), LONG_POLL_CAP_S)
        with self._lock:
            self._lock.wait_for(lambda: self._pending is not None or self._closed,
                                timeout=deadline_wait)
            return dict(self._pending) if self._pending else None

    def submit_verdict(self, comparison_id: str, verdict: str) -> tuple[int, dict]:
        if verdict not in ("better", "worse"):
            return 400, {"error": f"verdict must be 'better' or 'worse', got {verdict!r}"}
        with self._lock:
            if comparison_id in self._verdicts:
                return 200, {"comparison_id": comparison_id,
                             "verdict": self._verdicts[comparison_id], "duplicate": True}
            if self._pending is None or self._pending["comparison_id"] != comparison_id:
                return 404, {"error": f"no pending comparison {comparison_id!r}"}
            self._verdicts[comparison_id] = verdict
            self._lock.notify_all()
            return 200, {"comparison_id": comparison_id, "verdict": verdict,
                         "duplicate": False}

    def status(self) -> dict:
        with self._lock:
            return {
                "run_id": self.run_id,
                "session_id": self.session_id,
                "awaiting_verdict": self._pending is not None,
                "verdicts_recorded": len(self._verdicts),
                **self._status,
            }


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    bridge: FeedbackBridge
    token: Optional[str]
    ui_dir: Optional[Path]

    def log_message(self, fmt, *args):  # route through logging, not stderr
        logger.debug("%s " + fmt, self.address_string(), *args)

    def _send_json(self, code: int, doc: dict) -> None:
        body = json.dumps(doc).encode("utf-8")
        self.send_response(code)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(body)

    def _authorized(self) -> bool:
        if not self.token:
            return True
        return self.headers.get("Authorization") == f"Bearer {self.token}"

    def do_OPTIONS(self):
        self.send_response(204)
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        self.send_header("Access-Control-Allow-Headers", "Authorization, Content-Type")
        self.send_header("Content-Length", "0")
        self.end_headers()

    def do_GET(self):
        path, _, query = self.path.partition("?")
        params = dict(kv.split("=", 1) for kv in query.split("&") if "=" in kv)
        if path.startswith("/api/"):
            if not self._authorized():
                return self._send_json(401, {"error": "bad or missing bearer token"})
            if path == "/api/v1/run/status":
                return self._send_json(200, self.bridge.status())
            if path == "/api/v1/session/next":
                session = params.get("session")
                if session and session != self.bridge.session_id:
                    return self._send_json(404, {"error": "unknown session"})
                wait_s = float(params.get("wait", LONG_POLL_CAP_S))
                comparison = self.bridge.next_comparison(wait_s)
                if comparison is None:
                    return self._send_json(200, {"status": "idle"})
                return self._send_json(200, {"status": "awaiting_verdict", **comparison})
            return self._send_json(404, {"error": f"no such endpoint {path}"})
        return self._serve_static(path)

    def do_POST(self):
        path = self.path.partition("?")[0]
        if not self._authorized():
            return self._send_json(401, {"error": "bad or missing bearer token"})
        if path != "/api/v1/session/verdict":
            return self._send_json(404, {"error": f"no such endpoint {path}"})
        try:
            length = int(self.headers.get("Content-Length", 0))
            doc = json.loads(self.rfile.read(length).decode("utf-8"))
            comparison_id = doc["comparison_id"]
            verdict = doc["verdict"]
        except (ValueError, KeyError) as e:
            return self._send_json(400, {"error": f"bad verdict payload: {e}"})
        code, reply = self.bridge.submit_verdict(comparison_id, verdict)
        return self._send_json(code, reply)

    def _serve_static(self, path: str):
        if self.ui_dir is None:
            return self._send_json(404, {"error": "no UI bundled; API lives under /api/v1"})
        rel = path.lstrip("/") or "index.html"
        target = (self.ui_dir / rel).resolve()
        if not str(target).startswith(str(self.ui_dir.resolve())) or not target.is_file():
            return self._send_json(404, {"error": f"not found: {path}"})
        body = target.read_bytes()
        ctype = mimetypes.guess_type(target.name)[0] or "application/octet-stream"
        self.send_response(200)
        self.send_header("Content-Type", ctype)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)


def serve(bridge: FeedbackBridge, bind: str = "127.0.0.1:8765",
          ui_dir: str | Path | None = None,
          token: Optional[str] = None) -> ThreadingHTTPServer:
    """Start the service on `bind`; returns the server (run serve_forever
    yourself or via a thread). Token defaults to the PREFSEG_API_TOKEN env var."""
    host, _, port = bind.partition(":")
    handler = type("BoundHandler", (_Handler,), {
        "bridge": bridge,
        "token": token if token is not None else os.environ.get(API_TOKEN_ENV),
        "ui_dir": Path(ui_dir) if ui_dir else None,
    })
    server = ThreadingHTTPServer((host, int(port or 8765)), handler)
    logger.info("feedback service listening on %s", bind)
    return server
