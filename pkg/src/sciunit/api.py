"""Local HTTP API serving graphs, plans, and repeats to the web UI.

Single-user, loopback-oriented: graph views are cached per execution so
expand requests mutate a session view; at most one repeat runs per
execution at a time (409 otherwise).  Responses reuse the library-level
JSON exports byte for byte.
"""

from __future__ import annotations

import json
import logging
import mimetypes
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, urlparse

from .container import Sciunit, canonical_json
from .errors import NotFoundError, SciunitError
from .reuse import build_sub_container, load_provenance, repeat, repeat_partial
from .summarizer import summarize

log = logging.getLogger(__name__)

FALLBACK_INDEX = b"""<!doctype html>
<title>sciunit</title>
<p>No UI bundle installed. Point <code>ui_dir</code> (or SCIUNIT_UI_DIR)
at a built frontend to explore graphs here; the JSON API lives under
<code>/api/</code>.</p>
"""


class ApiState:
    def __init__(self, sciunit: Sciunit, backend: str = "portable"):
        self.sciunit = sciunit
        self.backend = backend
        self.lock = threading.Lock()
        self.summaries: dict = {}
        self.running: set[str] = set()

    def resolve(self, ref: str) -> str:
        return self.sciunit.resolve(ref)

    def summary_for(self, execution_id: str):
        with self.lock:
            view = self.summaries.get(execution_id)
            if view is None:
                graph, _ = load_provenance(self.sciunit, execution_id)
                view = summarize(graph)
                self.summaries[execution_id] = view
            return view


def executions_payload(sciunit: Sciunit) -> dict:
    rows = []
    for i, eid in enumerate(sciunit.executions, 1):
        manifest = sciunit.load_manifest(eid)
        rows.append({
            "ordinal": f"e{i}",
            "execution_id": eid,
            "command": manifest.command,
            "working_dir": manifest.working_dir,
            "created_at": manifest.created_at,
            "annotations": [list(kv) for kv in manifest.annotations],
        })
    return {"sciunit": sciunit.name,
            "annotations": [list(kv) for kv in sciunit.annotations],
            "executions": rows}


class _Handler(BaseHTTPRequestHandler):
    state: ApiState
    ui_dir: str = ""

    # -- plumbing ---------------------------------------------------------

    def log_message(self, fmt, *args):
        log.debug("api: " + fmt, *args)

    def _send(self, status: int, body: bytes, ctype="application/json"):
        self.send_response(status)
        self.send_header("Content-Type", ctype)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _send_json(self, obj, status=200):
        self._send(status, canonical_json(obj).encode())

    def _error(self, status: int, message: str):
        self._send_json({"error": message}, status=status)

    def _body_json(self) -> dict:
        length = int(self.headers.get("Content-Length") or 0)
        raw = self.rfile.read(length) if length else b"{}"
        return json.loads(raw.decode() or "{}")

    # -- routes -----------------------------------------------------------

    def do_GET(self):
        try:
            url = urlparse(self.path)
            parts = [p for p in url.path.split("/") if p]
            if parts[:2] == ["api", "executions"] and len(parts) == 2:
                return self._send_json(executions_payload(self.state.sciunit))
            if parts[:2] == ["api", "graph"] and len(parts) == 3:
                return self._graph(parts[2], parse_qs(url.query))
            if parts[:1] == ["api"]:
                return self._error(404, f"no such endpoint: {url.path}")
            return self._static(url.path)
        except NotFoundError as exc:
            self._error(404, str(exc))
        except SciunitError as exc:
            self._error(400, str(exc))
        except Exception as exc:  # pragma: no cover - last resort
            log.exception("api failure")
            self._error(500, str(exc))

    def do_POST(self):
        try:
            parts = [p for p in urlparse(self.path).path.split("/") if p]
            if parts == ["api", "expand"]:
                return self._expand(self._body_json())
            if parts == ["api", "plan"]:
                return self._plan(self._body_json())
            if parts == ["api", "repeat"]:
                return self._repeat(self._body_json())
            return self._error(404, f"no such endpoint: {self.path}")
        except json.JSONDecodeError as exc:
            self._error(400, f"bad json: {exc}")
        except NotFoundError as exc:
            self._error(404, str(exc))
        except SciunitError as exc:
            self._error(400, str(exc))
        except Exception as exc:  # pragma: no cover
            log.exception("api failure")
            self._error(500, str(exc))

    def _graph(self, ref: str, query: dict):
        execution_id = self.state.resolve(ref)
        view = (query.get("view") or ["summary"])[0]
        if view == "replete":
            graph, _ = load_provenance(self.state.sciunit, execution_id)
            return self._send_json(graph.to_json())
        if view != "summary":
            return self._error(400, f"unknown view {view!r}")
        summary = self.state.summary_for(execution_id)
        with self.state.lock:
            return self._send_json(summary.to_json())

    def _expand(self, body: dict):
        execution_id = self.state.resolve(str(body.get("id", "")))
        node_id = str(body.get("node_id", ""))
        summary = self.state.summary_for(execution_id)
        with self.state.lock:
            if summary.is_visible(node_id) and not summary.expandable(node_id):
                return self._send_json(summary.to_json())  # plain node: unchanged
            summary.expand(node_id)
            return self._send_json(summary.to_json())

    def _plan(self, body: dict):
        execution_id = self.state.resolve(str(body.get("id", "")))
        selected = body.get("selected") or []
        import tempfile

        with tempfile.TemporaryDirectory(prefix="sciunit-plan-") as tmp:
            plan, _ = build_sub_container(set(selected), execution_id,
                                          self.state.sciunit, tmp)
        return self._send_json(plan.to_json())

    def _repeat(self, body: dict):
        execution_id = self.state.resolve(str(body.get("id", "")))
        selected = body.get("selected") or []
        with self.state.lock:
            if execution_id in self.state.running:
                return self._error(409, f"repeat already running for {execution_id}")
            self.state.running.add(execution_id)
        try:
            self.send_response(200)
            self.send_header("Content-Type", "application/x-ndjson")
            self.end_headers()
            self.wfile.write((canonical_json(
                {"event": "started", "execution_id": execution_id,
                 "selected": sorted(selected)}) + "\n").encode())
            self.wfile.flush()
            if selected:
                report = repeat_partial(set(selected), execution_id,
                                        self.state.sciunit,
                                        backend=self.state.backend, verify=True)
            else:
                report = repeat(execution_id, self.state.sciunit,
                                backend=self.state.backend, verify=True)
            self.wfile.write((canonical_json(
                {"event": "report", "report": report.to_json()}) + "\n").encode())
        finally:
            with self.state.lock:
                self.state.running.discard(execution_id)

    def _static(self, path: str):
        if path in ("", "/"):
            path = "/index.html"
        if self.ui_dir:
            base = Path(self.ui_dir).resolve()
            target = (base / path.lstrip("/")).resolve()
            if base in target.parents or target == base:
                if target.is_file():
                    ctype = mimetypes.guess_type(str(target))[0] or "text/plain"
                    return self._send(200, target.read_bytes(), ctype)
        if path == "/index.html":
            return self._send(200, FALLBACK_INDEX, "text/html")
        self._error(404, f"no static file {path}")


class ApiServer:
    """Threaded HTTP server bound to localhost."""

    def __init__(self, sciunit: Sciunit, port: int = 0, ui_dir: str = "",
                 backend: str = "portable", host: str = "127.0.0.1"):
        state = ApiState(sciunit, backend)
        handler = type("BoundHandler", (_Handler,),
                       {"state": state, "ui_dir": ui_dir})
        self.state = state
        self.httpd = ThreadingHTTPServer((host, port), handler)
        self.httpd.daemon_threads = True
        self._thread: threading.Thread | None = None

    @property
    def port(self) -> int:
        return self.httpd.server_address[1]

    def start(self) -> "ApiServer":
        self._thread = threading.Thread(target=self.httpd.serve_forever,
                                        daemon=True)
        self._thread.start()
        return self

    def serve_forever(self):
        self.httpd.serve_forever()

    def shutdown(self):
        self.httpd.shutdown()
        self.httpd.server_close()
        if self._thread:
            self._thread.join(timeout=5)
