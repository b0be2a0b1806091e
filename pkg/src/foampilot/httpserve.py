"""HTTP face of the tool server and session, for the browser console.

Endpoints:
  POST /rpc         one protocol envelope per request, same codec as stdio
  GET  /events      server-sent events; resume with ?after=<id> or the
                    Last-Event-ID header; ?limit=<n> closes after n events
  GET  /transcript  session turns so far, as a JSON array
  POST /prompt      run one post-processing turn; turns are serialized
  GET  /files/<rel> raw bytes of a file under the case root

Runs on the standard-library threading server; one thread per connection.
"""

from __future__ import annotations

import json
import mimetypes
import queue
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, unquote, urlparse

from .casemodel import CaseLayout
from .events import EventBus
from .mcp import McpError, McpServer
from .postclient import (
    NoCodeBlock,
    NoDataAvailable,
    NoToolSelected,
    PostClient,
    ScriptResult,
    SelectionViolation,
)

_PROMPT_ERRORS = (NoToolSelected, SelectionViolation, NoCodeBlock,
                  NoDataAvailable, McpError)


class _AppServer(ThreadingHTTPServer):
    daemon_threads = True
    app: "ConsoleServer"


class ConsoleServer:
    """Binds the protocol server, event bus and session to HTTP."""

    def __init__(self, mcp_server: McpServer, bus: EventBus,
                 case: CaseLayout, post_client: PostClient | None = None,
                 host: str = "127.0.0.1", port: int = 0):
        self.mcp_server = mcp_server
        self.bus = bus
        self.case = case
        self.post_client = post_client
        self.stopping = threading.Event()
        self.prompt_lock = threading.Lock()
        self.httpd = _AppServer((host, port), _Handler)
        self.httpd.app = self
        self.host, self.port = self.httpd.server_address[:2]
        self._thread: threading.Thread | None = None

    def url(self, path: str = "/") -> str:
        return f"http://{self.host}:{self.port}{path}"

    def start(self) -> None:
        self._thread = threading.Thread(target=self.httpd.serve_forever,
                                        daemon=True)
        self._thread.start()

    def stop(self) -> None:
        self.stopping.set()
        self.httpd.shutdown()
        self.httpd.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)

    def serve_until(self, stop_event: threading.Event) -> None:
        """Foreground loop for the command line; returns when signalled."""
        self.start()
        stop_event.wait()
        self.stop()

    def __enter__(self) -> "ConsoleServer":
        self.start()
        return self

    def __exit__(self, *exc) -> None:
        self.stop()


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"

    @property
    def app(self) -> ConsoleServer:
        return self.server.app  # type: ignore[attr-defined]

    def log_message(self, format, *args):  # noqa: A002 - stdlib signature
        pass

    def end_headers(self):
        # the web console may be served from a different origin
        self.send_header("Access-Control-Allow-Origin", "*")
        super().end_headers()

    # -- helpers -------------------------------------------------------------

    def _body(self) -> bytes:
        length = int(self.headers.get("Content-Length") or 0)
        return self.rfile.read(length) if length else b""

    def _send_json(self, payload, status: int = 200) -> None:
        body = json.dumps(payload, sort_keys=True).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _send_empty(self, status: int) -> None:
        self.send_response(status)
        self.send_header("Content-Length", "0")
        self.end_headers()

    # -- routing -------------------------------------------------------------

    def do_POST(self):
        url = urlparse(self.path)
        if url.path == "/rpc":
            self._handle_rpc()
        elif url.path == "/prompt":
            self._handle_prompt()
        else:
            self._send_json({"error": f"no such endpoint: {url.path}"}, 404)

    def do_GET(self):
        url = urlparse(self.path)
        if url.path == "/events":
            self._handle_events(parse_qs(url.query))
        elif url.path == "/transcript":
            self._handle_transcript()
        elif url.path.startswith("/files/"):
            self._handle_file(unquote(url.path[len("/files/"):]))
        else:
            self._send_json({"error": f"no such endpoint: {url.path}"}, 404)

    # -- endpoints -----------------------------------------------------------

    def _handle_rpc(self):
        line = self._body().decode(errors="replace")
        reply = self.app.mcp_server.handle_line(line)
        if reply is None:
            self._send_empty(204)
            return
        body = reply.encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _handle_events(self, query: dict):
        after = 0
        header_cursor = self.headers.get("Last-Event-ID")
        if header_cursor is not None:
            after = int(header_cursor)
        if "after" in query:
            after = int(query["after"][0])
        limit = int(query["limit"][0]) if "limit" in query else None

        self.send_response(200)
        self.send_header("Content-Type", "text/event-stream")
        self.send_header("Cache-Control", "no-cache")
        self.end_headers()

        inbox: queue.SimpleQueue = queue.SimpleQueue()
        self.app.bus.subscribe(inbox.put)
        try:
            sent = 0
            last_id = after
            for event in self.app.bus.replay(after):
                self._write_event(event)
                last_id = event.id
                sent += 1
                if limit is not None and sent >= limit:
                    return
            while not self.app.stopping.is_set():
                try:
                    event = inbox.get(timeout=0.2)
                except queue.Empty:
                    continue
                if event.id <= last_id:
                    continue
                self._write_event(event)
                last_id = event.id
                sent += 1
                if limit is not None and sent >= limit:
                    return
        except (BrokenPipeError, ConnectionResetError):
            pass
        finally:
            self.app.bus.unsubscribe(inbox.put)
            self.close_connection = True

    def _write_event(self, event) -> None:
        data = json.dumps(event.to_json(), sort_keys=True)
        self.wfile.write(f"id: {event.id}\ndata: {data}\n\n".encode())
        self.wfile.flush()

    def _handle_transcript(self):
        client = self.app.post_client
        turns = [] if client is None else [
            turn.to_json() for turn in client.context.turns]
        self._send_json(turns)

    def _handle_prompt(self):
        client = self.app.post_client
        if client is None:
            self._send_json({"error": "no session is configured"}, 503)
            return
        try:
            payload = json.loads(self._body().decode() or "{}")
        except json.JSONDecodeError as exc:
            self._send_json({"error": f"body is not JSON: {exc}"}, 400)
            return
        text = str(payload.get("text", "")).strip()
        if not text:
            self._send_json({"error": "empty prompt"}, 400)
            return
        with self.app.prompt_lock:
            try:
                outcome = client.run_turn(text)
            except _PROMPT_ERRORS as exc:
                self._send_json({"error": str(exc)})
                return
        if isinstance(outcome, ScriptResult):
            self._send_json({
                "kind": "script",
                "path": outcome.path,
                "warnings": list(outcome.warnings),
                "executed": outcome.executed,
                "exit_code": outcome.exit_code,
            })
        else:
            self._send_json({"kind": "turn", **outcome.to_json()})

    def _handle_file(self, relative: str):
        root = self.app.case.root.resolve()
        target = (root / relative).resolve()
        if root not in target.parents and target != root:
            self._send_json({"error": "path escapes the case"}, 403)
            return
        if not target.is_file():
            self._send_json({"error": f"no such file: {relative}"}, 404)
            return
        content = target.read_bytes()
        kind = mimetypes.guess_type(target.name)[0] or "text/plain"
        self.send_response(200)
        self.send_header("Content-Type", kind)
        self.send_header("Content-Length", str(len(content)))
        self.end_headers()
        self.wfile.write(content)
