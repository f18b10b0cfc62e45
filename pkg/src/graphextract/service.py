"""Wire protocol for a served oracle.

POST /query with ``{"response_type": ..., "nodes": [...], "features":
[[...]], "edges": [[u,v], ...]}`` answers ``{"dim": m, "order": [...],
"vectors": [[...]]}``; errors come back as ``{"error": {"code": int,
"message": str}}``.  GET /meta reports ``num_classes``, ``embedding_size``
and ``budget_remaining``.  Floats travel as JSON repr, which round-trips
64-bit values exactly.
"""

from __future__ import annotations

import json
import threading
import urllib.error
import urllib.request
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np

from graphextract.graphs import Graph
from graphextract.oracle import (
    RESPONSE_TYPES,
    BudgetExceededError,
    Oracle,
    OracleError,
    QueryResponse,
)

MAX_REQUEST_BYTES = 64 * 1024 * 1024


class RemoteQueryError(OracleError):
    def __init__(self, code, message):
        self.code = int(code)
        self.message = message
        super().__init__("[%d] %s" % (code, message))


def _validate_request(doc, oracle: Oracle):
    if not isinstance(doc, dict):
        raise RemoteQueryError(400, "request body must be a JSON object")
    for key in ("response_type", "nodes", "features"):
        if key not in doc:
            raise RemoteQueryError(400, "missing field %r" % key)
    rt = doc["response_type"]
    if rt not in RESPONSE_TYPES:
        raise RemoteQueryError(400, "unknown response_type %r" % rt)
    if rt != oracle.config.response_type:
        raise RemoteQueryError(400, "this oracle serves %r responses"
                               % oracle.config.response_type)
    try:
        features = np.asarray(doc["features"], dtype=np.float64)
        edges = np.asarray(doc.get("edges", []), dtype=np.int64).reshape(-1, 2)
        nodes = np.asarray(doc["nodes"], dtype=np.int64)
    except (TypeError, ValueError) as exc:
        raise RemoteQueryError(400, "malformed request: %s" % exc)
    if features.ndim != 2:
        raise RemoteQueryError(400, "features must be a 2-d matrix")
    try:
        graph = Graph(features, edges, class_count=oracle.num_classes)
    except ValueError as exc:
        raise RemoteQueryError(400, str(exc))
    if nodes.size == 0:
        raise RemoteQueryError(400, "empty node list")
    if nodes.min() < 0 or nodes.max() >= graph.n:
        raise RemoteQueryError(400, "node id out of range")
    return graph, nodes


def _make_handler(oracle: Oracle, max_request_bytes):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, *args):  # keep the server quiet
            pass

        def _send_json(self, status, doc):
            body = json.dumps(doc).encode()
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def _send_error_doc(self, code, message):
            self._send_json(code, {"error": {"code": code, "message": message}})

        def do_GET(self):
            if self.path != "/meta":
                self._send_error_doc(404, "unknown path %r" % self.path)
                return
            self._send_json(200, oracle.meta())

        def do_POST(self):
            if self.path != "/query":
                self._send_error_doc(404, "unknown path %r" % self.path)
                return
            length = int(self.headers.get("Content-Length", 0))
            if length > max_request_bytes:
                self._send_error_doc(413, "request of %d bytes exceeds limit %d"
                                     % (length, max_request_bytes))
                return
            raw = self.rfile.read(length)
            try:
                doc = json.loads(raw)
            except json.JSONDecodeError as exc:
                self._send_error_doc(400, "invalid JSON: %s" % exc)
                return
            try:
                graph, nodes = _validate_request(doc, oracle)
                resp = oracle.respond(graph, nodes)
            except RemoteQueryError as exc:
                self._send_error_doc(exc.code, exc.message)
                return
            except BudgetExceededError as exc:
                self._send_error_doc(429, str(exc))
                return
            except OracleError as exc:
                self._send_error_doc(400, str(exc))
                return
            except Exception as exc:  # pragma: no cover - defensive
                self._send_error_doc(500, "internal error: %s" % exc)
                return
            self._send_json(200, {"dim": resp.dim,
                                  "order": [int(v) for v in resp.node_order],
                                  "vectors": [[float(x) for x in row]
                                              for row in resp.matrix]})

    return Handler


class OracleServer:
    """Threaded HTTP server wrapping one oracle; context-managed."""

    def __init__(self, oracle: Oracle, port=0, host="127.0.0.1",
                 max_request_bytes=MAX_REQUEST_BYTES):
        handler = _make_handler(oracle, max_request_bytes)
        self._httpd = ThreadingHTTPServer((host, port), handler)
        self.host = host
        self.port = self._httpd.server_address[1]
        self._thread = None

    @property
    def address(self):
        return "http://%s:%d" % (self.host, self.port)

    def start(self):
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()
        return self

    def serve_forever(self):
        self._httpd.serve_forever()

    def shutdown(self):
        self._httpd.shutdown()
        self._httpd.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.shutdown()


def serve(oracle: Oracle, port, host="127.0.0.1", background=False) -> OracleServer:
    """Expose ``oracle`` over the wire protocol on ``port``."""
    server = OracleServer(oracle, port=port, host=host)
    if background:
        server.start()
    return server


def _post_json(address, path, doc, timeout=600):
    req = urllib.request.Request(address.rstrip("/") + path,
                                 data=json.dumps(doc).encode(),
                                 headers={"Content-Type": "application/json"})
    try:
        with urllib.request.urlopen(req, timeout=timeout) as fh:
            return json.loads(fh.read())
    except urllib.error.HTTPError as exc:
        body = exc.read()
        try:
            err = json.loads(body)["error"]
        except Exception:
            raise RemoteQueryError(exc.code, body.decode(errors="replace"))
        if exc.code == 429:
            raise RemoteQueryError(429, err["message"])
        raise RemoteQueryError(err["code"], err["message"])


def query_remote(address, request: dict) -> QueryResponse:
    """Round-trip one /query request; numerically identical to an
    in-process respond() on the same oracle."""
    doc = _post_json(address, "/query", request)
    return QueryResponse(request["response_type"],
                         np.array(doc["vectors"], dtype=np.float64),
                         np.array(doc["order"], dtype=np.int64))


def fetch_meta(address, timeout=60) -> dict:
    with urllib.request.urlopen(address.rstrip("/") + "/meta", timeout=timeout) as fh:
        return json.loads(fh.read())


def graph_to_request(graph: Graph, nodes, response_type) -> dict:
    """Serialize an adversary-side query graph into the wire format."""
    return {"response_type": response_type,
            "nodes": [int(v) for v in np.asarray(nodes)],
            "features": [[float(x) for x in row] for row in graph.features],
            "edges": [[int(u), int(v)] for u, v in graph.edges]}
