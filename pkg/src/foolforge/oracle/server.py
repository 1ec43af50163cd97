"""Black-box prediction service: labels and scores only."""

from __future__ import annotations

import json
import logging
import threading
import time
import uuid
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from foolforge.oracle.protocol import ENDPOINT, ProtocolError, decode_request, encode_response
from foolforge.victims.zoo import predict

log = logging.getLogger(__name__)
MAX_BODY = 64 * 1024 * 1024


class OracleStartupError(RuntimeError):
    pass


class RequestLog:
    def __init__(self):
        self._lock = threading.Lock()
        self.count = 0
        self.errors = 0
        self.total_latency = 0.0

    def record(self, latency, ok):
        with self._lock:
            self.count += 1
            self.errors += not ok
            self.total_latency += latency


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server_version = "foolforge-oracle"
    sys_version = ""

    def log_message(self, fmt, *args):
        log.debug("%s " + fmt, self.address_string(), *args)

    def _send(self, status, body):
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _error(self, status, message):
        self._send(status, json.dumps({"error": message}, sort_keys=True).encode())

    def do_GET(self):  # noqa: N802
        self._error(404, f"only POST {ENDPOINT} is served")

    def do_POST(self):  # noqa: N802
        start = time.perf_counter()
        ok = False
        try:
            if self.path != ENDPOINT:
                self._error(404, f"unknown endpoint {self.path}")
                return
            length = int(self.headers.get("Content-Length") or 0)
            if length <= 0 or length > MAX_BODY:
                self._error(400, "missing or oversized request body")
                return
            body = self.rfile.read(length)
            oracle = self.server.oracle
            try:
                image, top_k = decode_request(body, oracle.classifier.spec.input_shape)
            except ProtocolError as e:
                self._error(400, str(e))
                return
            scores = predict(oracle.classifier, image[None])[0]
            self._send(200, encode_response(uuid.uuid4().hex, list(oracle.classifier.labels), scores, top_k))
            ok = True
        finally:
            self.server.oracle.requests.record(time.perf_counter() - start, ok)


class _HTTPServer(ThreadingHTTPServer):
    request_queue_size = 128  # the default backlog of 5 resets bursts of concurrent clients
    daemon_threads = False  # server_close waits for in-flight requests


class OracleServer:
    """Serves one frozen classifier over HTTP; ``start``/``stop`` or use as a context manager."""

    def __init__(self, classifier, host="127.0.0.1", port=0):
        self.classifier = classifier
        self.requests = RequestLog()
        try:
            self._httpd = _HTTPServer((host, port), _Handler)
        except OSError as e:
            raise OracleStartupError(f"cannot bind {host}:{port}: {e}") from e
        self._httpd.oracle = self
        self._thread = None

    @property
    def address(self):
        host, port = self._httpd.server_address[:2]
        return host, port

    @property
    def url(self):
        host, port = self.address
        return f"http://{host}:{port}"

    def start(self):
        self._thread = threading.Thread(target=self._httpd.serve_forever, name="oracle", daemon=True)
        self._thread.start()
        return self

    def stop(self):
        if self._thread is not None:
            self._httpd.shutdown()
            self._thread.join()
            self._thread = None
        self._httpd.server_close()

    def serve_forever(self):
        """Serve on the calling thread until ``shutdown`` or KeyboardInterrupt."""
        try:
            self._httpd.serve_forever()
        except KeyboardInterrupt:
            pass
        finally:
            self._httpd.server_close()

    def shutdown(self):
        self._httpd.shutdown()

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()


def serve(classifier, host="127.0.0.1", port=0):
    return OracleServer(classifier, host, port).start()
