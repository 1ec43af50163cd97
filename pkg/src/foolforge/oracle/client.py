"""HTTP client for the prediction service, with timeout and retry budget."""

from __future__ import annotations

import json
import socket
import urllib.error
import urllib.request

import numpy as np

from foolforge.oracle.protocol import DEFAULT_TOP_K, ENDPOINT, decode_response, encode_request
from foolforge.victims.data import CLASS_NAMES


class OracleError(RuntimeError):
    pass


class OracleClient:
    def __init__(self, endpoint, timeout=10.0, retries=2, labels=CLASS_NAMES):
        if timeout <= 0:
            raise ValueError("timeout must be positive")
        if retries < 0:
            raise ValueError("retries must be non-negative")
        self.endpoint = endpoint.rstrip("/")
        self.timeout = timeout
        self.retries = retries
        self.labels = tuple(labels)

    def _post(self, body):
        req = urllib.request.Request(
            self.endpoint + ENDPOINT, data=body, headers={"Content-Type": "application/json"}, method="POST"
        )
        last = None
        for _ in range(self.retries + 1):
            try:
                with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                    return resp.read()
            except urllib.error.HTTPError as e:
                detail = e.read().decode(errors="replace")
                try:
                    detail = json.loads(detail)["error"]
                except (ValueError, KeyError, TypeError):
                    pass
                raise OracleError(f"oracle rejected request ({e.code}): {detail}") from None
            except (urllib.error.URLError, socket.timeout, ConnectionError) as e:
                last = e
        raise OracleError(f"oracle unreachable after {self.retries + 1} attempts: {last}")

    def query(self, image, top_k=DEFAULT_TOP_K):
        """Top-k (label, score) pairs for one [3,H,W] image, scores descending."""
        x = np.asarray(image, dtype=np.float64)
        if x.size and (x.min() < 0 or x.max() > 1):
            raise ValueError("query: image must lie in [0, 1]")
        _, preds = decode_response(self._post(encode_request(x, top_k)))
        return preds

    def top1(self, images):
        """Top-1 class indices for a batch [N,3,H,W]."""
        return np.array([self.labels.index(self.query(x, top_k=1)[0][0]) for x in np.asarray(images)])
