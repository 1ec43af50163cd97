"""Wire format for the prediction service.

Request:  {"shape": [3, H, W], "pixels_b64": <base64 little-endian float32>, "top_k": k}
Response: {"request_id": str, "predictions": [{"label": str, "score": float}, ...]}
"""

from __future__ import annotations

import base64
import json

import numpy as np

ENDPOINT = "/v1/predict"
DEFAULT_TOP_K = 5
RESPONSE_KEYS = frozenset({"request_id", "predictions"})
PREDICTION_KEYS = frozenset({"label", "score"})


class ProtocolError(ValueError):
    pass


def encode_request(image, top_k=DEFAULT_TOP_K):
    x = np.asarray(image, dtype="<f4")
    return json.dumps(
        {"shape": list(x.shape), "pixels_b64": base64.b64encode(x.tobytes()).decode("ascii"), "top_k": int(top_k)},
        sort_keys=True,
    ).encode()


def decode_request(body, expected_shape):
    """Returns (image float64 [3,H,W], top_k). Raises ProtocolError on any malformed field."""
    try:
        msg = json.loads(body)
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ProtocolError(f"body is not valid JSON: {e}") from None
    if not isinstance(msg, dict):
        raise ProtocolError("body must be a JSON object")
    missing = {"shape", "pixels_b64"} - set(msg)
    if missing:
        raise ProtocolError(f"missing fields: {sorted(missing)}")
    shape = msg["shape"]
    if not isinstance(shape, list) or not all(isinstance(s, int) for s in shape) or tuple(shape) != tuple(expected_shape):
        raise ProtocolError(f"shape must be {list(expected_shape)}, got {shape!r}")
    top_k = msg.get("top_k", DEFAULT_TOP_K)
    if not isinstance(top_k, int) or isinstance(top_k, bool) or top_k < 1:
        raise ProtocolError(f"top_k must be a positive integer, got {top_k!r}")
    try:
        raw = base64.b64decode(msg["pixels_b64"], validate=True)
    except (TypeError, ValueError) as e:
        raise ProtocolError(f"pixels_b64 is not valid base64: {e}") from None
    n = int(np.prod(shape))
    if len(raw) != 4 * n:
        raise ProtocolError(f"pixels_b64 holds {len(raw)} bytes, expected {4 * n}")
    x = np.frombuffer(raw, dtype="<f4").astype(np.float64).reshape(shape)
    if not np.isfinite(x).all() or x.min() < 0 or x.max() > 1:
        raise ProtocolError("pixels must be finite and lie in [0, 1]")
    return x, top_k


def encode_response(request_id, labels, scores, top_k):
    order = np.argsort(-np.asarray(scores), kind="stable")[: min(top_k, len(labels))]
    preds = [{"label": labels[i], "score": float(scores[i])} for i in order]
    return json.dumps({"request_id": request_id, "predictions": preds}, sort_keys=True).encode()


def decode_response(body):
    msg = json.loads(body)
    if set(msg) != RESPONSE_KEYS or any(set(p) != PREDICTION_KEYS for p in msg["predictions"]):
        raise ProtocolError(f"unexpected response schema: {sorted(msg)}")
    return msg["request_id"], [(p["label"], p["score"]) for p in msg["predictions"]]
