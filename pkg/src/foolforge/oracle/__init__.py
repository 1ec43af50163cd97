"""Local black-box prediction service and its client."""

from foolforge.oracle.client import OracleClient, OracleError
from foolforge.oracle.protocol import (
    ENDPOINT,
    ProtocolError,
    decode_request,
    decode_response,
    encode_request,
    encode_response,
)
from foolforge.oracle.server import OracleServer, OracleStartupError, serve

__all__ = [
    "ENDPOINT",
    "OracleClient",
    "OracleError",
    "OracleServer",
    "OracleStartupError",
    "ProtocolError",
    "decode_request",
    "decode_response",
    "encode_request",
    "encode_response",
    "serve",
]
