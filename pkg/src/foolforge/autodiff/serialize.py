"""On-disk formats.

Tensor record (little-endian)::

    b"FFTN" | u32 version | u32 rank | u64 dims[rank] | f64 payload[prod(dims)]

Bundle (checkpoints)::

    b"FFCK" | u32 version | u32 kind_len | kind | u64 header_len | header (JSON)
    | u32 count | count x (u32 name_len | name | tensor record) | sha256[32]

The trailing digest covers every preceding byte.
"""

from __future__ import annotations

import hashlib
import io
import json
import struct
from pathlib import Path

import numpy as np

TENSOR_MAGIC = b"FFTN"
BUNDLE_MAGIC = b"FFCK"
VERSION = 1


class FormatError(ValueError):
    """Wrong magic, unsupported version, or malformed structure."""


class ChecksumError(FormatError):
    """File truncated or corrupted (digest mismatch)."""


def write_tensor(f, array):
    a = np.ascontiguousarray(np.asarray(array, dtype="<f8"))
    f.write(TENSOR_MAGIC)
    f.write(struct.pack("<II", VERSION, a.ndim))
    f.write(struct.pack(f"<{a.ndim}Q", *a.shape))
    f.write(a.tobytes())


def _read_exact(f, n):
    b = f.read(n)
    if len(b) != n:
        raise FormatError(f"unexpected end of data (wanted {n} bytes, got {len(b)})")
    return b


def read_tensor(f):
    magic = _read_exact(f, 4)
    if magic != TENSOR_MAGIC:
        raise FormatError(f"bad tensor magic {magic!r}")
    version, rank = struct.unpack("<II", _read_exact(f, 8))
    if version != VERSION:
        raise FormatError(f"unsupported tensor version {version}")
    dims = struct.unpack(f"<{rank}Q", _read_exact(f, 8 * rank))
    count = int(np.prod(dims)) if rank else 1
    data = np.frombuffer(_read_exact(f, 8 * count), dtype="<f8")
    return data.astype(np.float64).reshape(dims)


def tensor_bytes(array):
    buf = io.BytesIO()
    write_tensor(buf, array)
    return buf.getvalue()


def save_tensor(path, array):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_bytes(tensor_bytes(array))


def load_tensor(path):
    with open(path, "rb") as f:
        return read_tensor(f)


def bundle_bytes(kind, header, tensors):
    buf = io.BytesIO()
    kind_b = kind.encode()
    header_b = json.dumps(header, sort_keys=True, indent=1).encode()
    buf.write(BUNDLE_MAGIC)
    buf.write(struct.pack("<II", VERSION, len(kind_b)))
    buf.write(kind_b)
    buf.write(struct.pack("<Q", len(header_b)))
    buf.write(header_b)
    buf.write(struct.pack("<I", len(tensors)))
    for name, arr in tensors.items():
        nb = name.encode()
        buf.write(struct.pack("<I", len(nb)))
        buf.write(nb)
        write_tensor(buf, arr)
    body = buf.getvalue()
    return body + hashlib.sha256(body).digest()


def save_bundle(path, kind, header, tensors):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_bytes(bundle_bytes(kind, header, tensors))


def load_bundle(path, kind=None):
    """Returns (header dict, {name: array}). Verifies magic, version, digest and kind."""
    raw = Path(path).read_bytes()
    if raw[:4] != BUNDLE_MAGIC:
        raise FormatError(f"{path}: bad magic {raw[:4]!r}")
    if len(raw) < 44 or hashlib.sha256(raw[:-32]).digest() != raw[-32:]:
        raise ChecksumError(f"{path}: checksum mismatch (truncated or corrupted file)")
    f = io.BytesIO(raw[:-32])
    f.read(4)
    version, kind_len = struct.unpack("<II", _read_exact(f, 8))
    if version != VERSION:
        raise FormatError(f"{path}: unsupported bundle version {version}")
    found_kind = _read_exact(f, kind_len).decode()
    if kind is not None and found_kind != kind:
        raise FormatError(f"{path}: expected a {kind!r} bundle, found {found_kind!r}")
    (header_len,) = struct.unpack("<Q", _read_exact(f, 8))
    header = json.loads(_read_exact(f, header_len).decode())
    (count,) = struct.unpack("<I", _read_exact(f, 4))
    tensors = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<I", _read_exact(f, 4))
        name = _read_exact(f, name_len).decode()
        tensors[name] = read_tensor(f)
    return header, tensors


def sha256_file(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
