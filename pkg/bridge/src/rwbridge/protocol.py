"""Server-side framing for the bridge wire protocol (see PROTOCOL.md).

Standalone mirror of the engine's client framing: 4-byte little-endian
header length, UTF-8 JSON header, then raw float32 tensor bytes described
by the header's ``tensors`` array.
"""

from __future__ import annotations

import json
import struct

import numpy as np

_DTYPES = {"<f4": np.dtype("<f4")}


class ProtocolError(ValueError):
    """Malformed message; the connection can keep serving."""


def pack_message(header: dict, tensors: list[np.ndarray] | None = None) -> bytes:
    tensors = tensors or []
    descs, blobs = [], []
    for i, t in enumerate(tensors):
        arr = np.ascontiguousarray(np.asarray(t, dtype="<f4"))
        descs.append({"name": f"t{i}", "shape": list(arr.shape), "dtype": "<f4"})
        blobs.append(arr.tobytes())
    header = dict(header)
    header["tensors"] = descs
    raw = json.dumps(header).encode("utf-8")
    return struct.pack("<I", len(raw)) + raw + b"".join(blobs)


def read_exact(sock, n: int) -> bytes:
    buf = b""
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            raise ConnectionError("peer closed the connection")
        buf += chunk
    return buf


def read_message(sock) -> tuple[dict, list[np.ndarray]]:
    (hlen,) = struct.unpack("<I", read_exact(sock, 4))
    if hlen > 1 << 24:
        raise ProtocolError(f"header length {hlen} is implausible")
    try:
        header = json.loads(read_exact(sock, hlen).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ProtocolError(f"header is not valid JSON: {exc}") from exc
    if not isinstance(header, dict) or "type" not in header:
        raise ProtocolError("header must be a JSON object with a 'type'")
    tensors = []
    for desc in header.get("tensors", []):
        try:
            dt = _DTYPES[desc["dtype"]]
            shape = [int(s) for s in desc["shape"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise ProtocolError(f"bad tensor descriptor {desc!r}") from exc
        count = int(np.prod(shape)) if shape else 1
        raw = read_exact(sock, count * dt.itemsize)
        tensors.append(np.frombuffer(raw, dtype=dt).reshape(shape))
    return header, tensors
