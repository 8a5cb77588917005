"""Client side of the out-of-process denoiser/codec/depth wire protocol.

Framing (both directions): a 4-byte little-endian uint32 header length, a
UTF-8 JSON header, then the raw bytes of each tensor listed in the header's
``tensors`` array (row-major, little-endian, float32 unless stated).  One
request is answered by exactly one response carrying the same ``id``.

Request types: HELLO, ENCODE, DECODE, EPS, DEPTH_INIT, DEPTH_REFINE,
INVERT_TOKEN.  Errors come back as {"type": "ERROR", "code", "message"}
and the connection stays open.  See PROTOCOL.md for byte-level examples.
"""

from __future__ import annotations

import json
import socket
import struct

import numpy as np

from .diffusion import AlphaSchedule, DenoiserInput, LatentGrid, _is_fan_view
from .geometry import ViewSpec

_DTYPES = {"<f4": np.dtype("<f4"), "<f8": np.dtype("<f8"), "u1": np.dtype("u1")}


class BridgeError(RuntimeError):
    """Transport failure or an ERROR response from the backend."""


def pack_message(header: dict, tensors: list[np.ndarray] | None = None) -> bytes:
    tensors = tensors or []
    descs = []
    blobs = []
    for i, t in enumerate(tensors):
        arr = np.ascontiguousarray(t, dtype=np.dtype("<f4") if t.dtype.kind == "f"
                                   else t.dtype)
        if arr.dtype != np.dtype("<f4"):
            arr = arr.astype("<f4")
        descs.append({"name": f"t{i}", "shape": list(arr.shape), "dtype": "<f4"})
        blobs.append(arr.tobytes())
    header = dict(header)
    header["tensors"] = descs
    raw = json.dumps(header).encode("utf-8")
    return struct.pack("<I", len(raw)) + raw + b"".join(blobs)


def _read_exact(sock, n: int) -> bytes:
    buf = b""
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            raise BridgeError("connection closed mid-message")
        buf += chunk
    return buf


def read_message(sock) -> tuple[dict, list[np.ndarray]]:
    (hlen,) = struct.unpack("<I", _read_exact(sock, 4))
    header = json.loads(_read_exact(sock, hlen).decode("utf-8"))
    tensors = []
    for desc in header.get("tensors", []):
        dt = _DTYPES[desc["dtype"]]
        count = int(np.prod(desc["shape"])) if desc["shape"] else 1
        raw = _read_exact(sock, count * dt.itemsize)
        tensors.append(np.frombuffer(raw, dtype=dt).reshape(desc["shape"]))
    return header, tensors


def view_context(view: ViewSpec | None, scale: int) -> dict | None:
    """Serializable geometry context for a denoiser request.

    Ring-fan views travel as (yaw, fov); the equirect band as its latent
    dimensions; anything else as the full pose + intrinsics.
    """
    if view is None:
        return None
    if view.kind == "equirect":
        return {
            "kind": "band",
            "width": view.width // scale,
            "height": view.height // scale,
            "lat_min": view.lat_band[0],
            "lat_max": view.lat_band[1],
        }
    ctx = _is_fan_view(view)
    if ctx is not None:
        yaw, fov_deg = ctx
        return {
            "kind": "fan",
            "yaw": yaw,
            "fov_deg": fov_deg,
            "size": view.width // scale,
            "scale": scale,
        }
    intr = view.intrinsics
    return {
        "kind": "free",
        "rotation": [float(x) for x in view.pose.rotation.reshape(-1)],
        "position": [float(x) for x in view.pose.position],
        "fx": intr.fx, "fy": intr.fy, "cx": intr.cx, "cy": intr.cy,
        "width": intr.width, "height": intr.height,
    }


class BridgeConnection:
    def __init__(self, address: str, timeout: float = 60.0):
        host, _, port = address.rpartition(":")
        if not host or not port.isdigit():
            raise BridgeError(f"bridge address must be host:port, got {address!r}")
        try:
            self.sock = socket.create_connection((host, int(port)), timeout=timeout)
        except OSError as exc:
            raise BridgeError(f"cannot connect to bridge at {address}: {exc}") from exc
        self._next_id = 0

    def close(self):
        try:
            self.sock.close()
        except OSError:
            pass

    def request(self, header: dict, tensors: list[np.ndarray] | None = None
                ) -> tuple[dict, list[np.ndarray]]:
        self._next_id += 1
        header = dict(header)
        header["id"] = self._next_id
        try:
            self.sock.sendall(pack_message(header, tensors))
            resp, blobs = read_message(self.sock)
        except (OSError, BridgeError) as exc:
            raise BridgeError(
                f"bridge request {header['type']} id={header['id']} failed: {exc}"
            ) from exc
        if resp.get("id") != header["id"]:
            raise BridgeError(
                f"bridge answered id={resp.get('id')} to request id={header['id']}")
        if resp.get("type") == "ERROR":
            raise BridgeError(
                f"bridge error {resp.get('code', '?')}: {resp.get('message', '')}")
        return resp, blobs


class BridgeCodec:
    def __init__(self, conn: BridgeConnection, hello: dict):
        self._conn = conn
        self.scale = int(hello["scale"])
        self.channels = int(hello["channels"])

    def encode(self, image: np.ndarray) -> LatentGrid:
        _, blobs = self._conn.request(
            {"type": "ENCODE"}, [np.asarray(image, np.float32)])
        return LatentGrid(blobs[0].astype(np.float32), self.scale)

    def decode(self, latents: LatentGrid) -> np.ndarray:
        _, blobs = self._conn.request(
            {"type": "DECODE"}, [np.asarray(latents.values, np.float32)])
        return blobs[0].astype(np.float32)


class BridgeDenoiser:
    def __init__(self, conn: BridgeConnection, hello: dict):
        self._conn = conn
        self.channels = int(hello["channels"])
        self.latent_size = int(hello["latent_size"])
        self.scale = int(hello["scale"])

    def predict_epsilon(self, inp: DenoiserInput) -> LatentGrid:
        header = {
            "type": "EPS",
            "t": int(inp.t),
            "abar": float(inp.abar),
            "prompt": inp.prompt,
            "view": view_context(inp.view, inp.latents.scale),
            "window": list(inp.window_origin) if inp.window_origin else None,
        }
        _, blobs = self._conn.request(header, [
            np.asarray(inp.latents.values, np.float32),
            np.asarray(inp.reference.values, np.float32),
            np.asarray(inp.mask, np.float32),
        ])
        return LatentGrid(blobs[0].astype(np.float32), inp.latents.scale)


class BridgePredictor:
    def __init__(self, conn: BridgeConnection):
        self._conn = conn

    def predict_initial(self, image, view=None):
        header = {"type": "DEPTH_INIT", "view": view_context(view, 1)}
        _, blobs = self._conn.request(header, [np.asarray(image, np.float32)])
        return blobs[0].astype(np.float64)

    def refine(self, depth, anchor_depth, anchor_mask, view=None):
        header = {"type": "DEPTH_REFINE", "view": view_context(view, 1)}
        _, blobs = self._conn.request(header, [
            np.asarray(depth, np.float32),
            np.asarray(anchor_depth, np.float32),
            np.asarray(anchor_mask, np.float32),
        ])
        return blobs[0].astype(np.float64)


class BridgeSession:
    """Handshaken bundle of denoiser + codec + depth predictor + schedule."""

    def __init__(self, address: str, timeout: float = 60.0):
        self.conn = BridgeConnection(address, timeout)
        hello, _ = self.conn.request({"type": "HELLO"})
        if hello.get("type") != "HELLO_OK":
            raise BridgeError(f"unexpected handshake reply {hello.get('type')!r}")
        self.denoiser = BridgeDenoiser(self.conn, hello)
        self.codec = BridgeCodec(self.conn, hello)
        self.predictor = BridgePredictor(self.conn)
        self.schedule = AlphaSchedule(np.asarray(hello["alpha_bar"], np.float64))
        self.concurrent = bool(hello.get("concurrent", False))

    def invert_token(self, images: np.ndarray) -> str:
        resp, _ = self.conn.request(
            {"type": "INVERT_TOKEN"}, [np.asarray(images, np.float32)])
        return str(resp["token"])

    def close(self):
        self.conn.close()
