"""Socket server hosting a backend behind the wire protocol.

One thread per connection, one request in flight per connection (declared
in HELLO).  Malformed requests are answered with an ERROR message and the
connection stays open; an unexpected handler exception is also reported as
an ERROR rather than killing the connection.
"""

from __future__ import annotations

import logging
import socket
import threading

import numpy as np

from .protocol import ProtocolError, pack_message, read_message

logger = logging.getLogger(__name__)


class BridgeServer:
    def __init__(self, backend, host: str = "127.0.0.1", port: int = 0):
        self.backend = backend
        self._sock = socket.create_server((host, port))
        self.address = "{}:{}".format(*self._sock.getsockname()[:2])
        self._stop = threading.Event()
        self._thread: threading.Thread | None = None

    # -- lifecycle -----------------------------------------------------

    def serve_forever(self):
        logger.info("bridge listening on %s", self.address)
        while not self._stop.is_set():
            try:
                self._sock.settimeout(0.25)
                conn, peer = self._sock.accept()
            except TimeoutError:
                continue
            except OSError:
                break
            t = threading.Thread(target=self._serve_connection,
                                 args=(conn, peer), daemon=True)
            t.start()

    def start_background(self):
        self._thread = threading.Thread(target=self.serve_forever, daemon=True)
        self._thread.start()
        return self

    def close(self):
        self._stop.set()
        try:
            self._sock.close()
        except OSError:
            pass
        if self._thread is not None:
            self._thread.join(timeout=2.0)

    # -- per-connection loop ---------------------------------------------

    def _serve_connection(self, conn, peer):
        logger.info("connection from %s", peer)
        with conn:
            while not self._stop.is_set():
                try:
                    header, tensors = read_message(conn)
                except ConnectionError:
                    return
                except ProtocolError as exc:
                    conn.sendall(pack_message(
                        {"type": "ERROR", "id": None,
                         "code": "E_BAD_REQUEST", "message": str(exc)}))
                    continue
                rid = header.get("id")
                try:
                    reply, blobs = self._dispatch(header, tensors)
                    reply["id"] = rid
                    conn.sendall(pack_message(reply, blobs))
                except Exception as exc:  # keep serving after handler errors
                    logger.exception("request %s failed", header.get("type"))
                    conn.sendall(pack_message(
                        {"type": "ERROR", "id": rid, "code": "E_BACKEND",
                         "message": f"{type(exc).__name__}: {exc}"}))

    def _dispatch(self, header: dict, tensors: list[np.ndarray]):
        kind = header["type"]
        be = self.backend
        if kind == "HELLO":
            reply = {"type": "HELLO_OK"}
            reply.update(be.hello())
            return reply, []
        if kind == "ENCODE":
            return {"type": "ENCODE_OK"}, [be.encode(tensors[0])]
        if kind == "DECODE":
            return {"type": "DECODE_OK"}, [be.decode(tensors[0])]
        if kind == "EPS":
            x, ref, mask = tensors
            eps = be.predict_epsilon(
                x, ref, mask, float(header["abar"]),
                header.get("prompt", ""), header.get("view"),
                header.get("window"),
            )
            return {"type": "EPS_OK"}, [eps]
        if kind == "DEPTH_INIT":
            return {"type": "DEPTH_INIT_OK"}, [
                be.depth_init(tensors[0], header.get("view"))]
        if kind == "DEPTH_REFINE":
            depth, anchor_depth, anchor_mask = tensors
            return {"type": "DEPTH_REFINE_OK"}, [
                be.depth_refine(depth, anchor_depth, anchor_mask,
                                header.get("view"))]
        if kind == "INVERT_TOKEN":
            return {"type": "INVERT_TOKEN_OK",
                    "token": be.invert_token(tensors[0])}, []
        raise ProtocolError(f"unknown request type {kind!r}")
