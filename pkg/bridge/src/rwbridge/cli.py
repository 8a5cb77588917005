"""Bridge server launcher.

    rw-bridge serve --backend echo --target TARGET.png --listen 127.0.0.1:7060
    rw-bridge serve --backend diffusion --model MODEL_ID --device cuda

The echo backend needs a target image (PNG or .npy float array in [0, 1])
whose geometry matches the engine's panorama band.
"""

from __future__ import annotations

import argparse
import logging
import sys

import numpy as np


def load_target(path: str) -> np.ndarray:
    if path.endswith(".npy"):
        return np.load(path).astype(np.float32)
    import cv2

    img = cv2.imread(path, cv2.IMREAD_COLOR)
    if img is None:
        raise SystemExit(f"cannot read target image {path!r}")
    return img[..., ::-1].astype(np.float32) / 255.0


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="rw-bridge")
    sub = ap.add_subparsers(dest="command", required=True)
    sv = sub.add_parser("serve", help="host a backend")
    sv.add_argument("--backend", choices=("echo", "diffusion"), default="echo")
    sv.add_argument("--listen", default="127.0.0.1:7060")
    sv.add_argument("--target", help="echo backend target image (PNG or .npy)")
    sv.add_argument("--latent-size", type=int, default=64)
    sv.add_argument("--steps", type=int, default=50)
    sv.add_argument("--model", help="diffusion model id or path")
    sv.add_argument("--device", default="cuda")
    sv.add_argument("-v", "--verbose", action="store_true")
    args = ap.parse_args(argv)

    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )

    if args.backend == "echo":
        if not args.target:
            ap.error("the echo backend requires --target")
        from .echo import EchoBackend, default_schedule

        backend = EchoBackend(load_target(args.target),
                              latent_size=args.latent_size,
                              schedule=default_schedule(args.steps))
    else:
        if not args.model:
            ap.error("the diffusion backend requires --model")
        from .diffusion_backend import DiffusionBackend

        backend = DiffusionBackend(args.model, device=args.device,
                                   latent_size=args.latent_size,
                                   steps=args.steps)

    host, _, port = args.listen.rpartition(":")
    from .server import BridgeServer

    server = BridgeServer(backend, host or "127.0.0.1", int(port or 7060))
    print(f"listening on {server.address}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.close()
    return 0


if __name__ == "__main__":
    sys.exit(main())
