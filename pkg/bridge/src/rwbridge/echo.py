"""Protocol-conformance backend with no neural dependencies.

Implements the full wire contract with the identity codec (scale 1) and an
oracle-style noise prediction against a target image supplied at startup:
the engine driving this backend must produce output bit-identical to its
in-process oracle denoiser.  Depth requests are served by a constant
initializer plus anchored harmonic smoothing.
"""

from __future__ import annotations

import hashlib

import numpy as np
from scipy.ndimage import uniform_filter

from . import oracle_core


def default_schedule(steps: int = 50, beta_start: float = 8.5e-4,
                     beta_end: float = 1.2e-2) -> np.ndarray:
    """Cumulative product of a linear beta ramp (the engine's default)."""
    return np.cumprod(1.0 - np.linspace(beta_start, beta_end, steps))


class EchoBackend:
    """Identity-codec oracle backend for conformance testing."""

    def __init__(self, target: np.ndarray, latent_size: int = 64,
                 lat_band: tuple[float, float] = (-np.pi / 4, np.pi / 4),
                 schedule: np.ndarray | None = None,
                 depth_sweeps: int = 64):
        self.target = np.asarray(target, dtype=np.float32)
        if self.target.ndim != 3 or self.target.shape[2] != 3:
            raise ValueError("echo target must be an (H, W, 3) image")
        self.latent_size = int(latent_size)
        self.lat_band = (float(lat_band[0]), float(lat_band[1]))
        self.schedule = (np.asarray(schedule, dtype=np.float64)
                         if schedule is not None else default_schedule())
        self.depth_sweeps = depth_sweeps
        self._fan_cache: dict = {}

    # -- handshake -----------------------------------------------------

    def hello(self) -> dict:
        return {
            "channels": 3,
            "scale": 1,
            "latent_size": self.latent_size,
            "alpha_bar": [float(a) for a in self.schedule],
            "concurrent": False,
            "max_batch": 1,
        }

    # -- codec ----------------------------------------------------------

    def encode(self, image: np.ndarray) -> np.ndarray:
        return np.asarray(image, dtype=np.float32)

    def decode(self, latent: np.ndarray) -> np.ndarray:
        return np.clip(latent, 0.0, 1.0).astype(np.float32)

    # -- noise prediction -------------------------------------------------

    def _target_for(self, view: dict | None, window, shape) -> np.ndarray:
        if window is not None:
            row, col = int(window[0]), int(window[1])
            sl = oracle_core.slice_band_window(self.target, col, shape[1])
            return sl[row:row + shape[0]]
        if view is not None and view.get("kind") == "fan":
            key = (view["yaw"], view["fov_deg"], view["size"], view["scale"])
            if key not in self._fan_cache:
                vals, _ = oracle_core.warp_band_to_fan_view(
                    self.target, self.lat_band[0], self.lat_band[1],
                    view["yaw"], view["fov_deg"], int(view["size"]),
                    int(view["scale"]),
                )
                self._fan_cache[key] = vals
            return self._fan_cache[key]
        # arbitrary pose: fit the target onto the latent grid
        import cv2

        return cv2.resize(self.target, (shape[1], shape[0]),
                          interpolation=cv2.INTER_AREA)

    def predict_epsilon(self, x: np.ndarray, ref: np.ndarray, mask: np.ndarray,
                        abar: float, prompt: str, view: dict | None,
                        window) -> np.ndarray:
        target = self._target_for(view, window, x.shape[:2])
        y = oracle_core.composite_latent(target, ref, mask)
        return oracle_core.oracle_epsilon(x, y, abar)

    # -- depth -----------------------------------------------------------

    def depth_init(self, image: np.ndarray, view: dict | None) -> np.ndarray:
        h, w = image.shape[:2]
        return np.ones((h, w), dtype=np.float32)

    def depth_refine(self, depth, anchor_depth, anchor_mask, view) -> np.ndarray:
        anchored = anchor_mask > 0.5
        d = np.where(anchored, anchor_depth, depth).astype(np.float64)
        for _ in range(self.depth_sweeps):
            avg = uniform_filter(d, size=3, mode="nearest")
            d = np.where(anchored, anchor_depth, avg)
        return np.maximum(d, 1e-4).astype(np.float32)

    # -- textual token ------------------------------------------------------

    def invert_token(self, images: np.ndarray) -> str:
        digest = hashlib.sha256(
            np.ascontiguousarray(images, dtype="<f4").tobytes()).hexdigest()
        return f"<style-{digest[:8]}>"
