"""Float32 oracle math - backend-side mirror.

This file must stay bit-for-bit equivalent to the engine's oracle math
module: remote oracle backends are required to return tensors identical
to the in-process implementation (the conformance suite asserts equality
of full pipeline outputs).  Keep formulas, op order and dtypes in sync.
"""
from __future__ import annotations

import numpy as np


def oracle_epsilon(x_t: np.ndarray, y: np.ndarray, abar_t: float) -> np.ndarray:
    """Noise that makes the clean-signal prediction recover y exactly.

    eps = (x_t - sqrt(abar)*y) / sqrt(1 - abar), computed in float32.
    1 - abar is formed in float64 first: near abar = 1 it would otherwise
    lose the digits that the scheduler's own sqrt(1 - abar) retains.
    """
    abar = float(abar_t)
    if not (0.0 < abar < 1.0):
        raise ValueError("oracle noise needs 0 < alpha_bar < 1")
    c_sig = np.float32(np.sqrt(abar))
    c_noise = np.float32(np.sqrt(1.0 - abar))
    if c_noise == 0:
        raise ValueError("alpha_bar too close to 1 for float32 noise")
    x32 = np.asarray(x_t, dtype=np.float32)
    y32 = np.asarray(y, dtype=np.float32)
    return (x32 - c_sig * y32) / c_noise


def composite_latent(target: np.ndarray, reference: np.ndarray,
                     mask: np.ndarray) -> np.ndarray:
    """target over mask, reference elsewhere; float32."""
    t32 = np.asarray(target, dtype=np.float32)
    r32 = np.asarray(reference, dtype=np.float32)
    m32 = np.asarray(mask, dtype=np.float32)
    if m32.ndim == t32.ndim - 1:
        m32 = m32[..., None]
    return m32 * t32 + (np.float32(1.0) - m32) * r32


def warp_band_to_fan_view(
    band: np.ndarray,
    lat_min: float,
    lat_max: float,
    yaw: float,
    fov_deg: float,
    out_size: int,
    scale: int = 1,
) -> tuple[np.ndarray, np.ndarray]:
    """Sample an equirect band image on the latent grid of one fan view.

    The view is a square perspective camera at the band center with pitch 0
    and the given yaw; ``out_size`` is its latent resolution and ``scale``
    the pixel-per-latent factor.  Returns (values float32, covered bool);
    cells outside the band are zero.  Taps are computed in float64 and the
    blend result cast to float32 (the cross-process bit-identity contract).
    """
    band = np.asarray(band)
    squeeze = band.ndim == 2
    if squeeze:
        band = band[..., None]
    hb, wb = band.shape[:2]
    size_px = out_size * scale
    f = (size_px / 2.0) / np.tan(np.radians(fov_deg) / 2.0)
    c = size_px / 2.0

    idx = np.arange(out_size, dtype=np.float64)
    px = (idx + 0.5) * scale - 0.5
    x = (px - c) / f
    xx, yy = np.meshgrid(x, x)
    norm = np.sqrt(xx * xx + yy * yy + 1.0)
    dx, dy, dz = xx / norm, yy / norm, 1.0 / norm

    cy_, sy_ = np.cos(yaw), np.sin(yaw)
    wx = cy_ * dx + sy_ * dz
    wz = -sy_ * dx + cy_ * dz
    lam = np.arctan2(wx, wz)
    phi = np.arcsin(np.clip(-dy, -1.0, 1.0))

    u = (lam / np.pi + 1.0) * wb / 2.0 - 0.5
    u = np.where(u >= wb - 0.5, u - wb, u)
    v = (lat_max - phi) * hb / (lat_max - lat_min) - 0.5
    ur = np.round(u)
    u = np.where(np.abs(u - ur) < 1e-9, ur, u)
    vr = np.round(v)
    v = np.where(np.abs(v - vr) < 1e-9, vr, v)

    covered = (v >= 0) & (v <= hb - 1)
    u = np.mod(u + 0.5, wb) - 0.5
    v = np.where(covered, v, 0.0)

    j0 = np.floor(u)
    fu = u - j0
    j0 = j0.astype(np.int64)
    j1 = np.mod(j0 + 1, wb)
    j0 = np.mod(j0, wb)
    i0 = np.clip(np.floor(v), 0, max(hb - 2, 0)).astype(np.int64)
    fv = v - i0
    i1 = np.minimum(i0 + 1, hb - 1)

    b64 = band.astype(np.float64)
    out = (
        (1 - fu)[..., None] * (1 - fv)[..., None] * b64[i0, j0]
        + fu[..., None] * (1 - fv)[..., None] * b64[i0, j1]
        + (1 - fu)[..., None] * fv[..., None] * b64[i1, j0]
        + fu[..., None] * fv[..., None] * b64[i1, j1]
    )
    out = out * covered[..., None]
    out = out.astype(np.float32)
    if squeeze:
        out = out[..., 0]
    return out, covered


def slice_band_window(band: np.ndarray, col: int, width: int) -> np.ndarray:
    """Horizontal cyclic window of a band grid (exact, no interpolation)."""
    wb = band.shape[1]
    cols = (np.arange(col, col + width)) % wb
    return np.ascontiguousarray(band[:, cols])


def fan_yaw(index: int, m: int) -> float:
    """Yaw of the index-th view in an m-view ring (radians)."""
    return 2.0 * np.pi * index / m
