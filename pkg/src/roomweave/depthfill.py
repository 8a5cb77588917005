"""Panorama distance inpainting around a pluggable monocular depth model.

Per fan view: predict an initial depth for the inpainted color image, align
it to the mesh-rendered depth with a closed-form scale (least squares, no
shift), then run anchored refinement rounds; after the initial prediction
and after every refinement the per-view distance maps are warped into each
other and averaged to stay cross-view consistent.  Observed band cells keep
their rendered distance exactly; only holes receive predicted values.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, runtime_checkable

import numpy as np
from scipy.ndimage import uniform_filter

from .geometry import (
    DistanceGrid,
    ViewSpec,
    build_warp,
    depth_to_distance,
    distance_to_depth,
    make_pano_views,
)


@runtime_checkable
class DepthPredictor(Protocol):
    def predict_initial(self, image: np.ndarray, view: ViewSpec | None = None
                        ) -> np.ndarray: ...

    def refine(self, depth: np.ndarray, anchor_depth: np.ndarray,
               anchor_mask: np.ndarray, view: ViewSpec | None = None
               ) -> np.ndarray: ...


@dataclass
class DepthFusionConfig:
    refine_iters: int = 4
    anchor_tolerance: float = 1e-3

    def __post_init__(self):
        if self.refine_iters < 0:
            raise ValueError("refine_iters must be >= 0")


def align_scale(pred: np.ndarray, rendered: np.ndarray, mask: np.ndarray) -> float:
    """Least-squares scale s minimizing sum((s*pred - rendered)^2) over mask."""
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ValueError("alignment mask selects no pixels")
    p = np.asarray(pred, dtype=np.float64)[mask]
    r = np.asarray(rendered, dtype=np.float64)[mask]
    denom = float(np.sum(p * p))
    if denom <= 0:
        raise ValueError("alignment needs nonzero predicted depth")
    return float(np.sum(p * r) / denom)


def fuse_distances(views: list[ViewSpec], dists: list[DistanceGrid]
                   ) -> list[DistanceGrid]:
    """Average each view's distance with every other view's warped distance.

    Shared-center views only (distance is rotation-invariant there).  The
    denominator is the per-cell count of covering valid views; output cells
    with no valid cover become invalid.
    """
    if len(views) != len(dists):
        raise ValueError("need one distance grid per view")
    center = views[0].pose.position
    for v in views[1:]:
        if np.linalg.norm(v.pose.position - center) > 1e-9:
            raise ValueError("fuse_distances requires a shared camera center")
    out = []
    for i, vi in enumerate(views):
        num = np.zeros(dists[i].values.shape, dtype=np.float64)
        den = np.zeros(dists[i].values.shape, dtype=np.float64)
        for j, vj in enumerate(views):
            wm = build_warp(vj, vi, dists[j].values.shape, dists[i].values.shape)
            vals, mask = wm.apply(dists[j].values, src_valid=dists[j].valid)
            num += vals
            den += mask
        valid = den >= 1
        out.append(DistanceGrid(np.where(valid, num / np.maximum(den, 1), 0.0), valid))
    return out


def inpaint_panorama_distance(
    pano,
    color_band: np.ndarray,
    predictor: DepthPredictor,
    cfg: DepthFusionConfig | None = None,
    fan_views: int = 8,
    fov_deg: float = 98.0,
    view_size: int | None = None,
) -> DistanceGrid:
    """Fill the panorama's distance holes with aligned, fused predictions.

    ``pano`` supplies the rendered distance + hole mask; ``color_band`` is
    the inpainted band RGB the predictor sees.  Returns the band distance
    grid: rendered values on observed cells (exactly), fused predictions on
    holes.
    """
    cfg = cfg or DepthFusionConfig()
    hpx, wpx = pano.hole_mask.shape
    view_size = view_size or max(16, wpx // 4)
    band_view = pano.band_view
    fan = make_pano_views(pano.center, fan_views, fov_deg, view_size)
    observed = pano.distance.valid & ~pano.hole_mask

    images, anchors_depth, anchors_mask = [], [], []
    for v in fan:
        wm = build_warp(band_view, v, (hpx, wpx), (view_size, view_size))
        img, _ = wm.apply(np.asarray(color_band, np.float32))
        wdist, wvalid = wm.apply(pano.distance.values, src_valid=observed)
        anchor = DistanceGrid(np.where(wvalid, wdist, 0.0), wvalid)
        images.append(img)
        anchors_depth.append(distance_to_depth(anchor, v))
        anchors_mask.append(wvalid)

    preds, scales = [], []
    pool_num = pool_den = 0.0
    for i, v in enumerate(fan):
        pred = np.asarray(predictor.predict_initial(images[i], view=v), np.float64)
        if pred.shape != (view_size, view_size):
            raise ValueError(f"predictor returned wrong shape for view {i}")
        fit = anchors_mask[i] & (pred > 0)
        if fit.any():
            scales.append(align_scale(pred, anchors_depth[i], fit))
            pool_num += float(np.sum(pred[fit] * anchors_depth[i][fit]))
            pool_den += float(np.sum(pred[fit] ** 2))
        else:
            scales.append(None)
        preds.append(pred)
    # sparse inputs can leave fan views without any anchor pixel; those get
    # the scale pooled over every anchored view instead of staying unscaled
    pooled = pool_num / pool_den if pool_den > 0 else 1.0
    dists = [
        depth_to_distance((s if s is not None else pooled) * pred, v)
        for v, pred, s in zip(fan, preds, scales)
    ]
    dists = fuse_distances(fan, dists)

    for _ in range(cfg.refine_iters):
        refined = []
        for i, v in enumerate(fan):
            depth = distance_to_depth(dists[i], v)
            depth = np.asarray(
                predictor.refine(depth, anchors_depth[i], anchors_mask[i], view=v),
                np.float64,
            )
            dev = np.abs(depth - anchors_depth[i])[anchors_mask[i]]
            if dev.size and dev.max() > cfg.anchor_tolerance:
                raise ValueError(
                    f"predictor moved anchored pixels by {dev.max():.2e} "
                    f"(> {cfg.anchor_tolerance}) in view {i}"
                )
            refined.append(depth_to_distance(depth, v))
        dists = fuse_distances(fan, refined)

    # stitch predictions to the band, then keep rendered values where observed
    num = np.zeros((hpx, wpx), dtype=np.float64)
    den = np.zeros((hpx, wpx), dtype=np.float64)
    for v, d in zip(fan, dists):
        wm = build_warp(v, band_view, d.values.shape, (hpx, wpx))
        vals, mask = wm.apply(d.values, src_valid=d.valid)
        num += vals
        den += mask
    stitched_valid = den >= 1
    stitched = np.where(stitched_valid, num / np.maximum(den, 1), 0.0)
    values = np.where(observed, pano.distance.values, stitched)
    valid = observed | stitched_valid
    return DistanceGrid(values, valid)


class SmoothFillPredictor:
    """Neural-free depth backend: harmonic fill anchored on rendered depth.

    ``predict_initial`` is a constant (alignment sets the scale);
    ``refine`` clamps anchors and relaxes the rest toward the local mean,
    which spreads anchored geometry smoothly into the holes.
    """

    def __init__(self, sweeps: int = 64):
        self.sweeps = sweeps

    def predict_initial(self, image, view=None):
        h, w = np.asarray(image).shape[:2]
        return np.ones((h, w))

    def refine(self, depth, anchor_depth, anchor_mask, view=None):
        d = np.where(anchor_mask, anchor_depth, depth).astype(np.float64)
        for _ in range(self.sweeps):
            avg = uniform_filter(d, size=3, mode="nearest")
            d = np.where(anchor_mask, anchor_depth, avg)
        return np.maximum(d, 1e-4)
