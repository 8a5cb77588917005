"""Equirectangular RGBD panoramas: rendering from a mesh and fusing back.

The panorama band is centered at a chosen room center, spans 360 degrees of
longitude and the configured latitude band, and stores color, distance from
the center along each cell's ray, and the hole mask (cells not covered by
the mesh at render time).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .diffusion import BAND_DEFAULT
from .geometry import DistanceGrid, RigidTransform, ViewSpec
from .meshing import (
    DEFAULT_DEPTH_RATIO_MAX,
    TriangleMesh,
    fuse,
    mesh_from_panorama_grid,
)
from .rasterize import render


@dataclass
class PanoramaRgbd:
    """Equirect band color + distance + hole mask around a room center.

    ``hole_mask`` always marks the cells that were uncovered when the mesh
    was rendered; freshly rendered panoramas carry zero color/distance
    there, inpainted ones carry the generated values.
    """

    color: np.ndarray        # (H, W, 3) float32
    distance: DistanceGrid   # (H, W)
    hole_mask: np.ndarray    # (H, W) bool, uncovered at render time
    center: np.ndarray       # (3,)
    lat_band: tuple[float, float] = BAND_DEFAULT

    def __post_init__(self):
        self.color = np.asarray(self.color, dtype=np.float32)
        self.hole_mask = np.asarray(self.hole_mask, dtype=bool)
        self.center = np.asarray(self.center, dtype=np.float64).reshape(3)
        h, w = self.hole_mask.shape
        if self.color.shape != (h, w, 3) or self.distance.values.shape != (h, w):
            raise ValueError("panorama channel shapes disagree")

    @property
    def band_view(self) -> ViewSpec:
        h, w = self.hole_mask.shape
        return ViewSpec.equirect(w, h, RigidTransform.identity(self.center),
                                 self.lat_band)

    def copy(self) -> "PanoramaRgbd":
        return PanoramaRgbd(self.color.copy(), self.distance.copy(),
                            self.hole_mask.copy(), self.center.copy(),
                            self.lat_band)


def render_panorama(
    mesh: TriangleMesh,
    center,
    width: int = 2048,
    height: int = 512,
    lat_band: tuple[float, float] = BAND_DEFAULT,
    fan_views: int = 8,
    fov_deg: float = 98.0,
) -> PanoramaRgbd:
    """Render the mesh into an equirect band panorama around `center`."""
    center = np.asarray(center, dtype=np.float64)
    band_view = ViewSpec.equirect(width, height, RigidTransform.identity(center),
                                  lat_band)
    out = render(mesh, band_view, fan_views=fan_views, fan_fov_deg=fov_deg)
    dist = DistanceGrid(out.depth, out.coverage)
    return PanoramaRgbd(out.color, dist, ~out.coverage, center, lat_band)


def fuse_panorama(mesh: TriangleMesh, pano: PanoramaRgbd, center=None,
                  depth_ratio_max: float | None = DEFAULT_DEPTH_RATIO_MAX,
                  edge_len_max: float | None = None) -> TriangleMesh:
    """Back-project the panorama's filled holes and stitch them onto the mesh.

    Only cells inside the hole mask dilated by one cell are triangulated;
    the one-cell border carries the distance rendered from the existing mesh,
    so the new patch meets it exactly.  Pre-existing vertices are untouched.
    """
    if center is not None and np.linalg.norm(
            np.asarray(center, float) - pano.center) > 1e-9:
        raise ValueError("fuse center must match the panorama center")
    if not pano.hole_mask.any():
        return mesh.copy()
    # 8-neighborhood dilation, cyclic in the horizontal direction
    region = np.zeros_like(pano.hole_mask)
    for dc in (-1, 0, 1):
        shifted = np.roll(pano.hole_mask, dc, axis=1)
        region |= shifted
        region[1:] |= shifted[:-1]
        region[:-1] |= shifted[1:]
    patch = mesh_from_panorama_grid(
        pano.color, pano.distance.values, pano.band_view,
        region=region, valid=pano.distance.valid,
        edge_len_max=edge_len_max, depth_ratio_max=depth_ratio_max,
    )
    return fuse(mesh, patch)
