"""Software z-buffer rasterizer for vertex-colored triangle meshes.

Perspective views rasterize directly; equirectangular views are rendered by
rasterizing a shared-center perspective fan and compositing the warped
results into the band with per-cell nearest-distance wins (the same view
decomposition the diffusion scheduler uses).

Front faces (those whose geometric normal points toward the camera) own the
color/depth buffers; back-face hits are z-tested separately so a pixel whose
nearest hit is a back face can be reported.  Pixels are sampled at integer
coordinates, colors are interpolated perspective-correct.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .geometry import (
    ViewSpec,
    build_warp,
    depth_to_distance,
    make_pano_views,
)
from .meshing import TriangleMesh


@dataclass
class RenderOutput:
    color: np.ndarray      # (H, W, 3) float32
    depth: np.ndarray      # (H, W) float64; z for perspective, distance for equirect
    coverage: np.ndarray   # (H, W) bool, hit by a front face
    backface: np.ndarray   # (H, W) bool, nearest hit is a back face

    def __post_init__(self):
        if not ((self.depth > 0) == self.coverage).all():
            raise ValueError("depth must be positive exactly where covered")

    @property
    def backface_ratio(self) -> float:
        return float(self.backface.mean())

    @property
    def min_depth(self) -> float:
        if not self.coverage.any():
            return float("inf")
        return float(self.depth[self.coverage].min())

    @property
    def inpaint_ratio(self) -> float:
        """Fraction of pixels not covered by the mesh."""
        return 1.0 - float(self.coverage.mean())


@njit(cache=True)
def _clip_near(px, py, pz, pr, pg, pb, znear, out):  # pragma: no cover - jit
    """Sutherland-Hodgman clip of a triangle against z >= znear.

    Writes up to 4 vertices (x, y, z, r, g, b) into `out`; returns the count.
    """
    n = 0
    for i in range(3):
        j = (i + 1) % 3
        zi, zj = pz[i], pz[j]
        ini = zi >= znear
        inj = zj >= znear
        if ini:
            out[n, 0] = px[i]; out[n, 1] = py[i]; out[n, 2] = zi
            out[n, 3] = pr[i]; out[n, 4] = pg[i]; out[n, 5] = pb[i]
            n += 1
        if ini != inj:
            t = (znear - zi) / (zj - zi)
            out[n, 0] = px[i] + t * (px[j] - px[i])
            out[n, 1] = py[i] + t * (py[j] - py[i])
            out[n, 2] = znear
            out[n, 3] = pr[i] + t * (pr[j] - pr[i])
            out[n, 4] = pg[i] + t * (pg[j] - pg[i])
            out[n, 5] = pb[i] + t * (pb[j] - pb[i])
            n += 1
    return n


@njit(cache=True)
def _raster_kernel(verts, faces, colors, front, fx, fy, cx, cy,
                   width, height, znear,
                   zfront, zany, rgb, backhit):  # pragma: no cover - jit
    poly = np.empty((4, 6), np.float64)
    px = np.empty(3, np.float64)
    py = np.empty(3, np.float64)
    pz = np.empty(3, np.float64)
    pr = np.empty(3, np.float64)
    pg = np.empty(3, np.float64)
    pb = np.empty(3, np.float64)
    for f in range(faces.shape[0]):
        behind = 0
        for k in range(3):
            vi = faces[f, k]
            px[k] = verts[vi, 0]
            py[k] = verts[vi, 1]
            pz[k] = verts[vi, 2]
            pr[k] = colors[vi, 0]
            pg[k] = colors[vi, 1]
            pb[k] = colors[vi, 2]
            if pz[k] < znear:
                behind += 1
        if behind == 3:
            continue
        if behind == 0:
            npoly = 3
            for k in range(3):
                poly[k, 0] = px[k]; poly[k, 1] = py[k]; poly[k, 2] = pz[k]
                poly[k, 3] = pr[k]; poly[k, 4] = pg[k]; poly[k, 5] = pb[k]
        else:
            npoly = _clip_near(px, py, pz, pr, pg, pb, znear, poly)
            if npoly < 3:
                continue
        is_front = front[f]
        for t in range(npoly - 2):
            x0 = fx * poly[0, 0] / poly[0, 2] + cx
            y0 = fy * poly[0, 1] / poly[0, 2] + cy
            x1 = fx * poly[t + 1, 0] / poly[t + 1, 2] + cx
            y1 = fy * poly[t + 1, 1] / poly[t + 1, 2] + cy
            x2 = fx * poly[t + 2, 0] / poly[t + 2, 2] + cx
            y2 = fy * poly[t + 2, 1] / poly[t + 2, 2] + cy
            area = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
            if area > -1e-12 and area < 1e-12:
                continue
            xmin = int(np.ceil(min(x0, min(x1, x2))))
            xmax = int(np.floor(max(x0, max(x1, x2))))
            ymin = int(np.ceil(min(y0, min(y1, y2))))
            ymax = int(np.floor(max(y0, max(y1, y2))))
            if xmin < 0:
                xmin = 0
            if ymin < 0:
                ymin = 0
            if xmax > width - 1:
                xmax = width - 1
            if ymax > height - 1:
                ymax = height - 1
            if xmin > xmax or ymin > ymax:
                continue
            iz0 = 1.0 / poly[0, 2]
            iz1 = 1.0 / poly[t + 1, 2]
            iz2 = 1.0 / poly[t + 2, 2]
            inv_area = 1.0 / area
            for iy in range(ymin, ymax + 1):
                for ix in range(xmin, xmax + 1):
                    w0 = ((x1 - ix) * (y2 - iy) - (x2 - ix) * (y1 - iy)) * inv_area
                    w1 = ((x2 - ix) * (y0 - iy) - (x0 - ix) * (y2 - iy)) * inv_area
                    w2 = 1.0 - w0 - w1
                    if w0 < 0.0 or w1 < 0.0 or w2 < 0.0:
                        continue
                    inv_z = w0 * iz0 + w1 * iz1 + w2 * iz2
                    z = 1.0 / inv_z
                    if z < zany[iy, ix]:
                        zany[iy, ix] = z
                        backhit[iy, ix] = 0 if is_front else 1
                    if is_front and z < zfront[iy, ix]:
                        zfront[iy, ix] = z
                        rgb[iy, ix, 0] = (w0 * poly[0, 3] * iz0 + w1 * poly[t + 1, 3] * iz1 + w2 * poly[t + 2, 3] * iz2) * z
                        rgb[iy, ix, 1] = (w0 * poly[0, 4] * iz0 + w1 * poly[t + 1, 4] * iz1 + w2 * poly[t + 2, 4] * iz2) * z
                        rgb[iy, ix, 2] = (w0 * poly[0, 5] * iz0 + w1 * poly[t + 1, 5] * iz1 + w2 * poly[t + 2, 5] * iz2) * z


def _render_perspective(mesh: TriangleMesh, view: ViewSpec, znear: float) -> RenderOutput:
    intr = view.intrinsics
    h, w = intr.height, intr.width
    zfront = np.full((h, w), np.inf)
    zany = np.full((h, w), np.inf)
    rgb = np.zeros((h, w, 3), np.float64)
    backhit = np.zeros((h, w), np.uint8)
    if mesh.n_faces:
        verts_cam = view.pose.to_local(mesh.vertices)
        p0 = mesh.vertices[mesh.faces[:, 0]]
        normals = np.cross(
            mesh.vertices[mesh.faces[:, 1]] - p0,
            mesh.vertices[mesh.faces[:, 2]] - p0,
        )
        front = np.einsum("ij,ij->i", normals, view.pose.position[None, :] - p0) > 0
        _raster_kernel(
            verts_cam, mesh.faces, mesh.colors.astype(np.float64), front,
            intr.fx, intr.fy, intr.cx, intr.cy, w, h, znear,
            zfront, zany, rgb, backhit,
        )
    coverage = np.isfinite(zfront)
    depth = np.where(coverage, zfront, 0.0)
    covered_any = np.isfinite(zany)
    return RenderOutput(
        color=rgb.astype(np.float32),
        depth=depth,
        coverage=coverage,
        backface=covered_any & (backhit > 0),
    )


def render(mesh: TriangleMesh, view: ViewSpec, znear: float = 1e-4,
           fan_views: int = 8, fan_fov_deg: float = 98.0) -> RenderOutput:
    """Render the mesh from a view; see module docstring for semantics."""
    if view.kind == "perspective":
        return _render_perspective(mesh, view, znear)
    return _render_equirect(mesh, view, znear, fan_views, fan_fov_deg)


def _render_equirect(mesh, band_view, znear, m, fov_deg) -> RenderOutput:
    size = max(16, band_view.width // 4)
    fan = make_pano_views(band_view.pose.position, m, fov_deg, size)
    h, w = band_view.height, band_view.width
    best = np.full((h, w), np.inf)
    color = np.zeros((h, w, 3), np.float64)
    backface = np.zeros((h, w), bool)
    back_any = np.zeros((h, w), bool)
    for v in fan:
        out = _render_perspective(mesh, v, znear)
        dist = depth_to_distance(out.depth, v)
        wm = build_warp(v, band_view)
        wdist, wmask = wm.apply(dist.values, src_valid=dist.valid)
        wcol, _ = wm.apply(out.color.astype(np.float64), src_valid=dist.valid)
        wback, bmask = wm.apply(out.backface.astype(np.float64))
        back_any |= bmask & (wback > 0.5)
        win = wmask & (wdist < best)
        best[win] = wdist[win]
        color[win] = wcol[win]
        backface[win] = wback[win] > 0.5
    coverage = np.isfinite(best)
    return RenderOutput(
        color=color.astype(np.float32),
        depth=np.where(coverage, best, 0.0),
        coverage=coverage,
        backface=np.where(coverage, backface, back_any),
    )
