"""Projection math shared by every stage of the pipeline.

Conventions (fixed once, everything downstream relies on them):

* Camera frame: +x right, +y down, +z forward.
* Perspective views use OpenCV-style pixel coordinates: integer (u, v) are
  sample points, the principal axis projects to (cx, cy), and a pixel grid
  of width W spans the continuous rectangle [-0.5, W - 0.5].
* Equirectangular views map pixel u to longitude lam = pi*(2*(u+0.5)/W - 1)
  and pixel v to latitude phi = lat_max - (v+0.5)/H * (lat_max - lat_min),
  so integer coordinates are texel centers.  A full sphere is the band
  (-pi/2, pi/2); direction in the view frame is
  (cos(phi)*sin(lam), -sin(phi), cos(phi)*cos(lam)).
* Latent grids relate to pixel grids through an integer scale k:
  pixel = (latent + 0.5)*k - 0.5.

Equirect grids are horizontally cyclic; sampling wraps modulo width.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

HALF_PI = 0.5 * np.pi


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics in pixel units."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")

    def scaled(self, factor: float) -> "CameraIntrinsics":
        """Intrinsics for the same camera rendered at factor * resolution."""
        return CameraIntrinsics(
            self.fx * factor,
            self.fy * factor,
            (self.cx + 0.5) * factor - 0.5,
            (self.cy + 0.5) * factor - 0.5,
            int(round(self.width * factor)),
            int(round(self.height * factor)),
        )


@dataclass(frozen=True)
class RigidTransform:
    """Camera-to-world transform: world = rotation @ local + position."""

    rotation: np.ndarray
    position: np.ndarray

    def __post_init__(self):
        rot = np.asarray(self.rotation, dtype=np.float64)
        pos = np.asarray(self.position, dtype=np.float64).reshape(3)
        if rot.shape != (3, 3):
            raise ValueError("rotation must be 3x3")
        if not np.all(np.isfinite(rot)) or not np.all(np.isfinite(pos)):
            raise ValueError("pose contains non-finite values")
        if np.max(np.abs(rot.T @ rot - np.eye(3))) > 1e-6:
            raise ValueError("rotation is not orthonormal")
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "position", pos)

    @staticmethod
    def identity(position=(0.0, 0.0, 0.0)) -> "RigidTransform":
        return RigidTransform(np.eye(3), np.asarray(position, dtype=np.float64))

    @staticmethod
    def from_matrix(mat: np.ndarray) -> "RigidTransform":
        mat = np.asarray(mat, dtype=np.float64)
        if mat.shape != (4, 4):
            raise ValueError("pose matrix must be 4x4")
        return RigidTransform(mat[:3, :3], mat[:3, 3])

    def to_matrix(self) -> np.ndarray:
        mat = np.eye(4)
        mat[:3, :3] = self.rotation
        mat[:3, 3] = self.position
        return mat

    def to_world(self, pts: np.ndarray) -> np.ndarray:
        return np.asarray(pts) @ self.rotation.T + self.position

    def to_local(self, pts: np.ndarray) -> np.ndarray:
        return (np.asarray(pts) - self.position) @ self.rotation


def rotation_yaw(yaw: float) -> np.ndarray:
    """Rotation about the world y axis; yaw>0 turns +z toward +x."""
    c, s = np.cos(yaw), np.sin(yaw)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rotation_pitch(pitch: float) -> np.ndarray:
    """Rotation about the camera x axis; pitch>0 tilts +z upward (-y)."""
    c, s = np.cos(pitch), np.sin(pitch)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


@dataclass(frozen=True)
class ViewSpec:
    """A posed perspective or equirectangular view.

    For equirect views ``lat_band`` is the (lat_min, lat_max) latitude range
    in radians covered by the image rows; the horizontal axis always spans
    the full 360 degrees.
    """

    kind: str  # "perspective" | "equirect"
    pose: RigidTransform
    intrinsics: CameraIntrinsics | None = None
    width: int = 0
    height: int = 0
    lat_band: tuple[float, float] = (-HALF_PI, HALF_PI)

    def __post_init__(self):
        if self.kind == "perspective":
            if self.intrinsics is None:
                raise ValueError("perspective view needs intrinsics")
            object.__setattr__(self, "width", self.intrinsics.width)
            object.__setattr__(self, "height", self.intrinsics.height)
        elif self.kind == "equirect":
            lo, hi = self.lat_band
            if not (-HALF_PI - 1e-12 <= lo < hi <= HALF_PI + 1e-12):
                raise ValueError("latitude band must satisfy -pi/2 <= lo < hi <= pi/2")
            if self.width <= 0 or self.height <= 0:
                raise ValueError("equirect view needs width and height")
        else:
            raise ValueError(f"unknown view kind {self.kind!r}")

    @staticmethod
    def perspective(intrinsics: CameraIntrinsics, pose: RigidTransform) -> "ViewSpec":
        return ViewSpec(kind="perspective", pose=pose, intrinsics=intrinsics)

    @staticmethod
    def equirect(
        width: int,
        height: int,
        pose: RigidTransform,
        lat_band: tuple[float, float] = (-HALF_PI, HALF_PI),
    ) -> "ViewSpec":
        return ViewSpec(
            kind="equirect", pose=pose, width=width, height=height,
            lat_band=(float(lat_band[0]), float(lat_band[1])),
        )


@dataclass
class DistanceGrid:
    """Per-pixel distance from the camera origin along each pixel's ray."""

    values: np.ndarray  # (H, W) float64, meters
    valid: np.ndarray   # (H, W) bool

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.valid = np.asarray(self.valid, dtype=bool)
        if self.values.shape != self.valid.shape:
            raise ValueError("distance values and validity mask shapes differ")
        if np.any(self.values[self.valid] < 0):
            raise ValueError("distances must be non-negative where valid")

    def copy(self) -> "DistanceGrid":
        return DistanceGrid(self.values.copy(), self.valid.copy())


# ---------------------------------------------------------------------------
# pixel <-> ray
# ---------------------------------------------------------------------------

def _rays_cam_perspective(view: ViewSpec, u, v, normalize=True):
    intr = view.intrinsics
    x = (np.asarray(u, dtype=np.float64) - intr.cx) / intr.fx
    y = (np.asarray(v, dtype=np.float64) - intr.cy) / intr.fy
    d = np.stack([x, y, np.ones_like(x)], axis=-1)
    if normalize:
        d = d / np.linalg.norm(d, axis=-1, keepdims=True)
    return d


def _rays_cam_equirect(view: ViewSpec, u, v):
    lam = np.pi * (2.0 * (np.asarray(u, dtype=np.float64) + 0.5) / view.width - 1.0)
    lo, hi = view.lat_band
    phi = hi - (np.asarray(v, dtype=np.float64) + 0.5) / view.height * (hi - lo)
    cphi = np.cos(phi)
    return np.stack([cphi * np.sin(lam), -np.sin(phi), cphi * np.cos(lam)], axis=-1)


def pixel_to_ray(view: ViewSpec, u, v) -> np.ndarray:
    """Unit world-frame direction through pixel (u, v); accepts arrays.

    Raises ValueError for coordinates outside the image rectangle
    [-0.5, W-0.5] x [-0.5, H-0.5].
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if np.any(u < -0.5) or np.any(u > view.width - 0.5) or \
       np.any(v < -0.5) or np.any(v > view.height - 0.5):
        raise ValueError("pixel coordinates outside image")
    if view.kind == "perspective":
        d = _rays_cam_perspective(view, u, v)
    else:
        d = _rays_cam_equirect(view, u, v)
    return d @ view.pose.rotation.T


_SNAP = 1e-9  # sample coords within this of an integer are treated as exact


def _snap(x: np.ndarray) -> np.ndarray:
    r = np.round(x)
    return np.where(np.abs(x - r) < _SNAP, r, x)


def _project(view: ViewSpec, dirs) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Continuous sample coords for world dirs plus forward-validity.

    The returned flag only encodes whether the projection itself is defined
    (positive forward depth for perspective views); hull checks are the
    caller's job.  Coordinates are snapped to integers within 1e-9 px so
    that exact round trips (e.g. self-warps) stay exact.
    """
    d = np.asarray(dirs, dtype=np.float64) @ view.pose.rotation
    x, y, z = d[..., 0], d[..., 1], d[..., 2]
    if view.kind == "perspective":
        fwd = z > 1e-12
        zsafe = np.where(fwd, z, 1.0)
        intr = view.intrinsics
        u = intr.fx * x / zsafe + intr.cx
        v = intr.fy * y / zsafe + intr.cy
        return _snap(u), _snap(v), fwd
    lam = np.arctan2(x, z)
    phi = np.arcsin(np.clip(-y, -1.0, 1.0))
    u = (lam / np.pi + 1.0) * view.width / 2.0 - 0.5
    # atan2 returns pi for the seam direction; fold it onto the left edge
    u = np.where(u >= view.width - 0.5, u - view.width, u)
    lo, hi = view.lat_band
    v = (hi - phi) * view.height / (hi - lo) - 0.5
    return _snap(u), _snap(v), np.ones(np.shape(u), dtype=bool)


def ray_to_pixel(view: ViewSpec, dirs) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Project unit world directions into the view.

    Returns (u, v, in_frustum).  ``in_frustum`` is true where the direction
    lands on the view's sample hull [0, W-1] x [0, H-1] (perspective views
    additionally require positive forward depth; equirect u wraps so only
    the latitude constrains).  u and v are well defined only where the flag
    is set.
    """
    u, v, ok = _project(view, dirs)
    ok = ok & (v >= 0) & (v <= view.height - 1)
    if view.kind == "perspective":
        ok = ok & (u >= 0) & (u <= view.width - 1)
    return u, v, ok


def view_ray_grid(view: ViewSpec, grid_shape: tuple[int, int] | None = None) -> np.ndarray:
    """World-frame unit directions for every cell of a (possibly latent) grid.

    ``grid_shape`` defaults to the view's own resolution; otherwise it must
    divide the view resolution by an integer scale.
    """
    h, w = grid_shape if grid_shape is not None else (view.height, view.width)
    k = _grid_scale(view, (h, w))
    jj, ii = np.meshgrid(np.arange(w), np.arange(h))
    u = (jj + 0.5) * k - 0.5
    v = (ii + 0.5) * k - 0.5
    return pixel_to_ray(view, u, v)


def _grid_scale(view: ViewSpec, grid_shape: tuple[int, int]) -> int:
    h, w = grid_shape
    if view.height % h or view.width % w:
        raise ValueError(
            f"grid {h}x{w} does not divide view resolution {view.height}x{view.width}"
        )
    kh, kw = view.height // h, view.width // w
    if kh != kw:
        raise ValueError("grid scale must be the same on both axes")
    return kh


# ---------------------------------------------------------------------------
# depth <-> distance
# ---------------------------------------------------------------------------

def _ray_norms(view: ViewSpec) -> np.ndarray:
    intr = view.intrinsics
    u = np.arange(intr.width, dtype=np.float64)
    v = np.arange(intr.height, dtype=np.float64)
    x = (u - intr.cx) / intr.fx
    y = (v - intr.cy) / intr.fy
    return np.sqrt(1.0 + x[None, :] ** 2 + y[:, None] ** 2)


def depth_to_distance(depth: np.ndarray, view: ViewSpec) -> DistanceGrid:
    """Convert camera-frame z depth to distance along each pixel's ray.

    Only defined for perspective views; equirect grids store distance
    natively.  Pixels with depth <= 0 are invalid.
    """
    if view.kind != "perspective":
        raise ValueError("depth_to_distance needs a perspective view")
    depth = np.asarray(depth, dtype=np.float64)
    if depth.shape != (view.height, view.width):
        raise ValueError("depth shape does not match view resolution")
    valid = depth > 0
    return DistanceGrid(np.where(valid, depth * _ray_norms(view), 0.0), valid)


def distance_to_depth(dist: DistanceGrid, view: ViewSpec) -> np.ndarray:
    """Inverse of depth_to_distance; invalid pixels map to 0."""
    if view.kind != "perspective":
        raise ValueError("distance_to_depth needs a perspective view")
    return np.where(dist.valid, dist.values / _ray_norms(view), 0.0)


# ---------------------------------------------------------------------------
# panorama view fan
# ---------------------------------------------------------------------------

class PanoCoverageError(ValueError):
    """View fan cannot cover the target latitude band."""


def make_pano_views(
    center,
    m: int = 8,
    fov_deg: float = 98.0,
    size: int = 512,
) -> list[ViewSpec]:
    """Ring of m square perspective views at `center`, pitch 0, yaws k*360/m.

    The fan must overlap horizontally (fov > 360/m) and reach the +-45 degree
    latitude band vertically (fov/2 >= 45), otherwise stitching would leave
    uncovered cells.
    """
    if m < 3:
        raise PanoCoverageError("need at least 3 views in the fan")
    if fov_deg <= 360.0 / m:
        raise PanoCoverageError(
            f"fov {fov_deg} deg leaves no horizontal overlap for {m} views"
        )
    if fov_deg / 2.0 < 45.0:
        raise PanoCoverageError(
            f"fov {fov_deg} deg cannot reach the 45 degree band edge"
        )
    center = np.asarray(center, dtype=np.float64)
    f = (size / 2.0) / np.tan(np.radians(fov_deg) / 2.0)
    intr = CameraIntrinsics(f, f, size / 2.0, size / 2.0, size, size)
    views = []
    for k in range(m):
        yaw = 2.0 * np.pi * k / m
        views.append(ViewSpec.perspective(intr, RigidTransform(rotation_yaw(yaw), center)))
    return views


# ---------------------------------------------------------------------------
# shared-center warping
# ---------------------------------------------------------------------------

@dataclass
class WarpMap:
    """Precomputed bilinear resampling from a source grid into a dst grid.

    Taps are flat indices into the source grid; weights sum to 1 where the
    mask is set.  Cells outside the source frustum have zero weights.
    """

    dst_shape: tuple[int, int]
    src_shape: tuple[int, int]
    taps: np.ndarray     # (4, N) int64 flat indices into src
    weights: np.ndarray  # (4, N) float64
    mask: np.ndarray     # (H, W) bool

    def apply(self, grid: np.ndarray, src_valid: np.ndarray | None = None):
        """Resample `grid`; returns (values, mask).

        values carry the grid dtype for float inputs; cells outside the mask
        are zero.  With `src_valid`, cells whose bilinear footprint touches
        an invalid source cell (with non-negligible weight) are masked out.
        """
        grid = np.asarray(grid)
        if grid.shape[:2] != self.src_shape:
            raise ValueError("grid shape does not match warp source shape")
        flat = grid.reshape(self.src_shape[0] * self.src_shape[1], -1)
        out = np.zeros((self.taps.shape[1], flat.shape[1]), dtype=np.float64)
        for t in range(4):
            out += self.weights[t][:, None] * flat[self.taps[t]]
        mask = self.mask
        if src_valid is not None:
            bad = np.zeros(self.taps.shape[1], dtype=np.float64)
            invalid = (~src_valid.reshape(-1)).astype(np.float64)
            for t in range(4):
                bad += self.weights[t] * invalid[self.taps[t]]
            mask = mask & (bad < 1e-9).reshape(self.dst_shape)
        out = out.reshape(self.dst_shape + (flat.shape[1],))
        if grid.ndim == 2:
            out = out[..., 0]
        out = out * mask[..., None] if out.ndim == 3 else out * mask
        if grid.dtype == np.float32:
            out = out.astype(np.float32)
        return out, mask.copy()


def build_warp(
    src: ViewSpec,
    dst: ViewSpec,
    src_shape: tuple[int, int] | None = None,
    dst_shape: tuple[int, int] | None = None,
) -> WarpMap:
    """Warp operator between two views sharing a camera center.

    The warp is pure rotation resampling: each dst cell's ray is rotated into
    the source view and bilinearly sampled.  Grid shapes may be the view
    resolution divided by an integer latent scale.
    """
    if np.linalg.norm(src.pose.position - dst.pose.position) > 1e-9:
        raise ValueError("warp requires views with a shared camera center")
    src_shape = src_shape if src_shape is not None else (src.height, src.width)
    dst_shape = dst_shape if dst_shape is not None else (dst.height, dst.width)
    hs, ws = src_shape
    k_src = _grid_scale(src, src_shape)

    dirs = view_ray_grid(dst, dst_shape).reshape(-1, 3)
    u, v, fwd = _project(src, dirs)
    lu = _snap((u + 0.5) / k_src - 0.5)
    lv = _snap((v + 0.5) / k_src - 0.5)

    wrap = src.kind == "equirect"
    if wrap:
        lu = np.mod(lu + 0.5, ws) - 0.5
        mask = (lv >= 0) & (lv <= hs - 1)
    else:
        mask = fwd & (lu >= 0) & (lu <= ws - 1) & (lv >= 0) & (lv <= hs - 1)

    lu = np.where(mask, lu, 0.0)
    lv = np.where(mask, lv, 0.0)
    if wrap:
        j0 = np.floor(lu)
        fu = lu - j0
        j0 = j0.astype(np.int64)
        j1 = np.mod(j0 + 1, ws)
        j0 = np.mod(j0, ws)
    else:
        # clamp the cell so boundary samples (frac 0 or 1) stay exact
        j0 = np.clip(np.floor(lu), 0, max(ws - 2, 0)).astype(np.int64)
        fu = lu - j0
        j1 = np.minimum(j0 + 1, ws - 1)
    i0 = np.clip(np.floor(lv), 0, max(hs - 2, 0)).astype(np.int64)
    fv = lv - i0
    i1 = np.minimum(i0 + 1, hs - 1)

    taps = np.stack([
        i0 * ws + j0,
        i0 * ws + j1,
        i1 * ws + j0,
        i1 * ws + j1,
    ])
    weights = np.stack([
        (1 - fu) * (1 - fv),
        fu * (1 - fv),
        (1 - fu) * fv,
        fu * fv,
    ])
    weights = weights * mask[None, :]
    return WarpMap(tuple(dst_shape), tuple(src_shape), taps, weights,
                   mask.reshape(dst_shape))


def warp_grid(
    src: ViewSpec,
    dst: ViewSpec,
    grid: np.ndarray,
    src_valid: np.ndarray | None = None,
    dst_shape: tuple[int, int] | None = None,
):
    """One-shot warp of `grid` from src into dst; see build_warp."""
    grid = np.asarray(grid)
    wm = build_warp(src, dst, grid.shape[:2], dst_shape)
    return wm.apply(grid, src_valid)
