"""Triangle meshes and RGBD/panorama triangulation.

Depth and distance grids are triangulated per 2x2 pixel block into the two
triangles {(u,v),(u+1,v),(u,v+1)} and {(u+1,v),(u+1,v+1),(u,v+1)}; a
triangle is dropped if any corner is invalid, any world edge exceeds
``edge_len_max`` or the max/min corner depth ratio exceeds
``depth_ratio_max`` (the usual depth-discontinuity guards).  Faces are wound
so the geometric normal points toward the observing camera.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import ViewSpec, view_ray_grid
from .sceneio import RgbdFrame

DEFAULT_EDGE_LEN_MAX = 0.1
DEFAULT_DEPTH_RATIO_MAX = 1.25


@dataclass
class TriangleMesh:
    vertices: np.ndarray  # (N, 3) float64 world meters
    colors: np.ndarray    # (N, 3) float32 in [0, 1]
    faces: np.ndarray     # (M, 3) int64

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.colors = np.asarray(self.colors, dtype=np.float32).reshape(-1, 3)
        self.faces = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if len(self.colors) != len(self.vertices):
            raise ValueError("need one color per vertex")
        if not np.all(np.isfinite(self.vertices)):
            raise ValueError("vertices contain non-finite values")
        if len(self.faces) and self.faces.max() >= len(self.vertices):
            raise ValueError("face index out of range")
        if len(self.faces) and self.faces.min() < 0:
            raise ValueError("negative face index")

    @staticmethod
    def empty() -> "TriangleMesh":
        return TriangleMesh(np.zeros((0, 3)), np.zeros((0, 3), np.float32),
                            np.zeros((0, 3), np.int64))

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def copy(self) -> "TriangleMesh":
        return TriangleMesh(self.vertices.copy(), self.colors.copy(), self.faces.copy())

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        if not len(self.vertices):
            raise ValueError("empty mesh has no bounds")
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def face_areas(self) -> np.ndarray:
        a = self.vertices[self.faces[:, 0]]
        b = self.vertices[self.faces[:, 1]]
        c = self.vertices[self.faces[:, 2]]
        return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)


def fuse(a: TriangleMesh, b: TriangleMesh) -> TriangleMesh:
    """Concatenate two meshes, reindexing the second mesh's faces."""
    return TriangleMesh(
        np.concatenate([a.vertices, b.vertices]),
        np.concatenate([a.colors, b.colors]),
        np.concatenate([a.faces, b.faces + a.n_vertices]),
    )


def _triangulate_grid(
    points: np.ndarray,       # (H, W, 3) world positions
    colors: np.ndarray,       # (H, W, 3)
    depths: np.ndarray,       # (H, W) depth or distance used by the ratio test
    valid: np.ndarray,        # (H, W) corner validity
    region: np.ndarray,       # (H, W) cells allowed to spawn vertices
    cam_pos: np.ndarray,
    edge_len_max: float | None,
    depth_ratio_max: float | None,
    wrap: bool = False,
) -> TriangleMesh:
    h, w = valid.shape
    use = valid & region
    if not use.any():
        return TriangleMesh.empty()
    vid = np.full((h, w), -1, dtype=np.int64)
    vid[use] = np.arange(use.sum())
    verts = points[use]
    cols = colors[use]

    cols_right = w if wrap else w - 1
    jj = np.arange(cols_right)
    jn = (jj + 1) % w
    a = vid[:-1, jj]          # (u, v)
    b = vid[:-1, :][:, jn]    # (u+1, v)
    c = vid[1:, jj]           # (u, v+1)
    d = vid[1:, :][:, jn]     # (u+1, v+1)

    def corner(arr):
        return arr.reshape(-1)

    faces = []
    for tri in ((a, c, b), (b, c, d)):
        i0, i1, i2 = (corner(t) for t in tri)
        ok = (i0 >= 0) & (i1 >= 0) & (i2 >= 0)
        if not ok.any():
            continue
        p0, p1, p2 = verts[i0[ok]], verts[i1[ok]], verts[i2[ok]]
        keep = np.ones(len(p0), dtype=bool)
        if edge_len_max is not None:
            keep &= (
                (np.linalg.norm(p1 - p0, axis=1) <= edge_len_max)
                & (np.linalg.norm(p2 - p1, axis=1) <= edge_len_max)
                & (np.linalg.norm(p0 - p2, axis=1) <= edge_len_max)
            )
        if depth_ratio_max is not None:
            dep = depths[use]
            d0, d1, d2 = dep[i0[ok]], dep[i1[ok]], dep[i2[ok]]
            dmax = np.maximum(d0, np.maximum(d1, d2))
            dmin = np.minimum(d0, np.minimum(d1, d2))
            keep &= dmax <= depth_ratio_max * np.maximum(dmin, 1e-12)
        cand = np.stack([i0[ok], i1[ok], i2[ok]], axis=1)[keep]
        faces.append(cand)
    if not faces:
        return TriangleMesh.empty()
    faces = np.concatenate(faces)

    # enforce winding toward the observing camera
    if len(faces):
        p0 = verts[faces[:, 0]]
        n = np.cross(verts[faces[:, 1]] - p0, verts[faces[:, 2]] - p0)
        flip = np.einsum("ij,ij->i", n, cam_pos[None, :] - p0) < 0
        faces[flip] = faces[flip][:, [0, 2, 1]]
    return TriangleMesh(verts, cols, faces)


def mesh_from_rgbd(
    frame: RgbdFrame,
    edge_len_max: float | None = DEFAULT_EDGE_LEN_MAX,
    depth_ratio_max: float | None = DEFAULT_DEPTH_RATIO_MAX,
) -> TriangleMesh:
    """Back-project one RGBD frame to a world-space triangle mesh."""
    if (edge_len_max is not None and edge_len_max <= 0) or (
        depth_ratio_max is not None and depth_ratio_max <= 0
    ):
        raise ValueError("triangulation thresholds must be positive")
    view = ViewSpec.perspective(frame.intrinsics, frame.pose)
    return mesh_from_view_grid(
        frame.color, frame.depth, view,
        region=None, edge_len_max=edge_len_max, depth_ratio_max=depth_ratio_max,
    )


def mesh_from_view_grid(
    color: np.ndarray,
    depth: np.ndarray,
    view: ViewSpec,
    region: np.ndarray | None = None,
    edge_len_max: float | None = DEFAULT_EDGE_LEN_MAX,
    depth_ratio_max: float | None = DEFAULT_DEPTH_RATIO_MAX,
) -> TriangleMesh:
    """Triangulate a perspective depth grid, optionally restricted to `region`.

    `depth` is camera-frame z; only pixels with depth > 0 spawn vertices.
    The restricted form is used to patch inpainted holes: the region is the
    hole plus a one-pixel border whose depth comes from the existing mesh so
    the new patch stitches onto it.
    """
    intr = view.intrinsics
    h, w = depth.shape
    u = (np.arange(w) - intr.cx) / intr.fx
    v = (np.arange(h) - intr.cy) / intr.fy
    rays = np.stack(
        [np.broadcast_to(u[None, :], (h, w)),
         np.broadcast_to(v[:, None], (h, w)),
         np.ones((h, w))], axis=-1)
    pts_cam = rays * depth[..., None]
    points = view.pose.to_world(pts_cam.reshape(-1, 3)).reshape(h, w, 3)
    valid = depth > 0
    if region is None:
        region = np.ones_like(valid)
    return _triangulate_grid(
        points, np.asarray(color, np.float32), depth, valid, region,
        view.pose.position, edge_len_max, depth_ratio_max, wrap=False,
    )


def mesh_from_panorama_grid(
    color: np.ndarray,
    distance: np.ndarray,
    band_view: ViewSpec,
    region: np.ndarray,
    valid: np.ndarray,
    edge_len_max: float | None = None,
    depth_ratio_max: float | None = DEFAULT_DEPTH_RATIO_MAX,
) -> TriangleMesh:
    """Triangulate equirect band cells (horizontal wrap) inside `region`.

    The edge-length filter is off by default: band cell size scales with the
    panorama resolution, so the relative depth-ratio test is the meaningful
    discontinuity guard here.
    """
    dirs = view_ray_grid(band_view)
    points = band_view.pose.position + dirs * distance[..., None]
    return _triangulate_grid(
        points, np.asarray(color, np.float32), distance, valid, region,
        band_view.pose.position, edge_len_max, depth_ratio_max, wrap=True,
    )


def sample_surface_points(mesh: TriangleMesh, n: int, seed: int = 0) -> np.ndarray:
    """Sample n points area-uniformly over the mesh surface (seeded)."""
    if mesh.n_faces == 0:
        raise ValueError("cannot sample points from an empty mesh")
    if n <= 0:
        raise ValueError("n must be positive")
    rng = np.random.default_rng(seed)
    areas = mesh.face_areas()
    total = areas.sum()
    p = areas / total if total > 0 else np.full(len(areas), 1.0 / len(areas))
    fid = rng.choice(mesh.n_faces, size=n, p=p)
    r1 = np.sqrt(rng.random(n))
    r2 = rng.random(n)
    a = mesh.vertices[mesh.faces[fid, 0]]
    b = mesh.vertices[mesh.faces[fid, 1]]
    c = mesh.vertices[mesh.faces[fid, 2]]
    return (1 - r1)[:, None] * a + (r1 * (1 - r2))[:, None] * b + (r1 * r2)[:, None] * c
