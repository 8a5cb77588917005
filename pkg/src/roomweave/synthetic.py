"""Procedural box-room scenes with known geometry and smooth textures.

Used by the test suite, the demos and the CLI fixtures: the room mesh is
exact (axis-aligned box with inward-facing, grid-subdivided walls), every
surface point has an analytic color from a low-frequency field, and ray
distances to the walls have a closed form, so pipeline outputs can be
checked against ground truth without any neural component.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import (
    CameraIntrinsics,
    RigidTransform,
    ViewSpec,
    rotation_pitch,
    rotation_yaw,
)
from .meshing import TriangleMesh
from .sceneio import RgbdFrame, SceneDataset


def smooth_color_field(seed: int):
    """Deterministic smooth RGB field over world positions, values in (0, 1)."""
    rng = np.random.default_rng(seed)
    freqs = rng.uniform(0.25, 0.9, size=(3, 2, 3))
    phases = rng.uniform(0, 2 * np.pi, size=(3, 2))
    weights = rng.uniform(0.1, 0.22, size=(3, 2))

    def field(pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=np.float64)
        out = np.full(pts.shape[:-1] + (3,), 0.5)
        for c in range(3):
            for k in range(2):
                out[..., c] += weights[c, k] * np.sin(
                    pts @ freqs[c, k] * 2 * np.pi / 4.0 + phases[c, k]
                )
        return np.clip(out, 0.02, 0.98)

    return field


@dataclass
class BoxRoom:
    mesh: TriangleMesh
    size: tuple[float, float, float]
    center: np.ndarray
    color_at: object  # callable pts -> rgb

    def distance(self, origin, dirs) -> np.ndarray:
        return box_distance(np.asarray(origin) - self.center, dirs, self.size)


def box_distance(origin, dirs, size) -> np.ndarray:
    """Distance from an interior point to the box walls along unit rays."""
    origin = np.broadcast_to(np.asarray(origin, dtype=np.float64), np.shape(dirs))
    dirs = np.asarray(dirs, dtype=np.float64)
    half = np.asarray(size, dtype=np.float64) / 2.0
    t = np.full(dirs.shape[:-1], np.inf)
    for ax in range(3):
        d = dirs[..., ax]
        safe = np.where(np.abs(d) > 1e-12, d, 1.0)
        tax = np.where(
            np.abs(d) > 1e-12,
            (np.sign(d) * half[ax] - origin[..., ax]) / safe,
            np.inf,
        )
        t = np.minimum(t, np.where(tax > 0, tax, np.inf))
    return t


def _wall(axis: int, sign: float, half, grid: int, field, center):
    """Vertices/faces for one box wall, normal facing the interior."""
    axes = [a for a in range(3) if a != axis]
    s = np.linspace(-1.0, 1.0, grid + 1)
    uu, vv = np.meshgrid(s, s)
    pts = np.zeros(uu.shape + (3,))
    pts[..., axis] = sign * half[axis]
    pts[..., axes[0]] = uu * half[axes[0]]
    pts[..., axes[1]] = vv * half[axes[1]]
    pts = pts.reshape(-1, 3) + center
    cols = field(pts).astype(np.float32)

    n = grid + 1
    ii, jj = np.meshgrid(np.arange(grid), np.arange(grid), indexing="ij")
    a = (ii * n + jj).ravel()
    b = a + 1
    c = a + n
    d = c + 1
    faces = np.concatenate([
        np.stack([a, c, b], axis=1),
        np.stack([b, c, d], axis=1),
    ])
    mesh = TriangleMesh(pts, cols, faces)
    # orient triangles toward the room center
    p0 = mesh.vertices[mesh.faces[:, 0]]
    nrm = np.cross(mesh.vertices[mesh.faces[:, 1]] - p0,
                   mesh.vertices[mesh.faces[:, 2]] - p0)
    flip = np.einsum("ij,ij->i", nrm, np.asarray(center) - p0) < 0
    mesh.faces[flip] = mesh.faces[flip][:, [0, 2, 1]]
    return mesh


def make_box_room(
    size=(4.0, 3.0, 4.0),
    center=(0.0, 0.0, 0.0),
    grid: int = 32,
    seed: int = 0,
) -> BoxRoom:
    """Axis-aligned box room with inward walls and a smooth color field."""
    from .meshing import fuse

    field = smooth_color_field(seed)
    half = np.asarray(size) / 2.0
    center = np.asarray(center, dtype=np.float64)
    mesh = TriangleMesh.empty()
    for axis in range(3):
        for sign in (-1.0, 1.0):
            mesh = fuse(mesh, _wall(axis, sign, half, grid, field, center))
    return BoxRoom(mesh, tuple(float(s) for s in size), center, field)


def make_room_dataset(
    room: BoxRoom,
    n_frames: int = 40,
    resolution=(160, 120),
    fov_deg: float = 60.0,
    radius: float = 1.0,
    seed: int = 0,
) -> SceneDataset:
    """Posed RGBD observations on a circle inside the room, looking outward.

    Colors and depths are rendered from the ground-truth mesh, so a mesh
    rebuilt from these frames reproduces the room geometry.
    """
    from .rasterize import render

    w, h = resolution
    f = (w / 2.0) / np.tan(np.radians(fov_deg) / 2.0)
    intr = CameraIntrinsics(f, f, w / 2.0, h / 2.0, w, h)
    rng = np.random.default_rng(seed)
    frames = []
    for i in range(n_frames):
        ang = 2 * np.pi * i / n_frames
        pos = room.center + np.array([radius * np.sin(ang), 0.0, radius * np.cos(ang)])
        pitch = np.radians(rng.uniform(-10.0, 10.0))
        pose = RigidTransform(rotation_yaw(ang) @ rotation_pitch(pitch), pos)
        out = render(room.mesh, ViewSpec.perspective(intr, pose))
        depth = np.where(out.coverage, out.depth, 0.0)
        frames.append(RgbdFrame(out.color, depth, pose, intr, i))
    return SceneDataset(frames, "boxroom")


class RoomOracleDepthPredictor:
    """Depth test double backed by the ground-truth room geometry.

    ``predict_initial`` returns the true depth scaled by a known factor (the
    closed-form alignment has to recover 1/scale); ``refine`` hard-resets
    anchor pixels and pulls the rest toward the truth.
    """

    def __init__(self, room: BoxRoom, scale: float = 2.0):
        self.room = room
        self.scale = scale

    def _true_depth(self, view: ViewSpec) -> np.ndarray:
        from .geometry import distance_to_depth, view_ray_grid, DistanceGrid

        dirs = view_ray_grid(view)
        dist = self.room.distance(view.pose.position, dirs)
        return distance_to_depth(DistanceGrid(dist, np.isfinite(dist)), view)

    def predict_initial(self, image, view=None):
        if view is None:
            raise ValueError("room oracle needs the view context")
        return self._true_depth(view) * self.scale

    def refine(self, depth, anchor_depth, anchor_mask, view=None):
        out = np.where(anchor_mask, anchor_depth, depth)
        if view is not None:
            true = self._true_depth(view)
            out = np.where(anchor_mask, anchor_depth, 0.5 * out + 0.5 * true)
        return out
