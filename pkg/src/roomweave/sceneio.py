"""Dataset loading and exact-file-format export.

On-disk scene layout (one directory per scene):

    color/%06d.png      8-bit RGB
    depth/%06d.png      16-bit grayscale, millimeters, 0 = missing
    pose/%06d.txt       4x4 row-major camera-to-world matrix
    intrinsics.txt      "fx fy cx cy width height" on one line

Meshes are exchanged as binary little-endian PLY with double x/y/z, uchar
red/green/blue and uint32 face index lists; distance panoramas as
little-endian PFM.
"""

from __future__ import annotations

import re
import struct
from dataclasses import dataclass
from pathlib import Path

import cv2
import numpy as np

from .geometry import CameraIntrinsics, RigidTransform


class SceneLoadError(ValueError):
    """Raised when a scene directory is missing or inconsistent."""


class MeshFormatError(ValueError):
    """Raised when a mesh file cannot be parsed."""


@dataclass
class RgbdFrame:
    """One posed RGBD observation."""

    color: np.ndarray            # (H, W, 3) float32 in [0, 1]
    depth: np.ndarray            # (H, W) float64 meters, 0 = invalid
    pose: RigidTransform         # camera-to-world
    intrinsics: CameraIntrinsics
    frame_id: int

    def __post_init__(self):
        self.color = np.asarray(self.color, dtype=np.float32)
        self.depth = np.asarray(self.depth, dtype=np.float64)
        h, w = self.depth.shape
        if self.color.shape != (h, w, 3):
            raise ValueError(f"frame {self.frame_id}: color/depth shapes differ")
        if (self.intrinsics.height, self.intrinsics.width) != (h, w):
            raise ValueError(f"frame {self.frame_id}: intrinsics resolution differs")
        if not np.all(np.isfinite(self.depth)) or np.any(self.depth < 0):
            raise ValueError(f"frame {self.frame_id}: depth must be finite and >= 0")


@dataclass
class SceneDataset:
    """Ordered frames of one scene; may be empty only as an eval split."""

    frames: list[RgbdFrame]
    scene_id: str

    def __post_init__(self):
        if self.frames:
            shape = self.frames[0].depth.shape
            for f in self.frames:
                if f.depth.shape != shape:
                    raise ValueError("all frames must share one resolution")

    def __len__(self):
        return len(self.frames)


# ---------------------------------------------------------------------------
# scene loading
# ---------------------------------------------------------------------------

def _read_intrinsics(path: Path) -> CameraIntrinsics:
    try:
        vals = [float(x) for x in path.read_text().split()]
    except OSError as exc:
        raise SceneLoadError(f"cannot read intrinsics file {path}: {exc}") from exc
    if len(vals) != 6:
        raise SceneLoadError(f"{path}: expected 'fx fy cx cy width height'")
    fx, fy, cx, cy, w, h = vals
    return CameraIntrinsics(fx, fy, cx, cy, int(w), int(h))


def load_scene(root_path) -> SceneDataset:
    """Load a scene directory into a dataset, frames ordered by numeric id.

    Depth is converted from integer millimeters to float meters; zero stays
    zero (missing).  Any missing file, dimension mismatch or non-finite pose
    raises SceneLoadError naming the offending frame.
    """
    root = Path(root_path)
    if not root.is_dir():
        raise SceneLoadError(f"scene directory {root} does not exist")
    color_dir, depth_dir, pose_dir = root / "color", root / "depth", root / "pose"
    for d in (color_dir, depth_dir, pose_dir):
        if not d.is_dir():
            raise SceneLoadError(f"scene {root} is missing {d.name}/")
    intr = _read_intrinsics(root / "intrinsics.txt")

    ids = sorted(
        int(m.group(1))
        for p in color_dir.glob("*.png")
        if (m := re.fullmatch(r"(\d+)\.png", p.name))
    )
    if not ids:
        raise SceneLoadError(f"scene {root}: no frames")

    frames = []
    for fid in ids:
        name = f"{fid:06d}"
        cpath = color_dir / f"{name}.png"
        dpath = depth_dir / f"{name}.png"
        ppath = pose_dir / f"{name}.txt"
        bgr = cv2.imread(str(cpath), cv2.IMREAD_COLOR)
        if bgr is None:
            raise SceneLoadError(f"frame {name}: cannot read {cpath}")
        color = bgr[..., ::-1].astype(np.float32) / 255.0
        raw = cv2.imread(str(dpath), cv2.IMREAD_UNCHANGED)
        if raw is None:
            raise SceneLoadError(f"frame {name}: cannot read {dpath}")
        if raw.ndim != 2:
            raise SceneLoadError(f"frame {name}: depth PNG must be single channel")
        depth = raw.astype(np.float64) / 1000.0
        if not ppath.is_file():
            raise SceneLoadError(f"frame {name}: missing pose file")
        mat = np.loadtxt(ppath)
        if mat.shape != (4, 4) or not np.all(np.isfinite(mat)):
            raise SceneLoadError(f"frame {name}: pose must be a finite 4x4 matrix")
        try:
            pose = RigidTransform.from_matrix(mat)
        except ValueError as exc:
            raise SceneLoadError(f"frame {name}: {exc}") from exc
        try:
            frames.append(RgbdFrame(color, depth, pose, intr, fid))
        except ValueError as exc:
            raise SceneLoadError(str(exc)) from exc
    return SceneDataset(frames, root.name)


def write_scene(root_path, dataset: SceneDataset) -> None:
    """Write a dataset in the canonical on-disk layout (test fixtures, demos)."""
    root = Path(root_path)
    for sub in ("color", "depth", "pose"):
        (root / sub).mkdir(parents=True, exist_ok=True)
    intr = dataset.frames[0].intrinsics
    (root / "intrinsics.txt").write_text(
        f"{intr.fx} {intr.fy} {intr.cx} {intr.cy} {intr.width} {intr.height}\n"
    )
    for f in dataset.frames:
        name = f"{f.frame_id:06d}"
        bgr = (np.clip(f.color, 0, 1) * 255.0 + 0.5).astype(np.uint8)[..., ::-1]
        cv2.imwrite(str(root / "color" / f"{name}.png"), bgr)
        mm = np.clip(np.round(f.depth * 1000.0), 0, 65535).astype(np.uint16)
        cv2.imwrite(str(root / "depth" / f"{name}.png"), mm)
        np.savetxt(root / "pose" / f"{name}.txt", f.pose.to_matrix(), fmt="%.17g")


def split_views(ds: SceneDataset, fraction: float) -> tuple[SceneDataset, SceneDataset]:
    """Uniform-stride input/eval split; the eval set keeps original order.

    Input indices are floor(k*N/M) for k in [0, M) with M = round(N*fraction),
    so the first frame is always an input view; the eval set is the exact
    complement (the fixed evaluation trajectory).
    """
    if not (0 < fraction <= 1):
        raise ValueError("fraction must be in (0, 1]")
    n = len(ds.frames)
    m = int(np.floor(n * fraction + 0.5))
    if m == 0:
        raise ValueError(f"fraction {fraction} yields 0 input views for {n} frames")
    idx = sorted({(k * n) // m for k in range(m)})
    chosen = set(idx)
    inputs = [ds.frames[i] for i in idx]
    evals = [ds.frames[i] for i in range(n) if i not in chosen]
    return SceneDataset(inputs, ds.scene_id), SceneDataset(evals, ds.scene_id)


# ---------------------------------------------------------------------------
# PLY
# ---------------------------------------------------------------------------

_PLY_HEADER = """ply
format binary_little_endian 1.0
element vertex {nv}
property double x
property double y
property double z
property uchar red
property uchar green
property uchar blue
element face {nf}
property list uchar uint32 vertex_indices
end_header
"""


def export_mesh(mesh, path) -> None:
    """Write a mesh as binary little-endian PLY with 8-bit vertex colors."""
    verts = np.asarray(mesh.vertices, dtype="<f8")
    cols = (np.clip(np.asarray(mesh.colors), 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
    faces = np.asarray(mesh.faces, dtype="<u4")
    nv, nf = len(verts), len(faces)
    vert_rec = np.zeros(nv, dtype=[("xyz", "<f8", 3), ("rgb", "u1", 3)])
    if nv:
        vert_rec["xyz"] = verts
        vert_rec["rgb"] = cols
    face_rec = np.zeros(nf, dtype=[("n", "u1"), ("idx", "<u4", 3)])
    if nf:
        face_rec["n"] = 3
        face_rec["idx"] = faces
    with open(path, "wb") as fh:
        fh.write(_PLY_HEADER.format(nv=nv, nf=nf).encode("ascii"))
        fh.write(vert_rec.tobytes())
        fh.write(face_rec.tobytes())


def load_mesh(path):
    """Read a PLY mesh written by export_mesh (double or float coordinates)."""
    from .meshing import TriangleMesh

    with open(path, "rb") as fh:
        blob = fh.read()
    end = blob.find(b"end_header\n")
    if not blob.startswith(b"ply") or end < 0:
        raise MeshFormatError(f"{path}: not a PLY file")
    header = blob[:end].decode("ascii", errors="replace").splitlines()
    body = blob[end + len(b"end_header\n"):]
    if "format binary_little_endian 1.0" not in header[1]:
        raise MeshFormatError(f"{path}: only binary little-endian PLY is supported")

    nv = nf = 0
    vert_props: list[tuple[str, str]] = []
    section = None
    for line in header[2:]:
        tok = line.split()
        if not tok:
            continue
        if tok[0] == "element":
            section = tok[1]
            if tok[1] == "vertex":
                nv = int(tok[2])
            elif tok[1] == "face":
                nf = int(tok[2])
        elif tok[0] == "property" and section == "vertex":
            if tok[1] == "list":
                raise MeshFormatError(f"{path}: list property on vertices")
            vert_props.append((tok[2], tok[1]))

    fmt = {"double": "<f8", "float": "<f4", "uchar": "u1", "uint8": "u1"}
    try:
        vdtype = np.dtype([(n, fmt[t]) for n, t in vert_props])
    except KeyError as exc:
        raise MeshFormatError(f"{path}: unsupported vertex property type {exc}") from exc
    need = {"x", "y", "z", "red", "green", "blue"}
    if not need <= {n for n, _ in vert_props}:
        raise MeshFormatError(f"{path}: vertex properties must include xyz and rgb")

    vbytes = nv * vdtype.itemsize
    vrec = np.frombuffer(body[:vbytes], dtype=vdtype, count=nv)
    verts = np.stack([vrec["x"], vrec["y"], vrec["z"]], axis=-1).astype(np.float64) \
        if nv else np.zeros((0, 3))
    cols = np.stack([vrec["red"], vrec["green"], vrec["blue"]], axis=-1).astype(np.float32) / 255.0 \
        if nv else np.zeros((0, 3), dtype=np.float32)

    faces = np.zeros((nf, 3), dtype=np.int64)
    off = vbytes
    for i in range(nf):
        (cnt,) = struct.unpack_from("<B", body, off)
        off += 1
        if cnt != 3:
            raise MeshFormatError(f"{path}: only triangle faces are supported")
        faces[i] = struct.unpack_from("<3I", body, off)
        off += 12
    return TriangleMesh(verts, cols, faces)


# ---------------------------------------------------------------------------
# PFM (little-endian float panoramas)
# ---------------------------------------------------------------------------

def write_pfm(path, data: np.ndarray) -> None:
    """Single-channel little-endian PFM; rows are written bottom-up."""
    data = np.asarray(data, dtype=np.float32)
    if data.ndim != 2:
        raise ValueError("write_pfm expects a 2d array")
    with open(path, "wb") as fh:
        fh.write(b"Pf\n")
        fh.write(f"{data.shape[1]} {data.shape[0]}\n".encode("ascii"))
        fh.write(b"-1.0\n")
        fh.write(np.flipud(data).astype("<f4").tobytes())


def read_pfm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        if fh.readline().strip() != b"Pf":
            raise ValueError(f"{path}: not a single-channel PFM")
        w, h = (int(x) for x in fh.readline().split())
        scale = float(fh.readline())
        dt = "<f4" if scale < 0 else ">f4"
        data = np.frombuffer(fh.read(w * h * 4), dtype=dt).reshape(h, w)
    return np.flipud(data).astype(np.float64)
