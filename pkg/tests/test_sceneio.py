import hashlib

import numpy as np
import pytest

from roomweave.geometry import CameraIntrinsics, RigidTransform
from roomweave.meshing import TriangleMesh
from roomweave.sceneio import (
    RgbdFrame,
    SceneDataset,
    SceneLoadError,
    export_mesh,
    load_mesh,
    load_scene,
    read_pfm,
    split_views,
    write_pfm,
    write_scene,
)


def make_frame(fid=0, w=12, h=8, depth_value=1.0):
    rng = np.random.default_rng(fid)
    intr = CameraIntrinsics(10.0, 10.0, w / 2, h / 2, w, h)
    color = rng.uniform(size=(h, w, 3)).astype(np.float32)
    depth = np.full((h, w), depth_value)
    return RgbdFrame(color, depth, RigidTransform.identity(), intr, fid)


def make_dataset(n=3):
    return SceneDataset([make_frame(i) for i in range(n)], "toy")


# ---------------------------------------------------------------------------
# load_scene
# ---------------------------------------------------------------------------

def test_scene_round_trip(tmp_path):
    ds = make_dataset(3)
    write_scene(tmp_path / "scene", ds)
    back = load_scene(tmp_path / "scene")
    assert len(back) == 3
    assert [f.frame_id for f in back.frames] == [0, 1, 2]
    for a, b in zip(ds.frames, back.frames):
        assert b.depth.shape == (8, 12)
        # depth is stored as integer millimeters
        np.testing.assert_allclose(b.depth, np.round(a.depth * 1000) / 1000, atol=1e-12)
        assert np.max(np.abs(b.color - a.color)) <= 1.0 / 255.0


def test_depth_unit_conversion_exact(tmp_path):
    import cv2

    root = tmp_path / "scene"
    ds = SceneDataset([make_frame(0, w=1, h=1)], "one")
    write_scene(root, ds)
    cv2.imwrite(str(root / "depth" / "000000.png"), np.array([[1500]], np.uint16))
    back = load_scene(root)
    assert back.frames[0].depth[0, 0] == 1.5


def test_empty_directory_errors(tmp_path):
    root = tmp_path / "scene"
    write_scene(root, make_dataset(1))
    for p in (root / "color").glob("*.png"):
        p.unlink()
    with pytest.raises(SceneLoadError, match="no frames"):
        load_scene(root)


def test_missing_pose_names_frame(tmp_path):
    root = tmp_path / "scene"
    write_scene(root, make_dataset(2))
    (root / "pose" / "000001.txt").unlink()
    with pytest.raises(SceneLoadError, match="000001"):
        load_scene(root)


def test_bad_pose_rejected(tmp_path):
    root = tmp_path / "scene"
    write_scene(root, make_dataset(1))
    (root / "pose" / "000000.txt").write_text("nan 0 0 0\n0 1 0 0\n0 0 1 0\n0 0 0 1\n")
    with pytest.raises(SceneLoadError, match="000000"):
        load_scene(root)


def test_missing_directory_errors(tmp_path):
    with pytest.raises(SceneLoadError):
        load_scene(tmp_path / "nope")


# ---------------------------------------------------------------------------
# split_views
# ---------------------------------------------------------------------------

def test_split_5_percent_of_100():
    ds = SceneDataset([make_frame(i) for i in range(100)], "big")
    inp, ev = split_views(ds, 0.05)
    assert len(inp) == 5 and len(ev) == 95


def test_split_full_fraction():
    ds = make_dataset(4)
    inp, ev = split_views(ds, 1.0)
    assert len(inp) == 4 and len(ev) == 0


def test_split_stride_ids():
    ds = SceneDataset([make_frame(i) for i in range(10)], "ten")
    inp, _ = split_views(ds, 0.2)
    assert [f.frame_id for f in inp.frames] == [0, 5]


def test_split_partition_property():
    ds = SceneDataset([make_frame(i) for i in range(17)], "odd")
    for frac in (0.1, 0.3, 0.5, 0.8):
        inp, ev = split_views(ds, frac)
        ids_in = [f.frame_id for f in inp.frames]
        ids_ev = [f.frame_id for f in ev.frames]
        assert sorted(ids_in + ids_ev) == list(range(17))
        assert not set(ids_in) & set(ids_ev)
        assert ids_ev == sorted(ids_ev)
        assert 0 in ids_in


def test_split_zero_views_errors():
    ds = make_dataset(3)
    with pytest.raises(ValueError):
        split_views(ds, 0.01)
    with pytest.raises(ValueError):
        split_views(ds, 0.0)


# ---------------------------------------------------------------------------
# PLY
# ---------------------------------------------------------------------------

def one_triangle_mesh():
    return TriangleMesh(
        np.array([[0.0, 0.0, 1.0], [1.0, 0.0, 1.0], [0.0, 1.0, 1.0]]),
        np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]], np.float32),
        np.array([[0, 1, 2]]),
    )


def test_ply_round_trip(tmp_path):
    mesh = one_triangle_mesh()
    path = tmp_path / "tri.ply"
    export_mesh(mesh, path)
    back = load_mesh(path)
    assert back.n_vertices == 3 and back.n_faces == 1
    np.testing.assert_array_equal(back.vertices, mesh.vertices)
    np.testing.assert_array_equal(back.faces, mesh.faces)
    np.testing.assert_allclose(back.colors, mesh.colors, atol=0.5 / 255)


def test_ply_empty_mesh(tmp_path):
    path = tmp_path / "empty.ply"
    export_mesh(TriangleMesh.empty(), path)
    back = load_mesh(path)
    assert back.n_vertices == 0 and back.n_faces == 0


def test_ply_color_quantization_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    mesh = TriangleMesh(
        rng.normal(size=(50, 3)),
        rng.uniform(size=(50, 3)).astype(np.float32),
        rng.integers(0, 50, size=(30, 3)),
    )
    path = tmp_path / "m.ply"
    export_mesh(mesh, path)
    back = load_mesh(path)
    np.testing.assert_array_equal(back.vertices, mesh.vertices)
    # colors survive up to 8-bit quantization, and quantization is idempotent
    np.testing.assert_allclose(back.colors, mesh.colors, atol=0.5 / 255 + 1e-7)
    export_mesh(back, tmp_path / "m2.ply")
    again = load_mesh(tmp_path / "m2.ply")
    np.testing.assert_array_equal(again.colors, back.colors)


def test_ply_is_deterministic(tmp_path):
    rng = np.random.default_rng(4)
    nverts = 6000
    mesh = TriangleMesh(
        rng.normal(size=(nverts, 3)),
        rng.uniform(size=(nverts, 3)).astype(np.float32),
        rng.integers(0, nverts, size=(10000, 3)),
    )
    export_mesh(mesh, tmp_path / "a.ply")
    export_mesh(mesh, tmp_path / "b.ply")
    ha = hashlib.sha256((tmp_path / "a.ply").read_bytes()).hexdigest()
    hb = hashlib.sha256((tmp_path / "b.ply").read_bytes()).hexdigest()
    assert ha == hb


# ---------------------------------------------------------------------------
# PFM
# ---------------------------------------------------------------------------

def test_pfm_round_trip(tmp_path):
    rng = np.random.default_rng(5)
    data = rng.uniform(0, 10, size=(16, 32)).astype(np.float32)
    write_pfm(tmp_path / "d.pfm", data)
    back = read_pfm(tmp_path / "d.pfm")
    np.testing.assert_array_equal(back, data.astype(np.float64))
