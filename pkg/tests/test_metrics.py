import numpy as np
import pytest

from roomweave.metrics import (
    backproject_frames,
    chamfer_brute_force,
    chamfer_one_directional,
    evaluate,
    luminance,
    psnr,
    ssim,
)
from roomweave.meshing import TriangleMesh, fuse, mesh_from_rgbd, sample_surface_points
from roomweave.synthetic import make_box_room, make_room_dataset


# ---------------------------------------------------------------------------
# psnr
# ---------------------------------------------------------------------------

def test_psnr_identical_capped():
    img = np.random.default_rng(0).uniform(size=(16, 16, 3))
    assert psnr(img, img) == 100.0


def test_psnr_analytic_values():
    a = np.zeros((8, 8))
    b = np.full((8, 8), 1.0 / 255.0)
    assert psnr(a, b) == pytest.approx(48.1308, abs=1e-4)
    c = np.full((8, 8), 0.5)
    assert psnr(a, c) == pytest.approx(6.0206, abs=1e-4)


def test_psnr_symmetric_and_masked():
    rng = np.random.default_rng(1)
    a, b = rng.uniform(size=(12, 12)), rng.uniform(size=(12, 12))
    assert psnr(a, b) == psnr(b, a)
    mask = np.zeros((12, 12), bool)
    mask[3, 3] = True
    b2 = a.copy()
    b2[3, 3] += 0.5
    assert psnr(a, b2, mask) == pytest.approx(6.0206, abs=1e-4)
    with pytest.raises(ValueError):
        psnr(a, b, np.zeros((12, 12), bool))


# ---------------------------------------------------------------------------
# ssim
# ---------------------------------------------------------------------------

def test_ssim_identity():
    img = np.random.default_rng(2).uniform(size=(32, 32))
    assert ssim(img, img) == pytest.approx(1.0, abs=1e-12)


def test_ssim_matches_reference_implementation():
    skimage = pytest.importorskip("skimage.metrics")
    rng = np.random.default_rng(3)
    a = rng.uniform(size=(48, 64))
    cases = [
        np.clip(a + 0.1, 0, 1),
        np.clip(a + rng.normal(0, 0.05, a.shape), 0, 1),
        rng.uniform(size=(48, 64)),
    ]
    for b in cases:
        want = skimage.structural_similarity(
            a, b, win_size=11, gaussian_weights=True, sigma=1.5,
            use_sample_covariance=False, data_range=1.0,
        )
        assert ssim(a, b) == pytest.approx(want, abs=1e-6)


def test_ssim_uncorrelated_noise_near_zero():
    rng = np.random.default_rng(4)
    a = rng.uniform(size=(64, 64))
    b = rng.uniform(size=(64, 64))
    assert abs(ssim(a, b)) < 0.05


def test_ssim_too_small_image():
    with pytest.raises(ValueError):
        ssim(np.zeros((8, 8)), np.zeros((8, 8)))


# ---------------------------------------------------------------------------
# chamfer
# ---------------------------------------------------------------------------

def plane_mesh(half=2.0, z=0.0):
    verts = np.array([
        [-half, -half, z], [half, -half, z], [-half, half, z], [half, half, z]])
    return TriangleMesh(verts, np.full((4, 3), 0.5, np.float32),
                        np.array([[0, 1, 2], [1, 3, 2]]))


def test_chamfer_self_distance_below_sampling_bound():
    mesh = plane_mesh()
    gt = sample_surface_points(mesh, 500, seed=1)
    n = 20000
    d = chamfer_one_directional(gt, mesh, n_samples=n, seed=2)
    area = 16.0
    assert d < 0.75 * np.sqrt(area / n)


def test_chamfer_point_to_plane():
    mesh = plane_mesh()
    d = chamfer_one_directional(np.array([[0.0, 0.0, 0.1]]), mesh,
                                n_samples=200_000, seed=3)
    assert d == pytest.approx(0.1, abs=0.005)


def test_chamfer_identical_point():
    tri = TriangleMesh(np.array([[1.0, 2.0, 3.0]] * 3),
                       np.full((3, 3), 0.5, np.float32), np.array([[0, 1, 2]]))
    d = chamfer_one_directional(np.array([[1.0, 2.0, 3.0]]), tri,
                                n_samples=10, seed=0)
    assert d == 0.0


def test_chamfer_indexed_equals_brute_force():
    rng = np.random.default_rng(5)
    mesh = plane_mesh()
    gt = rng.uniform(-2, 2, size=(2000, 3))
    samples = sample_surface_points(mesh, 10_000, seed=4)
    from scipy.spatial import cKDTree

    tree = cKDTree(samples)
    dists, _ = tree.query(gt, k=1, workers=1)
    indexed = float(np.mean(dists))
    brute = chamfer_brute_force(gt, samples)
    assert indexed == brute


def test_chamfer_empty_inputs_error():
    mesh = plane_mesh()
    with pytest.raises(ValueError):
        chamfer_one_directional(np.zeros((0, 3)), mesh)
    with pytest.raises(ValueError):
        chamfer_one_directional(np.ones((5, 3)), TriangleMesh.empty())


# ---------------------------------------------------------------------------
# evaluate
# ---------------------------------------------------------------------------

def room_and_mesh(seed=0, n=6):
    room = make_box_room(size=(4.0, 3.0, 4.0), grid=24, seed=seed)
    ds = make_room_dataset(room, n_frames=n, resolution=(96, 72),
                           fov_deg=60.0, radius=1.0, seed=seed)
    mesh = TriangleMesh.empty()
    for f in ds.frames:
        mesh = fuse(mesh, mesh_from_rgbd(f))
    return room, ds, mesh


def test_evaluate_self_consistency():
    _, ds, mesh = room_and_mesh()
    report = evaluate(mesh, ds.frames, blur_kernel=None, render_scale=1,
                      chamfer_samples=30_000)
    assert report.psnr > 40.0
    assert report.depth_mse < 1e-4
    assert report.ssim > 0.95
    assert report.n_views == len(ds.frames)
    assert len(report.per_view) == report.n_views


def test_evaluate_blur_helps_on_noisy_render():
    _, ds, mesh = room_and_mesh(seed=1)
    rng = np.random.default_rng(6)
    noisy = TriangleMesh(
        mesh.vertices,
        np.clip(mesh.colors + rng.normal(0, 0.25, mesh.colors.shape)
                .astype(np.float32), 0, 1),
        mesh.faces,
    )
    plain = evaluate(noisy, ds.frames[:2], blur_kernel=None, render_scale=2,
                     chamfer_samples=5_000)
    blurred = evaluate(noisy, ds.frames[:2], blur_kernel=5, render_scale=2,
                       chamfer_samples=5_000)
    assert blurred.psnr >= plain.psnr


def test_evaluate_order_invariant():
    _, ds, mesh = room_and_mesh(seed=2, n=4)
    a = evaluate(mesh, ds.frames, render_scale=1, chamfer_samples=5_000)
    b = evaluate(mesh, ds.frames[::-1], render_scale=1, chamfer_samples=5_000)
    assert a.psnr == pytest.approx(b.psnr, abs=1e-12)
    assert a.depth_mse == pytest.approx(b.depth_mse, abs=1e-15)


def test_evaluate_empty_mesh_errors():
    _, ds, _ = room_and_mesh(seed=3, n=2)
    with pytest.raises(ValueError):
        evaluate(TriangleMesh.empty(), ds.frames, chamfer_samples=100)


def test_evaluate_rejects_even_blur():
    _, ds, mesh = room_and_mesh(seed=4, n=2)
    with pytest.raises(ValueError):
        evaluate(mesh, ds.frames, blur_kernel=4)


def test_backproject_frames_lie_on_room_walls():
    room, ds, _ = room_and_mesh(seed=5, n=3)
    pts = backproject_frames(ds.frames, stride=5)
    half = np.asarray(room.size) / 2
    # every point sits on (or numerically at) one of the six wall planes
    at_wall = np.zeros(len(pts), bool)
    for ax in range(3):
        at_wall |= np.abs(np.abs(pts[:, ax]) - half[ax]) < 1e-6
    assert at_wall.mean() > 0.999


def test_luminance_weights():
    img = np.zeros((2, 2, 3))
    img[..., 0] = 1.0
    assert luminance(img)[0, 0] == pytest.approx(0.299)
