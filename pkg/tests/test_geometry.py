import numpy as np
import pytest

from roomweave.geometry import (
    CameraIntrinsics,
    DistanceGrid,
    PanoCoverageError,
    RigidTransform,
    ViewSpec,
    build_warp,
    depth_to_distance,
    distance_to_depth,
    make_pano_views,
    pixel_to_ray,
    ray_to_pixel,
    rotation_pitch,
    rotation_yaw,
    warp_grid,
)


def persp_view(fx=100.0, fy=100.0, cx=64.0, cy=64.0, w=128, h=128, pose=None):
    pose = pose or RigidTransform.identity()
    return ViewSpec.perspective(CameraIntrinsics(fx, fy, cx, cy, w, h), pose)


def equirect_view(w=2048, h=1024, pose=None, band=(-np.pi / 2, np.pi / 2)):
    pose = pose or RigidTransform.identity()
    return ViewSpec.equirect(w, h, pose, band)


# ---------------------------------------------------------------------------
# pixel_to_ray / ray_to_pixel
# ---------------------------------------------------------------------------

def test_principal_point_ray():
    d = pixel_to_ray(persp_view(), 64.0, 64.0)
    np.testing.assert_allclose(d, [0.0, 0.0, 1.0], atol=1e-12)


def test_equirect_center_ray():
    d = pixel_to_ray(equirect_view(), 1023.5, 511.5)
    np.testing.assert_allclose(d, [0.0, 0.0, 1.0], atol=1e-12)


def test_offset_pixel_ray_hand_normalized():
    d = pixel_to_ray(persp_view(w=256), 164.0, 64.0)
    np.testing.assert_allclose(d, [0.70711, 0.0, 0.70711], atol=1e-5)


def test_rays_are_unit_norm():
    rng = np.random.default_rng(0)
    view = persp_view(pose=RigidTransform(rotation_yaw(0.7) @ rotation_pitch(-0.2), [1, 2, 3]))
    u = rng.uniform(0, view.width - 1, 500)
    v = rng.uniform(0, view.height - 1, 500)
    d = pixel_to_ray(view, u, v)
    np.testing.assert_allclose(np.linalg.norm(d, axis=-1), 1.0, atol=1e-7)
    ev = equirect_view(pose=view.pose)
    d = pixel_to_ray(ev, rng.uniform(0, 2047, 500), rng.uniform(0, 1023, 500))
    np.testing.assert_allclose(np.linalg.norm(d, axis=-1), 1.0, atol=1e-7)


def test_out_of_bounds_pixel_rejected():
    with pytest.raises(ValueError):
        pixel_to_ray(persp_view(), 200.0, 64.0)
    with pytest.raises(ValueError):
        pixel_to_ray(equirect_view(), 10.0, -3.0)


def test_round_trip_perspective_and_equirect():
    rng = np.random.default_rng(1)
    pose = RigidTransform(rotation_yaw(1.1) @ rotation_pitch(0.3), [0.5, -1.0, 2.0])
    for view in (persp_view(pose=pose), equirect_view(pose=pose)):
        u = rng.uniform(0, view.width - 1, 1000)
        v = rng.uniform(0, view.height - 1, 1000)
        d = pixel_to_ray(view, u, v)
        u2, v2, ok = ray_to_pixel(view, d)
        assert ok.all()
        assert np.max(np.abs(u2 - u)) < 1e-4
        assert np.max(np.abs(v2 - v)) < 1e-4


def test_behind_camera_rejected():
    _, _, ok = ray_to_pixel(persp_view(), np.array([0.0, 0.0, -1.0]))
    assert not ok


def test_equirect_u_for_x_axis():
    u, _, ok = ray_to_pixel(equirect_view(), np.array([1.0, 0.0, 0.0]))
    assert ok
    assert abs(u - 1535.5) < 1e-9


# ---------------------------------------------------------------------------
# depth <-> distance
# ---------------------------------------------------------------------------

def test_on_axis_distance_equals_depth():
    view = persp_view(cx=64.0, cy=64.0)
    depth = np.zeros((128, 128))
    depth[64, 64] = 2.0
    dist = depth_to_distance(depth, view)
    assert abs(dist.values[64, 64] - 2.0) < 1e-12
    assert dist.valid[64, 64]
    assert not dist.valid[0, 0]


def test_diagonal_ray_distance():
    view = persp_view(fx=100.0, fy=100.0, cx=64.0, cy=64.0, w=256)
    depth = np.zeros((128, 256))
    depth[64, 164] = 2.0  # camera ray proportional to (1, 0, 1)
    dist = depth_to_distance(depth, view)
    assert abs(dist.values[64, 164] - 2.0 * np.sqrt(2.0)) < 1e-9


def test_depth_distance_round_trip():
    rng = np.random.default_rng(2)
    view = persp_view()
    depth = rng.uniform(0.5, 5.0, (128, 128))
    depth[rng.uniform(size=(128, 128)) < 0.2] = 0.0
    back = distance_to_depth(depth_to_distance(depth, view), view)
    np.testing.assert_allclose(back, depth, atol=1e-6)


def test_equirect_depth_conversion_rejected():
    with pytest.raises(ValueError):
        depth_to_distance(np.ones((1024, 2048)), equirect_view())


# ---------------------------------------------------------------------------
# make_pano_views
# ---------------------------------------------------------------------------

def test_fan_yaws_and_overlap():
    views = make_pano_views((1.0, 2.0, 3.0), m=8, fov_deg=98.0, size=64)
    assert len(views) == 8
    fwd = np.array([v.pose.rotation @ [0, 0, 1] for v in views])
    yaws = np.degrees(np.arctan2(fwd[:, 0], fwd[:, 2])) % 360.0
    np.testing.assert_allclose(np.sort(yaws), np.arange(8) * 45.0, atol=1e-9)
    for v in views:
        np.testing.assert_allclose(v.pose.position, [1.0, 2.0, 3.0])
    # adjacent views 45 deg apart with 98 deg fov overlap by 53 deg
    assert 98.0 - 360.0 / 8 == pytest.approx(53.0)


def test_fan_rejects_uncoverable_configs():
    with pytest.raises(PanoCoverageError):
        make_pano_views((0, 0, 0), m=8, fov_deg=88.0)
    with pytest.raises(PanoCoverageError):
        make_pano_views((0, 0, 0), m=4, fov_deg=90.0)


def test_fan_covers_band_exhaustively():
    # every cell of the +-45 deg band must fall inside >= 1 fan view
    views = make_pano_views((0, 0, 0), m=8, fov_deg=98.0, size=512)
    band = ViewSpec.equirect(2048, 512, RigidTransform.identity(),
                             (-np.pi / 4, np.pi / 4))
    covered = np.zeros((512, 2048), dtype=bool)
    jj, ii = np.meshgrid(np.arange(2048), np.arange(512))
    dirs = pixel_to_ray(band, jj, ii).reshape(-1, 3)
    for v in views:
        _, _, ok = ray_to_pixel(v, dirs)
        covered |= ok.reshape(512, 2048)
    assert covered.all()


# ---------------------------------------------------------------------------
# warp_grid
# ---------------------------------------------------------------------------

def snap(x):
    r = round(float(x))
    return float(r) if abs(x - r) < 1e-9 else float(x)


def brute_force_warp(src, dst, grid, dst_shape=None):
    """Per-cell reference warp, written independently of WarpMap."""
    grid = np.asarray(grid, dtype=np.float64)
    hs, ws = grid.shape[:2]
    hd, wd = dst_shape if dst_shape is not None else (dst.height, dst.width)
    k_dst = dst.height // hd
    k_src = src.height // hs
    chans = 1 if grid.ndim == 2 else grid.shape[2]
    vals = np.zeros((hd, wd, chans))
    mask = np.zeros((hd, wd), dtype=bool)
    wrap = src.kind == "equirect"
    for i in range(hd):
        for j in range(wd):
            d = pixel_to_ray(dst, (j + 0.5) * k_dst - 0.5, (i + 0.5) * k_dst - 0.5)
            u, v, ok = ray_to_pixel(src, d)
            lu = snap((u + 0.5) / k_src - 0.5)
            lv = snap((v + 0.5) / k_src - 0.5)
            if wrap:
                lu = (lu + 0.5) % ws - 0.5
                inside = 0 <= lv <= hs - 1
            else:
                fwd = (d @ src.pose.rotation)[2] > 1e-12
                inside = bool(fwd) and 0 <= lu <= ws - 1 and 0 <= lv <= hs - 1
            if not inside:
                continue
            mask[i, j] = True
            j0 = int(np.floor(lu))
            i0 = int(np.floor(lv))
            if not wrap:
                j0 = min(max(j0, 0), ws - 2)
            i0 = min(max(i0, 0), hs - 2)
            fu, fv = lu - j0, lv - i0
            j1 = (j0 + 1) % ws if wrap else j0 + 1
            j0 = j0 % ws if wrap else j0
            acc = (
                (1 - fu) * (1 - fv) * grid[i0, j0]
                + fu * (1 - fv) * grid[i0, j1]
                + (1 - fu) * fv * grid[i0 + 1, j0]
                + fu * fv * grid[i0 + 1, j1]
            )
            vals[i, j] = acc
    if grid.ndim == 2:
        vals = vals[..., 0]
    return vals, mask


def test_self_warp_is_identity():
    rng = np.random.default_rng(3)
    view = persp_view(w=32, h=32, cx=16, cy=16, fx=20, fy=20)
    grid = rng.uniform(size=(32, 32, 3))
    out, mask = warp_grid(view, view, grid)
    assert mask.all()
    np.testing.assert_allclose(out, grid, atol=1e-12)


def test_opposite_views_disjoint():
    a = persp_view(w=32, h=32, cx=16, cy=16, fx=40, fy=40)
    b = persp_view(w=32, h=32, cx=16, cy=16, fx=40, fy=40,
                   pose=RigidTransform(rotation_yaw(np.pi), np.zeros(3)))
    out, mask = warp_grid(a, b, np.ones((32, 32)))
    assert not mask.any()
    assert np.all(out == 0)


def test_constant_field_preserved():
    rng = np.random.default_rng(4)
    a = persp_view(w=48, h=48, cx=24, cy=24, fx=30, fy=30)
    rot = rotation_yaw(0.5) @ rotation_pitch(0.25)
    b = persp_view(w=48, h=48, cx=24, cy=24, fx=30, fy=30,
                   pose=RigidTransform(rot, np.zeros(3)))
    out, mask = warp_grid(a, b, np.full((48, 48), 7.0))
    assert mask.any()
    np.testing.assert_allclose(out[mask], 7.0, atol=1e-9)


def test_non_shared_centers_rejected():
    a = persp_view()
    b = persp_view(pose=RigidTransform.identity([0.0, 0.0, 0.1]))
    with pytest.raises(ValueError):
        warp_grid(a, b, np.ones((128, 128)))


def test_warp_matches_brute_force_fan_pairs():
    rng = np.random.default_rng(5)
    views = make_pano_views((0, 0, 0), m=8, fov_deg=98.0, size=64)
    # smooth random fields so bilinear taps dominate the comparison
    grids = [smooth_field(rng, 64, 64, 2) for _ in range(8)]
    for i in range(8):
        for j in range(8):
            got, gmask = warp_grid(views[j], views[i], grids[j])
            want, wmask = brute_force_warp(views[j], views[i], grids[j])
            assert np.array_equal(gmask, wmask)
            np.testing.assert_allclose(got, want, atol=1e-5)


def test_warp_equirect_source_against_brute_force():
    rng = np.random.default_rng(6)
    band = ViewSpec.equirect(128, 32, RigidTransform.identity(), (-np.pi / 4, np.pi / 4))
    view = persp_view(w=32, h=32, cx=16, cy=16, fx=14, fy=14,
                      pose=RigidTransform(rotation_yaw(2.0), np.zeros(3)))
    grid = smooth_field(rng, 32, 128, 1)
    got, gmask = warp_grid(band, view, grid)
    want, wmask = brute_force_warp(band, view, grid)
    assert np.array_equal(gmask, wmask)
    np.testing.assert_allclose(got, want, atol=1e-9)


def test_warp_latent_scale_grids():
    rng = np.random.default_rng(7)
    views = make_pano_views((0, 0, 0), m=8, fov_deg=98.0, size=64)
    grid = smooth_field(rng, 16, 16, 2)  # latent scale 4
    got, gmask = warp_grid(views[1], views[0], grid, dst_shape=(16, 16))
    want, wmask = brute_force_warp(views[1], views[0], grid, dst_shape=(16, 16))
    assert np.array_equal(gmask, wmask)
    np.testing.assert_allclose(got, want, atol=1e-9)


def test_warp_distance_grid_rotation_invariance():
    # shared-center warping of a distance field is exact resampling: the
    # warped distance at a covered cell equals the source field along the
    # same world ray up to interpolation error
    center = np.array([0.2, -0.1, 0.4])
    views = make_pano_views(center, m=8, fov_deg=98.0, size=64)

    def field(dirs):
        return 2.0 + 0.3 * dirs[..., 0] + 0.2 * np.sin(3.0 * dirs[..., 1])

    from roomweave.geometry import view_ray_grid

    src_grid = field(view_ray_grid(views[2]))
    out, mask = warp_grid(views[2], views[3], src_grid)
    want = field(view_ray_grid(views[3]))
    err = np.abs(out - want)[mask]
    assert err.mean() < 1e-4
    assert err.max() < 1e-3


def test_warp_src_valid_conservative():
    view = persp_view(w=16, h=16, cx=8, cy=8, fx=10, fy=10)
    grid = np.ones((16, 16))
    valid = np.ones((16, 16), dtype=bool)
    valid[8, 8] = False
    out, mask = warp_grid(view, view, grid, src_valid=valid)
    assert not mask[8, 8]
    # identity warp only lands on the invalid cell itself
    assert mask.sum() == 16 * 16 - 1


def smooth_field(rng, h, w, chans):
    """Band-limited random field (sum of low-frequency sinusoids)."""
    jj, ii = np.meshgrid(np.arange(w) / w, np.arange(h) / h)
    out = np.zeros((h, w, chans))
    for c in range(chans):
        for _ in range(4):
            fx_, fy_ = rng.uniform(0.5, 2.0, 2)
            ph = rng.uniform(0, 2 * np.pi, 2)
            out[..., c] += rng.uniform(0.2, 1.0) * np.sin(
                2 * np.pi * fx_ * jj + ph[0]
            ) * np.sin(2 * np.pi * fy_ * ii + ph[1])
    return out[..., 0] if chans == 1 else out


def test_pose_validation():
    with pytest.raises(ValueError):
        RigidTransform(np.eye(3) * 1.01, np.zeros(3))
    with pytest.raises(ValueError):
        RigidTransform(np.eye(3), [np.nan, 0, 0])
