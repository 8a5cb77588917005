"""Pipeline orchestration: panorama candidates, active sampling, pose
sampling for mesh completion, and the end-to-end scene driver.

Stages (see :func:`complete_scene`): build a mesh from the input frames,
render a panorama at the mean camera position, generate several candidate
RGBD panoramas with distinct seeds, keep the one whose fused mesh best
explains the input depth maps (lowest depth MSE), fuse it, then repeatedly
sample novel completion poses facing the remaining holes and inpaint them
one view at a time.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .depthfill import (
    DepthFusionConfig,
    DepthPredictor,
    align_scale,
    inpaint_panorama_distance,
)
from .diffusion import (
    DenoiserHandle,
    LatentCodec,
    PanoInpaintConfig,
    inpaint_panorama_color,
    inpaint_view_color,
)
from .geometry import (
    CameraIntrinsics,
    RigidTransform,
    ViewSpec,
    rotation_pitch,
    rotation_yaw,
)
from .meshing import TriangleMesh, fuse, mesh_from_rgbd, mesh_from_view_grid
from .panorama import PanoramaRgbd, fuse_panorama, render_panorama
from .rasterize import render
from .sceneio import RgbdFrame, SceneDataset

DEFAULT_PROMPT_TEMPLATE = "a simple and clean room in the style of {S*}."


@dataclass
class CompletionConfig:
    """Knobs of the completion stage; defaults are the reference constants."""

    candidates: int = 3
    completion_iters: int = 30
    pose_samples: int = 200
    box_frac_h: float = 0.8          # central fraction of the bbox, horizontal
    box_frac_v: float = 0.1          # central fraction of the bbox, vertical
    elevation_deg: float = 15.0
    inpaint_ratio_max: float = 0.5
    backface_max: float = 0.01
    min_depth_min: float = 1.0       # meters
    backward_step: float = 0.1       # meters
    view_fov_deg: float = 60.0       # fov of completion/inpainting views
    sampler_view_size: int = 96      # render size used by the pose filters
    frame_edge_len_max: float = 0.1
    frame_depth_ratio_max: float = 1.25
    patch_edge_px: float = 4.0       # patch edge cap in pixel footprints

    def __post_init__(self):
        if min(self.candidates, self.pose_samples) < 1 or self.completion_iters < 0:
            raise ValueError("counts must be positive")
        for frac in (self.box_frac_h, self.box_frac_v, self.inpaint_ratio_max):
            if not (0 < frac <= 1):
                raise ValueError("fractions must lie in (0, 1]")
        if self.backward_step <= 0 or self.min_depth_min <= 0:
            raise ValueError("distances must be positive")


def build_prompt(template: str, token: str) -> str:
    """Substitute the style token into the fixed prompt template."""
    if "{S*}" not in template:
        raise ValueError("prompt template must contain the {S*} placeholder")
    return template.replace("{S*}", token)


def room_center(frames: list[RgbdFrame]) -> np.ndarray:
    """Mean of the camera positions: the panorama viewpoint."""
    if not frames:
        raise ValueError("room_center needs at least one frame")
    return np.mean([f.pose.position for f in frames], axis=0)


def depth_mse(mesh: TriangleMesh, frames: list[RgbdFrame]) -> float:
    """Mean squared depth error of the mesh against the input frames.

    Averaged jointly over every (frame, pixel) pair valid in both sources
    (input depth > 0 and render coverage); raises if nothing is valid.
    """
    if not frames:
        raise ValueError("depth_mse needs at least one frame")
    total, count = 0.0, 0
    for f in frames:
        out = render(mesh, ViewSpec.perspective(f.intrinsics, f.pose))
        valid = (f.depth > 0) & out.coverage
        diff = (f.depth - out.depth)[valid]
        total += float(np.sum(diff * diff))
        count += diff.size
    if count == 0:
        raise ValueError("no pixels valid in both the frames and the render")
    return total / count


def active_sample(
    base_mesh: TriangleMesh,
    candidates: list[PanoramaRgbd],
    frames: list[RgbdFrame],
) -> tuple[int, PanoramaRgbd]:
    """Pick the candidate panorama whose fused mesh best matches the frames.

    Fuses each candidate into a copy of the base mesh, scores with
    :func:`depth_mse`, returns the argmin (ties to the lowest index).
    """
    if not candidates:
        raise ValueError("need at least one candidate")
    scores = []
    for cand in candidates:
        fused = fuse_panorama(base_mesh, cand)
        scores.append(depth_mse(fused, frames))
    idx = int(np.argmin(scores))
    return idx, candidates[idx]


# ---------------------------------------------------------------------------
# completion pose sampling
# ---------------------------------------------------------------------------

def completion_view(pose: RigidTransform, size: int, fov_deg: float) -> ViewSpec:
    f = (size / 2.0) / np.tan(np.radians(fov_deg) / 2.0)
    intr = CameraIntrinsics(f, f, size / 2.0, size / 2.0, size, size)
    return ViewSpec.perspective(intr, pose)


def pose_filter_stats(mesh: TriangleMesh, pose: RigidTransform,
                      cfg: CompletionConfig) -> dict:
    """Render-based statistics the pose filters are evaluated on."""
    out = render(mesh, completion_view(pose, cfg.sampler_view_size,
                                       cfg.view_fov_deg))
    stats = {
        "inpaint_ratio": out.inpaint_ratio,
        "backface_ratio": out.backface_ratio,
        "min_depth": out.min_depth,
    }
    stats["ok"] = (
        stats["inpaint_ratio"] <= cfg.inpaint_ratio_max
        and stats["backface_ratio"] <= cfg.backface_max
        and stats["min_depth"] >= cfg.min_depth_min
    )
    return stats


def sample_completion_pose(
    mesh: TriangleMesh,
    rng: np.random.Generator,
    cfg: CompletionConfig,
) -> RigidTransform | None:
    """Pick a pose facing the largest worthwhile hole, or None.

    Draws ``pose_samples`` random poses inside the central box of the mesh
    bounds (80% horizontally, 10% vertically by default) with uniform yaw
    and bounded elevation, rejects poses that see too little mesh, too many
    back faces or geometry closer than the minimum depth, takes the best by
    inpaint_ratio * min_depth, then backs it away from the hole while the
    filters keep passing.
    """
    if mesh.n_faces == 0:
        raise ValueError("cannot sample poses on an empty mesh")
    lo, hi = mesh.bounds()
    mid, ext = (lo + hi) / 2.0, hi - lo
    span = ext * np.array([cfg.box_frac_h, cfg.box_frac_v, cfg.box_frac_h])
    pos = mid + (rng.random((cfg.pose_samples, 3)) - 0.5) * span
    yaw = rng.uniform(0.0, 2 * np.pi, cfg.pose_samples)
    elev = np.radians(rng.uniform(-cfg.elevation_deg, cfg.elevation_deg,
                                  cfg.pose_samples))

    best_pose, best_score = None, -np.inf
    for i in range(cfg.pose_samples):
        pose = RigidTransform(rotation_yaw(yaw[i]) @ rotation_pitch(elev[i]), pos[i])
        stats = pose_filter_stats(mesh, pose, cfg)
        if not stats["ok"]:
            continue
        score = stats["inpaint_ratio"] * stats["min_depth"]
        if score > best_score:
            best_pose, best_score = pose, score
    if best_pose is None:
        return None

    # back away from the hole while the filters still pass
    forward = best_pose.rotation @ np.array([0.0, 0.0, 1.0])
    accepted = best_pose
    for _ in range(200):
        moved = RigidTransform(accepted.rotation,
                               accepted.position - cfg.backward_step * forward)
        if not pose_filter_stats(mesh, moved, cfg)["ok"]:
            break
        accepted = moved
    return accepted


# ---------------------------------------------------------------------------
# iterative single-view completion
# ---------------------------------------------------------------------------

def iterative_inpaint(
    mesh: TriangleMesh,
    trajectory: list[RigidTransform],
    denoiser: DenoiserHandle,
    predictor: DepthPredictor,
    codec: LatentCodec,
    diff_cfg: PanoInpaintConfig,
    depth_cfg: DepthFusionConfig,
    comp_cfg: CompletionConfig,
    prompt: str,
    stream_base: int = 0,
) -> TriangleMesh:
    """Inpaint holes one view at a time along the given poses.

    For each pose: render the current mesh, inpaint the uncovered pixels
    (single-view scheduler run), predict + align + refine depth against the
    rendered anchors, back-project the hole pixels plus a one-pixel stitch
    border, and fuse the patch.  Poses that see no holes are skipped.
    """
    if not trajectory:
        raise ValueError("trajectory must contain at least one pose")
    size = denoiser.latent_size * codec.scale
    for p, pose in enumerate(trajectory):
        try:
            view = completion_view(pose, size, comp_cfg.view_fov_deg)
            out = render(mesh, view)
            holes = ~out.coverage
            if not holes.any():
                continue
            image = inpaint_view_color(
                out.color, holes, view, denoiser, codec, diff_cfg, prompt,
                stream_tag=stream_base + p,
            )
            pred = np.asarray(predictor.predict_initial(image, view=view),
                              np.float64)
            fit = out.coverage & (pred > 0)
            scale = align_scale(pred, out.depth, fit) if fit.any() else 1.0
            depth = scale * pred
            for _ in range(depth_cfg.refine_iters):
                depth = np.asarray(
                    predictor.refine(depth, out.depth, out.coverage, view=view),
                    np.float64,
                )
            depth = np.where(out.coverage, out.depth, np.maximum(depth, 0.0))
            grown = _dilate(holes)
            # edge cap scales with the view's pixel footprint at patch depth,
            # so the occlusion-jump filter is resolution independent
            px_angle = 2.0 * np.tan(np.radians(comp_cfg.view_fov_deg) / 2.0) / size
            patch_depth = depth[grown & (depth > 0)]
            edge_cap = comp_cfg.patch_edge_px * px_angle * (
                float(patch_depth.max()) if patch_depth.size else 1.0)
            patch = mesh_from_view_grid(
                image, depth, view, region=grown,
                edge_len_max=edge_cap,
                depth_ratio_max=comp_cfg.frame_depth_ratio_max,
            )
            mesh = fuse(mesh, patch)
        except Exception as exc:
            raise RuntimeError(f"inpainting failed at trajectory pose {p}") from exc
    return mesh


def _dilate(mask: np.ndarray) -> np.ndarray:
    out = mask.copy()
    out[1:] |= mask[:-1]
    out[:-1] |= mask[1:]
    out[:, 1:] |= out[:, :-1].copy()
    out[:, :-1] |= out[:, 1:].copy()
    return out


# ---------------------------------------------------------------------------
# full pipeline
# ---------------------------------------------------------------------------

def generate_candidate_panorama(
    base_pano: PanoramaRgbd,
    denoiser: DenoiserHandle,
    predictor: DepthPredictor,
    codec: LatentCodec,
    diff_cfg: PanoInpaintConfig,
    depth_cfg: DepthFusionConfig,
    prompt: str,
) -> PanoramaRgbd:
    """One RGBD panorama sample: color inpainting then distance inpainting."""
    color = inpaint_panorama_color(base_pano, denoiser, codec, diff_cfg, prompt)
    view_px = denoiser.latent_size * codec.scale
    dist = inpaint_panorama_distance(
        base_pano, color, predictor, depth_cfg,
        fan_views=diff_cfg.views, fov_deg=diff_cfg.fov_deg, view_size=view_px,
    )
    return PanoramaRgbd(color, dist, base_pano.hole_mask.copy(),
                        base_pano.center.copy(), base_pano.lat_band)


def complete_scene(
    ds: SceneDataset,
    denoiser: DenoiserHandle,
    predictor: DepthPredictor,
    codec: LatentCodec,
    comp_cfg: CompletionConfig | None = None,
    diff_cfg: PanoInpaintConfig | None = None,
    depth_cfg: DepthFusionConfig | None = None,
    prompt_template: str = DEFAULT_PROMPT_TEMPLATE,
    style_token: str = "",
    checkpoint_cb=None,
) -> TriangleMesh:
    """Run the full pipeline on the input dataset; returns the final mesh.

    ``checkpoint_cb(stage_name, mesh)``, when given, is invoked after every
    stage so callers can export recovery checkpoints.
    """
    if not ds.frames:
        raise ValueError("dataset has no frames")
    comp_cfg = comp_cfg or CompletionConfig()
    diff_cfg = diff_cfg or PanoInpaintConfig()
    depth_cfg = depth_cfg or DepthFusionConfig()
    prompt = build_prompt(prompt_template, style_token)

    mesh = TriangleMesh.empty()
    for f in ds.frames:
        mesh = fuse(mesh, mesh_from_rgbd(
            f, comp_cfg.frame_edge_len_max, comp_cfg.frame_depth_ratio_max))
    if checkpoint_cb:
        checkpoint_cb("input", mesh)

    center = room_center(ds.frames)
    view_px = denoiser.latent_size * codec.scale
    base_pano = render_panorama(
        mesh, center, width=4 * view_px, height=view_px,
        lat_band=diff_cfg.lat_band, fan_views=diff_cfg.views,
        fov_deg=diff_cfg.fov_deg,
    )

    candidates = []
    for a in range(comp_cfg.candidates):
        cand_cfg = replace(diff_cfg, seed=diff_cfg.seed + a)
        candidates.append(generate_candidate_panorama(
            base_pano, denoiser, predictor, codec, cand_cfg, depth_cfg, prompt))
    _, best = active_sample(mesh, candidates, ds.frames)
    mesh = fuse_panorama(mesh, best)
    if checkpoint_cb:
        checkpoint_cb("panorama", mesh)

    rng = np.random.default_rng(np.random.SeedSequence([diff_cfg.seed, 777]))
    for it in range(comp_cfg.completion_iters):
        pose = sample_completion_pose(mesh, rng, comp_cfg)
        if pose is None:
            break
        mesh = iterative_inpaint(
            mesh, [pose], denoiser, predictor, codec,
            diff_cfg, depth_cfg, comp_cfg, prompt,
            stream_base=1000 + it,
        )
        if checkpoint_cb:
            checkpoint_cb(f"completion_{it:02d}", mesh)
    return mesh
