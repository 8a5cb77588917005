"""Multi-view panorama inpainting scheduler over a pluggable denoiser.

One reverse-diffusion step runs in two flavors:

* spherical phase (steps T..F+1): every fan view predicts noise, recovers a
  clean estimate x0 = (x_t - sqrt(1-abar)*eps)/sqrt(abar), the estimates are
  warped into every other shared-center view and coverage-averaged, then
  re-noised to the previous step with x_{t-1} = sqrt(abar')*x0' +
  sqrt(1-abar')*noise.  The re-noising tensor is redrawn every
  ``noise_refresh_period`` steps and reused in between.
* planar phase (steps F..1): the clean estimates are stitched into the
  equirectangular band latent, re-noised to step F, and denoised through
  horizontally-cyclic sliding windows whose overlapping predictions are
  count-averaged (restores the high-frequency texture the spherical warps
  blur away).

Known (non-hole) pixels of the decoded output are composited from the
reference panorama.  All randomness flows from seed-keyed per-view streams,
so results do not depend on the order of denoiser calls.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, runtime_checkable

import numpy as np

from . import oracle_core
from .geometry import (
    ViewSpec,
    build_warp,
    make_pano_views,
    view_ray_grid,
)

BAND_DEFAULT = (-np.pi / 4, np.pi / 4)


# ---------------------------------------------------------------------------
# schedule
# ---------------------------------------------------------------------------

@dataclass
class AlphaSchedule:
    """Cumulative noise-retention coefficients abar_1..abar_T."""

    alpha_bar: np.ndarray

    def __post_init__(self):
        ab = np.asarray(self.alpha_bar, dtype=np.float64)
        if ab.ndim != 1 or len(ab) < 1:
            raise ValueError("schedule must be a 1d sequence")
        if np.any(ab <= 0) or np.any(ab > 1):
            raise ValueError("alpha_bar values must lie in (0, 1]")
        if np.any(np.diff(ab) >= 0):
            raise ValueError("alpha_bar must be strictly decreasing")
        self.alpha_bar = ab

    @property
    def steps(self) -> int:
        return len(self.alpha_bar)

    def abar(self, t: int) -> float:
        if not 1 <= t <= self.steps:
            raise ValueError(f"step {t} outside 1..{self.steps}")
        return float(self.alpha_bar[t - 1])

    def abar_prev(self, t: int) -> float:
        """abar_{t-1} with the usual abar_0 = 1 convention."""
        return 1.0 if t == 1 else float(self.alpha_bar[t - 2])

    @staticmethod
    def linear_beta(steps: int = 50, beta_start: float = 8.5e-4,
                    beta_end: float = 1.2e-2) -> "AlphaSchedule":
        betas = np.linspace(beta_start, beta_end, steps)
        return AlphaSchedule(np.cumprod(1.0 - betas))


# ---------------------------------------------------------------------------
# latent plumbing
# ---------------------------------------------------------------------------

@dataclass
class LatentGrid:
    """Value grid at 1/scale of pixel resolution."""

    values: np.ndarray
    scale: int = 1

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.ndim not in (2, 3):
            raise ValueError("latent grid must be 2d or 3d")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("latent grid contains non-finite values")
        if self.scale < 1:
            raise ValueError("scale must be >= 1")

    @property
    def shape(self):
        return self.values.shape


@dataclass
class DenoiserInput:
    latents: LatentGrid
    t: int
    reference: LatentGrid
    mask: np.ndarray          # (h, w) hole mask at latent resolution
    prompt: str
    abar: float               # alpha_bar at step t
    view: ViewSpec | None = None          # geometry context (fan views)
    window_origin: tuple[int, int] | None = None  # (row, col) in the band latent


@runtime_checkable
class DenoiserHandle(Protocol):
    channels: int
    latent_size: int

    def predict_epsilon(self, inp: DenoiserInput) -> LatentGrid: ...


@runtime_checkable
class LatentCodec(Protocol):
    scale: int
    channels: int

    def encode(self, image: np.ndarray) -> LatentGrid: ...

    def decode(self, latents: LatentGrid) -> np.ndarray: ...


class IdentityCodec:
    """Pixel-space 'latents': encode is a float32 view, decode clamps to [0,1]."""

    scale = 1
    channels = 3

    def encode(self, image: np.ndarray) -> LatentGrid:
        return LatentGrid(np.asarray(image, dtype=np.float32), 1)

    def decode(self, latents: LatentGrid) -> np.ndarray:
        return np.clip(latents.values, 0.0, 1.0).astype(np.float32)


@dataclass
class PanoInpaintConfig:
    """Scheduler constants; defaults follow the reference configuration."""

    steps: int = 50                 # total reverse steps T
    refine_steps: int = 20          # trailing planar-window steps F
    views: int = 8
    fov_deg: float = 98.0
    noise_refresh_period: int = 2
    window_size: int = 64           # latent cells
    window_stride: int = 16         # latent cells
    lat_band: tuple[float, float] = BAND_DEFAULT
    seed: int = 0

    def __post_init__(self):
        if not (0 <= self.refine_steps <= self.steps):
            raise ValueError("need 0 <= refine_steps <= steps")
        if self.noise_refresh_period < 1:
            raise ValueError("noise_refresh_period must be >= 1")
        if self.window_stride < 1 or self.window_size < self.window_stride:
            raise ValueError("window stride must be in [1, window_size]")


# ---------------------------------------------------------------------------
# elementwise scheduler algebra
# ---------------------------------------------------------------------------

def predict_x0(x_t: np.ndarray, eps: np.ndarray, abar_t: float) -> np.ndarray:
    """Clean-signal estimate from a noisy latent and predicted noise.

    Python-float coefficients keep the input dtype (float32 latents stay
    float32).
    """
    if abar_t <= 0:
        raise ValueError("alpha_bar must be positive")
    c_noise = float(np.sqrt(1.0 - abar_t))
    c_sig = float(np.sqrt(abar_t))
    return (x_t - c_noise * eps) / c_sig


def renoise(x0: np.ndarray, abar_prev: float, noise: np.ndarray) -> np.ndarray:
    """Forward-noise a clean estimate to the previous step's noise level."""
    if abar_prev <= 0:
        raise ValueError("alpha_bar must be positive")
    return float(np.sqrt(abar_prev)) * x0 + float(np.sqrt(1.0 - abar_prev)) * noise


def block_any(mask: np.ndarray, k: int) -> np.ndarray:
    """Downsample a pixel mask to latent resolution; any hole marks the cell."""
    if k == 1:
        return mask.astype(bool)
    h, w = mask.shape
    if h % k or w % k:
        raise ValueError("mask dimensions must be divisible by the latent scale")
    return mask.reshape(h // k, k, w // k, k).any(axis=(1, 3))


# ---------------------------------------------------------------------------
# multi-view averaging
# ---------------------------------------------------------------------------

def warp_average(views: list[ViewSpec], grids: list[LatentGrid]) -> list[LatentGrid]:
    """Cross-view consistency step: warp every grid into every view, average.

    Each output cell is sum_j W_{j->i}(grid_j) / sum_j m_{j->i}; the
    denominator is >= 1 everywhere because every view covers itself.
    """
    if len(views) != len(grids):
        raise ValueError("need one grid per view")
    center = views[0].pose.position
    for v in views[1:]:
        if np.linalg.norm(v.pose.position - center) > 1e-9:
            raise ValueError("warp_average requires a shared camera center")
    shapes = [g.values.shape[:2] for g in grids]
    maps = [[build_warp(views[j], views[i], shapes[j], shapes[i])
             for j in range(len(views))] for i in range(len(views))]
    return _warp_average_with_maps([g.values for g in grids], maps,
                                   [g.scale for g in grids])


def _warp_average_with_maps(values, maps, scales):
    out = []
    for i in range(len(values)):
        num = np.zeros(values[i].shape, dtype=np.float64)
        den = np.zeros(values[i].shape[:2], dtype=np.float64)
        for j in range(len(values)):
            warped, mask = maps[i][j].apply(values[j])
            num += warped.astype(np.float64) if warped.ndim == num.ndim \
                else warped[..., None].astype(np.float64)
            den += mask
        if np.any(den < 1):
            raise AssertionError("averaging denominator < 1: view fails to cover itself")
        avg = num / (den[..., None] if num.ndim == 3 else den)
        out.append(LatentGrid(avg.astype(values[i].dtype), scales[i]))
    return out


def window_average(band_shape: tuple[int, int], windows) -> np.ndarray:
    """Count-weighted mean of horizontally cyclic windows over a band latent.

    ``windows`` is a list of ((row, col), grid) pairs; columns wrap modulo
    the band width.  Raises if any cell is left uncovered.
    """
    h, w = band_shape
    if not windows:
        raise ValueError("no windows given")
    first = np.asarray(windows[0][1])
    num = np.zeros((h, w) + first.shape[2:], dtype=np.float64)
    cnt = np.zeros((h, w), dtype=np.float64)
    for (row, col), grid in windows:
        grid = np.asarray(grid)
        gh, gw = grid.shape[:2]
        if row < 0 or row + gh > h or gw > w:
            raise ValueError("window exceeds the band")
        cols = np.arange(col, col + gw) % w  # distinct since gw <= w
        num[row:row + gh][:, cols] += grid
        cnt[row:row + gh][:, cols] += 1.0
    if np.any(cnt == 0):
        raise ValueError("window set leaves band cells uncovered")
    out = num / (cnt[..., None] if num.ndim == 3 else cnt)
    return out.astype(first.dtype) if np.issubdtype(first.dtype, np.floating) else out


def stitch_views_to_equirect(
    views: list[ViewSpec],
    grids: list[LatentGrid],
    band_view: ViewSpec,
    band_shape: tuple[int, int],
) -> LatentGrid:
    """Coverage-weighted mean of all fan grids on the equirect band latent."""
    num = None
    den = np.zeros(band_shape, dtype=np.float64)
    for v, g in zip(views, grids):
        wm = build_warp(v, band_view, g.values.shape[:2], band_shape)
        warped, mask = wm.apply(g.values)
        if num is None:
            num = np.zeros(band_shape + g.values.shape[2:], dtype=np.float64)
        num += warped.astype(np.float64) if warped.ndim == num.ndim \
            else warped[..., None].astype(np.float64)
        den += mask
    if np.any(den == 0):
        raise ValueError("view fan leaves band cells uncovered")
    avg = num / (den[..., None] if num.ndim == 3 else den)
    return LatentGrid(avg.astype(grids[0].values.dtype), grids[0].scale)


# ---------------------------------------------------------------------------
# the scheduler
# ---------------------------------------------------------------------------

def _stream(seed: int, tag: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, tag]))

_BAND_STREAM_TAG = 1 << 20


class PanoramaColorSampler:
    """Full scheduler state for one panorama inpainting run.

    Exposes intermediates (final spherical-phase estimates, band latents)
    that the property suite inspects; use :func:`inpaint_panorama_color`
    for the plain image-in/image-out entry point.
    """

    def __init__(self, pano, denoiser: DenoiserHandle, codec: LatentCodec,
                 cfg: PanoInpaintConfig, prompt: str,
                 schedule: AlphaSchedule | None = None):
        self.cfg = cfg
        self.denoiser = denoiser
        self.codec = codec
        self.prompt = prompt
        self.schedule = schedule or AlphaSchedule.linear_beta(cfg.steps)
        if self.schedule.steps != cfg.steps:
            raise ValueError("schedule length must equal cfg.steps")

        k = codec.scale
        n = denoiser.latent_size
        hpx, wpx = pano.color.shape[:2]
        if hpx % k or wpx % k:
            raise ValueError("panorama resolution must be divisible by the codec scale")
        self.band_lat_shape = (hpx // k, wpx // k)
        if cfg.refine_steps > 0 and self.band_lat_shape[0] != cfg.window_size:
            raise ValueError(
                f"band latent height {self.band_lat_shape[0]} must equal "
                f"window_size {cfg.window_size} for the planar phase"
            )
        if self.band_lat_shape[1] % cfg.window_stride:
            raise ValueError("window stride must divide the band latent width")

        self.pano = pano
        self.band_view = ViewSpec.equirect(
            wpx, hpx, _identity_pose_at(pano.center), cfg.lat_band
        )
        self.fan = make_pano_views(pano.center, cfg.views, cfg.fov_deg, n * k)
        self.n = n
        self.k = k
        self.channels = denoiser.channels

        known_px = ~pano.hole_mask
        ref_band_px = np.where(known_px[..., None], pano.color, 0.0).astype(np.float32)
        self.ref_band_lat = codec.encode(ref_band_px)
        self.band_mask_lat = block_any(pano.hole_mask, k)

        self.view_refs: list[LatentGrid] = []
        self.view_masks: list[np.ndarray] = []
        for v in self.fan:
            wm = build_warp(self.band_view, v, (hpx, wpx), (n * k, n * k))
            ref_px, known = wm.apply(ref_band_px, src_valid=known_px)
            self.view_refs.append(codec.encode(ref_px))
            self.view_masks.append(block_any(~known, k))

        shapes = [(n, n)] * cfg.views
        self.latent_maps = [
            [build_warp(self.fan[j], self.fan[i], shapes[j], shapes[i])
             for j in range(cfg.views)]
            for i in range(cfg.views)
        ]

        # filled by run()
        self.phase1_x0: list[np.ndarray] | None = None
        self.band_x0: np.ndarray | None = None

    # -- pieces ------------------------------------------------------------

    def _denoise_views(self, x: list[np.ndarray], t: int) -> list[np.ndarray]:
        abar_t = self.schedule.abar(t)
        x0 = []
        for i, view in enumerate(self.fan):
            inp = DenoiserInput(
                latents=LatentGrid(x[i], self.k), t=t,
                reference=self.view_refs[i], mask=self.view_masks[i],
                prompt=self.prompt, abar=abar_t, view=view,
            )
            eps = self.denoiser.predict_epsilon(inp).values
            if eps.shape != x[i].shape:
                raise ValueError("denoiser returned a mismatched latent shape")
            x0.append(predict_x0(x[i], eps, abar_t))
        return x0

    def _window_cols(self) -> list[int]:
        w = self.band_lat_shape[1]
        return list(range(0, w, self.cfg.window_stride))

    def _denoise_windows(self, x_band: np.ndarray, t: int) -> np.ndarray:
        cfg = self.cfg
        abar_t = self.schedule.abar(t)
        wins = []
        for col in self._window_cols():
            xw = oracle_core.slice_band_window(x_band, col, cfg.window_size)
            refw = oracle_core.slice_band_window(self.ref_band_lat.values, col,
                                                 cfg.window_size)
            maskw = oracle_core.slice_band_window(self.band_mask_lat, col,
                                                  cfg.window_size)
            inp = DenoiserInput(
                latents=LatentGrid(xw, self.k), t=t,
                reference=LatentGrid(refw, self.k), mask=maskw,
                prompt=self.prompt, abar=abar_t,
                view=self.band_view, window_origin=(0, col),
            )
            eps = self.denoiser.predict_epsilon(inp).values
            wins.append(((0, col), predict_x0(xw, eps, abar_t)))
        return window_average(self.band_lat_shape, wins)

    # -- run ---------------------------------------------------------------

    def run(self) -> np.ndarray:
        cfg = self.cfg
        sched = self.schedule
        T, F = cfg.steps, cfg.refine_steps
        n, ch = self.n, self.channels
        band_rng = _stream(cfg.seed, _BAND_STREAM_TAG)

        if F < T:
            view_rngs = [_stream(cfg.seed, i) for i in range(cfg.views)]
            x = [r.standard_normal((n, n, ch)).astype(np.float32) for r in view_rngs]
            noise = [None] * cfg.views
            x0p: list[np.ndarray] = x
            for t in range(T, F, -1):
                x0 = self._denoise_views(x, t)
                x0p = [g.values for g in _warp_average_with_maps(
                    x0, self.latent_maps, [self.k] * cfg.views)]
                refresh = (T - t) % cfg.noise_refresh_period == 0
                for i, r in enumerate(view_rngs):
                    if refresh or noise[i] is None:
                        noise[i] = r.standard_normal((n, n, ch)).astype(np.float32)
                abar_prev = sched.abar_prev(t)
                x = [renoise(x0p[i], abar_prev, noise[i]) for i in range(cfg.views)]
            self.phase1_x0 = x0p
            band_x0 = stitch_views_to_equirect(
                self.fan, [LatentGrid(g, self.k) for g in x0p],
                self.band_view, self.band_lat_shape,
            ).values
        else:
            band_x0 = None

        if F > 0:
            if band_x0 is None:
                x_band = band_rng.standard_normal(
                    self.band_lat_shape + (ch,)).astype(np.float32)
            else:
                x_band = renoise(
                    band_x0, sched.abar(F),
                    band_rng.standard_normal(band_x0.shape).astype(np.float32),
                )
            band_noise = None
            for t in range(F, 0, -1):
                x0_band = self._denoise_windows(x_band, t)
                if (T - t) % cfg.noise_refresh_period == 0 or band_noise is None:
                    band_noise = band_rng.standard_normal(
                        x0_band.shape).astype(np.float32)
                x_band = renoise(x0_band, sched.abar_prev(t), band_noise)
            band_x0 = x_band
        self.band_x0 = band_x0

        image = self.codec.decode(LatentGrid(band_x0, self.k))
        known = ~self.pano.hole_mask
        return np.where(known[..., None], self.pano.color, image).astype(np.float32)


def inpaint_panorama_color(pano, denoiser, codec, cfg: PanoInpaintConfig,
                           prompt: str,
                           schedule: AlphaSchedule | None = None) -> np.ndarray:
    """Generate the inpainted equirect band RGB image for a panorama."""
    return PanoramaColorSampler(pano, denoiser, codec, cfg, prompt, schedule).run()


def inpaint_view_color(
    reference: np.ndarray,
    hole_mask: np.ndarray,
    view: ViewSpec,
    denoiser: DenoiserHandle,
    codec: LatentCodec,
    cfg: PanoInpaintConfig,
    prompt: str,
    stream_tag: int = 0,
    schedule: AlphaSchedule | None = None,
) -> np.ndarray:
    """Single-view inpainting: the scheduler degenerates to one view, no warps."""
    schedule = schedule or AlphaSchedule.linear_beta(cfg.steps)
    k = codec.scale
    n = denoiser.latent_size
    if reference.shape[:2] != (n * k, n * k):
        raise ValueError("reference resolution must match the denoiser latent size")
    known = ~hole_mask
    ref_px = np.where(known[..., None], reference, 0.0).astype(np.float32)
    ref_lat = codec.encode(ref_px)
    mask_lat = block_any(hole_mask, k)
    rng = _stream(cfg.seed, (stream_tag << 8) + 2)
    x = rng.standard_normal((n, n, denoiser.channels)).astype(np.float32)
    noise = None
    T = cfg.steps
    for t in range(T, 0, -1):
        abar_t = schedule.abar(t)
        inp = DenoiserInput(LatentGrid(x, k), t, ref_lat, mask_lat,
                            prompt, abar_t, view=view)
        eps = denoiser.predict_epsilon(inp).values
        x0 = predict_x0(x, eps, abar_t)
        if (T - t) % cfg.noise_refresh_period == 0 or noise is None:
            noise = rng.standard_normal(x.shape).astype(np.float32)
        x = renoise(x0, schedule.abar_prev(t), noise)
    image = codec.decode(LatentGrid(x, k))
    return np.where(known[..., None], reference, image).astype(np.float32)


def _identity_pose_at(center):
    from .geometry import RigidTransform

    return RigidTransform.identity(np.asarray(center, dtype=np.float64))


# ---------------------------------------------------------------------------
# denoiser backends (no neural components)
# ---------------------------------------------------------------------------

def _is_fan_view(view: ViewSpec) -> tuple[float, float] | None:
    """(yaw, fov_deg) if the view is an axis-pitch-free ring view, else None."""
    if view is None or view.kind != "perspective":
        return None
    rot = view.pose.rotation
    fwd = rot @ np.array([0.0, 0.0, 1.0])
    yaw = float(np.arctan2(fwd[0], fwd[2]))
    from .geometry import rotation_yaw

    if np.max(np.abs(rot - rotation_yaw(yaw))) > 1e-9:
        return None
    intr = view.intrinsics
    fov_deg = float(np.degrees(2.0 * np.arctan((intr.width / 2.0) / intr.fx)))
    return yaw, fov_deg


class _TargetDenoiser:
    """Shared machinery: denoise toward a per-view target image."""

    def __init__(self, channels=3, latent_size=64):
        self.channels = channels
        self.latent_size = latent_size

    def _target_latent(self, inp: DenoiserInput) -> np.ndarray:
        raise NotImplementedError

    def predict_epsilon(self, inp: DenoiserInput) -> LatentGrid:
        target = self._target_latent(inp)
        y = oracle_core.composite_latent(target, inp.reference.values, inp.mask)
        eps = oracle_core.oracle_epsilon(inp.latents.values, y, inp.abar)
        return LatentGrid(eps, inp.latents.scale)


class OracleDenoiser(_TargetDenoiser):
    """Test double that drives every clean estimate to a known band image.

    ``target`` is an equirect band image matching the panorama geometry.
    Fan views sample it through the band warp; planar windows slice it
    exactly.  Views with other poses fall back to resizing the target onto
    the latent grid (only exercised by off-center demo runs).
    """

    def __init__(self, target: np.ndarray, lat_band=BAND_DEFAULT,
                 channels=3, latent_size=64, scale=1):
        super().__init__(channels, latent_size)
        self.target = np.asarray(target, dtype=np.float32)
        self.lat_band = (float(lat_band[0]), float(lat_band[1]))
        self.scale = scale
        self._target_lat: np.ndarray | None = None
        self._fan_cache: dict = {}

    def _band_latent(self) -> np.ndarray:
        if self._target_lat is None:
            if self.scale == 1:
                self._target_lat = self.target
            else:
                h, w = self.target.shape[:2]
                k = self.scale
                self._target_lat = self.target.reshape(
                    h // k, k, w // k, k, -1).mean(axis=(1, 3)).astype(np.float32)
        return self._target_lat

    def _target_latent(self, inp: DenoiserInput) -> np.ndarray:
        if inp.window_origin is not None:
            row, col = inp.window_origin
            h, w = inp.latents.values.shape[:2]
            sl = oracle_core.slice_band_window(self._band_latent(), col, w)
            return sl[row:row + h]
        ctx = _is_fan_view(inp.view)
        if ctx is not None:
            key = ctx
            if key not in self._fan_cache:
                yaw, fov_deg = ctx
                vals, _ = oracle_core.warp_band_to_fan_view(
                    self.target, self.lat_band[0], self.lat_band[1],
                    yaw, fov_deg, self.latent_size, self.scale,
                )
                self._fan_cache[key] = vals
            return self._fan_cache[key]
        # arbitrary pose: fit the target onto the latent grid
        import cv2

        n = self.latent_size
        return cv2.resize(self.target, (n, n), interpolation=cv2.INTER_AREA)


class MeshTargetDenoiser(_TargetDenoiser):
    """Denoiser double whose target is a rendered ground-truth mesh.

    Works for any view pose (the synthetic end-to-end experiments), at the
    price of a render per distinct view.
    """

    def __init__(self, mesh, codec: LatentCodec, channels=3, latent_size=64):
        super().__init__(channels, latent_size)
        self.mesh = mesh
        self.codec = codec
        self._view_cache: dict = {}

    def _render_view(self, view: ViewSpec) -> np.ndarray:
        from .rasterize import render

        key = (view.kind, view.width, view.height,
               view.pose.rotation.tobytes(), view.pose.position.tobytes())
        if key not in self._view_cache:
            out = render(self.mesh, view)
            self._view_cache[key] = self.codec.encode(out.color).values
        return self._view_cache[key]

    def _target_latent(self, inp: DenoiserInput) -> np.ndarray:
        if inp.window_origin is not None:
            row, col = inp.window_origin
            h, w = inp.latents.values.shape[:2]
            band = self._render_view(inp.view)
            sl = oracle_core.slice_band_window(band, col, w)
            return sl[row:row + h]
        return self._render_view(inp.view)


class ProceduralDenoiser(_TargetDenoiser):
    """Neural-free backend: denoises toward a seeded smooth color field.

    The field is a function of world ray direction, so fan views see a
    mutually consistent panorama; different seeds give visibly different
    rooms (mean absolute separation is asserted in tests).
    """

    def __init__(self, style_seed: int, channels=3, latent_size=64):
        super().__init__(channels, latent_size)
        rng = np.random.default_rng(style_seed)
        kdirs = rng.normal(size=(channels, 4, 3))
        self._dirs = kdirs / np.linalg.norm(kdirs, axis=-1, keepdims=True)
        self._freq = rng.uniform(1.5, 5.0, size=(channels, 4))
        self._phase = rng.uniform(0, 2 * np.pi, size=(channels, 4))
        self._amp = rng.uniform(0.07, 0.16, size=(channels, 4))
        self.style_seed = style_seed

    def field(self, dirs: np.ndarray) -> np.ndarray:
        dirs = np.asarray(dirs, dtype=np.float64)
        out = np.full(dirs.shape[:-1] + (self.channels,), 0.5)
        for c in range(self.channels):
            for k in range(4):
                out[..., c] += self._amp[c, k] * np.sin(
                    self._freq[c, k] * dirs @ self._dirs[c, k] + self._phase[c, k]
                )
        return np.clip(out, 0.0, 1.0).astype(np.float32)

    def _target_latent(self, inp: DenoiserInput) -> np.ndarray:
        n = self.latent_size
        if inp.window_origin is not None:
            row, col = inp.window_origin
            h, w = inp.latents.values.shape[:2]
            k = inp.latents.scale
            band_shape = (inp.view.height // k, inp.view.width // k)
            band = self.field(view_ray_grid(inp.view, band_shape))
            return oracle_core.slice_band_window(band, col, w)[row:row + h]
        return self.field(view_ray_grid(inp.view, (n, n)))
