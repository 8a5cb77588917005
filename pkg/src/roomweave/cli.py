"""Command-line front end: scene completion, panorama-only runs, evaluation.

Exit status 0 on success; on failure a single machine-parsable line
``E_<CODE>: message`` goes to stderr and the status is 2.  All commands are
deterministic for a fixed seed (byte-identical artifacts).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import cv2
import numpy as np

from .completion import (
    CompletionConfig,
    DEFAULT_PROMPT_TEMPLATE,
    build_prompt,
    complete_scene,
    room_center,
)
from .depthfill import DepthFusionConfig, SmoothFillPredictor
from .diffusion import (
    AlphaSchedule,
    IdentityCodec,
    OracleDenoiser,
    PanoInpaintConfig,
    ProceduralDenoiser,
    inpaint_panorama_color,
)
from .geometry import PanoCoverageError
from .meshing import TriangleMesh, fuse, mesh_from_rgbd
from .metrics import evaluate
from .panorama import render_panorama
from .sceneio import (
    MeshFormatError,
    SceneLoadError,
    export_mesh,
    load_mesh,
    load_scene,
    split_views,
    write_pfm,
)

BRIDGE_ENV = "ROOMWEAVE_BRIDGE"


class CliError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


def _add_common(p):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1,
                   help="cap on internal compute threads")
    p.add_argument("--print-config", action="store_true",
                   help="dump the effective configuration and exit")


def _add_pano_args(p):
    p.add_argument("--scene", required=True, help="scene directory")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--denoiser", required=True,
                   help="oracle:IMAGE | procedural:SEED | bridge:HOST:PORT")
    p.add_argument("--fraction", type=float, default=1.0,
                   help="input-view fraction of the dataset")
    p.add_argument("--steps", type=int, default=50)
    p.add_argument("--refine-steps", type=int, default=20)
    p.add_argument("--views", type=int, default=8)
    p.add_argument("--fov", type=float, default=98.0)
    p.add_argument("--noise-refresh", type=int, default=2)
    p.add_argument("--window-stride", type=int, default=16)
    p.add_argument("--latent-size", type=int, default=64)
    p.add_argument("--depth-refine-iters", type=int, default=4)
    p.add_argument("--prompt-template", default=DEFAULT_PROMPT_TEMPLATE)
    p.add_argument("--style-token", default="")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="roomweave",
        description="sparse RGBD frames -> complete textured room mesh",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    pc = sub.add_parser("complete", help="run the full completion pipeline")
    _add_pano_args(pc)
    _add_common(pc)
    pc.add_argument("--candidates", type=int, default=3)
    pc.add_argument("--completion-iters", type=int, default=30)
    pc.add_argument("--pose-samples", type=int, default=200)
    pc.add_argument("--view-fov", type=float, default=60.0)

    pp = sub.add_parser("panorama", help="render + inpaint the panorama only")
    _add_pano_args(pp)
    _add_common(pp)

    pe = sub.add_parser("eval", help="score a mesh against a scene's eval split")
    pe.add_argument("--mesh", required=True)
    pe.add_argument("--scene", required=True)
    pe.add_argument("--fraction", type=float, default=0.05)
    pe.add_argument("--blur", type=int, default=None)
    pe.add_argument("--out", default=None)
    pe.add_argument("--render-scale", type=int, default=2)
    pe.add_argument("--chamfer-samples", type=int, default=100_000)
    _add_common(pe)
    return ap


def _effective_config(args) -> dict:
    cfg = {k.replace("_", "-"): v for k, v in sorted(vars(args).items())
           if k not in ("command", "print_config")}
    cfg["command"] = args.command
    return cfg


def _select_backend(args):
    """denoiser spec -> (denoiser, codec, predictor, schedule|None, session)."""
    spec = args.denoiser
    kind, _, arg = spec.partition(":")
    if kind == "bridge":
        from .bridge_client import BridgeError, BridgeSession

        address = os.environ.get(BRIDGE_ENV) or arg
        if not address:
            raise CliError("E_BRIDGE", "bridge address missing "
                           f"(set {BRIDGE_ENV} or use bridge:HOST:PORT)")
        try:
            session = BridgeSession(address)
        except BridgeError as exc:
            raise CliError("E_BRIDGE", str(exc)) from exc
        if session.schedule.steps != args.steps:
            raise CliError(
                "E_BRIDGE",
                f"bridge schedule has {session.schedule.steps} steps, "
                f"--steps is {args.steps}")
        return (session.denoiser, session.codec, session.predictor,
                session.schedule, session)
    codec = IdentityCodec()
    predictor = SmoothFillPredictor()
    n = args.latent_size
    if kind == "procedural":
        try:
            seed = int(arg)
        except ValueError:
            raise CliError("E_ARGS", f"procedural seed must be an integer: {arg!r}")
        return ProceduralDenoiser(seed, latent_size=n), codec, predictor, None, None
    if kind == "oracle":
        img = cv2.imread(arg, cv2.IMREAD_COLOR)
        if img is None:
            raise CliError("E_ARGS", f"cannot read oracle target image {arg!r}")
        band_w, band_h = 4 * n * codec.scale, n * codec.scale
        img = cv2.resize(img, (band_w, band_h), interpolation=cv2.INTER_AREA)
        target = img[..., ::-1].astype(np.float32) / 255.0
        return OracleDenoiser(target, latent_size=n), codec, predictor, None, None
    raise CliError("E_ARGS", f"unknown denoiser spec {spec!r}")


def _load_inputs(args):
    try:
        ds = load_scene(args.scene)
    except SceneLoadError as exc:
        raise CliError("E_SCENE", str(exc)) from exc
    try:
        inputs, evals = split_views(ds, args.fraction)
    except ValueError as exc:
        raise CliError("E_ARGS", str(exc)) from exc
    return inputs, evals


def _write_panorama_files(out_dir: Path, pano_color, pano_dist, hole_mask):
    rgb8 = (np.clip(pano_color, 0, 1) * 255.0 + 0.5).astype(np.uint8)
    cv2.imwrite(str(out_dir / "panorama.png"), rgb8[..., ::-1])
    write_pfm(out_dir / "panorama_dist.pfm", pano_dist)
    cv2.imwrite(str(out_dir / "panorama_holes.png"),
                (hole_mask.astype(np.uint8)) * 255)


def _configs_from_args(args):
    diff_cfg = PanoInpaintConfig(
        steps=args.steps, refine_steps=args.refine_steps, views=args.views,
        fov_deg=args.fov, noise_refresh_period=args.noise_refresh,
        window_size=args.latent_size, window_stride=args.window_stride,
        seed=args.seed,
    )
    depth_cfg = DepthFusionConfig(refine_iters=args.depth_refine_iters)
    return diff_cfg, depth_cfg


def cmd_panorama(args) -> int:
    denoiser, codec, predictor, schedule, session = _select_backend(args)
    try:
        inputs, _ = _load_inputs(args)
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        diff_cfg, depth_cfg = _configs_from_args(args)
        mesh = TriangleMesh.empty()
        for f in inputs.frames:
            mesh = fuse(mesh, mesh_from_rgbd(f))
        center = room_center(inputs.frames)
        view_px = denoiser.latent_size * codec.scale
        pano = render_panorama(mesh, center, width=4 * view_px, height=view_px,
                               fan_views=args.views, fov_deg=args.fov)
        prompt = build_prompt(args.prompt_template, args.style_token)
        color = inpaint_panorama_color(pano, denoiser, codec, diff_cfg, prompt,
                                       schedule)
        from .depthfill import inpaint_panorama_distance

        dist = inpaint_panorama_distance(
            pano, color, predictor, depth_cfg,
            fan_views=args.views, fov_deg=args.fov, view_size=view_px)
        _write_panorama_files(out_dir, color, dist.values, pano.hole_mask)
        return 0
    finally:
        if session is not None:
            session.close()


def cmd_complete(args) -> int:
    denoiser, codec, predictor, schedule, session = _select_backend(args)
    try:
        inputs, evals = _load_inputs(args)
        out_dir = Path(args.out)
        (out_dir / "checkpoints").mkdir(parents=True, exist_ok=True)
        diff_cfg, depth_cfg = _configs_from_args(args)
        comp_cfg = CompletionConfig(
            candidates=args.candidates, completion_iters=args.completion_iters,
            pose_samples=args.pose_samples, view_fov_deg=args.view_fov,
        )
        stages = []

        def checkpoint(name, mesh):
            stages.append(name)
            export_mesh(mesh, out_dir / "checkpoints" / f"{name}.ply")

        mesh = complete_scene(
            inputs, denoiser, predictor, codec,
            comp_cfg=comp_cfg, diff_cfg=diff_cfg, depth_cfg=depth_cfg,
            prompt_template=args.prompt_template, style_token=args.style_token,
            checkpoint_cb=checkpoint,
        )
        export_mesh(mesh, out_dir / "final.ply")

        center = room_center(inputs.frames)
        pano = render_panorama(
            mesh, center,
            width=4 * denoiser.latent_size * codec.scale,
            height=denoiser.latent_size * codec.scale,
            fan_views=args.views, fov_deg=args.fov)
        _write_panorama_files(out_dir, pano.color, pano.distance.values,
                              pano.hole_mask)

        report = {
            "config": _effective_config(args),
            "stages": stages,
            "final_vertices": mesh.n_vertices,
            "final_faces": mesh.n_faces,
            "input_views": len(inputs.frames),
            "eval_views": len(evals.frames),
        }
        (out_dir / "report.json").write_text(
            json.dumps(report, indent=2, sort_keys=True) + "\n")
        return 0
    finally:
        if session is not None:
            session.close()


def cmd_eval(args) -> int:
    try:
        mesh = load_mesh(args.mesh)
    except (MeshFormatError, OSError) as exc:
        raise CliError("E_MESH", str(exc)) from exc
    _, evals = _load_inputs(args)
    if not evals.frames:
        raise CliError("E_ARGS", "eval split is empty at this fraction")
    try:
        report = evaluate(mesh, evals.frames, blur_kernel=args.blur,
                          render_scale=args.render_scale,
                          chamfer_samples=args.chamfer_samples, seed=args.seed)
    except ValueError as exc:
        raise CliError("E_RUN", str(exc)) from exc
    sys.stdout.write(report.to_text())
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "report.txt").write_text(report.to_text())
        (out_dir / "report.json").write_text(report.to_json())
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads and args.threads > 0:
        try:
            import numba

            numba.set_num_threads(max(1, args.threads))
        except (ImportError, ValueError):
            pass
    if args.print_config:
        sys.stdout.write(json.dumps(_effective_config(args), indent=2,
                                    sort_keys=True) + "\n")
        return 0
    try:
        if args.command == "complete":
            return cmd_complete(args)
        if args.command == "panorama":
            return cmd_panorama(args)
        return cmd_eval(args)
    except CliError as exc:
        sys.stderr.write(f"{exc.code}: {exc}\n")
        return 2
    except SceneLoadError as exc:
        sys.stderr.write(f"E_SCENE: {exc}\n")
        return 2
    except MeshFormatError as exc:
        sys.stderr.write(f"E_MESH: {exc}\n")
        return 2
    except PanoCoverageError as exc:
        sys.stderr.write(f"E_COVERAGE: {exc}\n")
        return 2
    except ValueError as exc:
        sys.stderr.write(f"E_RUN: {exc}\n")
        return 2
    except Exception as exc:
        from .bridge_client import BridgeError

        if isinstance(exc, BridgeError):
            sys.stderr.write(f"E_BRIDGE: {exc}\n")
            return 2
        raise


if __name__ == "__main__":
    sys.exit(main())
