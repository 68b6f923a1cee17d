"""Operator CLI: one subcommand per pipeline stage.

Exit codes: 0 success, 2 input error (missing/malformed files or
arguments), 3 numeric or pipeline failure. Progress and results are
emitted as one-line JSON records on stdout.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERIC = 3


class InputError(Exception):
    pass


def _log(event: str, **fields) -> None:
    print(json.dumps({"event": event, **fields}), flush=True)


def _require(path, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise InputError(f"{what} not found: {p}")
    return p


def _load_mesh(path):
    from .geometry.meshio import load_obj, load_ply

    p = _require(path, "mesh")
    if p.suffix.lower() == ".obj":
        return load_obj(p)
    mesh = load_ply(p)
    if isinstance(mesh, np.ndarray):
        raise InputError(f"{p} contains points, not a mesh")
    return mesh


def _load_landmarks(path):
    from .geometry.mesh import PointSet

    doc = json.loads(_require(path, "landmark file").read_text())
    pts = doc["points"] if isinstance(doc, dict) else doc
    return PointSet(np.asarray(pts, dtype=np.float64))


def _parse_background(text: str) -> np.ndarray:
    text = text.lstrip("#")
    if len(text) != 6:
        raise InputError(f"background must be RRGGBB hex, got {text!r}")
    try:
        return np.array([int(text[i : i + 2], 16) / 255.0 for i in (0, 2, 4)])
    except ValueError as e:
        raise InputError(f"background must be RRGGBB hex, got {text!r}") from e


def _load_expression_file(path, k_gamma: int):
    from .head.model import Expression

    doc = json.loads(_require(path, "expression file").read_text())
    frames = doc["frames"] if isinstance(doc, dict) else doc
    out = []
    for f in frames:
        out.append(
            Expression(
                jaw=np.asarray(f.get("jaw", [0.0, 0.0, 0.0])),
                gamma=np.asarray(f.get("gamma", np.zeros(k_gamma))),
                eyelids=np.asarray(f.get("eyelids", [0.0, 0.0])),
            )
        )
    return out


def save_expression_file(path, expressions) -> None:
    doc = {
        "frames": [
            {"jaw": e.jaw.tolist(), "gamma": e.gamma.tolist(), "eyelids": e.eyelids.tolist()}
            for e in expressions
        ]
    }
    Path(path).write_text(json.dumps(doc))


def _camera_for(bundle, spec: str):
    from .geometry.cameras import Camera

    if spec in bundle.cameras:
        return bundle.cameras[spec]
    p = Path(spec)
    if p.exists():
        return Camera.from_dict(json.loads(p.read_text()))
    raise InputError(f"unknown camera preset or file: {spec}")


def cmd_fit_head(args) -> int:
    from .head import FitConfig, fit_head_pipeline, load_head_model, save_head_model

    model = load_head_model(_require(args.model, "head model"))
    scan = _load_mesh(args.scan)
    landmarks = _load_landmarks(args.landmarks)
    cfg = FitConfig()
    if args.config:
        overrides = json.loads(_require(args.config, "fit config").read_text())
        for key, value in overrides.items():
            if not hasattr(cfg, key):
                raise InputError(f"unknown fit config key {key!r}")
            setattr(cfg, key, value)
    if args.dry_run:
        _log("fit_head.dry_run", scan=str(args.scan), landmarks=str(args.landmarks))
        return EXIT_OK
    t0 = time.time()
    fitted, summary = fit_head_pipeline(model, scan, landmarks, cfg=cfg)
    save_head_model(args.out, fitted)
    report = {
        "stages": {
            name: {"chamfer": s["chamfer"], "iterations": len(s["losses"]), "converged": s["converged"]}
            for name, s in summary.items()
        },
        "seconds": time.time() - t0,
    }
    if args.report:
        curves = {name: s["losses"] for name, s in summary.items()}
        Path(args.report).write_text(json.dumps({**report, "curves": curves}))
        csv_path = Path(args.report).with_suffix(".csv")
        with open(csv_path, "w") as f:
            f.write("stage,iteration,loss\n")
            for name, losses in curves.items():
                for i, value in enumerate(losses):
                    f.write(f"{name},{i},{value}\n")
    _log("fit_head.done", out=str(args.out), **report["stages"])
    chamfers = [summary[k]["chamfer"] for k in ("rigid", "shape", "displacement")]
    if not (chamfers[0] >= chamfers[1] >= chamfers[2]):
        _log("fit_head.warning", message="stage chamfer did not decrease monotonically", chamfer=chamfers)
    return EXIT_OK


def cmd_stitch(args) -> int:
    from .geometry.mesh import PointSet
    from .geometry.meshio import save_obj
    from .head import evaluate_head, load_head_model
    from .pipeline.bundle import StitchMeta
    from .stitch import compute_cut_plane, slice_mesh, stitch
    from .transforms import rotvec_to_matrix

    body = _load_mesh(args.body)
    head = load_head_model(_require(args.head, "head model"))
    if head.personalization is None:
        raise InputError("head model must be personalized before stitching")
    marked_ids = np.asarray(json.loads(_require(args.marked, "marked vertex file").read_text()), dtype=np.int64)
    pers = head.personalization
    placed = (
        evaluate_head(head, beta=pers.beta, displacement_override=pers.displacements).vertices
        @ rotvec_to_matrix(pers.rotation).T
        + pers.translation
    )
    plane = compute_cut_plane(PointSet(placed[marked_ids]))
    if plane.normal @ (placed.mean(axis=0) - plane.centroid) < 0:
        plane = type(plane)(plane.centroid, -plane.normal)
    body_slice = slice_mesh(body, plane, keep_side=-1)
    head_slice = slice_mesh(head.template.with_vertices(placed), plane, keep_side=1)
    result = stitch(body_slice.mesh, body_slice.loop, head_slice.mesh, head_slice.loop)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_obj(out_dir / "stitched.obj", result.mesh)
    meta = StitchMeta(
        body_kept=body_slice.kept_vertices,
        body_created_edges=body_slice.created_edges,
        body_created_t=body_slice.created_t,
        head_kept=head_slice.kept_vertices,
        head_created_edges=head_slice.created_edges,
        head_created_t=head_slice.created_t,
        body_vertex_count=result.body_vertex_count,
        head_vertex_count=result.head_vertex_count,
        body_triangle_count=result.body_triangle_count,
        head_triangle_count=result.head_triangle_count,
        seam_body=result.seam_body,
        seam_head=result.seam_head,
    )
    (out_dir / "stitch_meta.json").write_text(json.dumps(meta.to_dict()))
    boundary = len(result.mesh.boundary_edges())
    _log("stitch.done", out=str(out_dir), vertices=result.mesh.num_vertices, boundary_edges=boundary)
    if boundary != 0:
        raise RuntimeError("stitched mesh is not watertight")
    return EXIT_OK


def cmd_bake(args) -> int:
    from .appearance import bake_uv, save_texel_map
    from .pipeline.bundle import StitchMeta

    mesh = _load_mesh(args.mesh)
    triangles = None
    if args.meta and args.region:
        meta = StitchMeta.from_dict(json.loads(_require(args.meta, "stitch meta").read_text()))
        triangles = meta.body_triangles() if args.region == "body" else meta.head_triangles()
    texmap = bake_uv(mesh, args.resolution, triangles=triangles)
    save_texel_map(args.out, texmap)
    _log("bake.done", out=str(args.out), texels=texmap.num_texels, resolution=args.resolution)
    return EXIT_OK


def cmd_track(args) -> int:
    from .pipeline import load_bundle
    from .skinning.skeleton import load_pose_file, save_pose_file
    from .tracking import TrackConfig, eyelid_postprocess, load_observation_frame, optimize_motion, track_expressions
    from .tracking.eyelids import eyelid_diffs_from_observations

    bundle, predictor = load_bundle(_require(args.bundle, "bundle"))
    frames, window, frame_time = load_pose_file(_require(args.poses_init, "initial pose file"))
    obs_dir = _require(args.observations, "observation directory")
    obs_files = sorted(obs_dir.glob("frame_*.json"))
    if len(obs_files) != len(frames):
        raise InputError(f"{len(obs_files)} observation frames for {len(frames)} poses")
    observations = [load_observation_frame(p) for p in obs_files]
    cfg = TrackConfig()
    if args.config:
        overrides = json.loads(_require(args.config, "track config").read_text())
        for key, value in overrides.items():
            if not hasattr(cfg, key):
                raise InputError(f"unknown track config key {key!r}")
            setattr(cfg, key, value)

    poses = frames
    if not args.skip_motion:
        poses, motion_report = optimize_motion(
            bundle.rig, frames, observations, bundle.cameras, cfg, predictor=predictor, window=window
        )
        _log("track.motion", best_loss=motion_report.best_loss, iterations=motion_report.iterations)
    expressions, expr_report = track_expressions(
        bundle.head, observations, bundle.cameras, cfg, rig=bundle.rig, poses=poses
    )
    _log("track.expressions", best_loss=expr_report.best_loss, iterations=expr_report.iterations)
    if args.eyelid_pairs:
        pairs = json.loads(args.eyelid_pairs)
        diffs = eyelid_diffs_from_observations(observations, pairs)
        eps = np.stack([e.eyelids for e in expressions])
        refined = eyelid_postprocess(eps, diffs, cfg.eyelid_zeta, cfg.eyelid_omega)
        from .head.model import Expression

        expressions = [
            Expression(e.jaw, e.gamma, refined[i]) for i, e in enumerate(expressions)
        ]
        _log("track.eyelids", frames=len(expressions))
    save_pose_file(args.out_poses, poses, window, frame_time)
    save_expression_file(args.out_expressions, expressions)
    _log("track.done", poses=str(args.out_poses), expressions=str(args.out_expressions))
    return EXIT_OK


def cmd_fit_appearance(args) -> int:
    from .appearance import AppearanceFitConfig, fit_static_gaussians, save_decoder
    from .pipeline import load_bundle
    from .render import load_png

    bundle, _ = load_bundle(_require(args.bundle, "bundle"))
    texmap = bundle.head_texmap if args.region == "head" else bundle.body_texmap
    views = []
    for item in args.view:
        cam_name, _, image_path = item.partition("=")
        camera = _camera_for(bundle, cam_name)
        views.append((camera, load_png(_require(image_path, "target image"))))
    cfg = AppearanceFitConfig(iterations=args.iterations, seed=args.seed)
    decoder, report = fit_static_gaussians(texmap, bundle.stitched, views, cfg)
    save_decoder(args.out, decoder)
    _log("fit_appearance.done", out=str(args.out), best_loss=report.best_loss, iterations=report.iterations)
    return EXIT_OK


def _frame_inputs_at(bundle, frames, window, expressions, index):
    from .pipeline import FrameInputs
    from .skinning.skeleton import PoseWindow

    def win(t):
        rows = [frames[max(0, t - window + 1 + k)] for k in range(window)]
        return PoseWindow(np.stack(rows))

    def expr(t):
        return expressions[max(0, t)] if expressions else None

    from .head.model import Expression

    exprs = []
    for t in (index, index - 1, index - 2):
        t = max(0, t)
        exprs.append(expressions[t] if expressions else Expression.zero(bundle.k_gamma))
    return FrameInputs(windows=[win(index), win(max(0, index - 1)), win(max(0, index - 2))], expressions=exprs)


def cmd_render(args) -> int:
    from .pipeline import load_bundle, render_avatar
    from .render import save_png, save_raw
    from .skinning.skeleton import load_pose_file

    bundle, predictor = load_bundle(_require(args.bundle, "bundle"))
    camera = _camera_for(bundle, args.camera)
    background = _parse_background(args.background)
    if args.pose_file:
        frames, window, _ = load_pose_file(_require(args.pose_file, "pose file"))
        if frames.shape[1] != bundle.d_body:
            raise InputError(f"pose file dimension {frames.shape[1]} != bundle D_body {bundle.d_body}")
    else:
        frames, window = np.zeros((1, bundle.d_body)), 2
    expressions = _load_expression_file(args.expression_file, bundle.k_gamma) if args.expression_file else None
    index = min(args.frame, len(frames) - 1)
    inputs = _frame_inputs_at(bundle, frames, window, expressions, index)
    result, timings = render_avatar(
        bundle, inputs, camera, background=background, predictor=predictor, tiled=not args.reference
    )
    save_png(args.out, result.image, alpha=result.alpha if args.alpha else None)
    if args.raw:
        save_raw(args.raw, result.image)
    _log("render.done", out=str(args.out), timings_ms=timings.as_dict())
    return EXIT_OK


def cmd_animate(args) -> int:
    from .pipeline import load_bundle, render_avatar
    from .render import save_png
    from .skinning.skeleton import load_pose_file

    bundle, predictor = load_bundle(_require(args.bundle, "bundle"))
    camera = _camera_for(bundle, args.camera)
    background = _parse_background(args.background)
    frames, window, _ = load_pose_file(_require(args.pose_file, "pose file"))
    expressions = _load_expression_file(args.expression_file, bundle.k_gamma) if args.expression_file else None
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for t in range(len(frames)):
        inputs = _frame_inputs_at(bundle, frames, window, expressions, t)
        result, timings = render_avatar(bundle, inputs, camera, background=background, predictor=predictor)
        save_png(out_dir / f"frame_{t:04d}.png", result.image)
        _log("animate.frame", index=t, timings_ms=timings.as_dict())
    _log("animate.done", frames=len(frames), out=str(out_dir))
    return EXIT_OK


def cmd_demo_bundle(args) -> int:
    from .pipeline import build_demo_bundle, save_bundle

    bundle, predictor = build_demo_bundle(seed=args.seed)
    save_bundle(args.out, bundle, predictor)
    _log("demo_bundle.done", out=str(args.out), d_body=bundle.d_body, k_gamma=bundle.k_gamma)
    return EXIT_OK


def cmd_benchmark(args) -> int:
    from .pipeline import FrameInputs, build_demo_bundle, render_avatar
    from .render import Gaussians, RenderTarget, rasterize_reference, rasterize_tiled
    from .geometry.cameras import look_at
    from .head.model import Expression
    from .transforms import quat_normalize

    rows = []
    bundle, predictor = build_demo_bundle(seed=args.seed)
    inputs = FrameInputs.static(np.zeros(bundle.d_body), Expression.zero(bundle.k_gamma))
    _, timings = render_avatar(bundle, inputs, bundle.cameras["front"], predictor=predictor)
    n_avatar = bundle.body_texmap.num_texels + bundle.head_texmap.num_texels
    rows.append(
        {
            "case": "avatar_frame",
            "gaussians": n_avatar,
            "pixels": bundle.cameras["front"].width * bundle.cameras["front"].height,
            "tex_ms": timings.tex_ms,
            "pred_ms": timings.pred_ms,
            "tra_ms": timings.tra_ms,
            "ren_ms": timings.ren_ms,
        }
    )

    rng = np.random.default_rng(args.seed)
    n = args.gaussians
    gaussians = Gaussians(
        positions=rng.uniform(-0.9, 0.9, size=(n, 3)),
        scales=rng.uniform(0.004, 0.012, size=(n, 3)),
        rotations=quat_normalize(rng.normal(size=(n, 4))),
        opacities=rng.uniform(0.2, 0.95, size=n),
        sh=rng.normal(size=(n, 48)) * 0.2,
    )
    cam = look_at(
        eye=[0.0, 0.0, -3.2], target=[0.0, 0.0, 0.0],
        fx=args.size * 1.1, fy=args.size * 1.1, cx=(args.size - 1) / 2, cy=(args.size - 1) / 2,
        width=args.size, height=args.size,
    )
    target = RenderTarget(args.size, args.size, background=np.zeros(3))
    t0 = time.perf_counter()
    ref = rasterize_reference(gaussians, cam, target)
    t_ref = (time.perf_counter() - t0) * 1e3
    t0 = time.perf_counter()
    tiled, _ = rasterize_tiled(gaussians, cam, target, tile_size=args.tile_size, threads=args.threads)
    t_tiled = (time.perf_counter() - t0) * 1e3
    max_diff = float(np.abs(ref.image - tiled.image).max())
    rows.append(
        {
            "case": "raster_reference",
            "gaussians": n,
            "pixels": args.size * args.size,
            "tex_ms": 0.0,
            "pred_ms": 0.0,
            "tra_ms": 0.0,
            "ren_ms": t_ref,
        }
    )
    rows.append(
        {
            "case": "raster_tiled",
            "gaussians": n,
            "pixels": args.size * args.size,
            "tex_ms": 0.0,
            "pred_ms": 0.0,
            "tra_ms": 0.0,
            "ren_ms": t_tiled,
        }
    )
    with open(args.out, "w") as f:
        f.write("case,gaussians,pixels,tex_ms,pred_ms,tra_ms,ren_ms\n")
        for r in rows:
            f.write(
                f"{r['case']},{r['gaussians']},{r['pixels']},"
                f"{r['tex_ms']:.3f},{r['pred_ms']:.3f},{r['tra_ms']:.3f},{r['ren_ms']:.3f}\n"
            )
    _log(
        "benchmark.done",
        out=str(args.out),
        reference_ms=t_ref,
        tiled_ms=t_tiled,
        speedup=t_ref / max(t_tiled, 1e-9),
        max_diff=max_diff,
    )
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .pipeline import load_bundle
    from .service import create_app

    bundle, predictor = load_bundle(_require(args.bundle, "bundle"))
    app = create_app(bundle, predictor)
    bind = args.bind or os.environ.get("GSAVATAR_BIND", "127.0.0.1:8000")
    host, _, port = bind.partition(":")
    _log("serve.start", bind=bind)
    uvicorn.run(app, host=host, port=int(port or 8000), log_level="warning")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gsavatar", description="Expressive splat-avatar pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit-head", help="personalize a head model to a scan")
    p.add_argument("--scan", required=True)
    p.add_argument("--landmarks", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--report")
    p.add_argument("--config")
    p.add_argument("--dry-run", action="store_true")
    p.set_defaults(func=cmd_fit_head)

    p = sub.add_parser("stitch", help="join body mesh and personalized head")
    p.add_argument("--body", required=True)
    p.add_argument("--head", required=True)
    p.add_argument("--marked", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_stitch)

    p = sub.add_parser("bake", help="bake a UV chart into a texel map")
    p.add_argument("--mesh", required=True)
    p.add_argument("--resolution", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--meta")
    p.add_argument("--region", choices=["body", "head"])
    p.set_defaults(func=cmd_bake)

    p = sub.add_parser("track", help="refine motion and track expressions")
    p.add_argument("--bundle", required=True)
    p.add_argument("--observations", required=True)
    p.add_argument("--poses-init", required=True)
    p.add_argument("--out-poses", required=True)
    p.add_argument("--out-expressions", required=True)
    p.add_argument("--config")
    p.add_argument("--skip-motion", action="store_true")
    p.add_argument("--eyelid-pairs", help="JSON [[upperL,lowerL],[upperR,lowerR]] dense-convention indices")
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("fit-appearance", help="fit constant texel gaussians to images")
    p.add_argument("--bundle", required=True)
    p.add_argument("--region", choices=["body", "head"], required=True)
    p.add_argument("--view", action="append", required=True, help="CAMERA=IMAGE.png (repeatable)")
    p.add_argument("--out", required=True)
    p.add_argument("--iterations", type=int, default=400)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_fit_appearance)

    p = sub.add_parser("render", help="render one frame")
    p.add_argument("--bundle", required=True)
    p.add_argument("--camera", default="front")
    p.add_argument("--pose-file")
    p.add_argument("--frame", type=int, default=0)
    p.add_argument("--expression-file")
    p.add_argument("--background", default="000000")
    p.add_argument("--out", required=True)
    p.add_argument("--raw")
    p.add_argument("--alpha", action="store_true")
    p.add_argument("--reference", action="store_true", help="use the reference rasterizer")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("animate", help="render a pose sequence to numbered frames")
    p.add_argument("--bundle", required=True)
    p.add_argument("--camera", default="front")
    p.add_argument("--pose-file", required=True)
    p.add_argument("--expression-file")
    p.add_argument("--background", default="000000")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_animate)

    p = sub.add_parser("demo-bundle", help="write the synthetic demo bundle")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_demo_bundle)

    p = sub.add_parser("benchmark", help="stage timing report")
    p.add_argument("--out", required=True)
    p.add_argument("--gaussians", type=int, default=20000)
    p.add_argument("--size", type=int, default=512)
    p.add_argument("--tile-size", type=int, default=16)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("serve", help="run the render service")
    p.add_argument("--bundle", required=True)
    p.add_argument("--bind", help="host:port (or GSAVATAR_BIND env var)")
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as e:
        _log("error", kind="input", message=str(e))
        return EXIT_INPUT
    except FileNotFoundError as e:
        _log("error", kind="input", message=str(e))
        return EXIT_INPUT
    except (ValueError, RuntimeError, np.linalg.LinAlgError) as e:
        _log("error", kind="numeric", message=str(e))
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
