"""End-to-end avatar evaluation: pose + expression -> stitched geometry ->
motion textures -> decoded texel parameters -> world Gaussians -> image.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from ..appearance.decoders import decode
from ..appearance.placement import SkinningContext, pose_gaussians
from ..appearance.textures import WINDOW, render_motion_textures
from ..geometry.cameras import Camera
from ..geometry.mesh import Mesh
from ..head.model import Expression, evaluate_expression
from ..render.gaussians import Gaussians, RenderTarget
from ..render.raster import rasterize_reference, rasterize_tiled
from ..skinning.character import DeformationPredictor, ZeroPredictor
from ..skinning.dqs import dqs_skin
from ..skinning.skeleton import PoseWindow
from ..transforms import matrix_to_rotvec
from .bundle import AvatarBundle


@dataclass
class StageTimings:
    """Per-stage wall-clock times of one rendered frame, in milliseconds."""

    tex_ms: float = 0.0
    pred_ms: float = 0.0
    tra_ms: float = 0.0
    ren_ms: float = 0.0
    total_ms: float = 0.0

    def as_dict(self) -> dict:
        return {
            "tex": self.tex_ms,
            "pred": self.pred_ms,
            "tra": self.tra_ms,
            "ren": self.ren_ms,
            "total": self.total_ms,
        }


def _relative_joint_transforms(bundle: AvatarBundle, pose: np.ndarray):
    rots, trans = bundle.rig.skeleton.forward_kinematics(pose)
    rest_r, rest_t = bundle.rig.skeleton.rest_transforms()
    rel_r = np.einsum("jik,jlk->jil", rots, rest_r)
    rel_t = trans - np.einsum("jik,jk->ji", rel_r, rest_t)
    return rel_r, rel_t


def canonical_geometry(
    bundle: AvatarBundle, window: PoseWindow, expression: Expression, predictor: DeformationPredictor
) -> np.ndarray:
    """Deformed canonical stitched vertices (canonical pose, expression in)."""
    body_verts = bundle.rig.deformed_canonical(window, predictor)
    head_verts = evaluate_expression(bundle.head, expression).vertices
    meta = bundle.stitch_meta
    return np.concatenate([meta.body_part(body_verts), meta.head_part(head_verts)])


def evaluate_geometry(
    bundle: AvatarBundle,
    window: PoseWindow,
    expression: Expression,
    predictor: DeformationPredictor | None = None,
) -> Mesh:
    """Posed expressive template: deform canonically, then skin with the
    window's current frame. Topology is constant across all inputs."""
    predictor = predictor or ZeroPredictor()
    if window.frames.shape[1] != bundle.d_body:
        raise ValueError(f"pose dimension {window.frames.shape[1]} != bundle D_body {bundle.d_body}")
    canonical = canonical_geometry(bundle, window, expression, predictor)
    rel_r, rel_t = _relative_joint_transforms(bundle, window.current)
    posed = dqs_skin(canonical, bundle.stitched_weights, rel_r, rel_t)
    return bundle.stitched.with_vertices(posed)


def _normalized_posed_parts(bundle, window, expression, predictor):
    """Posed stitched vertices under the root-normalized pose, plus the
    normalized head transform (conditioning signal)."""
    canonical = canonical_geometry(bundle, window, expression, predictor)
    normalized = bundle.rig.skeleton.normalize_pose(window.current)
    rel_r, rel_t = _relative_joint_transforms(bundle, normalized)
    posed = dqs_skin(canonical, bundle.stitched_weights, rel_r, rel_t)
    head_idx = bundle.rig.skeleton.index[bundle.rig.head_joint] if bundle.rig.head_joint else 0
    cond = np.concatenate([matrix_to_rotvec(rel_r[head_idx]), rel_t[head_idx]])
    return posed, cond


@dataclass
class FrameInputs:
    """Driving signal of one rendered frame: pose windows and expressions
    for the current and two previous frames (newest first), plus the
    lighting latent."""

    windows: list[PoseWindow]
    expressions: list[Expression]
    lighting: np.ndarray = field(default_factory=lambda: np.zeros(4))

    def __post_init__(self):
        if len(self.windows) != WINDOW or len(self.expressions) != WINDOW:
            raise ValueError(f"need {WINDOW} pose windows and {WINDOW} expressions (frames t, t-1, t-2)")

    @classmethod
    def static(cls, pose: np.ndarray, expression: Expression, window_size: int = 2, lighting=None):
        """Repeat one pose/expression across the temporal windows."""
        pose = np.asarray(pose, dtype=np.float64)
        win = PoseWindow(np.tile(pose, (window_size, 1)))
        return cls(
            windows=[win] * WINDOW,
            expressions=[expression] * WINDOW,
            lighting=np.zeros(4) if lighting is None else np.asarray(lighting, dtype=np.float64),
        )


def decode_frame(bundle: AvatarBundle, inputs: FrameInputs, predictor: DeformationPredictor | None = None):
    """Tex + Pred stages: motion textures and decoded texel parameters.

    Returns (body_params, head_params, canonical stitched vertices of the
    current frame, timings dict with 'tex'/'pred' in ms).
    """
    predictor = predictor or ZeroPredictor()
    t0 = time.perf_counter()
    meshes = []
    conds = []
    for window, expression in zip(inputs.windows, inputs.expressions):
        posed, cond = _normalized_posed_parts(bundle, window, expression, predictor)
        meshes.append(bundle.stitched.with_vertices(posed))
        conds.append(cond)
    body_tex = render_motion_textures(meshes, bundle.body_texmap, lighting=inputs.lighting)
    head_tex = render_motion_textures(
        meshes, bundle.head_texmap, head_conditioning=np.concatenate(conds), lighting=inputs.lighting
    )
    t1 = time.perf_counter()
    body_params = decode(bundle.body_decoder, body_tex, bundle.body_texmap)
    head_params = decode(bundle.head_decoder, head_tex, bundle.head_texmap)
    t2 = time.perf_counter()
    canonical = canonical_geometry(bundle, inputs.windows[0], inputs.expressions[0], predictor)
    return body_params, head_params, canonical, {"tex": (t1 - t0) * 1e3, "pred": (t2 - t1) * 1e3}


def render_avatar(
    bundle: AvatarBundle,
    inputs: FrameInputs,
    camera: Camera,
    background=(0.0, 0.0, 0.0),
    predictor: DeformationPredictor | None = None,
    tiled: bool = True,
    tile_size: int = 32,
    threads: int | None = None,
):
    """Full frame: returns (RenderResult, StageTimings)."""
    predictor = predictor or ZeroPredictor()
    timings = StageTimings()
    start = time.perf_counter()

    body_params, head_params, canonical, tp = decode_frame(bundle, inputs, predictor)
    timings.tex_ms = tp["tex"]
    timings.pred_ms = tp["pred"]

    t2 = time.perf_counter()
    canonical_mesh = bundle.stitched.with_vertices(canonical)
    rel_r, rel_t = _relative_joint_transforms(bundle, inputs.windows[0].current)
    context = SkinningContext(bundle.stitched_weights, rel_r, rel_t)
    body = pose_gaussians(bundle.body_texmap, canonical_mesh, context, params=body_params)
    head = pose_gaussians(bundle.head_texmap, canonical_mesh, context, params=head_params)
    gaussians = Gaussians.concatenate([body.gaussians, head.gaussians])
    t3 = time.perf_counter()
    timings.tra_ms = (t3 - t2) * 1e3

    target = RenderTarget(camera.width, camera.height, background=np.asarray(background, dtype=np.float64))
    if tiled:
        result, _ = rasterize_tiled(gaussians, camera, target, tile_size=tile_size, threads=threads)
    else:
        result = rasterize_reference(gaussians, camera, target)
    t4 = time.perf_counter()
    timings.ren_ms = (t4 - t3) * 1e3
    timings.total_ms = (t4 - start) * 1e3
    return result, timings
