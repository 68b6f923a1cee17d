"""Texel parameters to world-space Gaussians: anchor on the deformed
canonical surface, apply the learned offset, then skin to the pose.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..geometry.mesh import Mesh
from ..render.gaussians import Gaussians
from ..skinning.dqs import SkinningWeights, blended_transforms_dense, rigid_to_dual_quat
from ..transforms import quat_mul
from .texels import (
    LOG_SCALE_SLICE,
    OFFSET_SLICE,
    OPACITY_SLICE,
    PARAMS_PER_TEXEL,
    ROTATION_SLICE,
    SH_SLICE,
    TexelGaussianMap,
)

OPACITY_EPS = 1e-6


@dataclass
class SkinningContext:
    """Pose transforms for texel skinning: per-joint rigid transforms plus
    the mesh's skinning weights (blended barycentrically per texel)."""

    weights: SkinningWeights
    rotations: np.ndarray  # (J, 3, 3) rest-to-posed per joint
    translations: np.ndarray  # (J, 3)


def texel_skin_transforms(texmap: TexelGaussianMap, mesh: Mesh, context: SkinningContext):
    """Blended rigid transform per texel: (R (M, 3, 3), t (M, 3), q (M, 4))."""
    n_joints = len(context.rotations)
    corner_ids = mesh.triangles[texmap.triangles]  # (M, 3)
    dense = np.zeros((texmap.num_texels, n_joints))
    for k in range(3):
        rows = corner_ids[:, k]
        w = context.weights.weights[rows] * texmap.barys[:, k : k + 1]
        np.add.at(dense, (np.arange(texmap.num_texels)[:, None], context.weights.joints[rows]), w)
    dense = dense / dense.sum(axis=1, keepdims=True)
    return blended_transforms_dense(dense, context.rotations, context.translations)


@dataclass
class PosedGaussians:
    """World Gaussians plus cached state for the fitting backward pass."""

    gaussians: Gaussians
    base: np.ndarray  # (M, 3) canonical anchor points
    skin_r: np.ndarray  # (M, 3, 3)
    skin_q: np.ndarray  # (M, 4)
    raw_q: np.ndarray  # (M, 4) decoded rotation before normalization
    raw_q_norm: np.ndarray  # (M,)


def pose_gaussians(
    texmap: TexelGaussianMap,
    canonical_mesh: Mesh,
    context: SkinningContext | None = None,
    params: np.ndarray | None = None,
) -> PosedGaussians:
    """One world Gaussian per valid texel.

    position = skin(anchor + offset); rotation = skin rotation composed
    with the decoded quaternion; scale = exp(log scale); opacity =
    sigmoid(logit); SH passes through.
    """
    p = texmap.params if params is None else np.asarray(params, dtype=np.float64)
    if p.shape != (texmap.num_texels, PARAMS_PER_TEXEL):
        raise ValueError("params must be (num_texels, 59)")
    corner_ids = canonical_mesh.triangles[texmap.triangles]
    base = np.einsum("mk,mkd->md", texmap.barys, canonical_mesh.vertices[corner_ids])
    mu_can = base + p[:, OFFSET_SLICE]

    if context is None:
        m = texmap.num_texels
        skin_r = np.broadcast_to(np.eye(3), (m, 3, 3))
        skin_t = np.zeros((m, 3))
        skin_q = np.tile([1.0, 0.0, 0.0, 0.0], (m, 1))
    else:
        skin_r, skin_t, skin_q = texel_skin_transforms(texmap, canonical_mesh, context)
    mu = np.einsum("mij,mj->mi", skin_r, mu_can) + skin_t

    raw_q = p[:, ROTATION_SLICE]
    norms = np.linalg.norm(raw_q, axis=1)
    if np.any(norms < 1e-12):
        raise ValueError("decoded rotation quaternion is zero")
    q_unit = raw_q / norms[:, None]
    q_world = quat_mul(skin_q, q_unit)
    q_world = q_world / np.linalg.norm(q_world, axis=1, keepdims=True)

    scales = np.exp(p[:, LOG_SCALE_SLICE])
    opacity = 1.0 / (1.0 + np.exp(-p[:, OPACITY_SLICE.start]))
    opacity = np.clip(opacity, OPACITY_EPS, 1.0 - OPACITY_EPS)
    gaussians = Gaussians(
        positions=mu, scales=scales, rotations=q_world, opacities=opacity, sh=p[:, SH_SLICE].copy()
    )
    return PosedGaussians(
        gaussians=gaussians, base=base, skin_r=np.asarray(skin_r), skin_q=skin_q, raw_q=raw_q, raw_q_norm=norms
    )


def _quat_left_matrix(q: np.ndarray) -> np.ndarray:
    """Matrix L(q) with L(q) @ p = q * p (Hamilton product), per row."""
    w, x, y, z = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    return np.stack(
        [
            np.stack([w, -x, -y, -z], axis=1),
            np.stack([x, w, -z, y], axis=1),
            np.stack([y, z, w, -x], axis=1),
            np.stack([z, -y, x, w], axis=1),
        ],
        axis=1,
    )


def pose_gaussians_backward(posed: PosedGaussians, grads: dict) -> np.ndarray:
    """Chain world-Gaussian gradients back to the raw texel parameters.

    `grads` comes from rasterize_backward. Returns (M, 59).
    """
    g = posed.gaussians
    m = len(g)
    out = np.zeros((m, PARAMS_PER_TEXEL))
    # position: mu = R_skin (base + d) + t
    out[:, OFFSET_SLICE] = np.einsum("mij,mi->mj", posed.skin_r, grads["positions"])
    # scales: s = exp(raw)
    out[:, LOG_SCALE_SLICE] = grads["scales"] * g.scales
    # rotation: q_world ~ normalize(L(q_skin) q_unit(raw)); grads["rotations"]
    # is already tangent to the unit sphere at q_world.
    lq = _quat_left_matrix(posed.skin_q)
    grad_onto_unit = np.einsum("mij,mi->mj", lq, grads["rotations"])
    qn = posed.raw_q / posed.raw_q_norm[:, None]
    grad_raw = (grad_onto_unit - qn * np.einsum("md,md->m", grad_onto_unit, qn)[:, None]) / posed.raw_q_norm[:, None]
    out[:, ROTATION_SLICE] = grad_raw
    # opacity: sigmoid
    out[:, OPACITY_SLICE.start] = grads["opacities"] * g.opacities * (1.0 - g.opacities)
    out[:, SH_SLICE] = grads["sh"]
    return out
