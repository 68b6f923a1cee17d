"""Per-frame facial expression tracking from multi-view 2D landmarks.

The skeletal poses stay frozen by default: each frame's head placement is
the body's head-bone transform, and only (jaw, expression coefficients,
eyelids) are optimized. Gradients are analytic for the linear blendshape
coefficients and central-difference for the jaw rotation (which enters
through skinning); an optional joint mode also descends on the poses.
"""

from __future__ import annotations

import warnings

import numpy as np

from ..geometry.cameras import Camera
from ..geometry.losses import tv_loss, tv_loss_grad
from ..head.model import Expression, HeadModel, _bone_transforms
from ..optim import Adam, FitReport
from ..skinning.character import CharacterRig
from ..skinning.dqs import blended_vertex_transforms
from ..transforms import rotvec_to_matrix
from .motion import TrackConfig, lmk2d_points_loss_grad, select_face_cameras


def _head_world_rigid(model: HeadModel, rig: CharacterRig | None, pose: np.ndarray | None):
    """Composite rigid transform applied after head skinning for one frame."""
    pers = model.personalization
    r_p = rotvec_to_matrix(pers.rotation)
    t_p = pers.translation
    if rig is None or pose is None:
        return r_p, t_p
    rots, trans = rig.skeleton.forward_kinematics(pose)
    rest_r, rest_t = rig.skeleton.rest_transforms()
    i = rig.skeleton.index[rig.head_joint]
    rel_r = rots[i] @ rest_r[i].T
    rel_t = trans[i] - rel_r @ rest_t[i]
    return rel_r @ r_p, rel_r @ t_p + rel_t


def _embedding_for(model: HeadModel, convention: str):
    if convention == "fan51":
        return model.landmark_embedding
    if convention == "dense105":
        return model.dense_embedding
    return ()


def _anchor_structure(model: HeadModel, anchors):
    corners = np.stack([model.template.triangles[a.triangle] for a in anchors])
    barys = np.stack([a.bary for a in anchors])
    return corners, barys


class _FrameContext:
    """Per-frame cached observation data for expression tracking."""

    def __init__(self, model, obs, cameras, cam_ids):
        self.terms = []
        for cam_id in cam_ids:
            cam_obs = obs.cameras.get(cam_id)
            if cam_obs is None:
                continue
            anchors = _embedding_for(model, cam_obs.convention)
            if not anchors:
                warnings.warn(f"model lacks an embedding for {cam_obs.convention}; skipped", stacklevel=2)
                continue
            corners, barys = _anchor_structure(model, list(anchors))
            self.terms.append((cameras[cam_id], cam_obs, corners, barys))


def _frame_loss_and_vertex_grad(model, ctx: _FrameContext, verts: np.ndarray, cfg: TrackConfig, with_grad=True):
    loss = 0.0
    grad_v = np.zeros_like(verts) if with_grad else None
    for camera, cam_obs, corners, barys in ctx.terms:
        pts = np.einsum("lk,lkd->ld", barys, verts[corners])
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            term, grad_pts = lmk2d_points_loss_grad(pts, cam_obs.points, cam_obs.confidences, camera)
        loss += cfg.alpha_lmk2d * term
        if with_grad:
            for k in range(3):
                np.add.at(grad_v, corners[:, k], cfg.alpha_lmk2d * barys[:, k : k + 1] * grad_pts)
    return loss, grad_v


def _skin_affine(model: HeadModel, jaw: np.ndarray):
    """Per-vertex affine (M_v, c_v) of the head's joint skinning at a jaw."""
    if np.any(jaw):
        rots, trans = _bone_transforms(model, np.zeros(3), jaw, np.zeros(6))
        return blended_vertex_transforms(model.skin_weights, rots, trans)[:2]
    n = model.num_vertices
    return np.broadcast_to(np.eye(3), (n, 3, 3)), np.zeros((n, 3))


def _expression_vertices(model, m_v, c_v, r_c, t_c, gamma, eyelids):
    pers = model.personalization
    local = (
        model.template.vertices
        + model.shape_basis @ pers.beta
        + pers.displacements
        + model.expr_basis @ gamma
        + model.eyelid_basis @ eyelids
    )
    skinned = np.einsum("nij,nj->ni", m_v, local) + c_v
    return skinned @ r_c.T + t_c


def track_expressions(
    model: HeadModel,
    observations: list,
    cameras: dict[str, Camera],
    cfg: TrackConfig | None = None,
    rig: CharacterRig | None = None,
    poses: np.ndarray | None = None,
    initial: list[Expression] | None = None,
    joint_mode: bool = False,
):
    """Track (jaw, gamma, eyelids) per frame from 2D landmarks plus temporal
    smoothing. Returns (expressions, FitReport[, refined poses]).

    With joint_mode the per-frame pose vectors are refined alongside the
    expressions (central differences); by default they stay frozen.
    """
    cfg = cfg or TrackConfig()
    if model.personalization is None:
        raise ValueError("model must be personalized")
    n_frames = len(observations)
    kg = model.k_expression
    d_face = 3 + kg + 2

    if poses is not None:
        poses = np.asarray(poses, dtype=np.float64).copy()
        if len(poses) != n_frames:
            raise ValueError("one pose per observation frame required")

    psi = np.zeros((n_frames, d_face))
    if initial is not None:
        psi = np.stack([e.as_vector() for e in initial])

    # Camera selection per frame from the head orientation when a rig is given.
    contexts = []
    for t, obs in enumerate(observations):
        ids = list(obs.cameras.keys())
        if rig is not None and poses is not None and rig.head_joint is not None:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                selected = select_face_cameras(
                    rig.head_orientation(poses[t]), [cameras[i] for i in ids], cfg.max_view_angle_deg
                )
            sel = {id(c) for c in selected}
            ids = [i for i in ids if id(cameras[i]) in sel]
        contexts.append(_FrameContext(model, obs, cameras, ids))

    def frame_loss(t: int, vec: np.ndarray, pose: np.ndarray | None) -> float:
        e = Expression.from_vector(vec, kg)
        r_c, t_c = _head_world_rigid(model, rig, pose)
        m_v, c_v = _skin_affine(model, e.jaw)
        verts = _expression_vertices(model, m_v, c_v, r_c, t_c, e.gamma, e.eyelids)
        loss, _ = _frame_loss_and_vertex_grad(model, contexts[t], verts, cfg, with_grad=False)
        return loss

    params = psi.copy()
    pose_params = poses.copy() if (joint_mode and poses is not None) else None
    size = params.size + (pose_params.size if pose_params is not None else 0)
    opt = Adam(size, cfg.lr)
    report = FitReport()
    best = (params.copy(), None if pose_params is None else pose_params.copy())
    since = 0
    for it in range(cfg.iterations):
        ramp = min(1.0, (it + 1) / max(cfg.warmup, 1))
        opt.lr = cfg.lr * ramp * cfg.lr_decay ** (it / max(cfg.iterations - 1, 1))
        total = 0.0
        grad_psi = np.zeros_like(params)
        grad_pose = None if pose_params is None else np.zeros_like(pose_params)
        for t in range(n_frames):
            vec = params[t]
            e = Expression.from_vector(vec, kg)
            pose_t = None
            if poses is not None:
                pose_t = pose_params[t] if pose_params is not None else poses[t]
            r_c, t_c = _head_world_rigid(model, rig, pose_t)
            m_v, c_v = _skin_affine(model, e.jaw)
            verts = _expression_vertices(model, m_v, c_v, r_c, t_c, e.gamma, e.eyelids)
            loss, grad_v = _frame_loss_and_vertex_grad(model, contexts[t], verts, cfg)
            total += loss
            # Analytic gradient for the linear coefficients.
            world_m = np.einsum("ij,njk->nik", r_c, m_v)
            grad_local = np.einsum("nd,ndj->nj", grad_v, world_m)
            grad_psi[t, 3 : 3 + kg] = np.einsum("nd,ndk->k", grad_local, model.expr_basis)
            grad_psi[t, 3 + kg :] = np.einsum("nd,ndk->k", grad_local, model.eyelid_basis)
            # Jaw enters through skinning: central differences.
            for k in range(3):
                vp, vm = vec.copy(), vec.copy()
                vp[k] += cfg.fd_step
                vm[k] -= cfg.fd_step
                grad_psi[t, k] = (frame_loss(t, vp, pose_t) - frame_loss(t, vm, pose_t)) / (2 * cfg.fd_step)
            if pose_params is not None:
                for k in range(pose_params.shape[1]):
                    pp, pm = pose_params[t].copy(), pose_params[t].copy()
                    pp[k] += cfg.fd_step
                    pm[k] -= cfg.fd_step
                    grad_pose[t, k] = (frame_loss(t, vec, pp) - frame_loss(t, vec, pm)) / (2 * cfg.fd_step)
        if n_frames >= 2 and cfg.alpha_tv > 0:
            tv, tv_grad = tv_loss_grad(params)
            total += cfg.alpha_tv * tv
            grad_psi += cfg.alpha_tv * tv_grad

        report.losses.append(total)
        report.iterations += 1
        if total < report.best_loss - cfg.tol:
            since = 0
        else:
            since += 1
        if total < report.best_loss:
            report.best_loss = total
            best = (params.copy(), None if pose_params is None else pose_params.copy())
        if since >= cfg.patience:
            report.converged = True
            break
        flat = grad_psi.ravel() if grad_pose is None else np.concatenate([grad_psi.ravel(), grad_pose.ravel()])
        step = opt.step(flat)
        params = params + step[: params.size].reshape(params.shape)
        if pose_params is not None:
            pose_params = pose_params + step[params.size :].reshape(pose_params.shape)
    if not report.converged:
        report.warnings.append("expression tracking hit the iteration cap")

    best_psi, best_poses = best
    expressions = [Expression.from_vector(v, kg) for v in best_psi]
    if joint_mode and poses is not None:
        return expressions, report, best_poses
    return expressions, report
