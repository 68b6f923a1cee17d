"""Skeletal motion refinement and facial expression tracking against
multi-view 2D landmarks and per-frame surface reconstructions.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from ..geometry.cameras import Camera, project_points, projection_jacobian
from ..geometry.losses import chamfer_bidirectional_grad, landmarks_from_barycentric, tv_loss, tv_loss_grad
from ..geometry.mesh import Mesh
from ..geometry.sampling import sample_surface_detailed
from ..head.model import Expression, HeadModel, evaluate_expression
from ..optim import Adam, FitReport
from ..skinning.character import CharacterRig, DeformationPredictor, ZeroPredictor, pose_character
from ..skinning.skeleton import PoseWindow
from .observations import ObservationFrame


@dataclass
class TrackConfig:
    alpha_chamfer: float = 1.5
    alpha_lmk2d: float = 100.0
    alpha_tv: float = 10000.0
    batch_size: int = 1200
    lr: float = 1e-4
    iterations: int = 1000
    max_view_angle_deg: float = 70.0
    eyelid_zeta: float = 0.75
    eyelid_omega: float = 0.25
    chamfer_samples: int = 512
    patience: int = 100
    tol: float = 1e-6
    warmup: int = 20
    lr_decay: float = 0.01  # final/initial learning-rate ratio
    fd_step: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        for name in ("alpha_chamfer", "alpha_lmk2d", "alpha_tv", "lr", "max_view_angle_deg"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if not 0.0 < self.eyelid_zeta <= 1.0:
            raise ValueError("eyelid_zeta must be in (0, 1]")


def select_face_cameras(head_orientation: np.ndarray, cameras: list[Camera], max_angle_deg: float = 70.0):
    """Cameras whose inverse viewing direction is strictly within the angle
    threshold of the head orientation. Empty selection warns, not errors."""
    d = np.asarray(head_orientation, dtype=np.float64)
    n = np.linalg.norm(d)
    if abs(n - 1.0) > 1e-6:
        raise ValueError("head orientation must be a unit vector")
    cos_limit = np.cos(np.radians(max_angle_deg))
    selected = []
    for cam in cameras:
        toward_camera = -cam.view_direction
        # Strict inequality with a tiny guard so the exact boundary rejects.
        if float(toward_camera @ d) > cos_limit + 1e-12:
            selected.append(cam)
    if not selected:
        warnings.warn("no camera faces the head within the angle threshold", stacklevel=2)
    return selected


def lmk2d_points_loss(points3d: np.ndarray, observed: np.ndarray, confidences: np.ndarray, camera: Camera):
    """Confidence-weighted reprojection loss on 3D landmark points.

    Returns (loss, dropped) where dropped counts landmarks behind the
    camera (their terms are skipped with a warning).
    loss = sqrt(sum_i conf_i * |project(p_i) - l_i|^2).
    """
    pix, _, valid = project_points(camera, np.asarray(points3d, dtype=np.float64))
    observed = np.asarray(observed, dtype=np.float64)
    conf = np.asarray(confidences, dtype=np.float64)
    dropped = int((~valid).sum())
    if dropped:
        warnings.warn(f"{dropped} landmarks behind camera dropped from the 2D loss", stacklevel=2)
    use = valid
    sq = ((pix[use] - observed[use]) ** 2).sum(axis=1)
    return float(np.sqrt((conf[use] * sq).sum())), dropped


def lmk2d_points_loss_grad(points3d: np.ndarray, observed: np.ndarray, confidences: np.ndarray, camera: Camera):
    """Analytic gradient of `lmk2d_points_loss` w.r.t. the 3D points."""
    points3d = np.asarray(points3d, dtype=np.float64)
    pix, _, valid = project_points(camera, points3d)
    observed = np.asarray(observed, dtype=np.float64)
    conf = np.asarray(confidences, dtype=np.float64)
    sq = ((pix - observed) ** 2).sum(axis=1)
    total = float((conf[valid] * sq[valid]).sum())
    loss = float(np.sqrt(total))
    grad = np.zeros_like(points3d)
    if loss > 1e-20:
        for i in np.where(valid)[0]:
            jac = projection_jacobian(camera, points3d[i])  # (2, 3)
            grad[i] = (conf[i] / loss) * (pix[i] - observed[i]) @ jac
    return loss, grad


def lmk2d_loss(mesh: Mesh, anchors, observed: np.ndarray, confidences: np.ndarray, camera: Camera) -> float:
    """Reprojection loss of barycentric-anchored mesh landmarks."""
    pts = landmarks_from_barycentric(mesh, anchors).points
    if len(pts) == 0:
        raise ValueError("no landmarks to project")
    loss, _ = lmk2d_points_loss(pts, observed, confidences, camera)
    return loss


def _frame_cameras(rig: CharacterRig, pose: np.ndarray, cameras: dict[str, Camera], cfg: TrackConfig):
    if rig.head_joint is None:
        return list(cameras.keys())
    orientation = rig.head_orientation(pose)
    ids = list(cameras.keys())
    selected = select_face_cameras(orientation, [cameras[i] for i in ids], cfg.max_view_angle_deg)
    sel_set = {id(c) for c in selected}
    return [i for i in ids if id(cameras[i]) in sel_set]


def _motion_frame_loss(
    rig: CharacterRig,
    pose: np.ndarray,
    window_frames: np.ndarray,
    predictor: DeformationPredictor,
    obs: ObservationFrame,
    cameras: dict[str, Camera],
    cam_ids: list[str],
    scan_tree,
    scan_points,
    cfg: TrackConfig,
    frame_seed: int,
) -> float:
    frames = window_frames.copy()
    frames[-1] = pose
    mesh = pose_character(rig, PoseWindow(frames), predictor)
    loss = 0.0
    if scan_tree is not None and cfg.alpha_chamfer > 0:
        pts, _, _ = sample_surface_detailed(mesh, cfg.chamfer_samples, seed=frame_seed)
        d, _ = scan_tree.query(pts)
        fwd = float((d * d).mean())
        d2, _ = cKDTree(pts).query(scan_points)
        bwd = float((d2 * d2).mean())
        loss += cfg.alpha_chamfer * (fwd + bwd)
    if cfg.alpha_lmk2d > 0:
        for cam_id in cam_ids:
            cam_obs = obs.cameras.get(cam_id)
            if cam_obs is None:
                continue
            anchors = rig.landmark_sets.get(cam_obs.convention)
            if anchors is None:
                continue
            pts3d = landmarks_from_barycentric(mesh, list(anchors)).points
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                term, _ = lmk2d_points_loss(pts3d, cam_obs.points, cam_obs.confidences, cameras[cam_id])
            loss += cfg.alpha_lmk2d * term
    return loss


def optimize_motion(
    rig: CharacterRig,
    initial_poses: np.ndarray,
    observations: list[ObservationFrame],
    cameras: dict[str, Camera],
    cfg: TrackConfig | None = None,
    predictor: DeformationPredictor | None = None,
    window: int = 2,
):
    """Refine a pose sequence against scans, 2D landmarks, and smoothness.

    Data terms are differentiated per frame by central differences over
    that frame's pose vector (the built-in predictors are locally
    window-insensitive); the smoothness term uses its analytic gradient.
    Returns (poses (T, D), FitReport).
    """
    cfg = cfg or TrackConfig()
    predictor = predictor or ZeroPredictor()
    poses = np.asarray(initial_poses, dtype=np.float64).copy()
    n_frames, d_body = poses.shape
    if len(observations) != n_frames:
        raise ValueError("one observation frame required per pose frame")
    if n_frames > cfg.batch_size:
        raise ValueError("sequence exceeds the configured batch size")

    trees = []
    scan_pts = []
    for t, obs in enumerate(observations):
        if obs.scan is None or len(obs.scan) == 0:
            warnings.warn(f"frame {t} has no scan; skipping its surface term", stacklevel=2)
            trees.append(None)
            scan_pts.append(None)
        else:
            trees.append(cKDTree(obs.scan.points))
            scan_pts.append(obs.scan.points)

    cam_ids_per_frame = [_frame_cameras(rig, poses[t], cameras, cfg) for t in range(n_frames)]

    def window_frames(t: int, seq: np.ndarray) -> np.ndarray:
        rows = [seq[max(0, t - window + 1 + k)] for k in range(window)]
        return np.stack(rows)

    def total_loss(seq: np.ndarray) -> float:
        data = 0.0
        for t in range(n_frames):
            data += _motion_frame_loss(
                rig, seq[t], window_frames(t, seq), predictor, observations[t], cameras,
                cam_ids_per_frame[t], trees[t], scan_pts[t], cfg, cfg.seed + 31 * t,
            )
        if n_frames >= 2 and cfg.alpha_tv > 0:
            data += cfg.alpha_tv * tv_loss(seq)
        return data

    opt = Adam(poses.size, cfg.lr)
    report = FitReport()
    best = poses.copy()
    since = 0
    for it in range(cfg.iterations):
        ramp = min(1.0, (it + 1) / max(cfg.warmup, 1))
        opt.lr = cfg.lr * ramp * cfg.lr_decay ** (it / max(cfg.iterations - 1, 1))
        loss = total_loss(poses)
        report.losses.append(loss)
        report.iterations += 1
        if loss < report.best_loss - cfg.tol:
            since = 0
        else:
            since += 1
        if loss < report.best_loss:
            report.best_loss = loss
            best = poses.copy()
        if since >= cfg.patience:
            report.converged = True
            break

        grad = np.zeros_like(poses)
        for t in range(n_frames):
            wf = window_frames(t, poses)
            for k in range(d_body):
                p_plus = poses[t].copy()
                p_minus = poses[t].copy()
                p_plus[k] += cfg.fd_step
                p_minus[k] -= cfg.fd_step
                lp = _motion_frame_loss(rig, p_plus, wf, predictor, observations[t], cameras,
                                        cam_ids_per_frame[t], trees[t], scan_pts[t], cfg, cfg.seed + 31 * t)
                lm = _motion_frame_loss(rig, p_minus, wf, predictor, observations[t], cameras,
                                        cam_ids_per_frame[t], trees[t], scan_pts[t], cfg, cfg.seed + 31 * t)
                grad[t, k] = (lp - lm) / (2.0 * cfg.fd_step)
        if n_frames >= 2 and cfg.alpha_tv > 0:
            _, tv_grad = tv_loss_grad(poses)
            grad += cfg.alpha_tv * tv_grad
        poses = poses + opt.step(grad.ravel()).reshape(poses.shape)
    if not report.converged:
        report.warnings.append("motion optimization hit the iteration cap")
    return best, report
