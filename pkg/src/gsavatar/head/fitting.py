"""Three-stage head personalization: rigid alignment from landmarks,
freeze-and-refine shape fitting, then region-weighted displacement fitting.

All stages run Adam on analytic gradients. The surface term is a one-sided
Chamfer from points sampled on the model surface to a fixed point set
sampled from the target scan, so fitting never pulls the model toward scan
regions it cannot represent.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from ..geometry.losses import landmarks_from_barycentric, lmk3d_loss_grad
from ..geometry.mesh import Mesh, PointSet
from ..geometry.sampling import sample_surface, sample_surface_detailed
from ..optim import Adam, FitReport
from ..transforms import rotvec_jacobian, rotvec_to_matrix
from .model import NUM_LANDMARKS, HeadModel


@dataclass
class FitConfig:
    lr_rigid: float = 0.02
    lr_shape: float = 0.01
    lr_displacement: float = 0.00002
    iters_rigid: int = 3000
    iters_shape: int = 1000  # per refine step (3 steps)
    iters_displacement: int = 1000
    patience: int = 100
    tol: float = 1e-6
    alpha_chamfer_shape: float = 1000.0
    alpha_chamfer_displacement: float = 100.0
    alpha_lmk3d: float = 0.1
    alpha_reg: float = 0.000005
    chamfer_samples: int = 2000
    scan_samples: int = 4000
    lr_decay: float = 0.01  # final/initial learning-rate ratio (rigid + shape stages)
    lr_decay_displacement: float = 1.0  # displacement stage keeps its travel budget
    warmup: int = 60  # linear learning-rate ramp, damps Adam's first steps
    seed: int = 0

    def __post_init__(self):
        if min(self.iters_rigid, self.iters_shape, self.iters_displacement) < 1:
            raise ValueError("iteration caps must be >= 1")
        for name in ("alpha_chamfer_shape", "alpha_chamfer_displacement", "alpha_lmk3d", "alpha_reg"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


@dataclass
class RefineSchedule:
    """Ordered vertex masks for freeze-and-refine shape fitting.

    Step k samples the surface of masks[k] only; vertices of earlier masks
    have their gradient contributions scaled by freeze_strength.
    """

    masks: list[np.ndarray]
    freeze_strength: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.freeze_strength <= 1.0:
            raise ValueError("freeze_strength must be in [0, 1]")
        if len(self.masks) == 0:
            raise ValueError("schedule needs at least one mask")
        self.masks = [np.asarray(m, dtype=np.int64) for m in self.masks]
        for m in self.masks:
            if len(m) == 0:
                raise ValueError("empty mask")


def _lr_at(lr0: float, it: int, total: int, decay: float, warmup: int) -> float:
    ramp = min(1.0, (it + 1) / max(warmup, 1))
    return lr0 * ramp * decay ** (it / max(total - 1, 1))


def default_schedule(model: HeadModel, freeze_strength: float = 0.0) -> RefineSchedule:
    masks = model.template.region_masks
    for name in ("face", "mid", "full"):
        if name not in masks:
            raise ValueError("model template lacks the nested face/mid/full region masks")
    return RefineSchedule([masks["face"], masks["mid"], masks["full"]], freeze_strength)


def _neutral_positions(model: HeadModel, beta: np.ndarray, displacements: np.ndarray) -> np.ndarray:
    return model.template.vertices + model.shape_basis @ beta + displacements


def _model_landmark_points(model: HeadModel, verts: np.ndarray):
    """Landmark positions plus their (triangle corner, bary) structure."""
    pts = np.empty((len(model.landmark_embedding), 3))
    corners = np.empty((len(model.landmark_embedding), 3), dtype=np.int64)
    barys = np.empty((len(model.landmark_embedding), 3))
    for i, a in enumerate(model.landmark_embedding):
        tri = model.template.triangles[a.triangle]
        corners[i] = tri
        barys[i] = a.bary
        pts[i] = a.bary @ verts[tri]
    return pts, corners, barys


def fit_rigid(model: HeadModel, target_landmarks: PointSet, cfg: FitConfig | None = None):
    """Stage 1: global translation/rotation from 3D landmarks.

    Returns ((translation, rotation), FitReport). Reports a warning (not an
    error) when the iteration cap is hit before convergence.
    """
    cfg = cfg or FitConfig()
    if len(model.landmark_embedding) != NUM_LANDMARKS:
        raise ValueError(f"model must embed {NUM_LANDMARKS} landmarks")
    if len(target_landmarks) != NUM_LANDMARKS:
        raise ValueError(f"expected {NUM_LANDMARKS} target landmarks, got {len(target_landmarks)}")
    base = _neutral_positions(model, np.zeros(model.k_shape), model.displacements)
    lmk0, _, _ = _model_landmark_points(model, base)
    target = target_landmarks.points

    x = np.zeros(6)  # [translation, rotvec]
    opt = Adam(6, cfg.lr_rigid)
    report = FitReport()
    best = x.copy()
    since = 0
    for it in range(cfg.iters_rigid):
        opt.lr = _lr_at(cfg.lr_rigid, it, cfg.iters_rigid, cfg.lr_decay, cfg.warmup)
        t, r = x[:3], x[3:]
        rm = rotvec_to_matrix(r)
        pred = lmk0 @ rm.T + t
        loss, _ = lmk3d_loss_grad(pred, target)
        # Descend on the squared form: same minimizer, smooth at zero.
        grad_pts = 2.0 * (pred - target)
        report.losses.append(loss)
        report.iterations += 1
        if loss < report.best_loss - cfg.tol:
            since = 0
        else:
            since += 1
        if loss < report.best_loss:
            report.best_loss = loss
            best = x.copy()
        if since >= cfg.patience:
            report.converged = True
            break
        jac = rotvec_jacobian(r)  # (3, 3, 3)
        grad = np.empty(6)
        grad[:3] = grad_pts.sum(axis=0)
        grad[3:] = np.einsum("nd,kdj,nj->k", grad_pts, jac, lmk0)
        x = x + opt.step(grad)
    if not report.converged:
        report.warnings.append("rigid alignment hit the iteration cap")
        warnings.warn("rigid alignment hit the iteration cap", stacklevel=2)
    return (best[:3], best[3:]), report


def _scan_points(scan: Mesh | PointSet, cfg: FitConfig) -> np.ndarray:
    if isinstance(scan, PointSet):
        return scan.points
    return sample_surface(scan, cfg.scan_samples, seed=cfg.seed ^ 0x5CA9).points


def _chamfer_vertex_grad(
    verts: np.ndarray,
    mesh: Mesh,
    active_triangles: np.ndarray,
    scan_tree: cKDTree,
    n_samples: int,
    rng_seed: int,
):
    """One-sided Chamfer (model samples -> scan) and its per-vertex gradient."""
    base = mesh.with_vertices(verts)
    pts, tri_ids, barys = sample_surface_detailed(base, n_samples, seed=rng_seed, triangles=active_triangles)
    d, idx = scan_tree.query(pts, k=1)
    diff = pts - scan_tree.data[idx]
    loss = float((d * d).mean())
    grad_pts = (2.0 / len(pts)) * diff
    grad_v = np.zeros_like(verts)
    corners = mesh.triangles[tri_ids]
    for k in range(3):
        np.add.at(grad_v, corners[:, k], barys[:, k : k + 1] * grad_pts)
    return loss, grad_v


def fit_shape(
    model: HeadModel,
    scan: Mesh | PointSet,
    target_landmarks: PointSet,
    schedule: RefineSchedule,
    cfg: FitConfig | None = None,
    init_translation: np.ndarray | None = None,
    init_rotation: np.ndarray | None = None,
):
    """Stage 2: freeze-and-refine fitting of (beta, translation, rotation).

    Returns ((beta, translation, rotation), [FitReport per refine step]).
    """
    cfg = cfg or FitConfig()
    scan_pts = _scan_points(scan, cfg)
    tree = cKDTree(scan_pts)
    target = target_landmarks.points

    kb = model.k_shape
    x = np.zeros(kb + 6)
    if init_translation is not None:
        x[kb : kb + 3] = init_translation
    if init_rotation is not None:
        x[kb + 3 :] = init_rotation

    tris = model.template.triangles
    n = model.num_vertices
    reports = []
    frozen: np.ndarray = np.zeros(0, dtype=np.int64)
    for step, mask in enumerate(schedule.masks):
        in_mask = np.zeros(n, dtype=bool)
        in_mask[mask] = True
        active_tris = np.where(in_mask[tris].all(axis=1))[0]
        if len(active_tris) == 0:
            raise ValueError(f"refine step {step} has no fully interior triangles")
        scale = np.ones(n)
        scale[frozen] = schedule.freeze_strength

        opt = Adam(x.size, cfg.lr_shape)
        report = FitReport()
        best = x.copy()
        since = 0
        for it in range(cfg.iters_shape):
            opt.lr = _lr_at(cfg.lr_shape, it, cfg.iters_shape, cfg.lr_decay, cfg.warmup)
            beta, t, r = x[:kb], x[kb : kb + 3], x[kb + 3 :]
            rm = rotvec_to_matrix(r)
            local = _neutral_positions(model, beta, model.displacements)
            verts = local @ rm.T + t

            c_loss, grad_v = _chamfer_vertex_grad(
                verts, model.template, active_tris, tree, cfg.chamfer_samples, cfg.seed + 7919 * it
            )
            lmk_pts, lmk_corners, lmk_barys = _model_landmark_points(model, verts)
            l_loss, grad_lmk = lmk3d_loss_grad(lmk_pts, target)
            # Freezing applies to the surface term; the landmark term stays
            # active as coarse alignment regularization in every step.
            grad_v = cfg.alpha_chamfer_shape * grad_v * scale[:, None]
            for k in range(3):
                np.add.at(grad_v, lmk_corners[:, k], cfg.alpha_lmk3d * lmk_barys[:, k : k + 1] * grad_lmk)

            loss = cfg.alpha_chamfer_shape * c_loss + cfg.alpha_lmk3d * l_loss + cfg.alpha_reg * float(beta @ beta)
            report.losses.append(loss)
            report.iterations += 1
            if loss < report.best_loss - cfg.tol:
                since = 0
            else:
                since += 1
            if loss < report.best_loss:
                report.best_loss = loss
                best = x.copy()
            if since >= cfg.patience:
                report.converged = True
                break

            grad = np.empty_like(x)
            grad_local = grad_v @ rm  # dL/d(local positions)
            grad[:kb] = np.einsum("vd,vdk->k", grad_local, model.shape_basis) + 2.0 * cfg.alpha_reg * beta
            grad[kb : kb + 3] = grad_v.sum(axis=0)
            jac = rotvec_jacobian(r)
            grad[kb + 3 :] = np.einsum("vd,kdj,vj->k", grad_v, jac, local)
            x = x + opt.step(grad)
        if not report.converged:
            report.warnings.append(f"refine step {step} hit the iteration cap")
        reports.append(report)
        x = best.copy()
        frozen = np.union1d(frozen, mask)
    return (x[:kb], x[kb : kb + 3], x[kb + 3 :]), reports


def fit_displacements(model: HeadModel, scan: Mesh | PointSet, cfg: FitConfig | None = None):
    """Stage 3: per-vertex displacements under region-weighted gradients.

    The model must be personalized (beta/translation/rotation frozen).
    Returns (displacements (N, 3), FitReport). Vertices whose region weight
    is zero are provably unchanged.
    """
    cfg = cfg or FitConfig()
    pers = model.personalization
    if pers is None:
        raise ValueError("model must be personalized before displacement fitting")
    weights = model.template.region_weights
    if weights is None:
        warnings.warn("no region weights on the template; using uniform weights", stacklevel=2)
        weights = np.ones(model.num_vertices)

    scan_pts = _scan_points(scan, cfg)
    tree = cKDTree(scan_pts)
    rm = rotvec_to_matrix(pers.rotation)
    t = pers.translation
    all_tris = np.arange(model.template.num_triangles)

    d = np.asarray(pers.displacements, dtype=np.float64).copy()
    opt = Adam(d.size, cfg.lr_displacement)
    report = FitReport()
    best = d.copy()
    since = 0
    for it in range(cfg.iters_displacement):
        opt.lr = _lr_at(cfg.lr_displacement, it, cfg.iters_displacement, cfg.lr_decay_displacement, cfg.warmup)
        local = _neutral_positions(model, pers.beta, d)
        verts = local @ rm.T + t
        c_loss, grad_v = _chamfer_vertex_grad(
            verts, model.template, all_tris, tree, cfg.chamfer_samples, cfg.seed + 104729 * it
        )
        loss = cfg.alpha_chamfer_displacement * c_loss
        report.losses.append(loss)
        report.iterations += 1
        if loss < report.best_loss - cfg.tol:
            since = 0
        else:
            since += 1
        if loss < report.best_loss:
            report.best_loss = loss
            best = d.copy()
        if since >= cfg.patience:
            report.converged = True
            break
        grad = cfg.alpha_chamfer_displacement * weights[:, None] * (grad_v @ rm)
        d = d + opt.step(grad.ravel()).reshape(d.shape)
    if not report.converged:
        report.warnings.append("displacement fitting hit the iteration cap")
    return best, report


def chamfer_to_scan(model: HeadModel, verts: np.ndarray, scan: Mesh | PointSet, cfg: FitConfig, seed: int = 1):
    """Evaluation helper: one-sided Chamfer from the given model surface to
    the scan's sample points."""
    scan_pts = _scan_points(scan, cfg)
    tree = cKDTree(scan_pts)
    mesh = model.template.with_vertices(verts)
    pts = sample_surface(mesh, cfg.chamfer_samples, seed=seed).points
    dd, _ = tree.query(pts, k=1)
    return float((dd * dd).mean())


def fit_head_pipeline(
    model: HeadModel,
    scan: Mesh | PointSet,
    target_landmarks: PointSet,
    schedule: RefineSchedule | None = None,
    cfg: FitConfig | None = None,
):
    """Run all three stages and return (personalized model, stage summary).

    The summary maps stage names to dicts with the loss curve and the
    Chamfer-to-scan value after the stage (comparable across stages).
    """
    cfg = cfg or FitConfig()
    schedule = schedule or default_schedule(model)
    summary: dict[str, dict] = {}

    (t0, r0), rigid_report = fit_rigid(model, target_landmarks, cfg)
    base = _neutral_positions(model, np.zeros(model.k_shape), model.displacements)
    rigid_verts = base @ rotvec_to_matrix(r0).T + t0
    summary["rigid"] = {
        "losses": rigid_report.losses,
        "chamfer": chamfer_to_scan(model, rigid_verts, scan, cfg),
        "converged": rigid_report.converged,
    }

    (beta, t1, r1), shape_reports = fit_shape(
        model, scan, target_landmarks, schedule, cfg, init_translation=t0, init_rotation=r0
    )
    shape_verts = _neutral_positions(model, beta, model.displacements) @ rotvec_to_matrix(r1).T + t1
    summary["shape"] = {
        "losses": [loss for rep in shape_reports for loss in rep.losses],
        "chamfer": chamfer_to_scan(model, shape_verts, scan, cfg),
        "converged": all(r.converged for r in shape_reports),
    }

    personalized = model.personalize(beta, t1, r1, np.zeros((model.num_vertices, 3)))
    disp, disp_report = fit_displacements(personalized, scan, cfg)
    final = personalized.personalize(beta, t1, r1, disp)
    final_verts = _neutral_positions(final, beta, disp) @ rotvec_to_matrix(r1).T + t1
    summary["displacement"] = {
        "losses": disp_report.losses,
        "chamfer": chamfer_to_scan(final, final_verts, scan, cfg),
        "converged": disp_report.converged,
    }
    return final, summary
