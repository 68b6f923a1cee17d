"""EWA projection of 3D Gaussians to screen-space 2D Gaussians.

The world covariance R S S^T R^T is mapped through the rigid world-to-
camera transform and the Jacobian of perspective projection at the mean,
then a low-pass floor is added to the screen covariance diagonal.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..geometry.cameras import Camera
from ..transforms import quat_to_matrix

COVARIANCE_FLOOR = 0.3  # px^2 low-pass floor on the screen covariance diagonal


@dataclass
class ProjectedGaussians:
    """Screen-space Gaussians plus cached intermediates for the backward pass."""

    means2d: np.ndarray  # (N, 2)
    cov2d: np.ndarray  # (N, 2, 2), floored
    depths: np.ndarray  # (N,)
    valid: np.ndarray  # (N,) in-front-of-camera mask
    cam_points: np.ndarray  # (N, 3)
    rot_world: np.ndarray  # (N, 3, 3) world rotation of each gaussian
    jac: np.ndarray  # (N, 2, 3)

    def __len__(self) -> int:
        return len(self.means2d)


def project_gaussian(positions, scales, rotations, camera: Camera) -> ProjectedGaussians:
    """Project all Gaussians; rows behind the camera are flagged, not thrown."""
    p = np.asarray(positions, dtype=np.float64)
    s = np.asarray(scales, dtype=np.float64)
    q = np.asarray(rotations, dtype=np.float64)
    n = len(p)
    pc = camera.to_camera(p)
    z = pc[:, 2]
    valid = z > camera.near
    zs = np.where(valid, z, 1.0)

    u = camera.fx * pc[:, 0] / zs + camera.cx
    v = camera.fy * pc[:, 1] / zs + camera.cy
    means2d = np.stack([u, v], axis=1)

    rq = quat_to_matrix(q)  # (N, 3, 3)
    m = np.einsum("ij,njk->nik", camera.rotation, rq)  # camera-frame rotation
    a = m * s[:, None, :]  # M @ diag(s)
    cov_cam = np.einsum("nij,nkj->nik", a, a)

    jac = np.zeros((n, 2, 3))
    jac[:, 0, 0] = camera.fx / zs
    jac[:, 0, 2] = -camera.fx * pc[:, 0] / (zs * zs)
    jac[:, 1, 1] = camera.fy / zs
    jac[:, 1, 2] = -camera.fy * pc[:, 1] / (zs * zs)

    cov2d = np.einsum("nij,njk,nlk->nil", jac, cov_cam, jac)
    cov2d[:, 0, 0] += COVARIANCE_FLOOR
    cov2d[:, 1, 1] += COVARIANCE_FLOOR
    return ProjectedGaussians(
        means2d=means2d, cov2d=cov2d, depths=z, valid=valid, cam_points=pc, rot_world=rq, jac=jac
    )


def quat_rotation_jacobian(q: np.ndarray) -> np.ndarray:
    """d(rotation matrix)/d(unit quaternion): (N, 4, 3, 3), wxyz order."""
    q = np.asarray(q, dtype=np.float64)
    w, x, y, z = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    n = len(q)
    out = np.zeros((n, 4, 3, 3))
    zero = np.zeros(n)
    out[:, 0] = 2.0 * np.stack(
        [zero, -z, y, z, zero, -x, -y, x, zero], axis=1
    ).reshape(n, 3, 3)
    out[:, 1] = 2.0 * np.stack(
        [zero, y, z, y, -2 * x, -w, z, w, -2 * x], axis=1
    ).reshape(n, 3, 3)
    out[:, 2] = 2.0 * np.stack(
        [-2 * y, x, w, x, zero, z, -w, z, -2 * y], axis=1
    ).reshape(n, 3, 3)
    out[:, 3] = 2.0 * np.stack(
        [-2 * z, -w, x, w, -2 * z, y, x, y, zero], axis=1
    ).reshape(n, 3, 3)
    return out


def project_gaussian_backward(
    proj: ProjectedGaussians,
    scales: np.ndarray,
    rotations: np.ndarray,
    camera: Camera,
    grad_means2d: np.ndarray,
    grad_cov2d: np.ndarray,
):
    """Chain screen-space gradients back to world parameters.

    Returns (grad_positions (N, 3), grad_scales (N, 3),
    grad_rotations (N, 4) w.r.t. the unit quaternion).
    """
    s = np.asarray(scales, dtype=np.float64)
    q = np.asarray(rotations, dtype=np.float64)
    pc = proj.cam_points
    z = np.where(proj.valid, pc[:, 2], 1.0)
    x, y = pc[:, 0], pc[:, 1]
    jac = proj.jac
    m = np.einsum("ij,njk->nik", camera.rotation, proj.rot_world)
    a = m * s[:, None, :]
    cov_cam = np.einsum("nij,nkj->nik", a, a)

    g2 = 0.5 * (grad_cov2d + np.swapaxes(grad_cov2d, 1, 2))
    g2 = np.where(proj.valid[:, None, None], g2, 0.0)
    gm2 = np.where(proj.valid[:, None], grad_means2d, 0.0)

    # Through cov2d = J C J^T.
    grad_cov_cam = np.einsum("nji,njk,nkl->nil", jac, g2, jac)
    grad_jac = 2.0 * np.einsum("nij,njk,nkl->nil", g2, jac, cov_cam)

    # Through the Jacobian's dependence on the camera-space point.
    fx, fy = camera.fx, camera.fy
    z2, z3 = z * z, z * z * z
    grad_pc = np.zeros_like(pc)
    grad_pc[:, 0] += grad_jac[:, 0, 2] * (-fx / z2)
    grad_pc[:, 1] += grad_jac[:, 1, 2] * (-fy / z2)
    grad_pc[:, 2] += (
        grad_jac[:, 0, 0] * (-fx / z2)
        + grad_jac[:, 0, 2] * (2.0 * fx * x / z3)
        + grad_jac[:, 1, 1] * (-fy / z2)
        + grad_jac[:, 1, 2] * (2.0 * fy * y / z3)
    )

    # Through the projected mean.
    grad_pc[:, 0] += gm2[:, 0] * fx / z
    grad_pc[:, 1] += gm2[:, 1] * fy / z
    grad_pc[:, 2] += -(gm2[:, 0] * fx * x + gm2[:, 1] * fy * y) / z2
    grad_pc = np.where(proj.valid[:, None], grad_pc, 0.0)
    grad_positions = grad_pc @ camera.rotation

    # Through cov_cam = A A^T with A = R_wc R(q) diag(s).
    grad_a = 2.0 * np.einsum("nij,njk->nik", 0.5 * (grad_cov_cam + np.swapaxes(grad_cov_cam, 1, 2)), a)
    grad_m = grad_a * s[:, None, :]
    grad_scales = np.einsum("nij,nij->nj", m, grad_a)
    grad_rq = np.einsum("ij,nik->njk", camera.rotation, grad_m)
    qn = q / np.linalg.norm(q, axis=1, keepdims=True)
    dr_dq = quat_rotation_jacobian(qn)
    grad_q = np.einsum("nqij,nij->nq", dr_dq, grad_rq)
    # Project onto the unit-sphere tangent: the render path renormalizes, so
    # components along q do not change the rotation.
    grad_q = grad_q - np.einsum("nq,nq->n", grad_q, qn)[:, None] * qn
    return grad_positions, grad_scales, grad_q
