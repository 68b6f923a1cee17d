"""Rotation and rigid-transform helpers shared across the package.

Quaternions are stored as (w, x, y, z). Axis-angle vectors ("rotvecs")
follow the scipy convention: direction = axis, norm = angle in radians.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial.transform import Rotation

_EPS = 1e-12


def _writable(a: np.ndarray) -> np.ndarray:
    # scipy's Rotation rejects read-only buffers.
    return a if a.flags.writeable else a.copy()


def rotvec_to_matrix(r: np.ndarray) -> np.ndarray:
    """Convert axis-angle vector(s) (..., 3) to rotation matrices (..., 3, 3)."""
    r = np.asarray(r, dtype=np.float64)
    single = r.ndim == 1
    mats = Rotation.from_rotvec(_writable(r.reshape(-1, 3))).as_matrix()
    return mats[0] if single else mats.reshape(r.shape[:-1] + (3, 3))


def matrix_to_rotvec(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    single = m.ndim == 2
    r = Rotation.from_matrix(_writable(m.reshape(-1, 3, 3))).as_rotvec()
    return r[0] if single else r.reshape(m.shape[:-2] + (3,))


def _skew(v: np.ndarray) -> np.ndarray:
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def rotvec_jacobian(r: np.ndarray) -> np.ndarray:
    """Derivative of R(r) w.r.t. the axis-angle vector.

    Returns J with shape (3, 3, 3) where J[k] = dR/dr_k. Uses the closed
    form dR/dr_k = (r_k [r]_x + [r x (I - R) e_k]_x) / |r|^2 * R, falling
    back to [e_k]_x at the origin.
    """
    r = np.asarray(r, dtype=np.float64)
    n2 = float(r @ r)
    if n2 < 1e-16:
        return np.stack([_skew(e) for e in np.eye(3)])
    R = rotvec_to_matrix(r)
    I = np.eye(3)
    out = np.empty((3, 3, 3))
    for k in range(3):
        v = np.cross(r, (I - R) @ I[k])
        out[k] = ((r[k] * _skew(r) + _skew(v)) / n2) @ R
    return out


def quat_from_matrix(m: np.ndarray) -> np.ndarray:
    """Rotation matrix (..., 3, 3) -> unit quaternion(s) (..., 4) in wxyz order."""
    m = np.asarray(m, dtype=np.float64)
    single = m.ndim == 2
    q = Rotation.from_matrix(_writable(m.reshape(-1, 3, 3))).as_quat()  # xyzw
    q = np.concatenate([q[:, 3:4], q[:, :3]], axis=1)
    return q[0] if single else q.reshape(m.shape[:-2] + (4,))


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    single = q.ndim == 1
    q2 = q.reshape(-1, 4)
    xyzw = np.concatenate([q2[:, 1:4], q2[:, 0:1]], axis=1)
    m = Rotation.from_quat(_writable(xyzw)).as_matrix()
    return m[0] if single else m.reshape(q.shape[:-1] + (3, 3))


def quat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Hamilton product of wxyz quaternions; broadcasts over leading dims."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    aw, ax, ay, az = np.moveaxis(a, -1, 0)
    bw, bx, by, bz = np.moveaxis(b, -1, 0)
    return np.stack(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ],
        axis=-1,
    )


def quat_conj(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    out = q.copy()
    out[..., 1:] *= -1.0
    return out


def quat_normalize(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    n = np.linalg.norm(q, axis=-1, keepdims=True)
    if np.any(n < _EPS):
        raise ValueError("cannot normalize zero quaternion")
    return q / n


def quat_rotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate vector(s) v (..., 3) by unit quaternion(s) q (..., 4)."""
    v = np.asarray(v, dtype=np.float64)
    pad = np.zeros(v.shape[:-1] + (1,))
    vq = np.concatenate([pad, v], axis=-1)
    return quat_mul(quat_mul(q, vq), quat_conj(q))[..., 1:]


def rigid_compose(ra: np.ndarray, ta: np.ndarray, rb: np.ndarray, tb: np.ndarray):
    """Compose two rigid transforms (Ra, ta) o (Rb, tb): first b, then a."""
    return ra @ rb, ra @ tb + ta


def rigid_inverse(r: np.ndarray, t: np.ndarray):
    rt = r.T
    return rt, -rt @ t


def assert_rotation(m: np.ndarray, tol: float = 1e-6, what: str = "rotation") -> None:
    m = np.asarray(m, dtype=np.float64)
    err = np.abs(m @ np.swapaxes(m, -1, -2) - np.eye(3)).max()
    if err > tol or np.any(np.linalg.det(m) < 0):
        raise ValueError(f"{what} is not orthonormal (max deviation {err:.3g})")
