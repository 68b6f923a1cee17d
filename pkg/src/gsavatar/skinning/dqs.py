"""Dual quaternion skinning (rigid-transform blending)."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..transforms import assert_rotation, quat_from_matrix, quat_mul, quat_to_matrix


@dataclass(frozen=True)
class SkinningWeights:
    """Per-vertex sparse (joint, weight) influence lists.

    Stored as padded arrays: joints (N, K) int (padded with 0) and
    weights (N, K) float (padded with 0). Weights are >= 0 and sum to 1
    per vertex.
    """

    joints: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        j = np.asarray(self.joints, dtype=np.int64)
        w = np.asarray(self.weights, dtype=np.float64)
        if j.shape != w.shape or j.ndim != 2:
            raise ValueError("joints and weights must both be (N, K)")
        if np.any(w < -1e-12):
            raise ValueError("skinning weights must be >= 0")
        sums = w.sum(axis=1)
        if np.any(np.abs(sums - 1.0) > 1e-6):
            bad = int(np.argmax(np.abs(sums - 1.0)))
            raise ValueError(f"skinning weights of vertex {bad} sum to {sums[bad]:.6f}, expected 1")
        j = j.copy()
        w = np.clip(w, 0.0, None)
        j.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "joints", j)
        object.__setattr__(self, "weights", w)

    @property
    def num_vertices(self) -> int:
        return len(self.joints)

    @classmethod
    def from_lists(cls, influences: list[list[tuple[int, float]]]) -> "SkinningWeights":
        k = max(1, max(len(row) for row in influences))
        joints = np.zeros((len(influences), k), dtype=np.int64)
        weights = np.zeros((len(influences), k))
        for i, row in enumerate(influences):
            for s, (j, w) in enumerate(row):
                joints[i, s] = j
                weights[i, s] = w
        return cls(joints, weights)

    @classmethod
    def single_joint(cls, n: int, joint: int) -> "SkinningWeights":
        return cls(np.full((n, 1), joint, dtype=np.int64), np.ones((n, 1)))

    def subset(self, vertex_ids: np.ndarray) -> "SkinningWeights":
        return SkinningWeights(self.joints[vertex_ids], self.weights[vertex_ids])

    def remapped(self, joint_map: dict[int, int]) -> "SkinningWeights":
        j = self.joints.copy()
        for old, new in joint_map.items():
            j[self.joints == old] = new
        return SkinningWeights(j, self.weights)

    def to_dict(self) -> dict:
        return {"joints": self.joints.tolist(), "weights": self.weights.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "SkinningWeights":
        return cls(np.asarray(d["joints"]), np.asarray(d["weights"]))

    def save_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load_json(cls, path) -> "SkinningWeights":
        return cls.from_dict(json.loads(Path(path).read_text()))


def rigid_to_dual_quat(rotations: np.ndarray, translations: np.ndarray) -> np.ndarray:
    """Pack rigid transforms into unit dual quaternions (J, 8) = (real | dual)."""
    rotations = np.asarray(rotations, dtype=np.float64)
    translations = np.asarray(translations, dtype=np.float64)
    qr = quat_from_matrix(rotations)
    tq = np.concatenate([np.zeros(translations.shape[:-1] + (1,)), translations], axis=-1)
    qd = 0.5 * quat_mul(tq, qr)
    return np.concatenate([qr, qd], axis=-1)


def dual_quat_apply(dq: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Apply normalized dual quaternion(s) (..., 8) to points (..., 3)."""
    qr = dq[..., :4]
    qd = dq[..., 4:]
    r = quat_to_matrix(qr)
    t = 2.0 * quat_mul(qd, _conj(qr))[..., 1:]
    return np.einsum("...ij,...j->...i", r, points) + t


def _conj(q: np.ndarray) -> np.ndarray:
    out = np.array(q, dtype=np.float64)
    out[..., 1:] *= -1.0
    return out


def blend_dual_quats(dqs: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Weighted dual-quaternion blend with hemisphere sign correction.

    dqs: (N, K, 8) per-vertex candidate transforms; weights: (N, K).
    Signs are flipped so every candidate lies in the hemisphere of the
    dominant-weight candidate before averaging; the blend is normalized by
    the real-part norm.
    """
    pivot = np.argmax(weights, axis=1)
    qr_pivot = dqs[np.arange(len(dqs)), pivot, :4]
    dots = np.einsum("nkd,nd->nk", dqs[..., :4], qr_pivot)
    signs = np.where(dots < 0.0, -1.0, 1.0)
    blended = np.einsum("nk,nkd->nd", weights * signs, dqs)
    norm = np.linalg.norm(blended[:, :4], axis=1, keepdims=True)
    if np.any(norm < 1e-12):
        raise ValueError("degenerate dual-quaternion blend (zero real part)")
    return blended / norm


def blend_dual_quats_dense(weights: np.ndarray, joint_dqs: np.ndarray) -> np.ndarray:
    """Blend per-joint dual quaternions with dense weight rows (M, J)."""
    weights = np.asarray(weights, dtype=np.float64)
    pivot = np.argmax(weights, axis=1)
    qr_pivot = joint_dqs[pivot, :4]
    dots = np.einsum("jd,nd->nj", joint_dqs[:, :4], qr_pivot)
    signs = np.where(dots < 0.0, -1.0, 1.0)
    blended = np.einsum("nj,jd->nd", weights * signs, joint_dqs)
    norm = np.linalg.norm(blended[:, :4], axis=1, keepdims=True)
    if np.any(norm < 1e-12):
        raise ValueError("degenerate dual-quaternion blend (zero real part)")
    return blended / norm


def blended_transforms_dense(weights: np.ndarray, rotations: np.ndarray, translations: np.ndarray):
    """Per-row blended rigid transforms for dense weights (M, J).

    Returns (R (M, 3, 3), t (M, 3), q (M, 4)).
    """
    assert_rotation(np.asarray(rotations, dtype=np.float64), 1e-6, "joint transform")
    dq = rigid_to_dual_quat(rotations, translations)
    blended = blend_dual_quats_dense(weights, dq)
    qr = blended[:, :4]
    qd = blended[:, 4:]
    r = quat_to_matrix(qr)
    t = 2.0 * quat_mul(qd, _conj(qr))[:, 1:]
    return r, t, qr


def blended_vertex_transforms(weights: SkinningWeights, rotations: np.ndarray, translations: np.ndarray):
    """Per-vertex blended rigid transforms (R (N, 3, 3), t (N, 3), q (N, 4)).

    `rotations`/`translations` must be rigid per joint.
    """
    rotations = np.asarray(rotations, dtype=np.float64)
    translations = np.asarray(translations, dtype=np.float64)
    assert_rotation(rotations, 1e-6, "joint transform")
    dq = rigid_to_dual_quat(rotations, translations)  # (J, 8)
    per_vertex = dq[weights.joints]  # (N, K, 8)
    blended = blend_dual_quats(per_vertex, weights.weights)
    qr = blended[:, :4]
    qd = blended[:, 4:]
    r = quat_to_matrix(qr)
    t = 2.0 * quat_mul(qd, _conj(qr))[:, 1:]
    return r, t, qr


def dqs_skin(vertices: np.ndarray, weights: SkinningWeights, rotations: np.ndarray, translations: np.ndarray):
    """Pose vertices by dual quaternion skinning.

    Vertices with a single unit-weight influence transform rigidly and
    exactly; raises on non-rigid joint transforms.
    """
    vertices = np.asarray(vertices, dtype=np.float64)
    if len(vertices) != weights.num_vertices:
        raise ValueError("vertex count does not match skinning weights")
    r, t, _ = blended_vertex_transforms(weights, rotations, translations)
    return np.einsum("nij,nj->ni", r, vertices) + t
