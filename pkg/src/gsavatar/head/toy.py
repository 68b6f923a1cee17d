"""Synthetic head models for tests, demos, and the demo bundle.

The toy model is a deformed sphere with smooth random shape/expression
bases, articulated neck/jaw/eye joints, a 51-anchor landmark embedding,
an optional dense embedding, and the nested region masks the fitting
pipeline expects ("face" inside "mid" inside "full").
"""

from __future__ import annotations

import numpy as np

from ..geometry.mesh import BarycentricAnchor, Mesh
from ..geometry.shapes import uv_sphere
from ..skinning.dqs import SkinningWeights
from .model import NUM_LANDMARKS, HeadModel


def _adjacency(mesh: Mesh) -> list[np.ndarray]:
    neigh = [set() for _ in range(mesh.num_vertices)]
    for a, b, c in mesh.triangles:
        neigh[a].update((b, c))
        neigh[b].update((a, c))
        neigh[c].update((a, b))
    return [np.fromiter(s, dtype=np.int64) for s in neigh]


def _smooth_field(mesh: Mesh, rng: np.random.Generator, rounds: int = 4, scale: float = 1.0) -> np.ndarray:
    field = rng.normal(size=(mesh.num_vertices, 3))
    neigh = _adjacency(mesh)
    for _ in range(rounds):
        avg = np.stack([field[n].mean(axis=0) if len(n) else field[i] for i, n in enumerate(neigh)])
        field = 0.5 * field + 0.5 * avg
    field -= field.mean(axis=0)
    norm = np.abs(field).max()
    return field / max(norm, 1e-12) * scale


def _spread_anchors(mesh: Mesh, triangle_ids: np.ndarray, count: int, rng: np.random.Generator):
    ids = triangle_ids[rng.permutation(len(triangle_ids))]
    reps = int(np.ceil(count / len(ids)))
    ids = np.tile(ids, reps)[:count]
    anchors = []
    for t in ids:
        b = rng.random(3) + 0.2
        anchors.append(BarycentricAnchor(int(t), b / b.sum()))
    return tuple(anchors)


def toy_head_model(
    seed: int = 0,
    rings: int = 10,
    segments: int = 12,
    k_shape: int = 10,
    k_expression: int = 6,
    radius: float = 0.11,
    dense_landmarks: int = 105,
) -> HeadModel:
    rng = np.random.default_rng(seed)
    mesh = uv_sphere(radius=radius, rings=rings, segments=segments)
    v = mesh.vertices
    n = len(v)

    # Regions: the face is the upper front (+z, +y), hair the back/top.
    y = v[:, 1] / radius
    z = v[:, 2] / radius
    face = np.where((z > 0.35) & (y > -0.4))[0]
    mid = np.where((z > -0.2) & (y > -0.7))[0]
    full = np.arange(n)
    eyes = np.where((z > 0.55) & (y > 0.25) & (y < 0.7))[0]
    nose = np.where((z > 0.85) & (np.abs(y) < 0.25))[0]
    hair = np.where((z < 0.0) | (y > 0.8))[0]
    weights = np.full(n, 0.5)
    weights[hair] = 1.0
    weights[eyes] = 0.0
    weights[nose] = 0.0
    jaw_region = np.where((z > 0.3) & (y < -0.35))[0]

    mesh = Mesh(
        v,
        mesh.triangles,
        region_masks={
            "face": face,
            "mid": np.union1d(face, mid),
            "full": full,
            "eyes": eyes,
            "nose": nose,
            "hair": hair,
            "jaw": jaw_region,
        },
        region_weights=weights,
    )

    shape = np.stack([_smooth_field(mesh, rng, scale=0.01) for _ in range(k_shape)], axis=2)
    expr = np.zeros((n, 3, k_expression))
    face_mask = np.zeros(n, dtype=bool)
    face_mask[mid] = True
    for k in range(k_expression):
        f = _smooth_field(mesh, rng, scale=0.008)
        f[~face_mask] *= 0.05
        expr[:, :, k] = f
    eyelid = np.zeros((n, 3, 2))
    eye_mask = np.zeros(n, dtype=bool)
    eye_mask[eyes] = True
    left = eye_mask & (v[:, 0] > 0)
    right = eye_mask & (v[:, 0] <= 0)
    eyelid[left, 1, 0] = -0.004
    eyelid[right, 1, 1] = -0.004

    pivots = np.array(
        [
            [0.0, -radius, 0.0],  # neck
            [0.0, -0.3 * radius, 0.5 * radius],  # jaw
            [0.35 * radius, 0.45 * radius, 0.6 * radius],  # left eye
            [-0.35 * radius, 0.45 * radius, 0.6 * radius],  # right eye
        ]
    )

    joints = np.zeros((n, 2), dtype=np.int64)
    w = np.zeros((n, 2))
    w[:, 0] = 1.0  # global bone
    jaw_blend = np.clip((-(y) - 0.35) / 0.4, 0.0, 1.0)
    in_jaw = np.zeros(n, dtype=bool)
    in_jaw[jaw_region] = True
    joints[in_jaw, 1] = 2
    w[in_jaw, 1] = jaw_blend[in_jaw]
    w[in_jaw, 0] = 1.0 - jaw_blend[in_jaw]
    # A few fully jaw-bound vertices at the chin.
    chin = np.where((z > 0.5) & (y < -0.6))[0]
    joints[chin, 1] = 2
    w[chin, 1] = 1.0
    w[chin, 0] = 0.0
    skin = SkinningWeights(joints, w)

    front_tris = np.where(np.isin(mesh.triangles, face).all(axis=1))[0]
    if len(front_tris) == 0:
        front_tris = np.arange(mesh.num_triangles)
    landmarks = _spread_anchors(mesh, front_tris, NUM_LANDMARKS, rng)
    dense = _spread_anchors(mesh, front_tris, dense_landmarks, rng)

    return HeadModel(
        template=mesh,
        shape_basis=shape,
        expr_basis=expr,
        eyelid_basis=eyelid,
        joint_pivots=pivots,
        skin_weights=skin,
        displacements=np.zeros((n, 3)),
        landmark_embedding=landmarks,
        dense_embedding=dense,
    )
