"""Shared fixture builders for the test suite."""

from __future__ import annotations

import numpy as np

from gsavatar.geometry import BarycentricAnchor, Mesh
from gsavatar.skinning import (
    CharacterRig,
    Joint,
    Skeleton,
    SkinningWeights,
    build_embedded_graph,
)
from gsavatar.geometry.shapes import open_cylinder, uv_sphere


def unit_right_triangle() -> Mesh:
    return Mesh(np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]), np.array([[0, 1, 2]]))


def two_triangle_mesh() -> Mesh:
    # Areas 1 and 3 (right triangles with legs (2,1) and (2,3)).
    verts = np.array(
        [
            [0.0, 0.0, 0.0],
            [2.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [5.0, 0.0, 0.0],
            [7.0, 0.0, 0.0],
            [5.0, 3.0, 0.0],
        ]
    )
    return Mesh(verts, np.array([[0, 1, 2], [3, 4, 5]]))


def random_mesh(seed: int, num_vertices: int = 20, num_triangles: int = 24) -> Mesh:
    rng = np.random.default_rng(seed)
    while True:
        verts = rng.normal(size=(num_vertices, 3))
        tris = []
        tried = set()
        while len(tris) < num_triangles:
            t = tuple(sorted(rng.choice(num_vertices, size=3, replace=False).tolist()))
            if t in tried:
                continue
            tried.add(t)
            a, b, c = (verts[i] for i in t)
            if np.linalg.norm(np.cross(b - a, c - a)) > 1e-6:
                tris.append(t)
        try:
            return Mesh(verts, np.array(tris, dtype=np.int64))
        except ValueError:
            continue


def chain_skeleton(n_joints: int = 5, spacing: float = 1.0, with_root_translation: bool = True) -> Skeleton:
    joints = [
        Joint(
            name="j0",
            parent=None,
            rest_rotation=np.zeros(3),
            rest_translation=np.zeros(3),
            dofs=("translation", "rotation") if with_root_translation else ("rotation",),
        )
    ]
    for i in range(1, n_joints):
        joints.append(
            Joint(
                name=f"j{i}",
                parent=f"j{i - 1}",
                rest_rotation=np.zeros(3),
                rest_translation=np.array([spacing, 0.0, 0.0]),
                dofs=("rotation",),
            )
        )
    return Skeleton(joints)


def cylinder_rig(segments: int = 10, rings: int = 8, node_count: int = 12, seed: int = 0) -> CharacterRig:
    """Vertical two-bone cylinder rig with a head joint at the top."""
    mesh = open_cylinder(radius=0.4, height=2.0, rings=rings, segments=segments)
    skeleton = Skeleton(
        [
            Joint("root", None, np.zeros(3), np.array([0.0, -1.0, 0.0]), ("translation", "rotation")),
            Joint("spine", "root", np.zeros(3), np.array([0.0, 1.0, 0.0]), ("rotation",)),
            Joint("head", "spine", np.zeros(3), np.array([0.0, 1.0, 0.0]), ("rotation",)),
        ]
    )
    y = mesh.vertices[:, 1]
    t = np.clip((y + 1.0) / 2.0, 0.0, 1.0)
    joints = np.zeros((len(y), 3), dtype=np.int64)
    weights = np.zeros((len(y), 3))
    joints[:, 0] = 0
    joints[:, 1] = 1
    joints[:, 2] = 2
    weights[:, 0] = np.maximum(0.0, 1.0 - 2.0 * t)
    weights[:, 1] = 1.0 - np.abs(2.0 * t - 1.0)
    weights[:, 2] = np.maximum(0.0, 2.0 * t - 1.0)
    skin = SkinningWeights(joints, weights)
    graph = build_embedded_graph(mesh, node_count=node_count, seed=seed)
    return CharacterRig(
        skeleton=skeleton,
        template=mesh,
        skin_weights=skin,
        graph=graph,
        head_joint="head",
        facing_axis=np.array([0.0, 0.0, 1.0]),
    )


def random_anchors(mesh: Mesh, count: int, seed: int) -> list[BarycentricAnchor]:
    rng = np.random.default_rng(seed)
    anchors = []
    for _ in range(count):
        tri = int(rng.integers(mesh.num_triangles))
        b = rng.random(3)
        b = b / b.sum()
        anchors.append(BarycentricAnchor(tri, b))
    return anchors


def random_rigid(seed: int):
    rng = np.random.default_rng(seed)
    from scipy.spatial.transform import Rotation

    r = Rotation.from_rotvec(rng.normal(size=3)).as_matrix()
    t = rng.normal(size=3)
    return r, t
