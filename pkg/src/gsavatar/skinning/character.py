"""Deformable character: skeleton-driven skinning composed with the
embedded-graph deformation layer and pluggable motion-to-deformation
predictors.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass, field

import numpy as np

from ..geometry.mesh import Mesh
from .dqs import SkinningWeights, dqs_skin
from .graph import EmbeddedGraph, embedded_deform
from .skeleton import PoseWindow, Skeleton


class DeformationPredictor(ABC):
    """Maps a normalized pose window to graph parameters and displacements."""

    @abstractmethod
    def predict(self, normalized_window: np.ndarray, graph: EmbeddedGraph):
        """Return (node_rotations (J, 3), node_translations (J, 3),
        displacements (N, 3)) for the given (W, D_body) window."""


class ZeroPredictor(DeformationPredictor):
    """No deformation: the character reduces to plain skinning."""

    def predict(self, normalized_window, graph):
        return (
            np.zeros((graph.num_nodes, 3)),
            np.zeros((graph.num_nodes, 3)),
            np.zeros((graph.num_vertices, 3)),
        )


class ConstantPredictor(DeformationPredictor):
    """Fixed graph parameters and displacements, independent of motion."""

    def __init__(self, node_rotations, node_translations, displacements):
        self.node_rotations = np.asarray(node_rotations, dtype=np.float64)
        self.node_translations = np.asarray(node_translations, dtype=np.float64)
        self.displacements = np.asarray(displacements, dtype=np.float64)

    def predict(self, normalized_window, graph):
        if self.node_rotations.shape != (graph.num_nodes, 3):
            raise ValueError("predictor node_rotations shape mismatch")
        if self.node_translations.shape != (graph.num_nodes, 3):
            raise ValueError("predictor node_translations shape mismatch")
        if self.displacements.shape != (graph.num_vertices, 3):
            raise ValueError("predictor displacements shape mismatch")
        return self.node_rotations, self.node_translations, self.displacements


class PerPoseTablePredictor(DeformationPredictor):
    """Nearest-training-pose lookup over a small table of parameter sets.

    Keys are normalized current-frame poses; the entry with the smallest
    Euclidean distance to the window's last frame wins (ties: lowest index).
    """

    def __init__(self, keys, entries):
        self.keys = np.asarray(keys, dtype=np.float64)
        if len(entries) != len(self.keys):
            raise ValueError("one entry required per key")
        self.entries = [
            (
                np.asarray(r, dtype=np.float64),
                np.asarray(t, dtype=np.float64),
                np.asarray(d, dtype=np.float64),
            )
            for (r, t, d) in entries
        ]

    def predict(self, normalized_window, graph):
        current = np.asarray(normalized_window, dtype=np.float64)[-1]
        dists = np.linalg.norm(self.keys - current, axis=1)
        r, t, d = self.entries[int(np.argmin(dists))]
        if r.shape != (graph.num_nodes, 3) or t.shape != (graph.num_nodes, 3) or d.shape != (graph.num_vertices, 3):
            raise ValueError("table entry shape mismatch")
        return r, t, d


@dataclass
class CharacterRig:
    """Skeleton + template + embedded graph + skinning weights.

    hand_vertices index vertices whose deformation is discarded (they stay
    on the template before skinning). head_joint names the bone that
    carries the head; facing_axis is the rest-pose facing direction used
    for camera selection.
    """

    skeleton: Skeleton
    template: Mesh
    skin_weights: SkinningWeights
    graph: EmbeddedGraph
    hand_vertices: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    head_joint: str | None = None
    facing_axis: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))
    landmark_sets: dict = field(default_factory=dict)  # convention -> barycentric anchors

    def __post_init__(self):
        if self.skin_weights.num_vertices != self.template.num_vertices:
            raise ValueError("skinning weights do not match template")
        if self.graph.num_vertices != self.template.num_vertices:
            raise ValueError("graph does not match template")
        self.hand_vertices = np.asarray(self.hand_vertices, dtype=np.int64)

    @property
    def d_body(self) -> int:
        return self.skeleton.d_body

    def deformed_canonical(self, window: PoseWindow, predictor: DeformationPredictor) -> np.ndarray:
        """Canonical-pose vertices after predictor-driven deformation.

        Hand vertices are reset to the template (their deformation is
        discarded).
        """
        normalized = self.skeleton.normalize_pose(window.frames)
        rot, trans, disp = predictor.predict(normalized, self.graph)
        graph = self.graph.with_params(rot, trans, disp)
        deformed = embedded_deform(self.template, graph)
        if len(self.hand_vertices):
            deformed[self.hand_vertices] = self.template.vertices[self.hand_vertices]
        return deformed

    def head_transform(self, pose: np.ndarray):
        """World transform (R, t) of the head joint for one pose vector."""
        if self.head_joint is None:
            raise ValueError("rig has no head joint")
        rots, trans = self.skeleton.forward_kinematics(pose)
        i = self.skeleton.index[self.head_joint]
        return rots[i], trans[i]

    def head_orientation(self, pose: np.ndarray) -> np.ndarray:
        r, _ = self.head_transform(pose)
        d = r @ np.asarray(self.facing_axis, dtype=np.float64)
        return d / np.linalg.norm(d)


def pose_character(rig: CharacterRig, window: PoseWindow, predictor: DeformationPredictor) -> Mesh:
    """Deform the canonical template from the motion window, then skin it
    with the window's current frame."""
    if window.frames.shape[1] != rig.d_body:
        raise ValueError(f"pose dimension {window.frames.shape[1]} != rig D_body {rig.d_body}")
    canonical = rig.deformed_canonical(window, predictor)
    rots, trans = rig.skeleton.forward_kinematics(window.current)
    rest_r, rest_t = rig.skeleton.rest_transforms()
    # Joint transforms map rest-pose space to posed space.
    rel_r = np.einsum("jik,jlk->jil", rots, rest_r)  # rots @ rest_r^T
    rel_t = trans - np.einsum("jik,jk->ji", rel_r, rest_t)
    posed = dqs_skin(canonical, rig.skin_weights, rel_r, rel_t)
    return rig.template.with_vertices(posed)
