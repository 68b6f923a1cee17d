"""Embedded deformation graph: sparse nodes whose local rigid motions are
weight-blended onto dense template vertices, plus per-vertex displacements.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.spatial import cKDTree

from ..geometry.mesh import Mesh
from ..transforms import rotvec_jacobian, rotvec_to_matrix


@dataclass(frozen=True)
class EmbeddedGraph:
    """Deformation proxy for one template mesh.

    node_positions: (J, 3) node rest positions (a subset of the surface).
    node_rotations: (J, 3) axis-angle, node_translations: (J, 3).
    attachments / attachment_weights: (N, K) per-vertex node sets; weights
    are >= 0 and sum to 1 per vertex.
    displacements: (N, 3) added per vertex.
    """

    node_positions: np.ndarray
    attachments: np.ndarray
    attachment_weights: np.ndarray
    node_rotations: np.ndarray
    node_translations: np.ndarray
    displacements: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.attachment_weights, dtype=np.float64)
        if np.any(w < -1e-12):
            raise ValueError("attachment weights must be >= 0")
        sums = w.sum(axis=1)
        if np.any(np.abs(sums - 1.0) > 1e-6):
            raise ValueError("attachment weights must sum to 1 per vertex")
        a = np.asarray(self.attachments, dtype=np.int64)
        if a.shape != w.shape:
            raise ValueError("attachments and weights must have equal shape")
        if a.min(initial=0) < 0 or a.max(initial=0) >= len(self.node_positions):
            raise ValueError("attachment references missing node")

    @property
    def num_nodes(self) -> int:
        return len(self.node_positions)

    @property
    def num_vertices(self) -> int:
        return len(self.attachments)

    def with_params(
        self,
        rotations: np.ndarray | None = None,
        translations: np.ndarray | None = None,
        displacements: np.ndarray | None = None,
    ) -> "EmbeddedGraph":
        g = self
        if rotations is not None:
            if np.asarray(rotations).shape != (self.num_nodes, 3):
                raise ValueError("node rotations must be (J, 3) axis-angle")
            g = replace(g, node_rotations=np.asarray(rotations, dtype=np.float64))
        if translations is not None:
            if np.asarray(translations).shape != (self.num_nodes, 3):
                raise ValueError("node translations must be (J, 3)")
            g = replace(g, node_translations=np.asarray(translations, dtype=np.float64))
        if displacements is not None:
            if np.asarray(displacements).shape != (self.num_vertices, 3):
                raise ValueError("displacements must be (N, 3)")
            g = replace(g, displacements=np.asarray(displacements, dtype=np.float64))
        return g


def _farthest_point_ids(points: np.ndarray, count: int, bias: np.ndarray, seed: int) -> np.ndarray:
    """Farthest-point selection where candidate distances are scaled by bias.

    Higher bias draws nodes closer together in that region, i.e. increases
    node density there.
    """
    n = len(points)
    if count >= n:
        return np.arange(n)
    rng = np.random.default_rng(seed)
    start = int(np.argmax(bias)) if bias.max() > bias.min() else int(rng.integers(n))
    chosen = [start]
    dist = np.linalg.norm(points - points[start], axis=1)
    for _ in range(count - 1):
        nxt = int(np.argmax(dist * bias))
        chosen.append(nxt)
        dist = np.minimum(dist, np.linalg.norm(points - points[nxt], axis=1))
    return np.asarray(sorted(chosen), dtype=np.int64)


def build_embedded_graph(
    template: Mesh,
    node_count: int,
    region_weights: np.ndarray | None = None,
    attachments_per_vertex: int = 4,
    seed: int = 0,
) -> EmbeddedGraph:
    """Select graph nodes and attach template vertices to them.

    Nodes come from region-weight-biased farthest-point selection over the
    template vertices (weight w scales selection density roughly by
    sqrt(w)). Attachments use the nearest nodes with normalized radial
    falloff weights; a vertex coinciding with a node attaches to it with
    weight 1.
    """
    if node_count < 1:
        raise ValueError("need at least one node")
    if node_count > template.num_vertices:
        raise ValueError("node_count exceeds vertex count")
    verts = template.vertices
    if region_weights is None:
        bias = np.ones(len(verts))
    else:
        bias = np.sqrt(np.clip(np.asarray(region_weights, dtype=np.float64), 1e-9, None))
    node_ids = _farthest_point_ids(verts, node_count, bias, seed)
    nodes = verts[node_ids]

    k = min(attachments_per_vertex, node_count)
    tree = cKDTree(nodes)
    dist, idx = tree.query(verts, k=k)
    if k == 1:
        dist = dist[:, None]
        idx = idx[:, None]
    # Radial falloff against a support radius just beyond the farthest pick.
    support = dist[:, -1][:, None] * 1.1 + 1e-12
    w = np.maximum(0.0, 1.0 - dist / support) ** 2
    exact = dist < 1e-12
    w[exact.any(axis=1)] = 0.0
    w[exact] = 1.0
    w = w / w.sum(axis=1, keepdims=True)
    return EmbeddedGraph(
        node_positions=nodes,
        attachments=idx.astype(np.int64),
        attachment_weights=w,
        node_rotations=np.zeros((node_count, 3)),
        node_translations=np.zeros((node_count, 3)),
        displacements=np.zeros((template.num_vertices, 3)),
    )


def embedded_deform(template: Mesh, graph: EmbeddedGraph) -> np.ndarray:
    """Deform template vertices by the graph's node motions.

    v_i = disp_i + sum_j w_ij (R_j (v_i - g_j) + g_j + t_j) over the
    attached nodes j of vertex i. Evaluated in the equivalent residual form
    v_i + disp_i + sum_j w_ij ((R_j - I)(v_i - g_j) + t_j), which is exact
    for identity parameters (attachment weights sum to 1 by construction).
    """
    verts = template.vertices
    if len(verts) != graph.num_vertices:
        raise ValueError("graph was built for a different vertex count")
    rot = rotvec_to_matrix(graph.node_rotations) - np.eye(3)  # (J, 3, 3)
    g = graph.node_positions
    a = graph.attachments
    w = graph.attachment_weights
    local = verts[:, None, :] - g[a]  # (N, K, 3)
    moved = np.einsum("nkij,nkj->nki", rot[a], local) + graph.node_translations[a]
    return verts + graph.displacements + np.einsum("nk,nki->ni", w, moved)


def embedded_deform_backward(template: Mesh, graph: EmbeddedGraph, grad_out: np.ndarray):
    """Analytic gradients of `embedded_deform` given d(loss)/d(output).

    Returns (grad_rotations (J, 3), grad_translations (J, 3),
    grad_displacements (N, 3)).
    """
    verts = template.vertices
    grad_out = np.asarray(grad_out, dtype=np.float64)
    a = graph.attachments
    w = graph.attachment_weights
    g = graph.node_positions
    grad_t = np.zeros((graph.num_nodes, 3))
    grad_r = np.zeros((graph.num_nodes, 3))
    wg = w[:, :, None] * grad_out[:, None, :]  # (N, K, 3)
    np.add.at(grad_t, a, wg)
    jac = np.stack([rotvec_jacobian(r) for r in graph.node_rotations])  # (J, 3, 3, 3); jac[j, i] = dR_j/dr_i
    local = verts[:, None, :] - g[a]  # (N, K, 3)
    # d(moved)/dr_i = (dR/dr_i) @ local; contract with the upstream gradient.
    contrib = np.einsum("nkicj,nkj,nkc->nki", jac[a], local, wg)
    np.add.at(grad_r, a, contrib)
    return grad_r, grad_t, grad_out.copy()
