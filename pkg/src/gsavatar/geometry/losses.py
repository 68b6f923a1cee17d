"""Registration losses shared by every fitting stage, with analytic gradients.

Nearest-neighbor queries use a k-d tree and are exact. Chamfer gradients
treat the nearest-neighbor assignment as locally constant, which is the
true gradient almost everywhere.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

from .mesh import BarycentricAnchor, Mesh, PointSet

# The temporal-smoothness normalizer divides by (transitions x dims); tests
# pin this choice through the constant below.
TV_NORMALIZATION = "transitions_times_dims"


def _points(ps) -> np.ndarray:
    return ps.points if isinstance(ps, PointSet) else np.asarray(ps, dtype=np.float64)


def chamfer_one_sided(src, dst) -> float:
    """Mean over src of squared distance to the nearest dst point.

    Per-point weights on src, when present, scale each term before the mean.
    """
    p = _points(src)
    q = _points(dst)
    if len(p) == 0 or len(q) == 0:
        raise ValueError("chamfer distance of an empty point set")
    d, _ = cKDTree(q).query(p, k=1)
    sq = d * d
    if isinstance(src, PointSet) and src.weights is not None:
        sq = sq * src.weights
    return float(sq.mean())


def chamfer_one_sided_grad(src, dst):
    """Analytic gradient of `chamfer_one_sided` w.r.t. both point arrays.

    Returns (loss, grad_src (N, 3), grad_dst (M, 3)).
    """
    p = _points(src)
    q = _points(dst)
    if len(p) == 0 or len(q) == 0:
        raise ValueError("chamfer distance of an empty point set")
    d, idx = cKDTree(q).query(p, k=1)
    w = np.ones(len(p))
    if isinstance(src, PointSet) and src.weights is not None:
        w = src.weights
    diff = p - q[idx]
    loss = float((w * (d * d)).mean())
    grad_p = (2.0 / len(p)) * w[:, None] * diff
    grad_q = np.zeros_like(q)
    np.add.at(grad_q, idx, -grad_p)
    return loss, grad_p, grad_q


def chamfer_bidirectional(a, b) -> float:
    """Sum of the two one-sided terms; symmetric in its arguments."""
    return chamfer_one_sided(a, b) + chamfer_one_sided(b, a)


def chamfer_bidirectional_grad(a, b):
    """Returns (loss, grad_a, grad_b)."""
    l1, ga1, gb1 = chamfer_one_sided_grad(a, b)
    l2, gb2, ga2 = chamfer_one_sided_grad(b, a)
    return l1 + l2, ga1 + ga2, gb1 + gb2


def landmarks_from_barycentric(mesh: Mesh, anchors) -> PointSet:
    """Evaluate barycentric anchors on the mesh, in anchor order.

    `anchors` is a sequence of BarycentricAnchor (or a name->anchor dict,
    evaluated in insertion order).
    """
    if isinstance(anchors, dict):
        anchors = list(anchors.values())
    pts = np.empty((len(anchors), 3))
    for i, a in enumerate(anchors):
        if not isinstance(a, BarycentricAnchor):
            a = BarycentricAnchor(int(a[0]), np.asarray(a[1]))
        if not 0 <= a.triangle < mesh.num_triangles:
            raise ValueError(f"anchor {i} references invalid triangle {a.triangle}")
        corners = mesh.vertices[mesh.triangles[a.triangle]]
        pts[i] = a.bary @ corners
    return PointSet(pts)


def lmk3d_loss(pred, target) -> float:
    """sqrt of the summed squared landmark distances."""
    p = _points(pred)
    t = _points(target)
    if p.shape != t.shape:
        raise ValueError(f"landmark count mismatch: {p.shape} vs {t.shape}")
    return float(np.sqrt(((p - t) ** 2).sum()))


def lmk3d_loss_grad(pred, target):
    """Returns (loss, grad w.r.t. pred). Gradient is 0 at exact coincidence."""
    p = _points(pred)
    t = _points(target)
    if p.shape != t.shape:
        raise ValueError(f"landmark count mismatch: {p.shape} vs {t.shape}")
    diff = p - t
    loss = float(np.sqrt((diff**2).sum()))
    if loss < 1e-20:
        return loss, np.zeros_like(p)
    return loss, diff / loss


def tv_loss(sequence: np.ndarray) -> float:
    """Mean absolute difference between consecutive frames.

    Normalized by (number of transitions x parameter dimensionality); see
    TV_NORMALIZATION.
    """
    seq = np.asarray(sequence, dtype=np.float64)
    if seq.ndim != 2 or len(seq) < 2:
        raise ValueError("need at least 2 frames of uniform dimensionality")
    return float(np.abs(np.diff(seq, axis=0)).mean())


def tv_loss_grad(sequence: np.ndarray):
    """Returns (loss, grad (T, D)); uses sign subgradient (0 at ties)."""
    seq = np.asarray(sequence, dtype=np.float64)
    if seq.ndim != 2 or len(seq) < 2:
        raise ValueError("need at least 2 frames of uniform dimensionality")
    d = np.diff(seq, axis=0)
    n = d.size
    s = np.sign(d) / n
    grad = np.zeros_like(seq)
    grad[:-1] -= s
    grad[1:] += s
    return float(np.abs(d).mean()), grad
