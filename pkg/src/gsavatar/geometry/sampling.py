"""Deterministic surface sampling."""

from __future__ import annotations

import numpy as np

from .mesh import Mesh, PointSet


def sample_surface(mesh: Mesh, n: int, seed: int, weights: np.ndarray | None = None) -> PointSet:
    """Sample n points on the mesh surface, area-proportionally.

    When per-vertex `weights` are given, each triangle's probability is its
    area times the mean weight of its three vertices. Deterministic for a
    fixed seed. Also returns the source triangle index and barycentric
    coordinates via `sample_surface_detailed` for callers that need them.
    """
    points, _, _ = sample_surface_detailed(mesh, n, seed, weights)
    return PointSet(points)


def sample_surface_detailed(
    mesh: Mesh, n: int, seed: int, weights: np.ndarray | None = None, triangles: np.ndarray | None = None
):
    """Like `sample_surface` but returns (points, triangle_ids, bary).

    `triangles` optionally restricts sampling to a subset of triangle indices.
    """
    if mesh.num_triangles == 0:
        raise ValueError("no surface")
    if n < 1:
        raise ValueError("need at least one sample")
    tri_ids = np.arange(mesh.num_triangles) if triangles is None else np.asarray(triangles, dtype=np.int64)
    if len(tri_ids) == 0:
        raise ValueError("no surface")
    areas = mesh.triangle_areas()[tri_ids]
    probs = areas.astype(np.float64)
    if weights is not None:
        w = np.asarray(weights, dtype=np.float64)
        if w.shape != (mesh.num_vertices,):
            raise ValueError("weights must be per-vertex")
        probs = probs * w[mesh.triangles[tri_ids]].mean(axis=1)
    total = probs.sum()
    if total <= 0:
        raise ValueError("no surface with positive sampling probability")
    probs = probs / total

    rng = np.random.default_rng(seed)
    counts = rng.multinomial(n, probs)
    chosen = np.repeat(tri_ids, counts)
    u = rng.random(n)
    v = rng.random(n)
    su = np.sqrt(u)
    bary = np.stack([1.0 - su, su * (1.0 - v), su * v], axis=1)
    corners = mesh.vertices[mesh.triangles[chosen]]  # (n, 3, 3)
    points = np.einsum("nk,nkd->nd", bary, corners)
    return points, chosen, bary
