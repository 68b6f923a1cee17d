"""Triangle mesh and point-set primitives.

Both types are immutable after construction (their arrays are marked
read-only) and safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DEGENERATE_AREA = 1e-14


def _frozen(a: np.ndarray, dtype) -> np.ndarray:
    out = np.ascontiguousarray(a, dtype=dtype)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class BarycentricAnchor:
    """A point pinned to a triangle by barycentric coordinates."""

    triangle: int
    bary: np.ndarray  # (3,), >= 0, sums to 1

    def __post_init__(self):
        b = np.asarray(self.bary, dtype=np.float64)
        if b.shape != (3,):
            raise ValueError("barycentric coordinates must have 3 entries")
        if np.any(b < -1e-9) or abs(b.sum() - 1.0) > 1e-6:
            raise ValueError("barycentric coordinates must be >= 0 and sum to 1")
        object.__setattr__(self, "bary", _frozen(b, np.float64))


@dataclass(frozen=True)
class Mesh:
    """Indexed triangle mesh with optional UV atlas, landmarks, and regions.

    vertices: (N, 3) float64, meters.
    triangles: (T, 3) int vertex indices.
    uv: optional per-corner coordinates (T, 3, 2) in [0, 1]^2.
    landmarks3d: named barycentric anchors.
    region_masks: named vertex-index subsets.
    region_weights: optional per-vertex scalars >= 0.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    uv: np.ndarray | None = None
    landmarks3d: dict[str, BarycentricAnchor] = field(default_factory=dict)
    region_masks: dict[str, np.ndarray] = field(default_factory=dict)
    region_weights: np.ndarray | None = None

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64)
        t = np.asarray(self.triangles, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] != 3:
            raise ValueError("vertices must be (N, 3)")
        if t.ndim != 2 or t.shape[1] != 3:
            raise ValueError("triangles must be (T, 3)")
        if t.size and (t.min() < 0 or t.max() >= len(v)):
            raise ValueError("triangle index out of range")
        areas = _triangle_areas(v, t)
        if np.any(areas <= DEGENERATE_AREA):
            bad = int(np.argmin(areas))
            raise ValueError(f"degenerate triangle {bad} (area {areas[bad]:.3g})")
        object.__setattr__(self, "vertices", _frozen(v, np.float64))
        object.__setattr__(self, "triangles", _frozen(t, np.int64))
        if self.uv is not None:
            uv = np.asarray(self.uv, dtype=np.float64)
            if uv.shape != (len(t), 3, 2):
                raise ValueError("uv must be (T, 3, 2) per-corner coordinates")
            if uv.min() < -1e-9 or uv.max() > 1.0 + 1e-9:
                raise ValueError("uv coordinates must lie in [0, 1]^2")
            object.__setattr__(self, "uv", _frozen(uv, np.float64))
        masks = {k: _frozen(np.asarray(m, dtype=np.int64), np.int64) for k, m in self.region_masks.items()}
        object.__setattr__(self, "region_masks", masks)
        for name, anchor in self.landmarks3d.items():
            if not 0 <= anchor.triangle < len(t):
                raise ValueError(f"landmark {name!r} references invalid triangle {anchor.triangle}")
        if self.region_weights is not None:
            w = np.asarray(self.region_weights, dtype=np.float64)
            if w.shape != (len(v),) or np.any(w < 0):
                raise ValueError("region_weights must be per-vertex and >= 0")
            object.__setattr__(self, "region_weights", _frozen(w, np.float64))

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_triangles(self) -> int:
        return len(self.triangles)

    def triangle_areas(self) -> np.ndarray:
        return _triangle_areas(self.vertices, self.triangles)

    def triangle_normals(self) -> np.ndarray:
        v = self.vertices
        t = self.triangles
        n = np.cross(v[t[:, 1]] - v[t[:, 0]], v[t[:, 2]] - v[t[:, 0]])
        return n / np.linalg.norm(n, axis=1, keepdims=True)

    def vertex_normals(self) -> np.ndarray:
        """Area-weighted vertex normals."""
        v = self.vertices
        t = self.triangles
        fn = np.cross(v[t[:, 1]] - v[t[:, 0]], v[t[:, 2]] - v[t[:, 0]])
        out = np.zeros_like(v)
        for k in range(3):
            np.add.at(out, t[:, k], fn)
        norms = np.linalg.norm(out, axis=1, keepdims=True)
        norms[norms < 1e-20] = 1.0
        return out / norms

    def with_vertices(self, vertices: np.ndarray) -> "Mesh":
        """Same connectivity and attributes with replaced vertex positions."""
        return Mesh(
            vertices=vertices,
            triangles=self.triangles,
            uv=self.uv,
            landmarks3d=dict(self.landmarks3d),
            region_masks=dict(self.region_masks),
            region_weights=self.region_weights,
        )

    def boundary_edges(self) -> np.ndarray:
        """Edges with exactly one incident triangle, as (E, 2) index pairs."""
        t = self.triangles
        edges = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        key = np.sort(edges, axis=1)
        _, inverse, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
        return edges[counts[inverse] == 1]


def _triangle_areas(v: np.ndarray, t: np.ndarray) -> np.ndarray:
    if len(t) == 0:
        return np.zeros(0)
    n = np.cross(v[t[:, 1]] - v[t[:, 0]], v[t[:, 2]] - v[t[:, 0]])
    return 0.5 * np.linalg.norm(n, axis=1)


@dataclass(frozen=True)
class PointSet:
    """A bag of 3D points with optional non-negative per-point weights."""

    points: np.ndarray
    weights: np.ndarray | None = None

    def __post_init__(self):
        p = np.asarray(self.points, dtype=np.float64)
        if p.ndim != 2 or p.shape[1] != 3:
            raise ValueError("points must be (N, 3)")
        object.__setattr__(self, "points", _frozen(p, np.float64))
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=np.float64)
            if w.shape != (len(p),):
                raise ValueError("weights must match point count")
            if np.any(w < 0):
                raise ValueError("weights must be >= 0")
            object.__setattr__(self, "weights", _frozen(w, np.float64))

    def __len__(self) -> int:
        return len(self.points)

    def transformed(self, rotation: np.ndarray, translation: np.ndarray) -> "PointSet":
        return PointSet(self.points @ np.asarray(rotation).T + np.asarray(translation), self.weights)
