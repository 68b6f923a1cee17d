"""Joining two open meshes into one watertight mesh at a planar cut.

The pipeline: mark vertices near the neck, fit a cut plane, slice both
meshes so each keeps one side and exposes a single boundary loop, then
bridge the loops with a band of new triangles that walks both loops once
(so the band has exactly |head loop| + |body loop| triangles and skips no
body vertex).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .geometry.mesh import Mesh, PointSet


@dataclass(frozen=True)
class CutPlane:
    centroid: np.ndarray
    normal: np.ndarray  # unit vector

    def __post_init__(self):
        c = np.asarray(self.centroid, dtype=np.float64)
        n = np.asarray(self.normal, dtype=np.float64)
        if abs(np.linalg.norm(n) - 1.0) > 1e-9:
            raise ValueError("plane normal must be unit length")
        object.__setattr__(self, "centroid", c)
        object.__setattr__(self, "normal", n)

    def signed_distance(self, points: np.ndarray) -> np.ndarray:
        return (np.asarray(points, dtype=np.float64) - self.centroid) @ self.normal


@dataclass(frozen=True)
class BoundaryLoop:
    """Closed cycle of vertex indices along boundary edges, ordered in the
    direction the owning triangles traverse those edges."""

    vertices: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.int64)
        if len(v) < 3 or len(set(v.tolist())) != len(v):
            raise ValueError("boundary loop must be a simple cycle of >= 3 vertices")
        object.__setattr__(self, "vertices", v)

    def __len__(self) -> int:
        return len(self.vertices)


def compute_cut_plane(marked: PointSet | np.ndarray) -> CutPlane:
    """Least-squares plane through marked points via SVD.

    The normal is the least-variance direction; its sign is unspecified.
    """
    pts = marked.points if isinstance(marked, PointSet) else np.asarray(marked, dtype=np.float64)
    if len(pts) < 3:
        raise ValueError("need at least 3 points to fit a plane")
    centroid = pts.mean(axis=0)
    centered = pts - centroid
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    if s[1] < 1e-12 * max(s[0], 1e-30):
        raise ValueError("marked points are collinear")
    return CutPlane(centroid, vt[2])


@dataclass(frozen=True)
class SliceResult:
    mesh: Mesh
    loop: BoundaryLoop
    kept_vertices: np.ndarray  # original indices of surviving vertices
    created_edges: np.ndarray  # (K, 2) original edge endpoints per created vertex
    created_t: np.ndarray  # (K,) interpolation parameter along each edge

    @property
    def num_kept(self) -> int:
        return len(self.kept_vertices)


def _extract_single_loop(mesh: Mesh) -> BoundaryLoop:
    edges = mesh.boundary_edges()
    if len(edges) == 0:
        raise ValueError("slice produced no boundary (plane does not intersect the surface)")
    nxt = {}
    for a, b in edges:
        if int(a) in nxt:
            raise ValueError("non-neck topology: boundary is not a simple loop")
        nxt[int(a)] = int(b)
    start = int(edges[0, 0])
    order = [start]
    cur = nxt[start]
    while cur != start:
        order.append(cur)
        if len(order) > len(edges):
            raise ValueError("non-neck topology: boundary does not close")
        cur = nxt[cur]
    if len(order) != len(edges):
        raise ValueError("non-neck topology: multiple boundary loops")
    return BoundaryLoop(np.asarray(order, dtype=np.int64))


def slice_mesh(mesh: Mesh, plane: CutPlane, keep_side: int = 1, snap: float = 1e-12) -> SliceResult:
    """Clip the mesh against the plane, keeping the requested side.

    Triangles crossing the plane are split; new vertices lie on the plane
    (within 1e-7). The result must expose exactly one boundary loop.
    Per-corner UVs, when present, are interpolated through the clip.
    """
    if keep_side not in (-1, 1):
        raise ValueError("keep_side must be +1 or -1")
    s = plane.signed_distance(mesh.vertices) * float(keep_side)
    s[np.abs(s) < snap] = 0.0
    keep = s >= 0.0
    if not keep.any():
        raise ValueError("plane does not intersect the surface (nothing kept)")

    new_index = np.full(mesh.num_vertices, -1, dtype=np.int64)
    new_index[keep] = np.arange(int(keep.sum()))
    positions: list[np.ndarray] = [v for v in mesh.vertices[keep]]
    kept_original = np.where(keep)[0]
    created_edges: list[tuple[int, int]] = []
    created_t: list[float] = []
    edge_cache: dict[tuple[int, int], int] = {}

    def crossing_vertex(a: int, b: int) -> int:
        key = (a, b) if a < b else (b, a)
        if key in edge_cache:
            return edge_cache[key]
        t = s[key[0]] / (s[key[0]] - s[key[1]])
        if t <= 0.0:
            idx = int(new_index[key[0]])
        elif t >= 1.0:
            idx = int(new_index[key[1]])
        else:
            p = mesh.vertices[key[0]] + t * (mesh.vertices[key[1]] - mesh.vertices[key[0]])
            idx = len(positions)
            positions.append(p)
            created_edges.append(key)
            created_t.append(float(t))
        edge_cache[key] = idx
        return idx

    has_uv = mesh.uv is not None
    tris: list[list[int]] = []
    uvs: list[np.ndarray] = []

    for ti, tri in enumerate(mesh.triangles):
        corner_uv = mesh.uv[ti] if has_uv else None
        flags = keep[tri]
        if flags.all():
            tris.append([int(new_index[v]) for v in tri])
            if has_uv:
                uvs.append(corner_uv.copy())
            continue
        if not flags.any():
            continue
        # Walk the triangle boundary, collecting kept corners and crossings.
        poly: list[int] = []
        poly_uv: list[np.ndarray] = []
        for k in range(3):
            a, b = int(tri[k]), int(tri[(k + 1) % 3])
            if keep[a]:
                poly.append(int(new_index[a]))
                if has_uv:
                    poly_uv.append(corner_uv[k])
            if keep[a] != keep[b]:
                idx = crossing_vertex(a, b)
                if not poly or poly[-1] != idx:
                    poly.append(idx)
                    if has_uv:
                        ka, kb = (k, (k + 1) % 3)
                        t = s[a] / (s[a] - s[b])
                        poly_uv.append(corner_uv[ka] + np.clip(t, 0.0, 1.0) * (corner_uv[kb] - corner_uv[ka]))
        # Remove a duplicated wrap-around vertex.
        if len(poly) > 1 and poly[0] == poly[-1]:
            poly = poly[:-1]
            if has_uv:
                poly_uv = poly_uv[:-1]
        if len(poly) < 3:
            continue
        for k in range(1, len(poly) - 1):
            a, b, c = poly[0], poly[k], poly[k + 1]
            if a == b or b == c or a == c:
                continue
            area = np.linalg.norm(np.cross(positions[b] - positions[a], positions[c] - positions[a]))
            if area < 1e-13:
                continue
            tris.append([a, b, c])
            if has_uv:
                uvs.append(np.stack([poly_uv[0], poly_uv[k], poly_uv[k + 1]]))

    if not tris:
        raise ValueError("plane does not intersect the surface (nothing kept)")
    out = Mesh(
        np.stack(positions),
        np.asarray(tris, dtype=np.int64),
        uv=np.clip(np.stack(uvs), 0.0, 1.0) if has_uv and uvs else None,
    )
    loop = _extract_single_loop(out)
    return SliceResult(
        mesh=out,
        loop=loop,
        kept_vertices=kept_original,
        created_edges=np.asarray(created_edges, dtype=np.int64).reshape(-1, 2),
        created_t=np.asarray(created_t, dtype=np.float64),
    )


def correspond_loops(head_points: np.ndarray, body_points: np.ndarray) -> np.ndarray:
    """Exact nearest body index per head vertex; ties break to lower index."""
    head_points = np.asarray(head_points, dtype=np.float64)
    body_points = np.asarray(body_points, dtype=np.float64)
    if len(head_points) == 0 or len(body_points) == 0:
        raise ValueError("loops must be non-empty")
    d2 = ((head_points[:, None, :] - body_points[None, :, :]) ** 2).sum(axis=2)
    return np.argmin(d2, axis=1).astype(np.int64)  # argmin takes the first (lowest) index on ties


@dataclass(frozen=True)
class StitchResult:
    mesh: Mesh
    body_vertex_count: int  # stitched indices [0, count) come from the body
    head_vertex_count: int
    body_triangle_count: int
    head_triangle_count: int
    band_triangles: np.ndarray  # indices of the new bridging triangles
    seam_body: np.ndarray  # stitched indices of the body loop
    seam_head: np.ndarray  # stitched indices of the head loop

    @property
    def body_vertices(self) -> np.ndarray:
        return np.arange(self.body_vertex_count)

    @property
    def head_vertices(self) -> np.ndarray:
        return np.arange(self.body_vertex_count, self.body_vertex_count + self.head_vertex_count)


def _loop_signed_area(points: np.ndarray, axis: np.ndarray) -> float:
    centroid = points.mean(axis=0)
    rel = points - centroid
    nxt = np.roll(rel, -1, axis=0)
    return float((np.cross(rel, nxt) @ axis).sum()) * 0.5


def stitch(body: Mesh, body_loop: BoundaryLoop, head: Mesh, head_loop: BoundaryLoop) -> StitchResult:
    """Bridge the two boundary loops into a single watertight mesh.

    Walks the head loop once, connecting each head vertex to its nearest
    body vertex and every intermediate body vertex since the previous
    connection; emits exactly len(head loop) + len(body loop) new
    triangles and uses every body boundary vertex at least once.
    """
    hb = head.vertices[head_loop.vertices]
    bb = body.vertices[body_loop.vertices]
    axis = hb.mean(axis=0) - bb.mean(axis=0)
    norm = np.linalg.norm(axis)
    axis = axis / norm if norm > 1e-12 else np.array([0.0, 1.0, 0.0])

    # Directed loops of consistently wound meshes run in opposite senses
    # around the shared axis; if not, reverse the head walk.
    a_body = _loop_signed_area(bb, axis)
    a_head = _loop_signed_area(hb, axis)
    head_order = head_loop.vertices
    if a_body * a_head > 0:
        warnings.warn("head loop orientation inconsistent with body loop; auto-reversing", stacklevel=2)
        head_order = head_order[::-1]
        hb = hb[::-1]

    # Walk the body loop against its directed order so band triangles
    # traverse each boundary edge opposite to its owning triangle.
    body_order = body_loop.vertices[::-1]
    bbr = bb[::-1]

    n = len(head_order)
    m = len(body_order)
    corr = correspond_loops(hb, bbr)
    advances = [(int(corr[(i + 1) % n]) - int(corr[i])) % m for i in range(n)]
    if sum(advances) != m:
        raise ValueError(
            f"interleaving failure: head-to-body correspondence winds {sum(advances) / m:.2f} times"
        )

    nb = body.num_vertices
    head_ids = head_order + nb  # head vertices appended after body vertices
    band = []
    for i in range(n):
        h_cur = int(head_ids[i])
        h_nxt = int(head_ids[(i + 1) % n])
        base = int(corr[i])
        for k in range(advances[i]):
            b0 = int(body_order[(base + k) % m])
            b1 = int(body_order[(base + k + 1) % m])
            band.append([h_cur, b0, b1])
        band.append([h_nxt, h_cur, int(body_order[(base + advances[i]) % m])])

    verts = np.concatenate([body.vertices, head.vertices])
    head_tris = head.triangles + nb
    tris = np.concatenate([body.triangles, head_tris, np.asarray(band, dtype=np.int64)])

    uv = None
    if body.uv is not None and head.uv is not None:
        band_uv = np.zeros((len(band), 3, 2))
        uv = np.concatenate([body.uv, head.uv, band_uv])
    mesh = Mesh(verts, tris, uv=uv)
    band_ids = np.arange(len(body.triangles) + len(head_tris), len(tris))
    return StitchResult(
        mesh=mesh,
        body_vertex_count=nb,
        head_vertex_count=head.num_vertices,
        body_triangle_count=len(body.triangles),
        head_triangle_count=len(head_tris),
        band_triangles=band_ids,
        seam_body=body_loop.vertices.copy(),
        seam_head=head_order + nb,
    )
