"""Procedural test geometry: spheres, cylinders, boxes, grids."""

from __future__ import annotations

import numpy as np

from .mesh import Mesh


def uv_sphere(
    radius: float = 1.0, rings: int = 8, segments: int = 12, center=(0.0, 0.0, 0.0), with_uv: bool = False
) -> Mesh:
    """Latitude-longitude sphere; poles are single vertices."""
    center = np.asarray(center, dtype=np.float64)
    verts = [center + np.array([0.0, radius, 0.0])]
    for i in range(1, rings):
        phi = np.pi * i / rings
        for j in range(segments):
            theta = 2 * np.pi * j / segments
            verts.append(
                center
                + radius * np.array([np.sin(phi) * np.cos(theta), np.cos(phi), np.sin(phi) * np.sin(theta)])
            )
    verts.append(center + np.array([0.0, -radius, 0.0]))
    south = len(verts) - 1
    tris = []
    ring = lambda i, j: 1 + (i - 1) * segments + (j % segments)
    for j in range(segments):
        tris.append([0, ring(1, j + 1), ring(1, j)])
    for i in range(1, rings - 1):
        for j in range(segments):
            a, b = ring(i, j), ring(i, j + 1)
            c, d = ring(i + 1, j), ring(i + 1, j + 1)
            tris.append([a, b, d])
            tris.append([a, d, c])
    for j in range(segments):
        tris.append([south, ring(rings - 1, j), ring(rings - 1, j + 1)])
    tris = np.asarray(tris, dtype=np.int64)
    uv = None
    if with_uv:
        uv = _sphere_corner_uv(np.asarray(verts) - center, tris, radius, rings, segments)
    return Mesh(np.asarray(verts), tris, uv=uv)


def _sphere_corner_uv(rel, tris, radius, rings, segments):
    """Equirectangular per-corner UVs with seam-continuous wrap handling."""
    y = np.clip(rel[:, 1] / radius, -1.0, 1.0)
    v = np.arccos(y) / np.pi
    u = (np.arctan2(rel[:, 2], rel[:, 0]) / (2 * np.pi)) % 1.0
    uv = np.stack([u, v], axis=1)[tris]  # (T, 3, 2)
    for k in range(len(uv)):
        us = uv[k, :, 0]
        if us.max() - us.min() > 0.5:
            uv[k, us < 0.5, 0] += 1.0 - 1e-9
        # poles have undefined longitude; reuse a neighbor's
        rows = np.abs(np.abs(uv[k, :, 1] * 2 - 1.0) - 1.0) < 1e-12
        if rows.any() and not rows.all():
            uv[k, rows, 0] = uv[k, ~rows, 0].mean()
    return np.clip(uv, 0.0, 1.0)


def open_cylinder(
    radius: float = 0.5,
    height: float = 2.0,
    rings: int = 6,
    segments: int = 12,
    center=(0.0, 0.0, 0.0),
    with_uv: bool = False,
) -> Mesh:
    """Cylinder side wall along +y, open at both ends (two boundary loops)."""
    center = np.asarray(center, dtype=np.float64)
    verts = []
    for i in range(rings + 1):
        y = height * (i / rings - 0.5)
        for j in range(segments):
            theta = 2 * np.pi * j / segments
            verts.append(center + np.array([radius * np.cos(theta), y, radius * np.sin(theta)]))
    tris = []
    idx = lambda i, j: i * segments + (j % segments)
    for i in range(rings):
        for j in range(segments):
            a, b = idx(i, j), idx(i, j + 1)
            c, d = idx(i + 1, j), idx(i + 1, j + 1)
            tris.append([a, d, b])
            tris.append([a, c, d])
    tris = np.asarray(tris, dtype=np.int64)
    uv = None
    if with_uv:
        # Unwrap: u around the circumference (seam duplicated in uv only), v along height.
        uv = np.empty((len(tris), 3, 2))
        for k, t in enumerate(tris):
            for c in range(3):
                vid = t[c]
                i, j = divmod(vid, segments)
                u = j / segments
                uv[k, c] = [u, i / rings]
            # keep the wrap-around triangles continuous in u
            us = uv[k, :, 0]
            if us.max() - us.min() > 0.5:
                uv[k, us < 0.5, 0] += 1.0 - 1e-9
        uv = np.clip(uv, 0.0, 1.0)
    return Mesh(np.asarray(verts), tris, uv=uv)


def capped_cylinder(
    radius: float = 0.5,
    height: float = 2.0,
    rings: int = 6,
    segments: int = 12,
    center=(0.0, 0.0, 0.0),
    with_uv: bool = False,
) -> Mesh:
    """Closed cylinder: side wall plus single-vertex end caps.

    With UVs, the wall unwraps to [0, 1]^2 and cap triangles receive a
    degenerate (zero-area) UV footprint, which excludes them from texel
    baking by construction.
    """
    wall = open_cylinder(radius, height, rings, segments, center, with_uv=with_uv)
    center = np.asarray(center, dtype=np.float64)
    verts = list(wall.vertices)
    bottom = len(verts)
    verts.append(center + np.array([0.0, -height / 2, 0.0]))
    top = len(verts)
    verts.append(center + np.array([0.0, height / 2, 0.0]))
    tris = list(wall.triangles)
    uv = None if wall.uv is None else list(wall.uv)
    for j in range(segments):
        tris.append([bottom, j, (j + 1) % segments])
        tris.append([top, rings * segments + (j + 1) % segments, rings * segments + j])
        if uv is not None:
            uv.append(np.zeros((3, 2)))
            uv.append(np.zeros((3, 2)))
    return Mesh(np.asarray(verts), np.asarray(tris, dtype=np.int64), uv=None if uv is None else np.stack(uv))


def box(size=(1.0, 1.0, 1.0), center=(0.0, 0.0, 0.0)) -> Mesh:
    sx, sy, sz = np.asarray(size, dtype=np.float64) / 2.0
    c = np.asarray(center, dtype=np.float64)
    corners = np.array(
        [[x, y, z] for x in (-sx, sx) for y in (-sy, sy) for z in (-sz, sz)]
    ) + c
    quads = [
        (0, 1, 3, 2),
        (4, 6, 7, 5),
        (0, 4, 5, 1),
        (2, 3, 7, 6),
        (0, 2, 6, 4),
        (1, 5, 7, 3),
    ]
    tris = []
    for a, b, cc, d in quads:
        tris.append([a, b, cc])
        tris.append([a, cc, d])
    return Mesh(corners, np.asarray(tris, dtype=np.int64))


def grid_patch(nx: int = 4, ny: int = 4, size: float = 1.0, with_uv: bool = True) -> Mesh:
    """Flat z=0 patch of (nx x ny) quads split into triangles, UV = position."""
    xs = np.linspace(0.0, size, nx + 1)
    ys = np.linspace(0.0, size, ny + 1)
    verts = np.array([[x, y, 0.0] for y in ys for x in xs])
    tris = []
    vid = lambda i, j: j * (nx + 1) + i
    for j in range(ny):
        for i in range(nx):
            a, b, c, d = vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)
            tris.append([a, b, c])
            tris.append([a, c, d])
    tris = np.asarray(tris, dtype=np.int64)
    uv = None
    if with_uv:
        uv01 = verts[:, :2] / size
        uv = uv01[tris]
    return Mesh(verts, tris, uv=uv)
