"""Texel-anchored Gaussian parameter maps: UV baking and container I/O.

Each valid texel of an R x R atlas is pinned to a mesh triangle by
barycentric coordinates and carries 59 raw parameter values:

    offset (3) | log scale (3) | rotation quaternion (4) |
    opacity logit (1) | spherical harmonics (48)

Container (magic "EVAG", version 1, little-endian):

    magic        4 bytes  b"EVAG"
    version      uint32
    resolution   uint32
    texel_count  uint32
    coords       uint32[count * 2]   (row, col)
    triangles    uint32[count]
    barycentric  float32[count * 3]
    params       float32[count * 59]
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from ..geometry.mesh import Mesh

PARAMS_PER_TEXEL = 59  # 3 + 3 + 4 + 1 + 48
OFFSET_SLICE = slice(0, 3)
LOG_SCALE_SLICE = slice(3, 6)
ROTATION_SLICE = slice(6, 10)
OPACITY_SLICE = slice(10, 11)
SH_SLICE = slice(11, 59)

MAGIC = b"EVAG"
VERSION = 1


@dataclass(frozen=True)
class TexelGaussianMap:
    resolution: int
    coords: np.ndarray  # (M, 2) int (row, col)
    triangles: np.ndarray  # (M,) triangle per texel
    barys: np.ndarray  # (M, 3)
    params: np.ndarray  # (M, 59) raw values

    def __post_init__(self):
        c = np.asarray(self.coords, dtype=np.int64)
        t = np.asarray(self.triangles, dtype=np.int64)
        b = np.asarray(self.barys, dtype=np.float64)
        p = np.asarray(self.params, dtype=np.float64)
        m = len(c)
        if c.shape != (m, 2) or t.shape != (m,) or b.shape != (m, 3) or p.shape != (m, PARAMS_PER_TEXEL):
            raise ValueError("inconsistent texel map arrays")
        if m:
            if b.min() < -1e-6 or np.abs(b.sum(axis=1) - 1.0).max() > 1e-6:
                raise ValueError("barycentric coordinates must be >= 0 and sum to 1")
            if c.min() < 0 or c.max() >= self.resolution:
                raise ValueError("texel coordinates out of range")
        object.__setattr__(self, "coords", c)
        object.__setattr__(self, "triangles", t)
        object.__setattr__(self, "barys", np.clip(b, 0.0, None) / np.clip(b, 0.0, None).sum(axis=1, keepdims=True) if m else b)
        object.__setattr__(self, "params", p)

    @property
    def num_texels(self) -> int:
        return len(self.coords)

    def validity_mask(self) -> np.ndarray:
        mask = np.zeros((self.resolution, self.resolution), dtype=bool)
        mask[self.coords[:, 0], self.coords[:, 1]] = True
        return mask

    def uv_centers(self) -> np.ndarray:
        """UV coordinates of the texel centers, (M, 2)."""
        return (self.coords[:, ::-1] + 0.5) / self.resolution

    def with_params(self, params: np.ndarray) -> "TexelGaussianMap":
        params = np.asarray(params, dtype=np.float64)
        if params.shape != (self.num_texels, PARAMS_PER_TEXEL):
            raise ValueError("params must be (num_texels, 59)")
        return replace(self, params=params)


def default_params(num_texels: int, spacing: np.ndarray | float = 0.01) -> np.ndarray:
    """Neutral parameter block: zero offset, scale from texel spacing,
    identity rotation, mid opacity, flat mid-gray color."""
    p = np.zeros((num_texels, PARAMS_PER_TEXEL))
    sp = np.broadcast_to(np.maximum(np.asarray(spacing, dtype=np.float64), 1e-6), (num_texels,))
    p[:, LOG_SCALE_SLICE] = np.log(sp)[:, None]
    p[:, ROTATION_SLICE.start] = 1.0  # identity quaternion (w component)
    return p


def bake_uv(mesh: Mesh, resolution: int, triangles: np.ndarray | None = None) -> TexelGaussianMap:
    """Anchor each covered texel center to its UV triangle.

    `triangles` restricts baking to a chart (triangle subset). Texels
    claimed strictly inside two triangles raise an overlap error; texels
    on shared edges go to the first claimant.
    """
    if mesh.uv is None:
        raise ValueError("mesh has no UV atlas")
    if resolution < 1:
        raise ValueError("resolution must be >= 1")
    tri_ids = np.arange(mesh.num_triangles) if triangles is None else np.asarray(triangles, dtype=np.int64)

    claimed = {}  # (row, col) -> (tri, bary, interior)
    for ti in tri_ids:
        uv = mesh.uv[ti]  # (3, 2)
        mat = np.array(
            [[uv[1, 0] - uv[0, 0], uv[2, 0] - uv[0, 0]], [uv[1, 1] - uv[0, 1], uv[2, 1] - uv[0, 1]]]
        )
        det = mat[0, 0] * mat[1, 1] - mat[0, 1] * mat[1, 0]
        if abs(det) < 1e-14:
            continue  # zero UV area (e.g. seam-band filler)
        inv = np.array([[mat[1, 1], -mat[0, 1]], [-mat[1, 0], mat[0, 0]]]) / det
        lo = np.floor(uv.min(axis=0) * resolution).astype(int)
        hi = np.ceil(uv.max(axis=0) * resolution).astype(int)
        lo = np.clip(lo, 0, resolution - 1)
        hi = np.clip(hi, 0, resolution)
        for col in range(lo[0], hi[0]):
            for row in range(lo[1], hi[1]):
                center = np.array([(col + 0.5) / resolution, (row + 0.5) / resolution])
                st = inv @ (center - uv[0])
                bary = np.array([1.0 - st[0] - st[1], st[0], st[1]])
                if bary.min() < -1e-9:
                    continue
                interior = bary.min() > 1e-7
                key = (row, col)
                if key in claimed:
                    if interior and claimed[key][2]:
                        raise ValueError(
                            f"overlapping UV charts: texel {key} claimed by triangles "
                            f"{claimed[key][0]} and {ti}"
                        )
                    continue
                claimed[key] = (int(ti), bary, interior)

    if not claimed:
        raise ValueError("no texels covered by the UV atlas")
    keys = sorted(claimed.keys())
    coords = np.asarray(keys, dtype=np.int64)
    tris = np.asarray([claimed[k][0] for k in keys], dtype=np.int64)
    barys = np.stack([np.clip(claimed[k][1], 0.0, None) for k in keys])
    barys = barys / barys.sum(axis=1, keepdims=True)

    # Scale default: half the world-space texel footprint per triangle.
    areas3d = mesh.triangle_areas()[tris]
    uv_corners = mesh.uv[tris]
    e1 = uv_corners[:, 1] - uv_corners[:, 0]
    e2 = uv_corners[:, 2] - uv_corners[:, 0]
    uv_area = 0.5 * np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    density = np.sqrt(areas3d / np.maximum(uv_area, 1e-12))  # world units per uv unit
    spacing = 0.5 * density / resolution
    params = default_params(len(coords), np.maximum(spacing, 1e-6))
    return TexelGaussianMap(resolution=resolution, coords=coords, triangles=tris, barys=barys, params=params)


def save_texel_map(path, texmap: TexelGaussianMap) -> None:
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<III", VERSION, texmap.resolution, texmap.num_texels))
        f.write(texmap.coords.astype("<u4").tobytes())
        f.write(texmap.triangles.astype("<u4").tobytes())
        f.write(texmap.barys.astype("<f4").tobytes())
        f.write(texmap.params.astype("<f4").tobytes())


def load_texel_map(path) -> TexelGaussianMap:
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise ValueError("not a texel map container (bad magic)")
    version, resolution, count = struct.unpack_from("<III", data, 4)
    if version != VERSION:
        raise ValueError(f"unsupported texel map version {version}")
    off = 16

    def take(n, dtype):
        nonlocal off
        arr = np.frombuffer(data, dtype=dtype, count=n, offset=off)
        off += arr.nbytes
        return arr

    coords = take(count * 2, "<u4").reshape(count, 2).astype(np.int64)
    tris = take(count, "<u4").astype(np.int64)
    barys = take(count * 3, "<f4").reshape(count, 3).astype(np.float64)
    params = take(count * PARAMS_PER_TEXEL, "<f4").reshape(count, PARAMS_PER_TEXEL).astype(np.float64)
    barys = np.clip(barys, 0.0, None)
    barys = barys / barys.sum(axis=1, keepdims=True)
    return TexelGaussianMap(resolution=resolution, coords=coords, triangles=tris, barys=barys, params=params)
