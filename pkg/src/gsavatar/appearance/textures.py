"""Motion-aware textures: UV-space position and normal maps rendered from
a short window of posed meshes, the decoders' input signal.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..geometry.mesh import Mesh
from .texels import TexelGaussianMap

WINDOW = 3  # frames t, t-1, t-2


@dataclass(frozen=True)
class MotionTextures:
    """Per-texel positions/normals over the 3-frame window plus global
    conditioning vectors.

    position/normal: (3, M, 3) arrays over the map's valid texels, frame
    order newest first (t, t-1, t-2).
    """

    position: np.ndarray
    normal: np.ndarray
    head_conditioning: np.ndarray = field(default_factory=lambda: np.zeros(0))
    lighting: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        p = np.asarray(self.position, dtype=np.float64)
        n = np.asarray(self.normal, dtype=np.float64)
        if p.ndim != 3 or p.shape[0] != WINDOW or p.shape[2] != 3 or p.shape != n.shape:
            raise ValueError(f"textures must be ({WINDOW}, M, 3) position/normal arrays")
        object.__setattr__(self, "position", p)
        object.__setattr__(self, "normal", n)
        object.__setattr__(self, "head_conditioning", np.asarray(self.head_conditioning, dtype=np.float64).ravel())
        object.__setattr__(self, "lighting", np.asarray(self.lighting, dtype=np.float64).ravel())

    @property
    def num_texels(self) -> int:
        return self.position.shape[1]

    def texel_features(self) -> np.ndarray:
        """Flattened per-texel feature rows (M, 18): positions then normals
        over the window."""
        m = self.num_texels
        return np.concatenate(
            [self.position.transpose(1, 0, 2).reshape(m, -1), self.normal.transpose(1, 0, 2).reshape(m, -1)],
            axis=1,
        )

    def to_images(self, texmap: TexelGaussianMap):
        """Expand to dense (3, R, R, 3) position/normal images (zeros at
        invalid texels), for inspection and export."""
        r = texmap.resolution
        pos = np.zeros((WINDOW, r, r, 3))
        nrm = np.zeros((WINDOW, r, r, 3))
        rows, cols = texmap.coords[:, 0], texmap.coords[:, 1]
        pos[:, rows, cols] = self.position
        nrm[:, rows, cols] = self.normal
        return pos, nrm


def render_motion_textures(
    meshes: list[Mesh],
    texmap: TexelGaussianMap,
    head_conditioning: np.ndarray | None = None,
    lighting: np.ndarray | None = None,
) -> MotionTextures:
    """Bake the window of posed meshes into per-texel positions/normals.

    meshes: [current, previous, previous-previous]; all must share the
    topology the map was baked on.
    """
    if len(meshes) != WINDOW:
        raise ValueError(f"expected a window of {WINDOW} meshes")
    tris = texmap.triangles
    positions = []
    normals = []
    for mesh in meshes:
        if tris.max(initial=-1) >= mesh.num_triangles:
            raise ValueError("mesh topology does not match the texel map")
        corners = mesh.triangles[tris]  # (M, 3)
        pos = np.einsum("mk,mkd->md", texmap.barys, mesh.vertices[corners])
        vn = mesh.vertex_normals()
        nrm = np.einsum("mk,mkd->md", texmap.barys, vn[corners])
        norm = np.linalg.norm(nrm, axis=1, keepdims=True)
        norm[norm < 1e-12] = 1.0
        positions.append(pos)
        normals.append(nrm / norm)
    return MotionTextures(
        position=np.stack(positions),
        normal=np.stack(normals),
        head_conditioning=np.zeros(0) if head_conditioning is None else head_conditioning,
        lighting=np.zeros(0) if lighting is None else lighting,
    )
