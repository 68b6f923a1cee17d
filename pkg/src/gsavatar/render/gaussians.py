"""World-space Gaussian batches and render targets."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .sh import NUM_COEFFS


@dataclass(frozen=True)
class Gaussians:
    """Struct-of-arrays batch of world-space Gaussians.

    positions (N, 3); scales (N, 3) strictly positive; rotations (N, 4)
    unit wxyz quaternions; opacities (N,) in (0, 1); sh (N, 48).
    """

    positions: np.ndarray
    scales: np.ndarray
    rotations: np.ndarray
    opacities: np.ndarray
    sh: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.positions, dtype=np.float64)
        s = np.asarray(self.scales, dtype=np.float64)
        q = np.asarray(self.rotations, dtype=np.float64)
        a = np.asarray(self.opacities, dtype=np.float64)
        c = np.asarray(self.sh, dtype=np.float64)
        n = len(p)
        if p.shape != (n, 3) or s.shape != (n, 3) or q.shape != (n, 4) or a.shape != (n,) or c.shape != (n, NUM_COEFFS):
            raise ValueError("inconsistent gaussian array shapes")
        if n:
            if s.min() <= 0:
                raise ValueError("scales must be strictly positive")
            if a.min() <= 0 or a.max() >= 1:
                raise ValueError("opacities must lie in (0, 1)")
            norms = np.linalg.norm(q, axis=1)
            if np.abs(norms - 1.0).max() > 1e-6:
                raise ValueError("rotations must be unit quaternions")
            q = q / norms[:, None]
        for arr in (p, s, q, a, c):
            arr.setflags(write=False)
        object.__setattr__(self, "positions", p)
        object.__setattr__(self, "scales", s)
        object.__setattr__(self, "rotations", q)
        object.__setattr__(self, "opacities", a)
        object.__setattr__(self, "sh", c)

    def __len__(self) -> int:
        return len(self.positions)

    @classmethod
    def concatenate(cls, parts: list["Gaussians"]) -> "Gaussians":
        return cls(
            np.concatenate([p.positions for p in parts]),
            np.concatenate([p.scales for p in parts]),
            np.concatenate([p.rotations for p in parts]),
            np.concatenate([p.opacities for p in parts]),
            np.concatenate([p.sh for p in parts]),
        )


@dataclass
class RenderTarget:
    """Output raster: float RGB in [0, 1] plus accumulated alpha.

    Composites as image = foreground + (1 - alpha) * background.
    """

    width: int
    height: int
    background: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.background = np.asarray(self.background, dtype=np.float64)
        if self.background.shape != (3,):
            raise ValueError("background must be an RGB triple")
        if self.width < 1 or self.height < 1:
            raise ValueError("resolution must be positive")
