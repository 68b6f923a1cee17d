"""Pinhole camera model: intrinsics + rigid world-to-camera extrinsics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..transforms import assert_rotation


class BehindCameraError(ValueError):
    pass


@dataclass(frozen=True)
class Camera:
    """Pinhole camera.

    fx, fy: focal lengths in pixels; cx, cy: principal point in pixels.
    rotation/translation: world-to-camera rigid transform (x_cam = R x + t).
    width, height: image resolution in pixels. near: minimum camera-space z.
    """

    fx: float
    fy: float
    cx: float
    cy: float
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    width: int = 512
    height: int = 512
    near: float = 1e-6

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be > 0")
        r = np.asarray(self.rotation, dtype=np.float64)
        t = np.asarray(self.translation, dtype=np.float64)
        assert_rotation(r, 1e-6, "camera rotation")
        r = r.copy()
        t = t.copy()
        r.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    def to_camera(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64)
        return points @ self.rotation.T + self.translation

    @property
    def position(self) -> np.ndarray:
        """Camera center in world coordinates."""
        return -self.rotation.T @ self.translation

    @property
    def view_direction(self) -> np.ndarray:
        """Optical axis (+z of the camera frame) in world coordinates."""
        return self.rotation.T @ np.array([0.0, 0.0, 1.0])

    def to_dict(self) -> dict:
        return {
            "fx": self.fx,
            "fy": self.fy,
            "cx": self.cx,
            "cy": self.cy,
            "rotation": np.asarray(self.rotation).tolist(),
            "translation": np.asarray(self.translation).tolist(),
            "width": self.width,
            "height": self.height,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Camera":
        return cls(
            fx=float(d["fx"]),
            fy=float(d["fy"]),
            cx=float(d["cx"]),
            cy=float(d["cy"]),
            rotation=np.asarray(d.get("rotation", np.eye(3).tolist())),
            translation=np.asarray(d.get("translation", [0.0, 0.0, 0.0])),
            width=int(d.get("width", 512)),
            height=int(d.get("height", 512)),
        )


def look_at(eye, target, up=(0.0, 1.0, 0.0), **kwargs) -> Camera:
    """Camera at `eye` looking toward `target` (camera +z points at the target)."""
    eye = np.asarray(eye, dtype=np.float64)
    fwd = np.asarray(target, dtype=np.float64) - eye
    fwd = fwd / np.linalg.norm(fwd)
    up = np.asarray(up, dtype=np.float64)
    right = np.cross(fwd, up)
    if np.linalg.norm(right) < 1e-9:
        up = np.array([0.0, 0.0, 1.0]) if abs(fwd[1]) > 0.9 else np.array([0.0, 1.0, 0.0])
        right = np.cross(fwd, up)
    right /= np.linalg.norm(right)
    down = np.cross(fwd, right)
    r = np.stack([right, down, fwd])  # rows: camera axes in world frame
    t = -r @ eye
    return Camera(rotation=r, translation=t, **kwargs)


def project(camera: Camera, point: np.ndarray) -> tuple[np.ndarray, float]:
    """Project one world point to (pixel (u, v), depth).

    Raises BehindCameraError when camera-space z <= near.
    """
    pc = camera.to_camera(np.asarray(point, dtype=np.float64))
    z = float(pc[2])
    if z <= camera.near:
        raise BehindCameraError(f"point behind camera (z={z:.3g})")
    u = camera.fx * pc[0] / z + camera.cx
    v = camera.fy * pc[1] / z + camera.cy
    return np.array([u, v]), z


def project_points(camera: Camera, points: np.ndarray):
    """Vectorized projection.

    Returns (pixels (N, 2), depths (N,), valid (N,) bool); invalid rows are
    points at or behind the near plane and carry unspecified pixel values.
    """
    pc = camera.to_camera(points)
    z = pc[:, 2]
    valid = z > camera.near
    zsafe = np.where(valid, z, 1.0)
    u = camera.fx * pc[:, 0] / zsafe + camera.cx
    v = camera.fy * pc[:, 1] / zsafe + camera.cy
    return np.stack([u, v], axis=1), z, valid


def unproject(camera: Camera, pixel: np.ndarray, depth: float) -> np.ndarray:
    """Inverse of `project`: world point on the camera ray at given depth."""
    u, v = np.asarray(pixel, dtype=np.float64)
    xc = np.array([(u - camera.cx) / camera.fx * depth, (v - camera.cy) / camera.fy * depth, depth])
    return camera.rotation.T @ (xc - camera.translation)


def projection_jacobian(camera: Camera, point_world: np.ndarray) -> np.ndarray:
    """d(pixel)/d(world point), a (2, 3) matrix at the given world point."""
    pc = camera.to_camera(np.asarray(point_world, dtype=np.float64))
    x, y, z = pc
    if z <= camera.near:
        raise BehindCameraError("cannot linearize projection behind camera")
    jc = np.array(
        [
            [camera.fx / z, 0.0, -camera.fx * x / (z * z)],
            [0.0, camera.fy / z, -camera.fy * y / (z * z)],
        ]
    )
    return jc @ camera.rotation
