"""Skeleton, forward kinematics, pose windows, and pose-file I/O.

Pose vectors are laid out per the skeleton's dof blocks: each block is a
3-vector and is either a joint's axis-angle rotation or the root's world
translation. The root translation is applied in world space after the
rotation chain, so adding a delta to it translates every posed point by
exactly that delta.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..transforms import rotvec_to_matrix


@dataclass(frozen=True)
class Joint:
    name: str
    parent: str | None
    rest_rotation: np.ndarray  # rotvec (3,)
    rest_translation: np.ndarray  # (3,)
    dofs: tuple[str, ...] = ("rotation",)  # subset of {"translation", "rotation"}


class Skeleton:
    """Named tree of joints with a fixed pose-vector layout."""

    def __init__(self, joints: list[Joint]):
        names = [j.name for j in joints]
        if len(set(names)) != len(names):
            raise ValueError("duplicate joint names")
        roots = [j for j in joints if j.parent is None]
        if len(roots) != 1:
            raise ValueError(f"expected exactly one root joint, got {len(roots)}")
        by_name = {j.name: j for j in joints}
        for j in joints:
            if j.parent is not None and j.parent not in by_name:
                raise ValueError(f"joint {j.name!r} has unknown parent {j.parent!r}")
        # Topological order: parents before children.
        ordered: list[Joint] = []
        seen: set[str] = set()

        def visit(j: Joint):
            if j.name in seen:
                return
            if j.parent is not None:
                visit(by_name[j.parent])
            seen.add(j.name)
            ordered.append(j)

        for j in joints:
            visit(j)
        self.joints = ordered
        self.index = {j.name: i for i, j in enumerate(ordered)}
        self.parent_index = [self.index[j.parent] if j.parent else -1 for j in ordered]
        layout: list[tuple[int, str]] = []
        for i, j in enumerate(ordered):
            for dof in j.dofs:
                if dof not in ("translation", "rotation"):
                    raise ValueError(f"unknown dof kind {dof!r}")
                if dof == "translation" and j.parent is not None:
                    raise ValueError("translation dofs are only supported on the root")
                layout.append((i, dof))
        self.dof_layout = layout
        self.d_body = 3 * len(layout)

    @property
    def num_joints(self) -> int:
        return len(self.joints)

    @property
    def joint_names(self) -> list[str]:
        return [j.name for j in self.joints]

    def root_translation_slice(self) -> slice | None:
        for k, (_, kind) in enumerate(self.dof_layout):
            if kind == "translation":
                return slice(3 * k, 3 * k + 3)
        return None

    def normalize_pose(self, pose: np.ndarray) -> np.ndarray:
        """Pose with the root translation zeroed (rotations kept)."""
        pose = np.asarray(pose, dtype=np.float64)
        out = pose.copy()
        sl = self.root_translation_slice()
        if sl is not None:
            out[..., sl] = 0.0
        return out

    def forward_kinematics(self, pose: np.ndarray):
        """World transform per joint for one pose vector.

        Returns (rotations (J, 3, 3), translations (J, 3)). The rest pose
        (all-zero vector) reproduces the rest transforms.
        """
        pose = np.asarray(pose, dtype=np.float64)
        if pose.shape != (self.d_body,):
            raise ValueError(f"pose must have length {self.d_body}, got {pose.shape}")
        deltas_r = [np.eye(3) for _ in self.joints]
        root_shift = np.zeros(3)
        for k, (ji, kind) in enumerate(self.dof_layout):
            block = pose[3 * k : 3 * k + 3]
            if kind == "rotation":
                deltas_r[ji] = rotvec_to_matrix(block)
            else:
                root_shift = block
        rots = np.empty((self.num_joints, 3, 3))
        trans = np.empty((self.num_joints, 3))
        for i, j in enumerate(self.joints):
            local_r = rotvec_to_matrix(j.rest_rotation) @ deltas_r[i]
            local_t = j.rest_translation
            p = self.parent_index[i]
            if p < 0:
                rots[i] = local_r
                trans[i] = local_t
            else:
                rots[i] = rots[p] @ local_r
                trans[i] = rots[p] @ local_t + trans[p]
        trans = trans + root_shift
        return rots, trans

    def rest_transforms(self):
        return self.forward_kinematics(np.zeros(self.d_body))

    def to_dict(self) -> dict:
        return {
            "joints": [
                {
                    "name": j.name,
                    "parent": j.parent,
                    "rest_rotation": np.asarray(j.rest_rotation).tolist(),
                    "rest_translation": np.asarray(j.rest_translation).tolist(),
                    "dofs": list(j.dofs),
                }
                for j in self.joints
            ]
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Skeleton":
        joints = [
            Joint(
                name=j["name"],
                parent=j.get("parent"),
                rest_rotation=np.asarray(j.get("rest_rotation", [0.0, 0.0, 0.0])),
                rest_translation=np.asarray(j.get("rest_translation", [0.0, 0.0, 0.0])),
                dofs=tuple(j.get("dofs", ["rotation"])),
            )
            for j in d["joints"]
        ]
        return cls(joints)

    def save_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load_json(cls, path) -> "Skeleton":
        return cls.from_dict(json.loads(Path(path).read_text()))


def forward_kinematics(skeleton: Skeleton, pose: np.ndarray):
    return skeleton.forward_kinematics(pose)


@dataclass(frozen=True)
class PoseWindow:
    """W consecutive pose vectors; the last row is the current frame."""

    frames: np.ndarray  # (W, D_body)
    frame_time: float = 1.0 / 25.0

    def __post_init__(self):
        f = np.asarray(self.frames, dtype=np.float64)
        if f.ndim != 2 or len(f) < 1:
            raise ValueError("window needs at least one frame of uniform length")
        f = f.copy()
        f.setflags(write=False)
        object.__setattr__(self, "frames", f)

    @property
    def width(self) -> int:
        return len(self.frames)

    @property
    def current(self) -> np.ndarray:
        return self.frames[-1]


# Pose sequence container: header = 3 little-endian uint32 (window size W,
# pose dimension D_body, frame count F) + 1 little-endian float32 frame
# time in seconds, followed by F*D_body little-endian float32 values in
# frame-major order.

def save_pose_file(path, frames: np.ndarray, window: int, frame_time: float = 1.0 / 25.0) -> None:
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 2:
        raise ValueError("frames must be (F, D_body)")
    with open(path, "wb") as f:
        f.write(struct.pack("<IIIf", int(window), frames.shape[1], frames.shape[0], float(frame_time)))
        f.write(frames.astype("<f4").tobytes())


def load_pose_file(path):
    """Returns (frames (F, D_body) float64, window W, frame_time)."""
    data = Path(path).read_bytes()
    if len(data) < 16:
        raise ValueError("pose file too short")
    w, d, n, frame_time = struct.unpack_from("<IIIf", data, 0)
    expected = 16 + 4 * d * n
    if len(data) != expected:
        raise ValueError(f"pose file length mismatch (expected {expected} bytes, got {len(data)})")
    frames = np.frombuffer(data, dtype="<f4", count=d * n, offset=16).reshape(n, d).astype(np.float64)
    return frames, int(w), float(frame_time)


def windows_from_frames(frames: np.ndarray, window: int, frame_time: float = 1.0 / 25.0) -> list[PoseWindow]:
    """Sliding windows over a frame sequence, padded by repeating frame 0."""
    frames = np.asarray(frames, dtype=np.float64)
    out = []
    for t in range(len(frames)):
        rows = [frames[max(0, t - window + 1 + k)] for k in range(window)]
        out.append(PoseWindow(np.stack(rows), frame_time))
    return out
