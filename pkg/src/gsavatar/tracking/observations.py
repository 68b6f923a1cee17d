"""Multi-view observation frames: detected 2D landmarks plus an optional
per-frame surface reconstruction. Detectors are external; these files are
the interface.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..geometry.mesh import PointSet
from ..geometry.meshio import load_ply, save_ply

CONVENTIONS = {"dense105": 105, "fan51": 51}


@dataclass(frozen=True)
class CameraObservation:
    convention: str  # "dense105" | "fan51"
    points: np.ndarray  # (N, 2) pixels
    confidences: np.ndarray  # (N,) in [0, 1]

    def __post_init__(self):
        if self.convention not in CONVENTIONS:
            raise ValueError(f"unknown landmark convention {self.convention!r}")
        pts = np.asarray(self.points, dtype=np.float64)
        expected = CONVENTIONS[self.convention]
        if pts.shape != (expected, 2):
            raise ValueError(f"{self.convention} expects {expected} points, got {pts.shape}")
        conf = (
            np.ones(expected)
            if self.confidences is None
            else np.asarray(self.confidences, dtype=np.float64)
        )
        if conf.shape != (expected,) or conf.min() < 0 or conf.max() > 1:
            raise ValueError("confidences must be per-landmark values in [0, 1]")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "confidences", conf)


@dataclass(frozen=True)
class ObservationFrame:
    cameras: dict[str, CameraObservation] = field(default_factory=dict)
    scan: PointSet | None = None


def save_observation_frame(path, frame: ObservationFrame) -> None:
    path = Path(path)
    doc: dict = {"cameras": {}}
    for cam_id, obs in frame.cameras.items():
        doc["cameras"][cam_id] = {
            "convention": obs.convention,
            "points": obs.points.tolist(),
            "confidences": obs.confidences.tolist(),
        }
    if frame.scan is not None:
        scan_path = path.with_suffix(".scan.ply")
        save_ply(scan_path, frame.scan)
        doc["scan"] = scan_path.name
    path.write_text(json.dumps(doc))


def load_observation_frame(path) -> ObservationFrame:
    path = Path(path)
    doc = json.loads(path.read_text())
    cameras = {
        cam_id: CameraObservation(
            convention=o["convention"],
            points=np.asarray(o["points"]),
            confidences=np.asarray(o["confidences"]) if "confidences" in o else None,
        )
        for cam_id, o in doc.get("cameras", {}).items()
    }
    scan = None
    if "scan" in doc:
        data = load_ply(path.parent / doc["scan"])
        scan = PointSet(data if isinstance(data, np.ndarray) else data.vertices)
    return ObservationFrame(cameras=cameras, scan=scan)
