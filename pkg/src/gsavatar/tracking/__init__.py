from .observations import CONVENTIONS, CameraObservation, ObservationFrame, load_observation_frame, save_observation_frame
from .eyelids import eyelid_diffs_from_observations, eyelid_postprocess, normalize_signed
from .motion import (
    TrackConfig,
    lmk2d_loss,
    lmk2d_points_loss,
    lmk2d_points_loss_grad,
    optimize_motion,
    select_face_cameras,
)
from .expressions import track_expressions

__all__ = [
    "CONVENTIONS",
    "CameraObservation",
    "ObservationFrame",
    "save_observation_frame",
    "load_observation_frame",
    "eyelid_postprocess",
    "eyelid_diffs_from_observations",
    "normalize_signed",
    "TrackConfig",
    "select_face_cameras",
    "lmk2d_loss",
    "lmk2d_points_loss",
    "lmk2d_points_loss_grad",
    "optimize_motion",
    "track_expressions",
]
