from .bundle import FORMAT_VERSIONS, AvatarBundle, StitchMeta, load_bundle, save_bundle
from .avatar import FrameInputs, StageTimings, canonical_geometry, decode_frame, evaluate_geometry, render_avatar
from .demo import build_demo_bundle

__all__ = [
    "FORMAT_VERSIONS",
    "AvatarBundle",
    "StitchMeta",
    "save_bundle",
    "load_bundle",
    "FrameInputs",
    "StageTimings",
    "canonical_geometry",
    "decode_frame",
    "evaluate_geometry",
    "render_avatar",
    "build_demo_bundle",
]
