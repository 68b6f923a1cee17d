from .skeleton import (
    Joint,
    PoseWindow,
    Skeleton,
    forward_kinematics,
    load_pose_file,
    save_pose_file,
    windows_from_frames,
)
from .dqs import SkinningWeights, blend_dual_quats, blended_vertex_transforms, dqs_skin, rigid_to_dual_quat, dual_quat_apply
from .graph import EmbeddedGraph, build_embedded_graph, embedded_deform, embedded_deform_backward
from .character import (
    CharacterRig,
    ConstantPredictor,
    DeformationPredictor,
    PerPoseTablePredictor,
    ZeroPredictor,
    pose_character,
)

__all__ = [
    "Joint",
    "Skeleton",
    "PoseWindow",
    "forward_kinematics",
    "save_pose_file",
    "load_pose_file",
    "windows_from_frames",
    "SkinningWeights",
    "dqs_skin",
    "rigid_to_dual_quat",
    "dual_quat_apply",
    "blend_dual_quats",
    "blended_vertex_transforms",
    "EmbeddedGraph",
    "build_embedded_graph",
    "embedded_deform",
    "embedded_deform_backward",
    "CharacterRig",
    "DeformationPredictor",
    "ZeroPredictor",
    "ConstantPredictor",
    "PerPoseTablePredictor",
    "pose_character",
]
