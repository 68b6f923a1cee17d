from .mesh import BarycentricAnchor, Mesh, PointSet
from .cameras import BehindCameraError, Camera, look_at, project, project_points, projection_jacobian, unproject
from .sampling import sample_surface, sample_surface_detailed
from .losses import (
    TV_NORMALIZATION,
    chamfer_bidirectional,
    chamfer_bidirectional_grad,
    chamfer_one_sided,
    chamfer_one_sided_grad,
    landmarks_from_barycentric,
    lmk3d_loss,
    lmk3d_loss_grad,
    tv_loss,
    tv_loss_grad,
)

__all__ = [
    "BarycentricAnchor",
    "Mesh",
    "PointSet",
    "BehindCameraError",
    "Camera",
    "look_at",
    "project",
    "project_points",
    "projection_jacobian",
    "unproject",
    "sample_surface",
    "sample_surface_detailed",
    "TV_NORMALIZATION",
    "chamfer_one_sided",
    "chamfer_one_sided_grad",
    "chamfer_bidirectional",
    "chamfer_bidirectional_grad",
    "landmarks_from_barycentric",
    "lmk3d_loss",
    "lmk3d_loss_grad",
    "tv_loss",
    "tv_loss_grad",
]
