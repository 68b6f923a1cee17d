from .gaussians import Gaussians, RenderTarget
from .sh import NUM_BASIS, NUM_COEFFS, eval_sh, eval_sh_backward, sh_basis, sh_basis_grad
from .projection import COVARIANCE_FLOOR, ProjectedGaussians, project_gaussian, project_gaussian_backward
from .raster import (
    ALPHA_MAX,
    CUTOFF_SIGMAS,
    TRANSMITTANCE_MIN,
    RenderResult,
    rasterize_backward,
    rasterize_reference,
    rasterize_tiled,
)
from .photometric import photometric_loss, photometric_loss_grad, ssim, ssim_grad
from .image_io import load_png, load_raw, png_bytes, save_png, save_raw, to_uint8

__all__ = [
    "Gaussians",
    "RenderTarget",
    "NUM_BASIS",
    "NUM_COEFFS",
    "eval_sh",
    "eval_sh_backward",
    "sh_basis",
    "sh_basis_grad",
    "COVARIANCE_FLOOR",
    "ProjectedGaussians",
    "project_gaussian",
    "project_gaussian_backward",
    "ALPHA_MAX",
    "CUTOFF_SIGMAS",
    "TRANSMITTANCE_MIN",
    "RenderResult",
    "rasterize_reference",
    "rasterize_tiled",
    "rasterize_backward",
    "photometric_loss",
    "photometric_loss_grad",
    "ssim",
    "ssim_grad",
    "save_png",
    "load_png",
    "png_bytes",
    "save_raw",
    "load_raw",
    "to_uint8",
]
