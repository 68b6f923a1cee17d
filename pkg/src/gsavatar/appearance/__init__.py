from .texels import (
    LOG_SCALE_SLICE,
    OFFSET_SLICE,
    OPACITY_SLICE,
    PARAMS_PER_TEXEL,
    ROTATION_SLICE,
    SH_SLICE,
    TexelGaussianMap,
    bake_uv,
    default_params,
    load_texel_map,
    save_texel_map,
)
from .textures import WINDOW, MotionTextures, render_motion_textures
from .decoders import (
    ConstantDecoder,
    Decoder,
    ExternalDecoder,
    LinearDecoder,
    decode,
    load_decoder,
    save_decoder,
)
from .placement import PosedGaussians, SkinningContext, pose_gaussians, pose_gaussians_backward, texel_skin_transforms
from .fitting import AppearanceFitConfig, composite_over, fit_static_gaussians, psnr

__all__ = [
    "PARAMS_PER_TEXEL",
    "OFFSET_SLICE",
    "LOG_SCALE_SLICE",
    "ROTATION_SLICE",
    "OPACITY_SLICE",
    "SH_SLICE",
    "TexelGaussianMap",
    "bake_uv",
    "default_params",
    "save_texel_map",
    "load_texel_map",
    "WINDOW",
    "MotionTextures",
    "render_motion_textures",
    "Decoder",
    "ConstantDecoder",
    "LinearDecoder",
    "ExternalDecoder",
    "decode",
    "save_decoder",
    "load_decoder",
    "SkinningContext",
    "PosedGaussians",
    "pose_gaussians",
    "pose_gaussians_backward",
    "texel_skin_transforms",
    "AppearanceFitConfig",
    "composite_over",
    "fit_static_gaussians",
    "psnr",
]
