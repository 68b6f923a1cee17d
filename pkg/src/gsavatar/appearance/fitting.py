"""Static Gaussian fitting: optimize constant decoder parameters against
multi-view images through the reference rasterizer.

The photometric loss is L1 + structural-similarity; the background color
is re-rolled per iteration (targets carry an alpha matte and are
composited over the same color), and a positional term keeps offsets from
drifting off the surface.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..geometry.cameras import Camera
from ..geometry.mesh import Mesh
from ..optim import Adam, FitReport
from ..render.gaussians import RenderTarget
from ..render.photometric import photometric_loss_grad
from ..render.raster import rasterize_backward, rasterize_reference
from .decoders import ConstantDecoder
from .placement import OFFSET_SLICE, SkinningContext, pose_gaussians, pose_gaussians_backward
from .texels import SH_SLICE, TexelGaussianMap


def _sh_update_mask(degree: int) -> np.ndarray:
    """Per-coefficient mask enabling bands up to `degree` (0..3)."""
    bands = np.array([0] + [1] * 3 + [2] * 5 + [3] * 7)
    return np.repeat(bands <= degree, 3).astype(np.float64)


@dataclass
class AppearanceFitConfig:
    iterations: int = 800
    lr: float = 0.01
    l1_weight: float = 0.9
    ssim_weight: float = 0.1
    position_reg: float = 0.1  # weight on mean squared texel offset
    sh_degree: int = 3  # highest spherical-harmonics band to optimize
    idmrf_weight: float = 0.01  # recorded for parity with the training recipe; term not computed
    random_background: bool = True
    patience: int = 200
    tol: float = 1e-7
    warmup: int = 30
    lr_decay: float = 0.05
    seed: int = 0


def composite_over(rgba: np.ndarray, background: np.ndarray) -> np.ndarray:
    """Composite an RGBA target over a background color."""
    rgba = np.asarray(rgba, dtype=np.float64)
    if rgba.ndim != 3 or rgba.shape[2] not in (3, 4):
        raise ValueError("target must be RGB or RGBA")
    if rgba.shape[2] == 3:
        return rgba
    alpha = rgba[:, :, 3:4]
    return rgba[:, :, :3] * alpha + (1.0 - alpha) * np.asarray(background)


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    mse = float(((np.asarray(a) - np.asarray(b)) ** 2).mean())
    if mse <= 0:
        return float("inf")
    return -10.0 * np.log10(mse)


def fit_static_gaussians(
    texmap: TexelGaussianMap,
    canonical_mesh: Mesh,
    views: list[tuple[Camera, np.ndarray]],
    cfg: AppearanceFitConfig | None = None,
    context: SkinningContext | None = None,
):
    """Optimize a ConstantDecoder's parameter block for one region.

    views: (camera, RGBA or RGB float target) pairs; iterations cycle
    through them round-robin. Returns (ConstantDecoder, FitReport).
    """
    cfg = cfg or AppearanceFitConfig()
    if texmap.num_texels == 0:
        raise ValueError("no valid texels to fit")
    if len(views) < 2:
        raise ValueError("need at least 2 views")
    rng = np.random.default_rng(cfg.seed)
    sh_mask = _sh_update_mask(cfg.sh_degree)

    params = texmap.params.copy()
    opt = Adam(params.size, cfg.lr)
    report = FitReport()
    best = params.copy()
    since = 0
    m = texmap.num_texels
    for it in range(cfg.iterations):
        ramp = min(1.0, (it + 1) / max(cfg.warmup, 1))
        opt.lr = cfg.lr * ramp * cfg.lr_decay ** (it / max(cfg.iterations - 1, 1))
        camera, target_img = views[it % len(views)]
        bg = rng.random(3) if cfg.random_background else np.zeros(3)
        target_rgb = composite_over(target_img, bg)
        rt = RenderTarget(camera.width, camera.height, background=bg)

        posed = pose_gaussians(texmap, canonical_mesh, context, params=params)
        result = rasterize_reference(posed.gaussians, camera, rt, save_for_backward=True)
        loss, grad_img = photometric_loss_grad(result.image, target_rgb, cfg.l1_weight, cfg.ssim_weight)
        offsets = params[:, OFFSET_SLICE]
        loss = loss + cfg.position_reg * float((offsets**2).mean())

        report.losses.append(loss)
        report.iterations += 1
        if loss < report.best_loss - cfg.tol:
            since = 0
        else:
            since += 1
        if loss < report.best_loss:
            report.best_loss = loss
            best = params.copy()
        if since >= cfg.patience:
            report.converged = True
            break

        grads = rasterize_backward(posed.gaussians, camera, rt, result, grad_img)
        grad_params = pose_gaussians_backward(posed, grads)
        grad_params[:, OFFSET_SLICE] += cfg.position_reg * 2.0 * offsets / (3 * m)
        grad_params[:, SH_SLICE] *= sh_mask
        params = params + opt.step(grad_params.ravel()).reshape(params.shape)
    if not report.converged:
        report.warnings.append("appearance fitting hit the iteration cap")
    return ConstantDecoder(best), report
