"""Software rasterization of 3D Gaussians.

Two paths share one contract: a straightforward reference that composites
every Gaussian's screen footprint in global depth order, and a tiled path
that bins Gaussians to tiles (conservative cutoff-radius bounds) and
composites tiles independently with batched arithmetic. Per-pixel math and
ordering match, so the two agree to floating-point precision; with a
single tile the tiled path degenerates to the reference traversal and is
bit-identical.

Depth order: stable sort by camera-space z, ties kept in input order.
Per-pixel compositing stops once transmittance falls below 1e-4.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ..geometry.cameras import Camera
from .gaussians import Gaussians, RenderTarget
from .projection import ProjectedGaussians, project_gaussian, project_gaussian_backward
from .sh import eval_sh, eval_sh_backward

TRANSMITTANCE_MIN = 1e-4
ALPHA_MAX = 0.9999  # keeps the compositing backward well conditioned
CUTOFF_SIGMAS = 3.0


@dataclass
class Footprints:
    """Precomputed per-gaussian screen data: inverse covariance and the
    conservative cutoff bbox (clipped to the image, end-exclusive)."""

    inv: np.ndarray  # (N, 3): i00, i01, i11
    bbox: np.ndarray  # (N, 4): x0, x1, y0, y1
    nonempty: np.ndarray  # (N,) bool


def _footprints(proj: ProjectedGaussians, width: int, height: int, cutoff=CUTOFF_SIGMAS) -> Footprints:
    cov = proj.cov2d
    det = cov[:, 0, 0] * cov[:, 1, 1] - cov[:, 0, 1] * cov[:, 1, 0]
    inv = np.stack([cov[:, 1, 1] / det, -cov[:, 0, 1] / det, cov[:, 0, 0] / det], axis=1)
    mid = 0.5 * (cov[:, 0, 0] + cov[:, 1, 1])
    lam = mid + np.sqrt(np.maximum(mid * mid - det, 0.0))
    radius = cutoff * np.sqrt(np.maximum(lam, 0.0))
    bbox = np.empty((len(cov), 4), dtype=np.int64)
    bbox[:, 0] = np.maximum(np.floor(proj.means2d[:, 0] - radius), 0)
    bbox[:, 1] = np.minimum(np.ceil(proj.means2d[:, 0] + radius) + 1, width)
    bbox[:, 2] = np.maximum(np.floor(proj.means2d[:, 1] - radius), 0)
    bbox[:, 3] = np.minimum(np.ceil(proj.means2d[:, 1] + radius) + 1, height)
    nonempty = (bbox[:, 0] < bbox[:, 1]) & (bbox[:, 2] < bbox[:, 3]) & proj.valid
    return Footprints(inv=inv, bbox=bbox, nonempty=nonempty)


@dataclass
class RenderResult:
    image: np.ndarray  # (H, W, 3)
    alpha: np.ndarray  # (H, W)
    depths: np.ndarray
    order: np.ndarray
    projected: ProjectedGaussians
    colors: np.ndarray  # per-gaussian RGB from SH
    view_dirs: np.ndarray
    saved: list | None = None  # per-gaussian compositing state for backward


def _prepare(gaussians: Gaussians, camera: Camera):
    proj = project_gaussian(gaussians.positions, gaussians.scales, gaussians.rotations, camera)
    rel = gaussians.positions - camera.position
    norms = np.linalg.norm(rel, axis=1, keepdims=True)
    norms[norms < 1e-12] = 1.0
    dirs = rel / norms
    colors = eval_sh(gaussians.sh, dirs)
    order = np.argsort(proj.depths[proj.valid], kind="stable")
    ids = np.where(proj.valid)[0][order]
    return proj, colors, dirs, ids


def _composite_run(
    ids, proj, fps: Footprints, colors, opacities, x_range, y_range, color_buf, trans_buf, saved=None
):
    """Sequential front-to-back compositing of `ids` over a pixel window.

    color_buf (h, w, 3) and trans_buf (h, w) are updated in place; the
    window is [y_range) x [x_range) in image coordinates.
    """
    wx0, wx1 = x_range
    wy0, wy1 = y_range
    bbox = fps.bbox
    inv = fps.inv
    means = proj.means2d
    for n in ids:
        x0 = max(int(bbox[n, 0]), wx0)
        x1 = min(int(bbox[n, 1]), wx1)
        y0 = max(int(bbox[n, 2]), wy0)
        y1 = min(int(bbox[n, 3]), wy1)
        if x0 >= x1 or y0 >= y1:
            continue
        dx = np.arange(x0, x1, dtype=np.float64) - means[n, 0]
        dy = np.arange(y0, y1, dtype=np.float64) - means[n, 1]
        power = -0.5 * (
            inv[n, 0] * dx[None, :] ** 2
            + inv[n, 2] * dy[:, None] ** 2
            + 2.0 * inv[n, 1] * dx[None, :] * dy[:, None]
        )
        w = np.exp(power)
        alpha = np.minimum(opacities[n] * w, ALPHA_MAX)
        t_slice = trans_buf[y0 - wy0 : y1 - wy0, x0 - wx0 : x1 - wx0]
        active = t_slice >= TRANSMITTANCE_MIN
        eff = np.where(active, alpha, 0.0)
        if saved is not None:
            saved.append((n, (x0, x1, y0, y1), t_slice.copy(), w, active))
        color_buf[y0 - wy0 : y1 - wy0, x0 - wx0 : x1 - wx0] += (t_slice * eff)[:, :, None] * colors[n]
        t_slice *= 1.0 - eff


def _composite_batched(
    ids, proj, fps: Footprints, colors, opacities, x_range, y_range, color_buf, trans_buf, chunk: int = 160
):
    """Vectorized tile compositing, equivalent to `_composite_run` up to
    floating-point summation order.

    Weights for a whole chunk of Gaussians are evaluated over the tile at
    once; each Gaussian is masked to its cutoff bbox so its footprint
    matches the sequential kernel, and the per-pixel freeze below
    TRANSMITTANCE_MIN follows the same crossing rule.
    """
    wx0, wx1 = x_range
    wy0, wy1 = y_range
    xs = np.arange(wx0, wx1, dtype=np.float64)
    ys = np.arange(wy0, wy1, dtype=np.float64)
    ids = np.asarray(ids, dtype=np.int64)
    for lo in range(0, len(ids), chunk):
        if trans_buf.max() < TRANSMITTANCE_MIN:
            break
        sel = ids[lo : lo + chunk]
        means = proj.means2d[sel]
        inv = fps.inv[sel]
        dx = xs[None, :] - means[:, 0:1]  # (G, w)
        dy = ys[None, :] - means[:, 1:2]  # (G, h)
        power = -0.5 * (
            inv[:, 0, None, None] * dx[:, None, :] ** 2
            + inv[:, 2, None, None] * dy[:, :, None] ** 2
            + 2.0 * inv[:, 1, None, None] * dx[:, None, :] * dy[:, :, None]
        )
        weight = np.exp(power)
        bbox = fps.bbox[sel]
        in_x = (xs[None, :] >= bbox[:, 0:1]) & (xs[None, :] < bbox[:, 1:2])
        in_y = (ys[None, :] >= bbox[:, 2:3]) & (ys[None, :] < bbox[:, 3:4])
        weight = weight * (in_y[:, :, None] & in_x[:, None, :])

        alpha = np.minimum(opacities[sel][:, None, None] * weight, ALPHA_MAX)
        factors = 1.0 - alpha
        cp = np.cumprod(factors, axis=0)
        t_before = np.empty_like(cp)
        t_before[0] = trans_buf
        t_before[1:] = trans_buf[None] * cp[:-1]
        active = t_before >= TRANSMITTANCE_MIN
        contrib = t_before * alpha * active
        color_buf += np.einsum("gyx,gc->yxc", contrib, colors[sel])
        trans_buf *= np.prod(np.where(active, factors, 1.0), axis=0)


def rasterize_reference(gaussians: Gaussians, camera: Camera, target: RenderTarget, save_for_backward=False):
    """Exact per-pixel front-to-back compositing over each Gaussian's
    cutoff footprint, in global depth order."""
    h, w = target.height, target.width
    color = np.zeros((h, w, 3))
    trans = np.ones((h, w))
    proj, colors, dirs, ids = _prepare(gaussians, camera)
    fps = _footprints(proj, w, h)
    ids = ids[fps.nonempty[ids]]
    saved: list | None = [] if save_for_backward else None
    _composite_run(ids, proj, fps, colors, gaussians.opacities, (0, w), (0, h), color, trans, saved)
    image = color + trans[:, :, None] * target.background
    return RenderResult(
        image=image,
        alpha=1.0 - trans,
        depths=proj.depths,
        order=ids,
        projected=proj,
        colors=colors,
        view_dirs=dirs,
        saved=saved,
    )


@dataclass
class TileStats:
    tiles: int = 0
    binned: int = 0
    max_per_tile: int = 0


def rasterize_tiled(
    gaussians: Gaussians,
    camera: Camera,
    target: RenderTarget,
    tile_size: int = 16,
    threads: int | None = None,
):
    """Same contract as `rasterize_reference`; Gaussians are binned to tiles
    via their conservative cutoff bounds and tiles composite independently."""
    h, w = target.height, target.width
    proj, colors, dirs, ids = _prepare(gaussians, camera)
    fps = _footprints(proj, w, h)
    ids = ids[fps.nonempty[ids]]
    tiles_x = (w + tile_size - 1) // tile_size
    tiles_y = (h + tile_size - 1) // tile_size
    bins: list[list[int]] = [[] for _ in range(tiles_x * tiles_y)]
    stats = TileStats(tiles=tiles_x * tiles_y)
    tx0 = fps.bbox[:, 0] // tile_size
    tx1 = (fps.bbox[:, 1] - 1) // tile_size
    ty0 = fps.bbox[:, 2] // tile_size
    ty1 = (fps.bbox[:, 3] - 1) // tile_size
    for n in ids:  # sorted order preserved per bin
        for ty in range(ty0[n], ty1[n] + 1):
            row = ty * tiles_x
            for tx in range(tx0[n], tx1[n] + 1):
                bins[row + tx].append(n)
                stats.binned += 1

    color = np.zeros((h, w, 3))
    trans = np.ones((h, w))
    single_tile = tiles_x == 1 and tiles_y == 1

    def run_tile(t):
        ty, tx = divmod(t, tiles_x)
        x0, x1 = tx * tile_size, min((tx + 1) * tile_size, w)
        y0, y1 = ty * tile_size, min((ty + 1) * tile_size, h)
        local_c = color[y0:y1, x0:x1]
        local_t = trans[y0:y1, x0:x1]
        if single_tile:
            # One tile degenerates to the reference traversal (bit-identical).
            _composite_run(bins[t], proj, fps, colors, gaussians.opacities, (x0, x1), (y0, y1), local_c, local_t)
        else:
            _composite_batched(bins[t], proj, fps, colors, gaussians.opacities, (x0, x1), (y0, y1), local_c, local_t)

    nonempty = [t for t in range(len(bins)) if bins[t]]
    stats.max_per_tile = max((len(bins[t]) for t in nonempty), default=0)
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(run_tile, nonempty))
    else:
        for t in nonempty:
            run_tile(t)
    image = color + trans[:, :, None] * target.background
    return RenderResult(
        image=image,
        alpha=1.0 - trans,
        depths=proj.depths,
        order=ids,
        projected=proj,
        colors=colors,
        view_dirs=dirs,
        saved=None,
    ), stats


def rasterize_backward(gaussians: Gaussians, camera: Camera, target: RenderTarget, result: RenderResult,
                       grad_image: np.ndarray):
    """Analytic gradients of the reference render w.r.t. every Gaussian
    parameter, given d(loss)/d(image).

    Requires a result produced with save_for_backward=True. Returns a dict
    with grad arrays for positions, scales, rotations, opacities, and sh.
    """
    if result.saved is None:
        raise ValueError("render was not saved for backward")
    n_g = len(gaussians)
    grad_colors = np.zeros((n_g, 3))
    grad_mean2d = np.zeros((n_g, 2))
    grad_cov2d = np.zeros((n_g, 2, 2))
    grad_opacity = np.zeros(n_g)

    # Suffix color: everything composited after gaussian n, plus background.
    suffix = (1.0 - result.alpha)[:, :, None] * target.background
    g_img = np.asarray(grad_image, dtype=np.float64)

    for n, (x0, x1, y0, y1), t_before, weight, active in reversed(result.saved):
        g_slice = g_img[y0:y1, x0:x1]
        suf = suffix[y0:y1, x0:x1]
        alpha_raw = gaussians.opacities[n] * weight
        clipped = alpha_raw > ALPHA_MAX
        eff = np.where(active, np.minimum(alpha_raw, ALPHA_MAX), 0.0)
        one_minus = 1.0 - eff
        color_n = result.colors[n]

        w_n = t_before * eff  # compositing weight of this gaussian per pixel
        grad_colors[n] += np.einsum("yxc,yx->c", g_slice, w_n)
        # d(image)/d(alpha_eff) = T_n * c_n - suffix/(1 - alpha_eff)
        d_alpha = np.einsum(
            "yxc,yxc->yx", g_slice, t_before[:, :, None] * color_n[None, None, :] - suf / one_minus[:, :, None]
        )
        d_alpha = np.where(active & ~clipped, d_alpha, 0.0)
        grad_opacity[n] += float((d_alpha * weight).sum())
        d_power = d_alpha * gaussians.opacities[n] * weight  # d alpha/d power = alpha_raw

        cov = result.projected.cov2d[n]
        det = cov[0, 0] * cov[1, 1] - cov[0, 1] * cov[1, 0]
        inv = np.array([[cov[1, 1], -cov[0, 1]], [-cov[1, 0], cov[0, 0]]]) / det
        mean = result.projected.means2d[n]
        dx = np.arange(x0, x1) - mean[0]
        dy = np.arange(y0, y1) - mean[1]
        dxg, dyg = np.meshgrid(dx, dy)
        pd0 = inv[0, 0] * dxg + inv[0, 1] * dyg
        pd1 = inv[1, 0] * dxg + inv[1, 1] * dyg
        grad_mean2d[n, 0] += float((d_power * pd0).sum())
        grad_mean2d[n, 1] += float((d_power * pd1).sum())
        # d power / d inv = -0.5 d d^T ; d inv / d cov = -inv (.) inv
        gp00 = float((d_power * dxg * dxg).sum())
        gp01 = float((d_power * dxg * dyg).sum())
        gp11 = float((d_power * dyg * dyg).sum())
        grad_inv = -0.5 * np.array([[gp00, gp01], [gp01, gp11]])
        grad_cov2d[n] += -inv @ grad_inv @ inv

        # Restore suffix for the next (earlier) gaussian.
        suffix[y0:y1, x0:x1] = suf + (w_n[:, :, None] * color_n[None, None, :])

    grad_sh, grad_dirs = eval_sh_backward(gaussians.sh, result.view_dirs, grad_colors)
    # Direction depends on the position: dir = (p - cam) / |p - cam|.
    rel = gaussians.positions - camera.position
    dist = np.linalg.norm(rel, axis=1, keepdims=True)
    dist[dist < 1e-12] = 1.0
    dirs = rel / dist
    grad_pos_dir = (grad_dirs - dirs * np.einsum("nd,nd->n", grad_dirs, dirs)[:, None]) / dist

    grad_pos, grad_scales, grad_quat = project_gaussian_backward(
        result.projected, gaussians.scales, gaussians.rotations, camera, grad_mean2d, grad_cov2d
    )
    return {
        "positions": grad_pos + grad_pos_dir,
        "scales": grad_scales,
        "rotations": grad_quat,
        "opacities": grad_opacity,
        "sh": grad_sh,
    }
