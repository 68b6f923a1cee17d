"""Photometric loss: weighted L1 + structural similarity, with the exact
adjoint needed to backpropagate through the reference rasterizer.

SSIM uses an 11x11 Gaussian window (sigma 1.5), zero-padded "same"
convolutions, and C1 = 0.01^2, C2 = 0.03^2 on a [0, 1] dynamic range. The
window is symmetric, so each blur is self-adjoint and the backward pass
reuses the same convolution.
"""

from __future__ import annotations

import numpy as np
from scipy.ndimage import convolve1d

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
C1 = 0.01**2
C2 = 0.03**2
L1_WEIGHT = 0.9
SSIM_WEIGHT = 0.1


def _kernel() -> np.ndarray:
    half = SSIM_WINDOW // 2
    x = np.arange(-half, half + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / SSIM_SIGMA) ** 2)
    return k / k.sum()


_K = _kernel()


def _blur(img: np.ndarray) -> np.ndarray:
    out = convolve1d(img, _K, axis=0, mode="constant", cval=0.0)
    return convolve1d(out, _K, axis=1, mode="constant", cval=0.0)


def ssim(x: np.ndarray, y: np.ndarray) -> float:
    """Mean SSIM over pixels and channels of two (H, W, C) float images."""
    return _ssim_forward(np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64))[0]


def _ssim_forward(x, y):
    mx = _blur(x)
    my = _blur(y)
    xx = _blur(x * x)
    yy = _blur(y * y)
    xy = _blur(x * y)
    sx = xx - mx * mx
    sy = yy - my * my
    sxy = xy - mx * my
    a1 = 2.0 * mx * my + C1
    a2 = 2.0 * sxy + C2
    b1 = mx * mx + my * my + C1
    b2 = sx + sy + C2
    s = (a1 * a2) / (b1 * b2)
    return float(s.mean()), (mx, my, sx, sy, sxy, a1, a2, b1, b2, s)


def ssim_grad(x: np.ndarray, y: np.ndarray):
    """Returns (ssim value, d(mean ssim)/dx)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    value, (mx, my, sx, sy, sxy, a1, a2, b1, b2, s) = _ssim_forward(x, y)
    n = s.size
    gs = np.full_like(s, 1.0 / n)  # d mean / d s

    d = b1 * b2
    ga1 = gs * a2 / d
    ga2 = gs * a1 / d
    gb1 = -gs * s / b1
    gb2 = -gs * s / b2

    gmx = 2.0 * my * ga1 + 2.0 * mx * gb1
    gsxy = 2.0 * ga2
    gsx = gb2
    # sx = blur(x^2) - mx^2 ; sxy = blur(xy) - mx my
    gmx = gmx - 2.0 * mx * gsx - my * gsxy
    gxx = gsx
    gxy_term = gsxy

    # Adjoint of each blur is the same blur (symmetric kernel, zero pad).
    grad = _blur(gmx) + _blur(gxx) * 2.0 * x + _blur(gxy_term) * y
    return value, grad


def photometric_loss(image: np.ndarray, target: np.ndarray, l1_weight=L1_WEIGHT, ssim_weight=SSIM_WEIGHT):
    """loss = l1_weight * mean|I - T| + ssim_weight * (1 - SSIM(I, T))."""
    image = np.asarray(image, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if image.shape != target.shape:
        raise ValueError("image and target shapes differ")
    l1 = float(np.abs(image - target).mean())
    s = ssim(image, target)
    return l1_weight * l1 + ssim_weight * (1.0 - s)


def photometric_loss_grad(image: np.ndarray, target: np.ndarray, l1_weight=L1_WEIGHT, ssim_weight=SSIM_WEIGHT):
    """Returns (loss, d loss/d image)."""
    image = np.asarray(image, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if image.shape != target.shape:
        raise ValueError("image and target shapes differ")
    diff = image - target
    l1 = float(np.abs(diff).mean())
    g_l1 = np.sign(diff) / diff.size
    s, g_s = ssim_grad(image, target)
    loss = l1_weight * l1 + ssim_weight * (1.0 - s)
    return loss, l1_weight * g_l1 - ssim_weight * g_s
