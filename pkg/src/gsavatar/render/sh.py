"""Real spherical harmonics up to degree 3 (16 basis functions) for
view-dependent color, plus analytic derivatives for fitting.

Coefficient layout: 48 values per Gaussian = 16 basis functions x 3 color
channels, reshaped as (16, 3).
"""

from __future__ import annotations

import numpy as np

SH_C0 = 0.28209479177387814
SH_C1 = 0.4886025119029199
SH_C2 = (1.0925484305920792, -1.0925484305920792, 0.31539156525252005, -1.0925484305920792, 0.5462742152960396)
SH_C3 = (
    -0.5900435899266435,
    2.890611442640554,
    -0.4570457994644658,
    0.3731763325901154,
    -0.4570457994644658,
    1.445305721320277,
    -0.5900435899266435,
)

NUM_BASIS = 16
NUM_COEFFS = 48
COLOR_OFFSET = 0.5


def sh_basis(dirs: np.ndarray) -> np.ndarray:
    """Basis values (M, 16) at unit directions (M, 3)."""
    d = np.asarray(dirs, dtype=np.float64)
    x, y, z = d[..., 0], d[..., 1], d[..., 2]
    xx, yy, zz = x * x, y * y, z * z
    xy, yz, xz = x * y, y * z, x * z
    b = np.empty(d.shape[:-1] + (NUM_BASIS,))
    b[..., 0] = SH_C0
    b[..., 1] = -SH_C1 * y
    b[..., 2] = SH_C1 * z
    b[..., 3] = -SH_C1 * x
    b[..., 4] = SH_C2[0] * xy
    b[..., 5] = SH_C2[1] * yz
    b[..., 6] = SH_C2[2] * (2.0 * zz - xx - yy)
    b[..., 7] = SH_C2[3] * xz
    b[..., 8] = SH_C2[4] * (xx - yy)
    b[..., 9] = SH_C3[0] * y * (3.0 * xx - yy)
    b[..., 10] = SH_C3[1] * xy * z
    b[..., 11] = SH_C3[2] * y * (4.0 * zz - xx - yy)
    b[..., 12] = SH_C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy)
    b[..., 13] = SH_C3[4] * x * (4.0 * zz - xx - yy)
    b[..., 14] = SH_C3[5] * z * (xx - yy)
    b[..., 15] = SH_C3[6] * x * (xx - 3.0 * yy)
    return b


def sh_basis_grad(dirs: np.ndarray) -> np.ndarray:
    """d(basis_k)/d(dir_j): shape (M, 16, 3)."""
    d = np.asarray(dirs, dtype=np.float64)
    x, y, z = d[..., 0], d[..., 1], d[..., 2]
    zero = np.zeros_like(x)
    g = np.zeros(d.shape[:-1] + (NUM_BASIS, 3))
    g[..., 1, 1] = -SH_C1
    g[..., 2, 2] = SH_C1
    g[..., 3, 0] = -SH_C1
    g[..., 4, 0] = SH_C2[0] * y
    g[..., 4, 1] = SH_C2[0] * x
    g[..., 5, 1] = SH_C2[1] * z
    g[..., 5, 2] = SH_C2[1] * y
    g[..., 6, 0] = SH_C2[2] * (-2.0 * x)
    g[..., 6, 1] = SH_C2[2] * (-2.0 * y)
    g[..., 6, 2] = SH_C2[2] * (4.0 * z)
    g[..., 7, 0] = SH_C2[3] * z
    g[..., 7, 2] = SH_C2[3] * x
    g[..., 8, 0] = SH_C2[4] * (2.0 * x)
    g[..., 8, 1] = SH_C2[4] * (-2.0 * y)
    g[..., 9, 0] = SH_C3[0] * (6.0 * x * y)
    g[..., 9, 1] = SH_C3[0] * (3.0 * x * x - 3.0 * y * y)
    g[..., 9, 2] = zero
    g[..., 10, 0] = SH_C3[1] * (y * z)
    g[..., 10, 1] = SH_C3[1] * (x * z)
    g[..., 10, 2] = SH_C3[1] * (x * y)
    g[..., 11, 0] = SH_C3[2] * (-2.0 * x * y)
    g[..., 11, 1] = SH_C3[2] * (4.0 * z * z - x * x - 3.0 * y * y)
    g[..., 11, 2] = SH_C3[2] * (8.0 * y * z)
    g[..., 12, 0] = SH_C3[3] * (-6.0 * x * z)
    g[..., 12, 1] = SH_C3[3] * (-6.0 * y * z)
    g[..., 12, 2] = SH_C3[3] * (6.0 * z * z - 3.0 * x * x - 3.0 * y * y)
    g[..., 13, 0] = SH_C3[4] * (4.0 * z * z - 3.0 * x * x - y * y)
    g[..., 13, 1] = SH_C3[4] * (-2.0 * x * y)
    g[..., 13, 2] = SH_C3[4] * (8.0 * x * z)
    g[..., 14, 0] = SH_C3[5] * (2.0 * x * z)
    g[..., 14, 1] = SH_C3[5] * (-2.0 * y * z)
    g[..., 14, 2] = SH_C3[5] * (x * x - y * y)
    g[..., 15, 0] = SH_C3[6] * (3.0 * x * x - 3.0 * y * y)
    g[..., 15, 1] = SH_C3[6] * (-6.0 * x * y)
    g[..., 15, 2] = zero
    return g


def eval_sh(coeffs: np.ndarray, dirs: np.ndarray, offset: float = COLOR_OFFSET, clamp: bool = True) -> np.ndarray:
    """Colors (N, 3) from coefficients (N, 48) at unit view directions.

    color_c = sum_k basis_k(dir) * coeffs[k, c] + offset, clamped at 0.
    """
    coeffs = np.asarray(coeffs, dtype=np.float64).reshape(-1, NUM_BASIS, 3)
    basis = sh_basis(dirs)
    out = np.einsum("nk,nkc->nc", basis, coeffs) + offset
    return np.maximum(out, 0.0) if clamp else out


def eval_sh_backward(coeffs: np.ndarray, dirs: np.ndarray, grad_color: np.ndarray, offset: float = COLOR_OFFSET):
    """Gradients of clamped eval_sh: returns (grad_coeffs (N, 48),
    grad_dirs (N, 3))."""
    coeffs = np.asarray(coeffs, dtype=np.float64).reshape(-1, NUM_BASIS, 3)
    basis = sh_basis(dirs)
    raw = np.einsum("nk,nkc->nc", basis, coeffs) + offset
    g = np.asarray(grad_color, dtype=np.float64) * (raw > 0.0)
    grad_coeffs = np.einsum("nk,nc->nkc", basis, g).reshape(-1, NUM_COEFFS)
    bg = sh_basis_grad(dirs)  # (N, 16, 3)
    grad_dirs = np.einsum("nkj,nkc,nc->nj", bg, coeffs, g)
    return grad_coeffs, grad_dirs
