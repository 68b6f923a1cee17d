"""Image output: 8-bit PNG and a raw float dump.

Raw dump layout (little-endian): magic b"GSIR", uint32 width, uint32
height, uint32 channels, then float32 data in row-major (H, W, C) order.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np
from PIL import Image


def to_uint8(image: np.ndarray) -> np.ndarray:
    return np.clip(np.asarray(image) * 255.0 + 0.5, 0, 255).astype(np.uint8)


def save_png(path, image: np.ndarray, alpha: np.ndarray | None = None) -> None:
    rgb = to_uint8(image)
    if alpha is not None:
        rgba = np.concatenate([rgb, to_uint8(alpha)[:, :, None]], axis=2)
        Image.fromarray(rgba, mode="RGBA").save(path)
    else:
        Image.fromarray(rgb, mode="RGB").save(path)


def png_bytes(image: np.ndarray, alpha: np.ndarray | None = None) -> bytes:
    import io

    buf = io.BytesIO()
    rgb = to_uint8(image)
    if alpha is not None:
        rgba = np.concatenate([rgb, to_uint8(alpha)[:, :, None]], axis=2)
        Image.fromarray(rgba, mode="RGBA").save(buf, format="PNG")
    else:
        Image.fromarray(rgb, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def load_png(path) -> np.ndarray:
    """Float image in [0, 1]; RGBA stays 4-channel."""
    arr = np.asarray(Image.open(path))
    return arr.astype(np.float64) / 255.0


def save_raw(path, image: np.ndarray) -> None:
    image = np.atleast_3d(np.asarray(image, dtype=np.float64))
    h, w, c = image.shape
    with open(path, "wb") as f:
        f.write(b"GSIR")
        f.write(struct.pack("<III", w, h, c))
        f.write(image.astype("<f4").tobytes())


def load_raw(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if data[:4] != b"GSIR":
        raise ValueError("not a raw image dump (bad magic)")
    w, h, c = struct.unpack_from("<III", data, 4)
    return np.frombuffer(data, dtype="<f4", count=w * h * c, offset=16).reshape(h, w, c).astype(np.float64)
