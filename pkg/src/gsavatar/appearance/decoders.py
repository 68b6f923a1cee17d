"""Pluggable texel-parameter decoders.

The geometry block (offset, scale, rotation, opacity: 11 values) is a
function of the motion textures alone; the appearance block (48 SH values)
additionally sees the global conditioning and lighting vectors. Constant
decoders ignore their inputs entirely, which makes one region's output
structurally independent of the other region's driving signal.

Decoder container (magic "EVAD", version 1, little-endian): uint32 kind
(0 constant, 1 linear), then kind-specific float32 blocks.
"""

from __future__ import annotations

import struct
from abc import ABC, abstractmethod
from pathlib import Path

import numpy as np

from .texels import PARAMS_PER_TEXEL, TexelGaussianMap, load_texel_map, save_texel_map
from .textures import MotionTextures

GEO_PARAMS = 11
APP_PARAMS = 48
MAGIC = b"EVAD"
VERSION = 1


class Decoder(ABC):
    """Maps motion textures to per-texel raw parameter rows (M, 59)."""

    @abstractmethod
    def decode(self, textures: MotionTextures, texmap: TexelGaussianMap) -> np.ndarray: ...


class ConstantDecoder(Decoder):
    """Fixed per-texel parameters; the optimizable kind for static fits."""

    def __init__(self, params: np.ndarray):
        self.params = np.asarray(params, dtype=np.float64)
        if self.params.ndim != 2 or self.params.shape[1] != PARAMS_PER_TEXEL:
            raise ValueError("constant decoder needs (M, 59) parameters")

    def decode(self, textures, texmap):
        if self.params.shape[0] != texmap.num_texels:
            raise ValueError("decoder texel count does not match the map")
        return self.params.copy()


class LinearDecoder(Decoder):
    """Shared affine map from per-texel features to parameter rows.

    geometry row  = W_geo @ features + b_geo
    appearance row = W_app @ concat(features, conditioning, lighting) + b_app
    """

    def __init__(self, weight_geo, bias_geo, weight_app, bias_app):
        self.weight_geo = np.asarray(weight_geo, dtype=np.float64)
        self.bias_geo = np.asarray(bias_geo, dtype=np.float64)
        self.weight_app = np.asarray(weight_app, dtype=np.float64)
        self.bias_app = np.asarray(bias_app, dtype=np.float64)
        if self.weight_geo.shape[0] != GEO_PARAMS or self.bias_geo.shape != (GEO_PARAMS,):
            raise ValueError("geometry block must produce 11 values")
        if self.weight_app.shape[0] != APP_PARAMS or self.bias_app.shape != (APP_PARAMS,):
            raise ValueError("appearance block must produce 48 values")

    @classmethod
    def zeros(cls, feature_dim: int, extra_dim: int = 0) -> "LinearDecoder":
        return cls(
            np.zeros((GEO_PARAMS, feature_dim)),
            np.zeros(GEO_PARAMS),
            np.zeros((APP_PARAMS, feature_dim + extra_dim)),
            np.zeros(APP_PARAMS),
        )

    def decode(self, textures, texmap):
        feats = textures.texel_features()  # (M, F)
        if feats.shape[1] != self.weight_geo.shape[1]:
            raise ValueError(
                f"feature dimension {feats.shape[1]} does not match geometry weights {self.weight_geo.shape}"
            )
        extra = np.concatenate([textures.head_conditioning, textures.lighting])
        app_in = np.concatenate([feats, np.tile(extra, (len(feats), 1))], axis=1) if len(extra) else feats
        if app_in.shape[1] != self.weight_app.shape[1]:
            raise ValueError(
                f"appearance input dimension {app_in.shape[1]} does not match weights {self.weight_app.shape}"
            )
        out = np.empty((len(feats), PARAMS_PER_TEXEL))
        out[:, :GEO_PARAMS] = feats @ self.weight_geo.T + self.bias_geo
        out[:, GEO_PARAMS:] = app_in @ self.weight_app.T + self.bias_app
        return out


class ExternalDecoder(Decoder):
    """Precomputed parameter rows loaded from a texel-map container."""

    def __init__(self, path):
        self.path = Path(path)
        self._params = load_texel_map(self.path).params

    def decode(self, textures, texmap):
        if self._params.shape[0] != texmap.num_texels:
            raise ValueError("external decoder texel count does not match the map")
        return self._params.copy()


def decode(decoder: Decoder, textures: MotionTextures, texmap: TexelGaussianMap) -> np.ndarray:
    out = decoder.decode(textures, texmap)
    if out.shape != (texmap.num_texels, PARAMS_PER_TEXEL):
        raise ValueError(f"decoder produced {out.shape}, expected ({texmap.num_texels}, {PARAMS_PER_TEXEL})")
    return out


def save_decoder(path, decoder: Decoder) -> None:
    path = Path(path)
    with open(path, "wb") as f:
        f.write(MAGIC)
        if isinstance(decoder, ConstantDecoder):
            f.write(struct.pack("<II", VERSION, 0))
            f.write(struct.pack("<I", decoder.params.shape[0]))
            f.write(decoder.params.astype("<f4").tobytes())
        elif isinstance(decoder, LinearDecoder):
            f.write(struct.pack("<II", VERSION, 1))
            f.write(struct.pack("<II", decoder.weight_geo.shape[1], decoder.weight_app.shape[1]))
            for block in (decoder.weight_geo, decoder.bias_geo, decoder.weight_app, decoder.bias_app):
                f.write(block.astype("<f4").tobytes())
        else:
            raise ValueError("only constant and linear decoders are serializable")


def load_decoder(path) -> Decoder:
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise ValueError("not a decoder container (bad magic)")
    version, kind = struct.unpack_from("<II", data, 4)
    if version != VERSION:
        raise ValueError(f"unsupported decoder version {version}")
    off = 12
    if kind == 0:
        (count,) = struct.unpack_from("<I", data, off)
        off += 4
        params = np.frombuffer(data, dtype="<f4", count=count * PARAMS_PER_TEXEL, offset=off)
        return ConstantDecoder(params.reshape(count, PARAMS_PER_TEXEL).astype(np.float64))
    if kind == 1:
        f_geo, f_app = struct.unpack_from("<II", data, off)
        off += 8

        def take(n):
            nonlocal off
            arr = np.frombuffer(data, dtype="<f4", count=n, offset=off).astype(np.float64)
            off += 4 * n
            return arr

        wg = take(GEO_PARAMS * f_geo).reshape(GEO_PARAMS, f_geo)
        bg = take(GEO_PARAMS)
        wa = take(APP_PARAMS * f_app).reshape(APP_PARAMS, f_app)
        ba = take(APP_PARAMS)
        return LinearDecoder(wg, bg, wa, ba)
    raise ValueError(f"unknown decoder kind {kind}")
