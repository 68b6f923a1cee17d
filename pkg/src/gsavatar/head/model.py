"""Linear morphable head: template + shape/expression/eyelid bases, four
articulated joints (neck, jaw, two eyes), skinning weights, and optional
per-vertex displacements for subject-specific detail.

Container format (magic "EVAH", version 1), all values little-endian:

    magic           4 bytes  b"EVAH"
    version         uint32
    n_vertices      uint32
    k_shape         uint32
    k_expression    uint32
    n_triangles     uint32
    flags           uint32   bit0: has uv, bit1: has personalization
    triangles       uint32[n_triangles * 3]
    uv              float32[n_triangles * 3 * 2]          (if bit0)
    template        float32[n_vertices * 3]
    shape_basis     float32[n_vertices * 3 * k_shape]
    expr_basis      float32[n_vertices * 3 * k_expression]
    eyelid_basis    float32[n_vertices * 3 * 2]
    joint_pivots    float32[4 * 3]                        (neck, jaw, eyes)
    skin_weights    float32[n_vertices * 5]               (bone order below)
    displacements   float32[n_vertices * 3]
    personalization float32[k_shape + 6 + n_vertices * 3] (if bit1)

Bone order: 0 global, 1 neck, 2 jaw, 3 left eye, 4 right eye. The landmark
embedding (and optional dense embedding, regions, fitting weights) lives in
a JSON sidecar next to the container.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from ..geometry.losses import landmarks_from_barycentric
from ..geometry.mesh import BarycentricAnchor, Mesh, PointSet
from ..skinning.dqs import SkinningWeights, dqs_skin
from ..transforms import rotvec_to_matrix

MAGIC = b"EVAH"
VERSION = 1
BONES = ("global", "neck", "jaw", "left_eye", "right_eye")
MAX_K_SHAPE = 300
MAX_K_EXPRESSION = 100
NUM_LANDMARKS = 51


@dataclass(frozen=True)
class Personalization:
    """Frozen subject-specific parameters produced by the fitting pipeline."""

    beta: np.ndarray
    translation: np.ndarray
    rotation: np.ndarray  # rotvec
    displacements: np.ndarray


@dataclass(frozen=True)
class Expression:
    """Reduced per-frame animation parameters."""

    jaw: np.ndarray
    gamma: np.ndarray
    eyelids: np.ndarray

    def __post_init__(self):
        jaw = np.asarray(self.jaw, dtype=np.float64)
        gamma = np.asarray(self.gamma, dtype=np.float64)
        eyelids = np.asarray(self.eyelids, dtype=np.float64)
        if jaw.shape != (3,) or eyelids.shape != (2,):
            raise ValueError("expression needs jaw (3,) and eyelids (2,)")
        if not (np.isfinite(jaw).all() and np.isfinite(gamma).all() and np.isfinite(eyelids).all()):
            raise ValueError("expression parameters must be finite")
        object.__setattr__(self, "jaw", jaw)
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "eyelids", eyelids)

    @property
    def d_face(self) -> int:
        return 3 + len(self.gamma) + 2

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.jaw, self.gamma, self.eyelids])

    @classmethod
    def from_vector(cls, v: np.ndarray, k_gamma: int) -> "Expression":
        v = np.asarray(v, dtype=np.float64)
        return cls(v[:3], v[3 : 3 + k_gamma], v[3 + k_gamma : 5 + k_gamma])

    @classmethod
    def zero(cls, k_gamma: int) -> "Expression":
        return cls(np.zeros(3), np.zeros(k_gamma), np.zeros(2))


@dataclass(frozen=True)
class HeadModel:
    template: Mesh
    shape_basis: np.ndarray  # (N, 3, K_shape)
    expr_basis: np.ndarray  # (N, 3, K_expr)
    eyelid_basis: np.ndarray  # (N, 3, 2)
    joint_pivots: np.ndarray  # (4, 3) rest pivots: neck, jaw, left eye, right eye
    skin_weights: SkinningWeights  # over the 5 bones
    displacements: np.ndarray  # (N, 3)
    landmark_embedding: tuple[BarycentricAnchor, ...] = ()
    dense_embedding: tuple[BarycentricAnchor, ...] = ()
    personalization: Personalization | None = None

    def __post_init__(self):
        n = self.template.num_vertices
        if self.shape_basis.shape[:2] != (n, 3) or self.shape_basis.ndim != 3:
            raise ValueError("shape basis must be (N, 3, K_shape)")
        if self.expr_basis.shape[:2] != (n, 3) or self.expr_basis.ndim != 3:
            raise ValueError("expression basis must be (N, 3, K_expr)")
        if self.eyelid_basis.shape != (n, 3, 2):
            raise ValueError("eyelid basis must be (N, 3, 2)")
        if self.k_shape > MAX_K_SHAPE or self.k_expression > MAX_K_EXPRESSION:
            raise ValueError("basis dimensions exceed supported maxima")
        if self.joint_pivots.shape != (4, 3):
            raise ValueError("expected 4 joint pivots")
        if self.skin_weights.num_vertices != n:
            raise ValueError("skinning weights do not match template")
        if self.skin_weights.joints.max(initial=0) >= len(BONES):
            raise ValueError("skinning references unknown bone")
        if self.displacements.shape != (n, 3):
            raise ValueError("displacements must be (N, 3)")

    @property
    def num_vertices(self) -> int:
        return self.template.num_vertices

    @property
    def k_shape(self) -> int:
        return self.shape_basis.shape[2]

    @property
    def k_expression(self) -> int:
        return self.expr_basis.shape[2]

    def personalize(self, beta, translation, rotation, displacements) -> "HeadModel":
        pers = Personalization(
            beta=np.asarray(beta, dtype=np.float64),
            translation=np.asarray(translation, dtype=np.float64),
            rotation=np.asarray(rotation, dtype=np.float64),
            displacements=np.asarray(displacements, dtype=np.float64),
        )
        return replace(self, personalization=pers)


def _bone_transforms(model: HeadModel, neck, jaw, eyes):
    """World rigid transform per bone for the given joint rotvecs."""
    neck_p, jaw_p, leye_p, reye_p = model.joint_pivots
    rots = np.broadcast_to(np.eye(3), (5, 3, 3)).copy()
    trans = np.zeros((5, 3))

    def pivot_rot(r, pivot):
        m = rotvec_to_matrix(np.asarray(r, dtype=np.float64))
        return m, pivot - m @ pivot

    rn, tn = pivot_rot(neck, neck_p)
    rots[1], trans[1] = rn, tn
    for idx, (r, p) in ((2, (jaw, jaw_p)), (3, (eyes[:3], leye_p)), (4, (eyes[3:], reye_p))):
        rl, tl = pivot_rot(r, p)
        rots[idx] = rn @ rl
        trans[idx] = rn @ tl + tn
    return rots, trans


def evaluate_head(
    model: HeadModel,
    beta=None,
    translation=None,
    rotation=None,
    neck=None,
    jaw=None,
    eyes=None,
    gamma=None,
    eyelids=None,
    displacement_override: np.ndarray | None = None,
) -> Mesh:
    """Full head function: blendshapes, joint skinning, then global rigid.

    All parameters default to zero; `displacement_override` replaces the
    model's stored displacements. Zero inputs reproduce template + D.
    """
    n = model.num_vertices
    beta = np.zeros(model.k_shape) if beta is None else np.asarray(beta, dtype=np.float64)
    gamma = np.zeros(model.k_expression) if gamma is None else np.asarray(gamma, dtype=np.float64)
    eyelids = np.zeros(2) if eyelids is None else np.asarray(eyelids, dtype=np.float64)
    if beta.shape != (model.k_shape,):
        raise ValueError(f"beta must have length {model.k_shape}")
    if gamma.shape != (model.k_expression,):
        raise ValueError(f"gamma must have length {model.k_expression}")
    if eyelids.shape != (2,):
        raise ValueError("eyelids must have length 2")
    translation = np.zeros(3) if translation is None else np.asarray(translation, dtype=np.float64)
    rotation = np.zeros(3) if rotation is None else np.asarray(rotation, dtype=np.float64)
    neck = np.zeros(3) if neck is None else np.asarray(neck, dtype=np.float64)
    jaw = np.zeros(3) if jaw is None else np.asarray(jaw, dtype=np.float64)
    eyes = np.zeros(6) if eyes is None else np.asarray(eyes, dtype=np.float64)
    if eyes.shape != (6,):
        raise ValueError("eyes must have length 6 (left rotvec, right rotvec)")
    disp = model.displacements if displacement_override is None else np.asarray(displacement_override, dtype=np.float64)
    if disp.shape != (n, 3):
        raise ValueError("displacements must be (N, 3)")

    verts = (
        model.template.vertices
        + model.shape_basis @ beta
        + model.expr_basis @ gamma
        + model.eyelid_basis @ eyelids
        + disp
    )
    if np.any(neck) or np.any(jaw) or np.any(eyes):
        rots, trans = _bone_transforms(model, neck, jaw, eyes)
        verts = dqs_skin(verts, model.skin_weights, rots, trans)
    rm = rotvec_to_matrix(rotation)
    verts = verts @ rm.T + translation
    return model.template.with_vertices(verts)


def evaluate_expression(model: HeadModel, expr: Expression) -> Mesh:
    """Reduced animation form: personalization frozen, neck and eyes zero."""
    pers = model.personalization
    if pers is None:
        raise ValueError("model is not personalized")
    return evaluate_head(
        model,
        beta=pers.beta,
        translation=pers.translation,
        rotation=pers.rotation,
        jaw=expr.jaw,
        gamma=expr.gamma,
        eyelids=expr.eyelids,
        displacement_override=pers.displacements,
    )


def head_landmarks(model: HeadModel, verts: Mesh) -> PointSet:
    if not model.landmark_embedding:
        raise ValueError("model has no landmark embedding")
    return landmarks_from_barycentric(verts, list(model.landmark_embedding))


def _anchors_to_json(anchors) -> list:
    return [{"triangle": int(a.triangle), "bary": a.bary.tolist()} for a in anchors]


def _anchors_from_json(items) -> tuple[BarycentricAnchor, ...]:
    return tuple(BarycentricAnchor(int(a["triangle"]), np.asarray(a["bary"])) for a in items)


def save_head_model(path, model: HeadModel) -> None:
    """Write the binary container plus the JSON embedding sidecar."""
    path = Path(path)
    n = model.num_vertices
    tris = model.template.triangles
    flags = 0
    if model.template.uv is not None:
        flags |= 1
    if model.personalization is not None:
        flags |= 2
    parts = [
        MAGIC,
        struct.pack("<IIIIII", VERSION, n, model.k_shape, model.k_expression, len(tris), flags),
        tris.astype("<u4").tobytes(),
    ]
    if model.template.uv is not None:
        parts.append(model.template.uv.astype("<f4").tobytes())
    dense_w = np.zeros((n, len(BONES)))
    rows = np.repeat(np.arange(n), model.skin_weights.joints.shape[1])
    np.add.at(dense_w, (rows, model.skin_weights.joints.ravel()), model.skin_weights.weights.ravel())
    for block in (
        model.template.vertices,
        model.shape_basis,
        model.expr_basis,
        model.eyelid_basis,
        model.joint_pivots,
        dense_w,
        model.displacements,
    ):
        parts.append(np.ascontiguousarray(block).astype("<f4").tobytes())
    if model.personalization is not None:
        p = model.personalization
        pers = np.concatenate([p.beta, p.translation, p.rotation, p.displacements.ravel()])
        parts.append(pers.astype("<f4").tobytes())
    path.write_bytes(b"".join(parts))

    sidecar = {
        "landmarks": _anchors_to_json(model.landmark_embedding),
        "dense": _anchors_to_json(model.dense_embedding),
        "region_masks": {k: np.asarray(v).tolist() for k, v in model.template.region_masks.items()},
    }
    if model.template.region_weights is not None:
        sidecar["region_weights"] = model.template.region_weights.tolist()
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(sidecar))


def load_head_model(path) -> HeadModel:
    path = Path(path)
    data = path.read_bytes()
    if data[:4] != MAGIC:
        raise ValueError("not a head model container (bad magic)")
    version, n, kb, kg, n_tris, flags = struct.unpack_from("<IIIIII", data, 4)
    if version != VERSION:
        raise ValueError(f"unsupported container version {version}")
    off = 28

    def take(count, dtype):
        nonlocal off
        arr = np.frombuffer(data, dtype=dtype, count=count, offset=off)
        off += arr.nbytes
        return arr

    tris = take(n_tris * 3, "<u4").reshape(n_tris, 3).astype(np.int64)
    uv = None
    if flags & 1:
        uv = take(n_tris * 6, "<f4").reshape(n_tris, 3, 2).astype(np.float64)
    template_v = take(n * 3, "<f4").reshape(n, 3).astype(np.float64)
    shape = take(n * 3 * kb, "<f4").reshape(n, 3, kb).astype(np.float64)
    expr = take(n * 3 * kg, "<f4").reshape(n, 3, kg).astype(np.float64)
    eyelid = take(n * 6, "<f4").reshape(n, 3, 2).astype(np.float64)
    pivots = take(12, "<f4").reshape(4, 3).astype(np.float64)
    dense_w = take(n * len(BONES), "<f4").reshape(n, len(BONES)).astype(np.float64)
    disp = take(n * 3, "<f4").reshape(n, 3).astype(np.float64)
    pers = None
    if flags & 2:
        block = take(kb + 6 + n * 3, "<f4").astype(np.float64)
        pers = Personalization(
            beta=block[:kb],
            translation=block[kb : kb + 3],
            rotation=block[kb + 3 : kb + 6],
            displacements=block[kb + 6 :].reshape(n, 3),
        )

    dense_w = dense_w / dense_w.sum(axis=1, keepdims=True)
    order = np.argsort(-dense_w, axis=1)[:, :4]
    w = np.take_along_axis(dense_w, order, axis=1)
    w = w / w.sum(axis=1, keepdims=True)
    weights = SkinningWeights(order.astype(np.int64), w)

    sidecar_path = path.with_suffix(path.suffix + ".json")
    landmarks: tuple[BarycentricAnchor, ...] = ()
    dense: tuple[BarycentricAnchor, ...] = ()
    masks: dict[str, np.ndarray] = {}
    region_weights = None
    if sidecar_path.exists():
        doc = json.loads(sidecar_path.read_text())
        landmarks = _anchors_from_json(doc.get("landmarks", []))
        dense = _anchors_from_json(doc.get("dense", []))
        masks = {k: np.asarray(v, dtype=np.int64) for k, v in doc.get("region_masks", {}).items()}
        if "region_weights" in doc:
            region_weights = np.asarray(doc["region_weights"])
    mesh = Mesh(template_v, tris, uv=uv, region_masks=masks, region_weights=region_weights)
    return HeadModel(
        template=mesh,
        shape_basis=shape,
        expr_basis=expr,
        eyelid_basis=eyelid,
        joint_pivots=pivots,
        skin_weights=weights,
        displacements=disp,
        landmark_embedding=landmarks,
        dense_embedding=dense,
        personalization=pers,
    )
