"""Self-contained toy avatar: a capped-cylinder body with arm joints and a
deformable sphere head, stitched at the neck, with constant-decoder texel
Gaussians. Deterministic per seed; used by tests, the CLI demo command,
and the service examples.
"""

from __future__ import annotations

import numpy as np

from ..appearance.decoders import ConstantDecoder
from ..appearance.texels import OPACITY_SLICE, SH_SLICE, bake_uv
from ..geometry.cameras import look_at
from ..geometry.mesh import Mesh, PointSet
from ..geometry.shapes import capped_cylinder
from ..head.toy import toy_head_model
from ..render.sh import SH_C0
from ..skinning.character import CharacterRig, ZeroPredictor
from ..skinning.dqs import SkinningWeights
from ..skinning.graph import build_embedded_graph
from ..skinning.skeleton import Joint, Skeleton
from ..stitch import compute_cut_plane, slice_mesh, stitch
from ..transforms import rotvec_to_matrix
from .bundle import AvatarBundle, StitchMeta

BODY_RADIUS = 0.3
BODY_BOTTOM = -0.8
BODY_TOP = 1.0
HEAD_RADIUS = 0.28
HEAD_CENTER_Y = 1.05
NECK_Y = 0.9


def demo_skeleton() -> Skeleton:
    return Skeleton(
        [
            Joint("root", None, np.zeros(3), np.array([0.0, BODY_BOTTOM, 0.0]), ("translation", "rotation")),
            Joint("spine", "root", np.zeros(3), np.array([0.0, 0.9, 0.0]), ("rotation",)),
            Joint("head", "spine", np.zeros(3), np.array([0.0, 0.7, 0.0]), ("rotation",)),
            Joint("l_arm", "spine", np.zeros(3), np.array([BODY_RADIUS, 0.3, 0.0]), ("rotation",)),
            Joint("r_arm", "spine", np.zeros(3), np.array([-BODY_RADIUS, 0.3, 0.0]), ("rotation",)),
        ]
    )


def _body_weights(mesh: Mesh) -> SkinningWeights:
    v = mesh.vertices
    y = v[:, 1]
    t = np.clip((y - BODY_BOTTOM) / (BODY_TOP - BODY_BOTTOM), 0.0, 1.0)
    dense = np.zeros((len(v), 5))
    dense[:, 0] = np.maximum(0.0, 1.0 - 2.0 * t)
    dense[:, 1] = 1.0 - np.abs(2.0 * t - 1.0)
    dense[:, 2] = np.maximum(0.0, 2.0 * t - 1.0)
    arm_band = (y > -0.1) & (y < 0.5)
    left = arm_band & (v[:, 0] > 0.6 * BODY_RADIUS)
    right = arm_band & (v[:, 0] < -0.6 * BODY_RADIUS)
    for mask, joint in ((left, 3), (right, 4)):
        dense[mask, joint] = 0.6
        dense[mask, :3] *= 0.4 / np.maximum(dense[mask, :3].sum(axis=1, keepdims=True), 1e-12)
    dense = dense / dense.sum(axis=1, keepdims=True)
    order = np.argsort(-dense, axis=1)[:, :4]
    w = np.take_along_axis(dense, order, axis=1)
    return SkinningWeights(order.astype(np.int64), w / w.sum(axis=1, keepdims=True))


def _lerp_weights(weights: SkinningWeights, edges: np.ndarray, t: np.ndarray, n_joints: int) -> np.ndarray:
    dense = np.zeros((weights.num_vertices, n_joints))
    rows = np.repeat(np.arange(weights.num_vertices), weights.joints.shape[1])
    np.add.at(dense, (rows, weights.joints.ravel()), weights.weights.ravel())
    if len(edges) == 0:
        return np.zeros((0, n_joints))
    return (1.0 - t[:, None]) * dense[edges[:, 0]] + t[:, None] * dense[edges[:, 1]]


def build_demo_bundle(seed: int = 0, body_texture: int = 20, head_texture: int = 14):
    """Returns (AvatarBundle, DeformationPredictor)."""
    rng = np.random.default_rng(seed)
    body = capped_cylinder(
        radius=BODY_RADIUS,
        height=BODY_TOP - BODY_BOTTOM,
        rings=9,
        segments=14,
        center=(0.0, (BODY_TOP + BODY_BOTTOM) / 2, 0.0),
        with_uv=True,
    )
    skeleton = demo_skeleton()
    body_weights = _body_weights(body)
    graph = build_embedded_graph(body, node_count=16, seed=seed)
    rig = CharacterRig(
        skeleton=skeleton,
        template=body,
        skin_weights=body_weights,
        graph=graph,
        head_joint="head",
        facing_axis=np.array([0.0, 0.0, 1.0]),
    )

    head = toy_head_model(seed=seed, rings=9, segments=12, k_shape=4, k_expression=4, radius=HEAD_RADIUS)
    head = head.personalize(
        beta=np.zeros(head.k_shape),
        translation=np.array([0.0, HEAD_CENTER_Y, 0.0]),
        rotation=np.zeros(3),
        displacements=np.zeros((head.num_vertices, 3)),
    )
    # Head template needs a UV atlas for its chart; rebuild with sphere UVs.
    from ..geometry.shapes import _sphere_corner_uv

    head_mesh = head.template
    uv = _sphere_corner_uv(head_mesh.vertices, head_mesh.triangles, HEAD_RADIUS, 9, 12)
    head = head.__class__(
        template=Mesh(
            head_mesh.vertices,
            head_mesh.triangles,
            uv=uv,
            region_masks=dict(head_mesh.region_masks),
            region_weights=head_mesh.region_weights,
        ),
        shape_basis=head.shape_basis,
        expr_basis=head.expr_basis,
        eyelid_basis=head.eyelid_basis,
        joint_pivots=head.joint_pivots,
        skin_weights=head.skin_weights,
        displacements=head.displacements,
        landmark_embedding=head.landmark_embedding,
        dense_embedding=head.dense_embedding,
        personalization=head.personalization,
    )

    # Cut plane from marked neck vertices on the placed head.
    placed = head.template.vertices + np.array([0.0, HEAD_CENTER_Y, 0.0])
    marked = placed[np.abs(placed[:, 1] - NECK_Y) < 0.07]
    plane = compute_cut_plane(PointSet(marked))
    if plane.normal[1] < 0:
        plane = type(plane)(plane.centroid, -plane.normal)

    body_slice = slice_mesh(body, plane, keep_side=-1)
    head_slice = slice_mesh(head.template.with_vertices(placed), plane, keep_side=1)
    result = stitch(body_slice.mesh, body_slice.loop, head_slice.mesh, head_slice.loop)

    meta = StitchMeta(
        body_kept=body_slice.kept_vertices,
        body_created_edges=body_slice.created_edges,
        body_created_t=body_slice.created_t,
        head_kept=head_slice.kept_vertices,
        head_created_edges=head_slice.created_edges,
        head_created_t=head_slice.created_t,
        body_vertex_count=result.body_vertex_count,
        head_vertex_count=result.head_vertex_count,
        body_triangle_count=result.body_triangle_count,
        head_triangle_count=result.head_triangle_count,
        seam_body=result.seam_body,
        seam_head=result.seam_head,
    )

    n_joints = skeleton.num_joints
    body_dense = _lerp_weights(body_weights, np.arange(0).reshape(0, 2), np.zeros(0), n_joints)
    dense_rows = np.zeros((result.mesh.num_vertices, n_joints))
    kept_dense = np.zeros((body_weights.num_vertices, n_joints))
    rows = np.repeat(np.arange(body_weights.num_vertices), body_weights.joints.shape[1])
    np.add.at(kept_dense, (rows, body_weights.joints.ravel()), body_weights.weights.ravel())
    nb_kept = len(body_slice.kept_vertices)
    dense_rows[:nb_kept] = kept_dense[body_slice.kept_vertices]
    if len(body_slice.created_edges):
        dense_rows[nb_kept : meta.body_vertex_count] = _lerp_weights(
            body_weights, body_slice.created_edges, body_slice.created_t, n_joints
        )
    head_joint_idx = skeleton.index["head"]
    dense_rows[meta.body_vertex_count :, head_joint_idx] = 1.0
    dense_rows = dense_rows / dense_rows.sum(axis=1, keepdims=True)
    order = np.argsort(-dense_rows, axis=1)[:, :4]
    w = np.take_along_axis(dense_rows, order, axis=1)
    stitched_weights = SkinningWeights(order.astype(np.int64), w / w.sum(axis=1, keepdims=True))

    body_texmap = bake_uv(result.mesh, body_texture, triangles=meta.body_triangles())
    head_texmap = bake_uv(result.mesh, head_texture, triangles=meta.head_triangles())

    def constant_params(texmap, dc_color, tint_scale):
        p = texmap.params.copy()
        p[:, OPACITY_SLICE.start] = 2.5
        dc = (np.asarray(dc_color) - 0.5) / SH_C0
        p[:, SH_SLICE.start : SH_SLICE.start + 3] = dc
        p[:, SH_SLICE] += rng.normal(size=(texmap.num_texels, 48)) * tint_scale
        return p

    body_decoder = ConstantDecoder(constant_params(body_texmap, [0.25, 0.35, 0.65], 0.03))
    head_decoder = ConstantDecoder(constant_params(head_texmap, [0.80, 0.62, 0.50], 0.02))

    cameras = {
        "front": look_at([0.0, 0.3, 2.6], [0.0, 0.2, 0.0], fx=110.0, fy=110.0, cx=47.5, cy=47.5, width=96, height=96),
        "face": look_at([0.0, HEAD_CENTER_Y, 1.1], [0.0, HEAD_CENTER_Y, 0.0], fx=160.0, fy=160.0, cx=47.5, cy=47.5, width=96, height=96),
        "side": look_at([2.4, 0.5, 0.6], [0.0, 0.2, 0.0], fx=110.0, fy=110.0, cx=47.5, cy=47.5, width=96, height=96),
        "three_quarter": look_at([1.6, 0.8, 2.0], [0.0, 0.2, 0.0], fx=110.0, fy=110.0, cx=47.5, cy=47.5, width=96, height=96),
    }

    bundle = AvatarBundle(
        rig=rig,
        head=head,
        stitched=result.mesh,
        stitch_meta=meta,
        stitched_weights=stitched_weights,
        body_texmap=body_texmap,
        head_texmap=head_texmap,
        body_decoder=body_decoder,
        head_decoder=head_decoder,
        cameras=cameras,
    )
    return bundle, ZeroPredictor()
