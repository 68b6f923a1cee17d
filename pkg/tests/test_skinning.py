import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from gsavatar.geometry import Mesh
from gsavatar.geometry.shapes import uv_sphere
from gsavatar.optim import finite_difference, relative_gradient_error
from gsavatar.skinning import (
    ConstantPredictor,
    PerPoseTablePredictor,
    PoseWindow,
    SkinningWeights,
    ZeroPredictor,
    blended_vertex_transforms,
    build_embedded_graph,
    dqs_skin,
    embedded_deform,
    embedded_deform_backward,
    load_pose_file,
    pose_character,
    rigid_to_dual_quat,
    save_pose_file,
)

from helpers import chain_skeleton, cylinder_rig, random_mesh, random_rigid


def identity_transforms(n):
    return np.broadcast_to(np.eye(3), (n, 3, 3)).copy(), np.zeros((n, 3))


class TestForwardKinematics:
    def test_rest_pose_gives_rest_transforms(self):
        sk = chain_skeleton(4)
        rots, trans = sk.forward_kinematics(np.zeros(sk.d_body))
        for i in range(4):
            assert np.allclose(rots[i], np.eye(3))
            assert np.allclose(trans[i], [i, 0.0, 0.0])

    def test_single_joint_rotation_moves_child(self):
        sk = chain_skeleton(2, with_root_translation=False)
        pose = np.zeros(sk.d_body)
        pose[0:3] = [0.0, 0.0, np.pi / 2]  # root rotates 90 deg about z
        rots, trans = sk.forward_kinematics(pose)
        assert np.allclose(trans[1], [0.0, 1.0, 0.0], atol=1e-12)

    def test_matches_matrix_composition_oracle(self):
        sk = chain_skeleton(5)
        rng = np.random.default_rng(0)
        pose = rng.normal(size=sk.d_body) * 0.5
        rots, trans = sk.forward_kinematics(pose)

        # Oracle: explicit 4x4 chain with world root shift applied last.
        mats = []
        current = np.eye(4)
        for i, joint in enumerate(sk.joints):
            local = np.eye(4)
            block_idx = [k for k, (ji, kind) in enumerate(sk.dof_layout) if ji == i and kind == "rotation"]
            delta = Rotation.from_rotvec(pose[3 * block_idx[0] : 3 * block_idx[0] + 3]).as_matrix()
            local[:3, :3] = Rotation.from_rotvec(joint.rest_rotation).as_matrix() @ delta
            local[:3, 3] = joint.rest_translation
            current = (mats[sk.parent_index[i]] if i else np.eye(4)) @ local
            mats.append(current)
        shift_idx = [k for k, (_, kind) in enumerate(sk.dof_layout) if kind == "translation"][0]
        shift = pose[3 * shift_idx : 3 * shift_idx + 3]
        for i in range(5):
            assert np.allclose(rots[i], mats[i][:3, :3], atol=1e-12)
            assert np.allclose(trans[i], mats[i][:3, 3] + shift, atol=1e-12)

    def test_wrong_length_errors(self):
        sk = chain_skeleton(3)
        with pytest.raises(ValueError, match="length"):
            sk.forward_kinematics(np.zeros(sk.d_body + 1))


class TestDqs:
    def test_identity_transforms_leave_vertices(self):
        rng = np.random.default_rng(0)
        verts = rng.normal(size=(20, 3))
        w = SkinningWeights.from_lists([[(0, 0.5), (1, 0.5)]] * 20)
        r, t = identity_transforms(2)
        assert np.allclose(dqs_skin(verts, w, r, t), verts, atol=1e-15)

    def test_single_bone_is_exact_rigid(self):
        rng = np.random.default_rng(1)
        verts = rng.normal(size=(15, 3))
        rot, trans = random_rigid(5)
        w = SkinningWeights.single_joint(15, 0)
        out = dqs_skin(verts, w, rot[None], trans[None])
        assert np.allclose(out, verts @ rot.T + trans, atol=1e-9)

    def test_globally_rigid_pose_is_exact(self):
        rng = np.random.default_rng(2)
        verts = rng.normal(size=(25, 3))
        rot, trans = random_rigid(6)
        w = SkinningWeights.from_lists([[(0, 0.3), (1, 0.7)]] * 25)
        r = np.stack([rot, rot])
        t = np.stack([trans, trans])
        out = dqs_skin(verts, w, r, t)
        assert np.allclose(out, verts @ rot.T + trans, atol=1e-9)

    def test_two_bone_blend_matches_dual_quaternion_oracle(self):
        rng = np.random.default_rng(3)
        verts = rng.normal(size=(10, 3))
        r1, t1 = random_rigid(7)
        r2, t2 = random_rigid(8)
        w = SkinningWeights.from_lists([[(0, 0.5), (1, 0.5)]] * 10)
        out = dqs_skin(verts, w, np.stack([r1, r2]), np.stack([t1, t2]))

        # Oracle: blend unit dual quaternions explicitly and apply the
        # sandwich product q_hat p q_hat* (dual-number arithmetic).
        def to_dq(r, t):
            q = Rotation.from_matrix(r).as_quat()  # xyzw
            qr = np.array([q[3], q[0], q[1], q[2]])
            qd = 0.5 * _hamilton(np.array([0.0, *t]), qr)
            return qr, qd

        def _hamilton(a, b):
            w1, x1, y1, z1 = a
            w2, x2, y2, z2 = b
            return np.array(
                [
                    w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
                    w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
                    w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
                    w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
                ]
            )

        qr1, qd1 = to_dq(r1, t1)
        qr2, qd2 = to_dq(r2, t2)
        if qr1 @ qr2 < 0:
            qr2, qd2 = -qr2, -qd2
        br = 0.5 * qr1 + 0.5 * qr2
        bd = 0.5 * qd1 + 0.5 * qd2
        n = np.linalg.norm(br)
        br, bd = br / n, bd / n
        for v, o in zip(verts, out):
            # p' = q v q* + 2 * vector(qd q r*)
            conj = lambda q: q * np.array([1.0, -1.0, -1.0, -1.0])
            rotated = _hamilton(_hamilton(br, np.array([0.0, *v])), conj(br))[1:]
            shift = 2.0 * _hamilton(bd, conj(br))[1:]
            assert np.allclose(o, rotated + shift, atol=1e-9)

    def test_sign_flip_invariance(self):
        rng = np.random.default_rng(4)
        verts = rng.normal(size=(8, 3))
        r1, t1 = random_rigid(9)
        r2, t2 = random_rigid(10)
        w = SkinningWeights.from_lists([[(0, 0.4), (1, 0.6)]] * 8)
        base = dqs_skin(verts, w, np.stack([r1, r2]), np.stack([t1, t2]))
        # Feeding transforms whose quaternions land on either hemisphere is
        # invisible at the matrix level; perturb by a full 2*pi rotation.
        r1_flipped = r1 @ Rotation.from_rotvec([0, 0, 2 * np.pi]).as_matrix()
        out = dqs_skin(verts, w, np.stack([r1_flipped, r2]), np.stack([t1, t2]))
        assert np.allclose(out, base, atol=1e-9)

    def test_non_rigid_transform_errors(self):
        verts = np.zeros((3, 3))
        w = SkinningWeights.single_joint(3, 0)
        bad = np.eye(3) * 1.5
        with pytest.raises(ValueError, match="orthonormal"):
            dqs_skin(verts, w, bad[None], np.zeros((1, 3)))

    def test_weights_must_sum_to_one(self):
        with pytest.raises(ValueError, match="sum"):
            SkinningWeights(np.array([[0, 1]]), np.array([[0.5, 0.6]]))


class TestEmbeddedGraph:
    def test_every_vertex_its_own_node(self):
        mesh = uv_sphere(rings=5, segments=6)
        g = build_embedded_graph(mesh, node_count=mesh.num_vertices)
        assert g.num_nodes == mesh.num_vertices
        # each vertex attaches to its own node with weight 1
        own = g.attachment_weights.max(axis=1)
        assert np.allclose(own, 1.0)
        picked = g.attachments[np.arange(mesh.num_vertices), g.attachment_weights.argmax(axis=1)]
        assert np.allclose(g.node_positions[picked], mesh.vertices)

    def test_uniform_weights_spacing_spread(self):
        mesh = uv_sphere(rings=12, segments=18)
        g = build_embedded_graph(mesh, node_count=40, seed=1)
        from scipy.spatial import cKDTree

        d, _ = cKDTree(g.node_positions).query(g.node_positions, k=2)
        nn = d[:, 1]
        assert nn.std() / nn.mean() < 0.5

    def test_region_weight_bias_doubles_density(self):
        mesh = uv_sphere(rings=12, segments=18)
        w = np.where(mesh.vertices[:, 1] > 0, 10.0, 1.0)
        g = build_embedded_graph(mesh, node_count=40, region_weights=w, seed=2)
        top = (g.node_positions[:, 1] > 0).sum()
        bottom = (g.node_positions[:, 1] <= 0).sum()
        assert top >= 2 * bottom

    def test_identity_params_are_identity_map(self):
        mesh = random_mesh(50)
        g = build_embedded_graph(mesh, node_count=6, seed=0)
        out = embedded_deform(mesh, g)
        assert np.array_equal(out, mesh.vertices)

    def test_single_node_translation_shifts_all(self):
        mesh = random_mesh(51)
        g = build_embedded_graph(mesh, node_count=1, seed=0)
        g = g.with_params(translations=np.array([[0.0, 0.0, 1.0]]))
        out = embedded_deform(mesh, g)
        assert np.allclose(out, mesh.vertices + [0.0, 0.0, 1.0], atol=1e-12)

    def test_matches_double_loop_oracle(self):
        mesh = random_mesh(52, num_vertices=15, num_triangles=16)
        g = build_embedded_graph(mesh, node_count=4, seed=1)
        rng = np.random.default_rng(5)
        g = g.with_params(
            rotations=rng.normal(size=(4, 3)) * 0.4,
            translations=rng.normal(size=(4, 3)) * 0.2,
            displacements=rng.normal(size=(mesh.num_vertices, 3)) * 0.05,
        )
        out = embedded_deform(mesh, g)
        rmats = Rotation.from_rotvec(g.node_rotations).as_matrix()
        for i in range(mesh.num_vertices):
            acc = g.displacements[i].copy()
            for k in range(g.attachments.shape[1]):
                j = g.attachments[i, k]
                w = g.attachment_weights[i, k]
                acc = acc + w * (rmats[j] @ (mesh.vertices[i] - g.node_positions[j]) + g.node_positions[j] + g.node_translations[j])
            assert np.allclose(out[i], acc, atol=1e-12)

    def test_gradients_match_finite_differences(self):
        mesh = random_mesh(53, num_vertices=12, num_triangles=12)
        g0 = build_embedded_graph(mesh, node_count=3, seed=2)
        rng = np.random.default_rng(6)
        rot = rng.normal(size=(3, 3)) * 0.3
        tr = rng.normal(size=(3, 3)) * 0.1
        target = rng.normal(size=(mesh.num_vertices, 3))

        def loss_of(params):
            r = params[:9].reshape(3, 3)
            t = params[9:].reshape(3, 3)
            out = embedded_deform(mesh, g0.with_params(rotations=r, translations=t))
            return ((out - target) ** 2).sum()

        params = np.concatenate([rot.ravel(), tr.ravel()])
        g = g0.with_params(rotations=rot, translations=tr)
        out = embedded_deform(mesh, g)
        grad_out = 2.0 * (out - target)
        gr, gt, _ = embedded_deform_backward(mesh, g, grad_out)
        analytic = np.concatenate([gr.ravel(), gt.ravel()])
        numeric = finite_difference(loss_of, params, step=1e-5)
        assert relative_gradient_error(analytic, numeric) < 1e-4

    def test_node_count_bounds(self):
        mesh = random_mesh(54)
        with pytest.raises(ValueError):
            build_embedded_graph(mesh, node_count=0)
        with pytest.raises(ValueError):
            build_embedded_graph(mesh, node_count=mesh.num_vertices + 1)


class TestPoseCharacter:
    def test_zero_predictor_canonical_pose_is_template(self):
        rig = cylinder_rig()
        window = PoseWindow(np.zeros((2, rig.d_body)))
        out = pose_character(rig, window, ZeroPredictor())
        assert np.allclose(out.vertices, rig.template.vertices, atol=1e-12)

    def test_zero_predictor_equals_plain_skinning(self):
        rig = cylinder_rig()
        rng = np.random.default_rng(7)
        pose = rng.normal(size=rig.d_body) * 0.3
        window = PoseWindow(np.stack([np.zeros(rig.d_body), pose]))
        out = pose_character(rig, window, ZeroPredictor())

        rots, trans = rig.skeleton.forward_kinematics(pose)
        rest_r, rest_t = rig.skeleton.rest_transforms()
        rel_r = np.einsum("jik,jlk->jil", rots, rest_r)
        rel_t = trans - np.einsum("jik,jk->ji", rel_r, rest_t)
        expected = dqs_skin(rig.template.vertices, rig.skin_weights, rel_r, rel_t)
        assert np.allclose(out.vertices, expected, atol=1e-12)

    def test_constant_predictor_composes_deform_then_skin(self):
        rig = cylinder_rig()
        rng = np.random.default_rng(8)
        rot = rng.normal(size=(rig.graph.num_nodes, 3)) * 0.2
        tr = rng.normal(size=(rig.graph.num_nodes, 3)) * 0.05
        disp = rng.normal(size=(rig.template.num_vertices, 3)) * 0.01
        pred = ConstantPredictor(rot, tr, disp)
        pose = rng.normal(size=rig.d_body) * 0.2
        window = PoseWindow(pose[None])
        out = pose_character(rig, window, pred)

        deformed = embedded_deform(rig.template, rig.graph.with_params(rot, tr, disp))
        rots, trans = rig.skeleton.forward_kinematics(pose)
        rest_r, rest_t = rig.skeleton.rest_transforms()
        rel_r = np.einsum("jik,jlk->jil", rots, rest_r)
        rel_t = trans - np.einsum("jik,jk->ji", rel_r, rest_t)
        expected = dqs_skin(deformed, rig.skin_weights, rel_r, rel_t)
        assert np.allclose(out.vertices, expected, atol=1e-12)

    def test_root_translation_equivariance(self):
        rig = cylinder_rig()
        rng = np.random.default_rng(9)
        pose = rng.normal(size=rig.d_body) * 0.3
        window = PoseWindow(np.stack([pose, pose]))
        pred = PerPoseTablePredictor(
            keys=[rig.skeleton.normalize_pose(pose)],
            entries=[
                (
                    rng.normal(size=(rig.graph.num_nodes, 3)) * 0.1,
                    rng.normal(size=(rig.graph.num_nodes, 3)) * 0.05,
                    np.zeros((rig.template.num_vertices, 3)),
                )
            ],
        )
        base = pose_character(rig, window, pred).vertices
        delta = np.array([0.4, -0.2, 0.7])
        shifted_pose = pose.copy()
        shifted_pose[0:3] += delta  # root translation block
        window2 = PoseWindow(np.stack([shifted_pose, shifted_pose]))
        shifted = pose_character(rig, window2, pred).vertices
        assert np.allclose(shifted, base + delta, atol=1e-9)

    def test_hand_vertices_receive_no_deformation(self):
        rig = cylinder_rig()
        hands = np.arange(5)
        rig.hand_vertices = hands
        rng = np.random.default_rng(10)
        pred = ConstantPredictor(
            rng.normal(size=(rig.graph.num_nodes, 3)) * 0.3,
            rng.normal(size=(rig.graph.num_nodes, 3)) * 0.2,
            rng.normal(size=(rig.template.num_vertices, 3)) * 0.05,
        )
        window = PoseWindow(np.zeros((1, rig.d_body)))
        out = pose_character(rig, window, pred)
        assert np.allclose(out.vertices[hands], rig.template.vertices[hands], atol=1e-12)

    def test_predictor_shape_mismatch_errors(self):
        rig = cylinder_rig()
        bad = ConstantPredictor(np.zeros((1, 3)), np.zeros((1, 3)), np.zeros((1, 3)))
        with pytest.raises(ValueError, match="shape"):
            pose_character(rig, PoseWindow(np.zeros((1, rig.d_body))), bad)


class TestPoseFile:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(11)
        frames = rng.normal(size=(9, 12)).astype(np.float32).astype(np.float64)
        path = tmp_path / "poses.bin"
        save_pose_file(path, frames, window=3, frame_time=0.04)
        back, w, ft = load_pose_file(path)
        assert w == 3
        assert ft == pytest.approx(0.04)
        assert np.allclose(back, frames)

    def test_length_mismatch_detected(self, tmp_path):
        path = tmp_path / "poses.bin"
        save_pose_file(path, np.zeros((4, 6)), window=2)
        data = path.read_bytes()
        path.write_bytes(data[:-4])
        with pytest.raises(ValueError, match="length"):
            load_pose_file(path)
