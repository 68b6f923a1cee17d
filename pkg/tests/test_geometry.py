import numpy as np
import pytest

from gsavatar.geometry import (
    BarycentricAnchor,
    BehindCameraError,
    Camera,
    Mesh,
    PointSet,
    chamfer_bidirectional,
    chamfer_one_sided,
    landmarks_from_barycentric,
    lmk3d_loss,
    look_at,
    project,
    sample_surface,
    sample_surface_detailed,
    tv_loss,
    unproject,
)
from gsavatar.geometry.meshio import load_obj, load_ply, load_sidecar, save_obj, save_ply, save_sidecar

from helpers import random_anchors, random_mesh, random_rigid, two_triangle_mesh, unit_right_triangle


class TestMesh:
    def test_rejects_out_of_range_indices(self):
        with pytest.raises(ValueError, match="index"):
            Mesh(np.zeros((2, 3)), np.array([[0, 1, 2]]))

    def test_rejects_degenerate_triangle(self):
        verts = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]])
        with pytest.raises(ValueError, match="degenerate"):
            Mesh(verts, np.array([[0, 1, 2]]))

    def test_rejects_uv_outside_unit_square(self):
        m = unit_right_triangle()
        uv = np.array([[[0.0, 0.0], [1.5, 0.0], [0.0, 1.0]]])
        with pytest.raises(ValueError, match="uv"):
            Mesh(m.vertices, m.triangles, uv=uv)

    def test_vertices_are_read_only(self):
        m = unit_right_triangle()
        with pytest.raises(ValueError):
            m.vertices[0, 0] = 5.0


class TestSampling:
    def test_points_stay_on_triangle(self):
        m = unit_right_triangle()
        pts = sample_surface(m, 100, seed=1).points
        # Barycentric solve for the right triangle at the origin.
        b1 = pts[:, 0]
        b2 = pts[:, 1]
        b0 = 1.0 - b1 - b2
        assert np.all(b0 >= -1e-12) and np.all(b1 >= -1e-12) and np.all(b2 >= -1e-12)
        assert np.allclose(b0 + b1 + b2, 1.0)
        assert np.allclose(pts[:, 2], 0.0)

    def test_area_proportional_split(self):
        m = two_triangle_mesh()
        n = 40000
        _, tri_ids, _ = sample_surface_detailed(m, n, seed=7)
        count_small = int((tri_ids == 0).sum())
        p = 0.25
        sigma = np.sqrt(n * p * (1 - p))
        assert abs(count_small - n * p) < 3 * sigma

    def test_deterministic_per_seed(self):
        m = two_triangle_mesh()
        a = sample_surface(m, 128, seed=3).points
        b = sample_surface(m, 128, seed=3).points
        assert np.array_equal(a, b)
        c = sample_surface(m, 128, seed=4).points
        assert not np.array_equal(a, c)

    def test_sampled_points_lie_on_plane(self):
        m = random_mesh(2, num_vertices=12, num_triangles=10)
        pts, tri_ids, _ = sample_surface_detailed(m, 500, seed=5)
        normals = m.triangle_normals()[tri_ids]
        anchor = m.vertices[m.triangles[tri_ids][:, 0]]
        dist = np.abs(np.einsum("nd,nd->n", pts - anchor, normals))
        assert dist.max() < 1e-9

    def test_empty_mesh_errors(self):
        m = Mesh(np.zeros((3, 3)) + np.eye(3), np.zeros((0, 3), dtype=np.int64))
        with pytest.raises(ValueError, match="no surface"):
            sample_surface(m, 10, seed=0)

    def test_vertex_weights_bias_triangle_choice(self):
        m = two_triangle_mesh()
        w = np.array([1.0, 1.0, 1.0, 0.0, 0.0, 0.0])
        _, tri_ids, _ = sample_surface_detailed(m, 1000, seed=0, weights=w)
        assert np.all(tri_ids == 0)


class TestChamfer:
    def test_identical_sets_zero(self):
        pts = np.random.default_rng(0).normal(size=(30, 3))
        assert chamfer_one_sided(PointSet(pts), PointSet(pts)) == 0.0
        assert chamfer_bidirectional(PointSet(pts), PointSet(pts)) == 0.0

    def test_single_pair_distance(self):
        a = PointSet(np.array([[0.0, 0.0, 0.0]]))
        b = PointSet(np.array([[1.0, 0.0, 0.0]]))
        assert chamfer_one_sided(a, b) == pytest.approx(1.0)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(11)
        a = rng.normal(size=(10, 3))
        b = rng.normal(size=(10, 3))
        brute = np.mean(np.min(((a[:, None, :] - b[None, :, :]) ** 2).sum(-1), axis=1))
        assert chamfer_one_sided(PointSet(a), PointSet(b)) == pytest.approx(brute, abs=0)

    def test_bidirectional_symmetry_and_decomposition(self):
        rng = np.random.default_rng(12)
        a = PointSet(rng.normal(size=(15, 3)))
        b = PointSet(rng.normal(size=(9, 3)))
        ab = chamfer_bidirectional(a, b)
        assert ab == pytest.approx(chamfer_bidirectional(b, a))
        assert ab == pytest.approx(chamfer_one_sided(a, b) + chamfer_one_sided(b, a))

    def test_permutation_invariance(self):
        rng = np.random.default_rng(13)
        a = rng.normal(size=(20, 3))
        b = rng.normal(size=(17, 3))
        ref = chamfer_one_sided(PointSet(a), PointSet(b))
        pa = rng.permutation(len(a))
        pb = rng.permutation(len(b))
        assert chamfer_one_sided(PointSet(a[pa]), PointSet(b[pb])) == pytest.approx(ref)

    def test_rigid_invariance(self):
        rng = np.random.default_rng(14)
        a = PointSet(rng.normal(size=(25, 3)))
        b = PointSet(rng.normal(size=(19, 3)))
        r, t = random_rigid(4)
        before = chamfer_bidirectional(a, b)
        after = chamfer_bidirectional(a.transformed(r, t), b.transformed(r, t))
        assert after == pytest.approx(before, rel=1e-9)

    def test_source_weights_scale_terms(self):
        a = PointSet(np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]), weights=np.array([2.0, 0.0]))
        b = PointSet(np.array([[0.0, 1.0, 0.0]]))
        # Terms: 2*1 and 0*2 -> mean = 1.
        assert chamfer_one_sided(a, b) == pytest.approx(1.0)

    def test_empty_set_errors(self):
        a = PointSet(np.zeros((1, 3)))
        with pytest.raises(ValueError):
            chamfer_one_sided(a, PointSet(np.zeros((0, 3))))


class TestLandmarks:
    def test_corner_anchor_is_vertex(self):
        m = unit_right_triangle()
        pts = landmarks_from_barycentric(m, [BarycentricAnchor(0, np.array([1.0, 0.0, 0.0]))]).points
        assert np.allclose(pts[0], m.vertices[0])

    def test_centroid_anchor(self):
        m = unit_right_triangle()
        third = np.full(3, 1.0 / 3.0)
        pts = landmarks_from_barycentric(m, [BarycentricAnchor(0, third)]).points
        assert np.allclose(pts[0], m.vertices.mean(axis=0))

    def test_matches_weighted_sum_oracle(self):
        m = random_mesh(21)
        anchors = random_anchors(m, 12, seed=3)
        pts = landmarks_from_barycentric(m, anchors).points
        for p, a in zip(pts, anchors):
            expected = sum(a.bary[k] * m.vertices[m.triangles[a.triangle][k]] for k in range(3))
            assert np.allclose(p, expected)

    def test_invalid_triangle_errors(self):
        m = unit_right_triangle()
        with pytest.raises(ValueError, match="triangle"):
            landmarks_from_barycentric(m, [BarycentricAnchor(5, np.array([1.0, 0.0, 0.0]))])


class TestLmk3d:
    def test_zero_at_identity(self):
        p = PointSet(np.random.default_rng(0).normal(size=(51, 3)))
        assert lmk3d_loss(p, p) == 0.0

    def test_three_four_five(self):
        pts = np.random.default_rng(1).normal(size=(51, 3))
        target = pts.copy()
        target[7] += np.array([3.0, 4.0, 0.0])
        assert lmk3d_loss(PointSet(pts), PointSet(target)) == pytest.approx(5.0)

    def test_matches_elementwise_oracle(self):
        rng = np.random.default_rng(2)
        a = rng.normal(size=(51, 3))
        b = rng.normal(size=(51, 3))
        expected = np.sqrt(((a - b) ** 2).sum())
        assert lmk3d_loss(PointSet(a), PointSet(b)) == pytest.approx(expected)

    def test_length_mismatch_errors(self):
        with pytest.raises(ValueError, match="mismatch"):
            lmk3d_loss(PointSet(np.zeros((50, 3))), PointSet(np.zeros((51, 3))))


class TestProjection:
    def test_optical_axis_hits_principal_point(self):
        cam = Camera(fx=123.0, fy=77.0, cx=31.0, cy=19.0)
        pix, depth = project(cam, np.array([0.0, 0.0, 2.5]))
        assert np.allclose(pix, [31.0, 19.0])
        assert depth == pytest.approx(2.5)

    def test_hand_projection(self):
        cam = Camera(fx=100.0, fy=100.0, cx=50.0, cy=50.0)
        pix, depth = project(cam, np.array([1.0, 0.0, 2.0]))
        assert np.allclose(pix, [100.0, 50.0])
        assert depth == pytest.approx(2.0)

    def test_behind_camera_errors(self):
        cam = Camera(fx=100.0, fy=100.0, cx=50.0, cy=50.0)
        with pytest.raises(BehindCameraError):
            project(cam, np.array([0.0, 0.0, 0.0]))

    def test_unproject_round_trip(self):
        rng = np.random.default_rng(3)
        cam = look_at(eye=[0.3, -0.2, -2.0], target=[0.0, 0.0, 0.0], fx=200.0, fy=180.0, cx=64.0, cy=64.0)
        for _ in range(20):
            p = rng.normal(size=3) * 0.5
            pix, depth = project(cam, p)
            back = unproject(cam, pix, depth)
            assert np.linalg.norm(back - p) < 1e-6

    def test_rotation_must_be_orthonormal(self):
        with pytest.raises(ValueError, match="orthonormal"):
            Camera(fx=1.0, fy=1.0, cx=0.0, cy=0.0, rotation=np.eye(3) * 1.01)


class TestTvLoss:
    def test_constant_sequence_zero(self):
        seq = np.ones((5, 4))
        assert tv_loss(seq) == 0.0

    def test_one_dim_two_frames(self):
        assert tv_loss(np.array([[0.0], [2.0]])) == pytest.approx(2.0)

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(4)
        seq = rng.normal(size=(7, 5))
        total = 0.0
        for t in range(6):
            for d in range(5):
                total += abs(seq[t, d] - seq[t + 1, d])
        assert tv_loss(seq) == pytest.approx(total / (6 * 5))

    def test_single_frame_errors(self):
        with pytest.raises(ValueError):
            tv_loss(np.zeros((1, 3)))


class TestMeshIO:
    def test_obj_round_trip_with_uv(self, tmp_path):
        from gsavatar.geometry.shapes import grid_patch

        m = grid_patch(2, 2, with_uv=True)
        path = tmp_path / "m.obj"
        save_obj(path, m)
        back = load_obj(path)
        assert np.allclose(back.vertices, m.vertices)
        assert np.array_equal(back.triangles, m.triangles)
        assert np.allclose(back.uv, m.uv)

    def test_ply_round_trip(self, tmp_path):
        m = random_mesh(31)
        path = tmp_path / "m.ply"
        save_ply(path, m)
        back = load_ply(path)
        assert np.allclose(back.vertices, m.vertices, atol=1e-6)
        assert np.array_equal(back.triangles, m.triangles)

    def test_ply_point_cloud(self, tmp_path):
        pts = np.random.default_rng(0).normal(size=(40, 3))
        path = tmp_path / "p.ply"
        save_ply(path, pts)
        back = load_ply(path)
        assert np.allclose(back, pts, atol=1e-6)

    def test_sidecar_round_trip(self, tmp_path):
        m = random_mesh(41)
        anchors = {f"lm{i}": a for i, a in enumerate(random_anchors(m, 5, seed=1))}
        m2 = Mesh(
            m.vertices,
            m.triangles,
            landmarks3d=anchors,
            region_masks={"face": np.array([0, 1, 2])},
            region_weights=np.linspace(0, 1, m.num_vertices),
        )
        path = tmp_path / "side.json"
        save_sidecar(path, m2)
        back = load_sidecar(path, Mesh(m.vertices, m.triangles))
        assert set(back.landmarks3d) == set(anchors)
        assert np.array_equal(back.region_masks["face"], [0, 1, 2])
        assert np.allclose(back.region_weights, m2.region_weights)
