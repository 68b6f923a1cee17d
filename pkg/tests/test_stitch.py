import numpy as np
import pytest

from gsavatar.geometry import Mesh, PointSet
from gsavatar.geometry.shapes import box, open_cylinder, uv_sphere
from gsavatar.stitch import (
    BoundaryLoop,
    CutPlane,
    compute_cut_plane,
    correspond_loops,
    slice_mesh,
    stitch,
)


def euler_characteristic(mesh: Mesh) -> int:
    edges = np.concatenate(
        [mesh.triangles[:, [0, 1]], mesh.triangles[:, [1, 2]], mesh.triangles[:, [2, 0]]]
    )
    unique_edges = np.unique(np.sort(edges, axis=1), axis=0)
    return mesh.num_vertices - len(unique_edges) + mesh.num_triangles


def regular_loop_mesh(n: int, radius: float, y: float, direction: int = 1):
    """Open cone fan whose boundary is a regular n-gon at height y."""
    angles = 2 * np.pi * np.arange(n) / n
    ring = np.stack([radius * np.cos(angles), np.full(n, y), radius * np.sin(angles) * direction], axis=1)
    apex = np.array([[0.0, y + direction * 0.5, 0.0]])
    verts = np.concatenate([ring, apex])
    tris = np.array([[i, n, (i + 1) % n] for i in range(n)], dtype=np.int64)
    mesh = Mesh(verts, tris)
    from gsavatar.stitch import _extract_single_loop

    return mesh, _extract_single_loop(mesh)


class TestCutPlane:
    def test_points_on_plane(self):
        rng = np.random.default_rng(0)
        pts = rng.normal(size=(30, 3))
        pts[:, 2] = 1.0
        plane = compute_cut_plane(PointSet(pts))
        assert plane.centroid[2] == pytest.approx(1.0)
        assert abs(abs(plane.normal[2]) - 1.0) < 1e-12

    def test_noisy_ring_matches_covariance_oracle(self):
        rng = np.random.default_rng(1)
        angles = rng.uniform(0, 2 * np.pi, 200)
        n_true = np.array([1.0, 2.0, 2.0]) / 3.0
        u = np.array([1.0, 0.0, 0.0])
        u = u - (u @ n_true) * n_true
        u /= np.linalg.norm(u)
        v = np.cross(n_true, u)
        pts = (
            np.array([0.3, -0.2, 0.5])
            + np.outer(np.cos(angles), u)
            + np.outer(np.sin(angles), v)
            + rng.normal(scale=0.01, size=(200, 3))
        )
        plane = compute_cut_plane(pts)
        cov = np.cov((pts - pts.mean(axis=0)).T)
        eigvals, eigvecs = np.linalg.eigh(cov)
        oracle_normal = eigvecs[:, 0]
        angle = np.degrees(np.arccos(abs(plane.normal @ oracle_normal)))
        assert angle < 1.0

    def test_two_points_error(self):
        with pytest.raises(ValueError, match="3 points"):
            compute_cut_plane(np.zeros((2, 3)))

    def test_collinear_error(self):
        pts = np.outer(np.linspace(0, 1, 10), np.array([1.0, 2.0, 3.0]))
        with pytest.raises(ValueError, match="collinear"):
            compute_cut_plane(pts)


class TestSliceMesh:
    def test_cube_cut_gives_8_vertex_loop_on_plane(self):
        cube = box(size=(1.0, 1.0, 1.0))
        plane = CutPlane(np.array([0.0, 0.0, 0.25]), np.array([0.0, 0.0, 1.0]))
        result = slice_mesh(cube, plane, keep_side=-1)
        assert len(result.loop) == 8
        loop_pts = result.mesh.vertices[result.loop.vertices]
        assert np.abs(loop_pts[:, 2] - 0.25).max() < 1e-7

    def test_plane_above_mesh_errors(self):
        cube = box()
        plane = CutPlane(np.array([0.0, 0.0, 5.0]), np.array([0.0, 0.0, 1.0]))
        with pytest.raises(ValueError, match="intersect"):
            slice_mesh(cube, plane, keep_side=1)

    def test_sphere_equator_loop_on_plane(self):
        sphere = uv_sphere(radius=1.0, rings=12, segments=16)
        plane = CutPlane(np.array([0.0, 0.05, 0.0]), np.array([0.0, 1.0, 0.0]))
        result = slice_mesh(sphere, plane, keep_side=1)
        loop_pts = result.mesh.vertices[result.loop.vertices]
        assert np.abs(loop_pts[:, 1] - 0.05).max() < 1e-7
        # kept part keeps zero boundary except the cut
        assert len(result.mesh.boundary_edges()) == len(result.loop)

    def test_through_vertices_is_handled(self):
        # Cut exactly through the sphere's existing equator ring vertices.
        sphere = uv_sphere(radius=1.0, rings=8, segments=12)
        plane = CutPlane(np.zeros(3), np.array([0.0, 1.0, 0.0]))
        result = slice_mesh(sphere, plane, keep_side=1)
        assert len(result.mesh.boundary_edges()) == len(result.loop)

    def test_open_cylinder_two_loops_rejected(self):
        cyl = open_cylinder(rings=4, segments=10)
        plane = CutPlane(np.zeros(3), np.array([0.0, 1.0, 0.0]))
        with pytest.raises(ValueError, match="non-neck"):
            slice_mesh(cyl, plane, keep_side=1)

    def test_uv_carried_through_clip(self):
        from gsavatar.geometry.shapes import grid_patch

        patch = grid_patch(4, 4, size=1.0, with_uv=True)
        plane = CutPlane(np.array([0.33, 0.0, 0.0]), np.array([1.0, 0.0, 0.0]))
        result = slice_mesh(patch, plane, keep_side=-1)
        assert result.mesh.uv is not None
        # UV equals xy position on this patch, so the clipped UVs obey the cut.
        for ti, tri in enumerate(result.mesh.triangles):
            for k in range(3):
                uv = result.mesh.uv[ti, k]
                pos = result.mesh.vertices[tri[k]][:2]
                assert np.allclose(uv, pos, atol=1e-9)


class TestCorrespondLoops:
    def test_identity_for_identical_loops(self):
        rng = np.random.default_rng(2)
        pts = rng.normal(size=(9, 3))
        corr = correspond_loops(pts, pts)
        assert np.array_equal(corr, np.arange(9))

    def test_half_step_rotation_maps_to_a_nearest(self):
        n = 8
        angles = 2 * np.pi * np.arange(n) / n
        body = np.stack([np.cos(angles), np.zeros(n), np.sin(angles)], axis=1)
        head_angles = angles + np.pi / n  # between two body vertices
        head = np.stack([np.cos(head_angles), np.zeros(n), np.sin(head_angles)], axis=1)
        corr = correspond_loops(head, body)
        for i, j in enumerate(corr):
            d = np.linalg.norm(head[i] - body, axis=1)
            nearest = np.where(d <= d.min() + 1e-12)[0]
            assert j in nearest

    def test_exact_tie_breaks_to_lower_index(self):
        body = np.array([[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]])
        head = np.array([[0.0, 0.5, 0.0]])
        assert correspond_loops(head, body)[0] == 0

    def test_matches_quadratic_oracle(self):
        rng = np.random.default_rng(3)
        head = rng.normal(size=(12, 3))
        body = rng.normal(size=(17, 3))
        corr = correspond_loops(head, body)
        for i in range(12):
            d = np.linalg.norm(head[i] - body, axis=1)
            assert d[corr[i]] == d.min()


class TestStitch:
    def test_concentric_octagons_watertight(self):
        body, body_loop = regular_loop_mesh(8, 1.0, 0.0, direction=-1)
        head, head_loop = regular_loop_mesh(8, 0.9, 0.4, direction=1)
        result = stitch(body, body_loop, head, head_loop)
        assert len(result.mesh.boundary_edges()) == 0
        assert len(result.band_triangles) == 16
        assert euler_characteristic(result.mesh) == 2

    def test_mismatched_loop_sizes_cover_all_body_vertices(self):
        body, body_loop = regular_loop_mesh(12, 1.0, 0.0, direction=-1)
        head, head_loop = regular_loop_mesh(4, 0.8, 0.5, direction=1)
        result = stitch(body, body_loop, head, head_loop)
        assert len(result.mesh.boundary_edges()) == 0
        assert len(result.band_triangles) == 16  # n + m = 4 + 12
        band = result.mesh.triangles[result.band_triangles]
        used_body = set(band.ravel().tolist()) & set(body_loop.vertices.tolist())
        assert used_body == set(body_loop.vertices.tolist())

    def test_two_hemispheres_form_sphere(self):
        sphere = uv_sphere(radius=1.0, rings=10, segments=14)
        lower = CutPlane(np.array([0.0, 0.06, 0.0]), np.array([0.0, 1.0, 0.0]))
        upper = CutPlane(np.array([0.0, -0.02, 0.0]), np.array([0.0, 1.0, 0.0]))
        bottom = slice_mesh(sphere, lower, keep_side=-1)
        top = slice_mesh(sphere, upper, keep_side=1)
        result = stitch(bottom.mesh, bottom.loop, top.mesh, top.loop)
        assert len(result.mesh.boundary_edges()) == 0
        assert euler_characteristic(result.mesh) == 2
        assert len(result.band_triangles) == len(bottom.loop) + len(top.loop)

    def test_band_count_and_seam_tags(self):
        body, body_loop = regular_loop_mesh(10, 1.0, 0.0, direction=-1)
        head, head_loop = regular_loop_mesh(7, 0.8, 0.5, direction=1)
        result = stitch(body, body_loop, head, head_loop)
        assert len(result.band_triangles) == 17
        assert set(result.seam_body.tolist()) <= set(result.body_vertices.tolist())
        assert set(result.seam_head.tolist()) <= set(result.head_vertices.tolist())

    def test_cyclic_shift_invariance(self):
        body, body_loop = regular_loop_mesh(9, 1.0, 0.0, direction=-1)
        head, head_loop = regular_loop_mesh(9, 0.85, 0.5, direction=1)
        base = stitch(body, body_loop, head, head_loop)
        shifted_loop = BoundaryLoop(np.roll(head_loop.vertices, 3))
        shifted = stitch(body, body_loop, head, shifted_loop)
        canon = lambda tris: {tuple(sorted(t)) for t in tris.tolist()}
        assert canon(base.mesh.triangles) == canon(shifted.mesh.triangles)

    def test_inconsistent_orientation_auto_reverses(self):
        body, body_loop = regular_loop_mesh(8, 1.0, 0.0, direction=-1)
        head, head_loop = regular_loop_mesh(8, 0.9, 0.4, direction=1)
        flipped = BoundaryLoop(head_loop.vertices[::-1])
        with pytest.warns(UserWarning, match="auto-revers"):
            result = stitch(body, body_loop, head, flipped)
        assert len(result.mesh.boundary_edges()) == 0

    def test_manifold_edges(self):
        sphere = uv_sphere(radius=1.0, rings=8, segments=12)
        lower = CutPlane(np.array([0.0, 0.09, 0.0]), np.array([0.0, 1.0, 0.0]))
        upper = CutPlane(np.array([0.0, -0.03, 0.0]), np.array([0.0, 1.0, 0.0]))
        bottom = slice_mesh(sphere, lower, keep_side=-1)
        top = slice_mesh(sphere, upper, keep_side=1)
        result = stitch(bottom.mesh, bottom.loop, top.mesh, top.loop)
        edges = np.concatenate(
            [
                result.mesh.triangles[:, [0, 1]],
                result.mesh.triangles[:, [1, 2]],
                result.mesh.triangles[:, [2, 0]],
            ]
        )
        _, counts = np.unique(np.sort(edges, axis=1), axis=0, return_counts=True)
        assert np.all(counts == 2)
