import json

import numpy as np
import pytest

from gsavatar.cli import main
from gsavatar.geometry import sample_surface
from gsavatar.geometry.meshio import save_obj, save_ply
from gsavatar.head import evaluate_head, head_landmarks, save_head_model, toy_head_model
from gsavatar.render import load_png
from gsavatar.skinning.skeleton import save_pose_file


@pytest.fixture(scope="module")
def bundle_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("bundles") / "demo"
    assert main(["demo-bundle", "--out", str(out), "--seed", "0"]) == 0
    return out


@pytest.fixture(scope="module")
def fixture_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("fit_head")
    model = toy_head_model(seed=2, rings=9, segments=12, k_shape=4, k_expression=3)
    save_head_model(d / "model.bin", model)
    rng = np.random.default_rng(0)
    beta_true = rng.normal(size=4) * 0.6
    scan_mesh = model.template.with_vertices(model.template.vertices + model.shape_basis @ beta_true)
    save_ply(d / "scan.ply", scan_mesh)
    lmk = head_landmarks(model, scan_mesh)
    (d / "landmarks.json").write_text(json.dumps({"points": lmk.points.tolist()}))
    (d / "config.json").write_text(
        json.dumps(
            {
                "iters_rigid": 200,
                "iters_shape": 120,
                "iters_displacement": 100,
                "chamfer_samples": 800,
                "scan_samples": 5000,
            }
        )
    )
    return d


class TestFitHeadCommand:
    def test_fit_head_produces_report_with_decreasing_chamfer(self, fixture_dir, capsys):
        code = main(
            [
                "fit-head",
                "--scan", str(fixture_dir / "scan.ply"),
                "--landmarks", str(fixture_dir / "landmarks.json"),
                "--model", str(fixture_dir / "model.bin"),
                "--out", str(fixture_dir / "fitted.bin"),
                "--report", str(fixture_dir / "report.json"),
                "--config", str(fixture_dir / "config.json"),
            ]
        )
        assert code == 0
        report = json.loads((fixture_dir / "report.json").read_text())
        stages = report["stages"]
        assert set(stages) == {"rigid", "shape", "displacement"}
        assert stages["rigid"]["chamfer"] >= stages["shape"]["chamfer"] >= stages["displacement"]["chamfer"]
        assert (fixture_dir / "fitted.bin").exists()
        assert (fixture_dir / "report.csv").exists()

    def test_missing_landmarks_exit_2(self, fixture_dir, capsys):
        code = main(
            [
                "fit-head",
                "--scan", str(fixture_dir / "scan.ply"),
                "--landmarks", str(fixture_dir / "nope.json"),
                "--model", str(fixture_dir / "model.bin"),
                "--out", str(fixture_dir / "x.bin"),
            ]
        )
        assert code == 2
        out = capsys.readouterr().out
        assert "nope.json" in out

    def test_dry_run_writes_nothing(self, fixture_dir):
        out = fixture_dir / "dry.bin"
        code = main(
            [
                "fit-head",
                "--scan", str(fixture_dir / "scan.ply"),
                "--landmarks", str(fixture_dir / "landmarks.json"),
                "--model", str(fixture_dir / "model.bin"),
                "--out", str(out),
                "--dry-run",
            ]
        )
        assert code == 0
        assert not out.exists()


class TestRenderCommands:
    def test_render_byte_stable(self, bundle_dir, tmp_path):
        a = tmp_path / "a.png"
        b = tmp_path / "b.png"
        for out in (a, b):
            code = main(
                ["render", "--bundle", str(bundle_dir), "--camera", "front", "--background", "FFFFFF",
                 "--out", str(out)]
            )
            assert code == 0
        assert a.read_bytes() == b.read_bytes()

    def test_render_raw_dump(self, bundle_dir, tmp_path):
        out = tmp_path / "img.png"
        raw = tmp_path / "img.raw"
        code = main(["render", "--bundle", str(bundle_dir), "--out", str(out), "--raw", str(raw)])
        assert code == 0
        from gsavatar.render import load_raw

        data = load_raw(raw)
        png = load_png(out)
        assert np.abs(data - png[:, :, :3]).max() < 1.0 / 255.0

    def test_animate_writes_numbered_frames(self, bundle_dir, tmp_path):
        manifest = json.loads((bundle_dir / "manifest.json").read_text())
        d_body = 18
        frames = np.zeros((10, d_body))
        frames[:, 7] = np.linspace(0, 0.4, 10)  # spine sway
        pose_path = tmp_path / "poses.bin"
        save_pose_file(pose_path, frames, window=2)
        out_dir = tmp_path / "frames"
        code = main(
            ["animate", "--bundle", str(bundle_dir), "--pose-file", str(pose_path), "--out-dir", str(out_dir)]
        )
        assert code == 0
        files = sorted(out_dir.glob("frame_*.png"))
        assert [f.name for f in files] == [f"frame_{i:04d}.png" for i in range(10)]

    def test_unknown_camera_exit_2(self, bundle_dir, tmp_path):
        code = main(["render", "--bundle", str(bundle_dir), "--camera", "nope", "--out", str(tmp_path / "x.png")])
        assert code == 2

    def test_bad_background_exit_2(self, bundle_dir, tmp_path):
        code = main(
            ["render", "--bundle", str(bundle_dir), "--background", "red", "--out", str(tmp_path / "x.png")]
        )
        assert code == 2


class TestBakeCommand:
    def test_bake_over_overlapping_uvs_exit_3(self, tmp_path):
        from gsavatar.geometry import Mesh

        verts = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
        tris = np.array([[0, 1, 2], [0, 1, 3]])
        uv = np.array(
            [
                [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
                [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
            ]
        )
        save_obj(tmp_path / "overlap.obj", Mesh(verts, tris, uv=uv))
        code = main(
            ["bake", "--mesh", str(tmp_path / "overlap.obj"), "--resolution", "16", "--out", str(tmp_path / "o.texmap")]
        )
        assert code == 3

    def test_bake_region_from_bundle(self, bundle_dir, tmp_path):
        code = main(
            [
                "bake",
                "--mesh", str(bundle_dir / "stitched.obj"),
                "--meta", str(bundle_dir / "stitch_meta.json"),
                "--region", "head",
                "--resolution", "12",
                "--out", str(tmp_path / "head.texmap"),
            ]
        )
        assert code == 0
        from gsavatar.appearance import load_texel_map

        texmap = load_texel_map(tmp_path / "head.texmap")
        assert texmap.num_texels > 0


class TestBenchmarkCommand:
    def test_benchmark_emits_stage_split(self, tmp_path, capsys):
        out = tmp_path / "bench.csv"
        code = main(["benchmark", "--out", str(out), "--gaussians", "1500", "--size", "128"])
        assert code == 0
        lines = out.read_text().strip().splitlines()
        assert lines[0] == "case,gaussians,pixels,tex_ms,pred_ms,tra_ms,ren_ms"
        cases = [line.split(",")[0] for line in lines[1:]]
        assert cases == ["avatar_frame", "raster_reference", "raster_tiled"]


class TestTrackCommand:
    def test_track_writes_poses_and_expressions(self, bundle_dir, tmp_path):
        from gsavatar.geometry import project
        from gsavatar.pipeline import load_bundle
        from gsavatar.skinning.skeleton import load_pose_file
        from gsavatar.tracking import CameraObservation, ObservationFrame, save_observation_frame
        from gsavatar.head import evaluate_expression, Expression
        from gsavatar.geometry import sample_surface

        bundle, predictor = load_bundle(bundle_dir)
        n_frames = 2
        frames = np.zeros((n_frames, bundle.d_body))
        obs_dir = tmp_path / "obs"
        obs_dir.mkdir()
        cam = bundle.cameras["face"]
        for t in range(n_frames):
            e = Expression(np.array([0.1 * t, 0.0, 0.0]), np.zeros(bundle.k_gamma), np.zeros(2))
            verts = evaluate_expression(bundle.head, e).vertices
            cam_obs = {}
            for convention, anchors in (("fan51", bundle.head.landmark_embedding),
                                         ("dense105", bundle.head.dense_embedding)):
                pts = np.stack(
                    [a.bary @ verts[bundle.head.template.triangles[a.triangle]] for a in anchors]
                )
                pix = np.stack([project(cam, p)[0] for p in pts])
                key = "face" if convention == "fan51" else "face_d"
                cam_obs[key] = CameraObservation(convention, pix, np.ones(len(anchors)))
            mesh = bundle.stitched
            scan = sample_surface(mesh, 800, seed=t)
            save_observation_frame(obs_dir / f"frame_{t:04d}.json", ObservationFrame(cameras=cam_obs, scan=scan))

        # The bundle declares one camera per id; mirror the face camera for
        # the dense convention id used above.
        cams_path = bundle_dir / "cameras.json"
        doc = json.loads(cams_path.read_text())
        doc["face_d"] = doc["face"]
        cams_path.write_text(json.dumps(doc))
        manifest = json.loads((bundle_dir / "manifest.json").read_text())
        import hashlib

        manifest["hashes"]["cameras"] = hashlib.sha256(cams_path.read_bytes()).hexdigest()
        (bundle_dir / "manifest.json").write_text(json.dumps(manifest, indent=1))

        poses_path = tmp_path / "init.bin"
        save_pose_file(poses_path, frames, window=2)
        out_poses = tmp_path / "out.bin"
        out_expr = tmp_path / "expr.json"
        cfg_path = tmp_path / "trackcfg.json"
        cfg_path.write_text(json.dumps({"iterations": 3, "chamfer_samples": 128, "alpha_tv": 0.0}))
        code = main(
            [
                "track",
                "--bundle", str(bundle_dir),
                "--observations", str(obs_dir),
                "--poses-init", str(poses_path),
                "--out-poses", str(out_poses),
                "--out-expressions", str(out_expr),
                "--config", str(cfg_path),
                "--skip-motion",
                "--eyelid-pairs", "[[0, 1], [2, 3]]",
            ]
        )
        assert code == 0
        back, w, _ = load_pose_file(out_poses)
        assert back.shape == frames.shape
        doc = json.loads(out_expr.read_text())
        assert len(doc["frames"]) == n_frames
        assert len(doc["frames"][0]["gamma"]) == bundle.k_gamma


class TestFitAppearanceCommand:
    def test_fit_appearance_writes_decoder(self, bundle_dir, tmp_path):
        for name, cam in (("face", "face"), ("three_quarter", "three_quarter")):
            code = main(
                ["render", "--bundle", str(bundle_dir), "--camera", cam, "--background", "000000",
                 "--alpha", "--out", str(tmp_path / f"{name}.png")]
            )
            assert code == 0
        out = tmp_path / "head_fit.dec"
        code = main(
            [
                "fit-appearance",
                "--bundle", str(bundle_dir),
                "--region", "head",
                "--view", f"face={tmp_path / 'face.png'}",
                "--view", f"three_quarter={tmp_path / 'three_quarter.png'}",
                "--iterations", "4",
                "--out", str(out),
            ]
        )
        assert code == 0
        from gsavatar.appearance import load_decoder
        from gsavatar.pipeline import load_bundle

        bundle, _ = load_bundle(bundle_dir)
        decoder = load_decoder(out)
        assert decoder.params.shape == (bundle.head_texmap.num_texels, 59)
