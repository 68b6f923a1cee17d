import base64
import io
import json
import threading

import numpy as np
import pytest
from fastapi.testclient import TestClient
from PIL import Image

from gsavatar.pipeline import build_demo_bundle
from gsavatar.service import create_app


@pytest.fixture(scope="module")
def bundle_and_app():
    bundle, predictor = build_demo_bundle(seed=0)
    app = create_app(bundle, predictor)
    return bundle, app


@pytest.fixture()
def client(bundle_and_app):
    _, app = bundle_and_app
    with TestClient(app) as c:
        yield c


def decode_png(data: bytes) -> np.ndarray:
    return np.asarray(Image.open(io.BytesIO(data))).astype(np.float64) / 255.0


class TestModelEndpoint:
    def test_dimensions_match_bundle(self, bundle_and_app, client):
        bundle, _ = bundle_and_app
        doc = client.get("/api/model").json()
        assert doc["d_body"] == bundle.d_body
        assert doc["k_gamma"] == bundle.k_gamma
        assert doc["jaw_dims"] == 3 and doc["eyelid_dims"] == 2
        assert set(doc["cameras"]) == set(bundle.cameras)
        assert "root" in doc["joint_names"]


class TestRenderEndpoint:
    def test_render_matches_cli_output_exactly(self, bundle_and_app, tmp_path):
        # Serve the same on-disk bundle the CLI reads: identical inputs must
        # produce byte-identical PNGs.
        bundle, _ = bundle_and_app
        from gsavatar.cli import main
        from gsavatar.pipeline import load_bundle, save_bundle

        bundle_dir = tmp_path / "bundle"
        save_bundle(bundle_dir, bundle)
        out_png = tmp_path / "cli.png"
        assert main(
            ["render", "--bundle", str(bundle_dir), "--camera", "front", "--background", "334455",
             "--out", str(out_png)]
        ) == 0

        loaded, loaded_pred = load_bundle(bundle_dir)
        with TestClient(create_app(loaded, loaded_pred)) as parity_client:
            resp = parity_client.post(
                "/api/render",
                json={
                    "pose": [0.0] * bundle.d_body,
                    "expression": {"gamma": [0.0] * bundle.k_gamma, "jaw": [0, 0, 0], "eyelids": [0, 0]},
                    "camera": "front",
                    "background": "334455",
                },
            )
        assert resp.status_code == 200
        assert resp.headers["content-type"] == "image/png"
        for stage in ("Tex", "Pred", "Tra", "Ren"):
            assert f"x-timing-{stage.lower()}-ms" in {k.lower() for k in resp.headers}
        assert resp.content == out_png.read_bytes()

    def test_malformed_request_400(self, client):
        resp = client.post("/api/render", json={"pose": [1, 2, 3]})
        assert resp.status_code == 400
        assert "pose" in resp.json()["detail"]

    def test_unknown_camera_400(self, bundle_and_app, client):
        bundle, _ = bundle_and_app
        resp = client.post("/api/render", json={"pose": [0.0] * bundle.d_body, "camera": "nope"})
        assert resp.status_code == 400

    def test_non_json_body_400(self, client):
        resp = client.post("/api/render", content=b"not json", headers={"content-type": "application/json"})
        assert resp.status_code == 400

    def test_concurrent_clients_get_correct_frames(self, bundle_and_app, client):
        bundle, _ = bundle_and_app
        payload_a = {"pose": [0.0] * bundle.d_body, "background": "000000", "camera": "front"}
        pose_b = [0.0] * bundle.d_body
        pose_b[7] = 0.5
        payload_b = {"pose": pose_b, "background": "000000", "camera": "front"}
        results = {}

        def fetch(name, payload):
            results[name] = client.post("/api/render", json=payload).content

        threads = [
            threading.Thread(target=fetch, args=("a1", payload_a)),
            threading.Thread(target=fetch, args=("b", payload_b)),
            threading.Thread(target=fetch, args=("a2", payload_a)),
        ]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert results["a1"] == results["a2"]
        assert results["a1"] != results["b"]


class TestStream:
    def test_gamma_delta_changes_only_head_region(self, bundle_and_app, client):
        bundle, _ = bundle_and_app
        with client.websocket_connect("/api/stream") as ws:
            hello = ws.receive_json()
            assert hello["type"] == "hello"
            assert hello["k_gamma"] == bundle.k_gamma

            ws.send_json({"set": {"pose": [0.0] * bundle.d_body, "camera": "front", "background": "000000"}})
            first = ws.receive_json()
            assert first["type"] == "frame" and first["seq"] == 1
            assert set(first["timings_ms"]) >= {"tex", "pred", "tra", "ren"}
            base = decode_png(base64.b64decode(first["png_base64"]))

            ws.send_json({"set": {"gamma": [1.0] * bundle.k_gamma}})
            second = ws.receive_json()
            assert second["seq"] == 2
            moved = decode_png(base64.b64decode(second["png_base64"]))

        diff = np.abs(base - moved).max(axis=2)
        ys, xs = np.where(diff > 1.0 / 255.0)
        assert len(ys) > 0
        from test_pipeline import head_screen_bounds

        x0, x1, y0, y1 = head_screen_bounds(bundle, bundle.cameras["front"], pad=6.0)
        assert xs.min() >= x0 and xs.max() <= x1
        assert ys.min() >= y0 and ys.max() <= y1

    def test_schema_error_does_not_kill_stream(self, bundle_and_app, client):
        bundle, _ = bundle_and_app
        with client.websocket_connect("/api/stream") as ws:
            ws.receive_json()
            ws.send_json({"set": {"gamma": [1.0]}})  # wrong length
            err = ws.receive_json()
            assert err["type"] == "error" and err["error"] == "schema"
            ws.send_json({"set": {"pose": [0.0] * bundle.d_body}})
            frame = ws.receive_json()
            assert frame["type"] == "frame"
