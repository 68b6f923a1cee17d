"""Render service: HTTP endpoints plus a WebSocket stream that poses,
decodes, and renders on demand.

API
---
GET  /api/model    -> bundle dimensions, joint names, camera presets.
POST /api/render   -> PNG bytes. Body: {"pose": [...], "expression":
                      {"gamma": [...], "jaw": [...], "eyelids": [...]},
                      "camera": preset name, "background": "RRGGBB"}.
                      Per-stage timings in X-Timing-*-Ms headers.
WS   /api/stream   -> send {"set": {...partial state...}}; each accepted
                      message yields {"type": "frame", "seq": n,
                      "timings_ms": {...}, "png_base64": "..."}.

Malformed requests return 400 with a schema error; render failures return
500 naming the failed stage. The service holds one immutable bundle and no
per-request state beyond it.
"""

from __future__ import annotations

import base64
import threading

import numpy as np
from fastapi import FastAPI, Request, Response, WebSocket, WebSocketDisconnect
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from .head.model import Expression
from .pipeline.avatar import FrameInputs, render_avatar
from .pipeline.bundle import AvatarBundle
from .render.image_io import png_bytes
from .skinning.character import DeformationPredictor, ZeroPredictor

MAX_CONCURRENT_RENDERS = 2


class SchemaError(ValueError):
    pass


def _parse_background(value) -> np.ndarray:
    if value is None:
        return np.zeros(3)
    if isinstance(value, (list, tuple)) and len(value) == 3:
        return np.clip(np.asarray(value, dtype=np.float64), 0.0, 1.0)
    if isinstance(value, str):
        text = value.lstrip("#")
        if len(text) == 6:
            try:
                return np.array([int(text[i : i + 2], 16) / 255.0 for i in (0, 2, 4)])
            except ValueError:
                pass
    raise SchemaError("background must be RRGGBB hex or an [r, g, b] triple in [0, 1]")


def _parse_vector(value, length: int, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=np.float64).ravel()
    if arr.shape != (length,) or not np.isfinite(arr).all():
        raise SchemaError(f"{name} must be {length} finite numbers")
    return arr


class RenderState:
    """Resolved request parameters; also the per-connection stream state."""

    def __init__(self, bundle: AvatarBundle):
        self.bundle = bundle
        self.pose = np.zeros(bundle.d_body)
        self.gamma = np.zeros(bundle.k_gamma)
        self.jaw = np.zeros(3)
        self.eyelids = np.zeros(2)
        self.camera = next(iter(bundle.cameras)) if bundle.cameras else None
        self.background = np.zeros(3)

    def apply(self, doc: dict) -> None:
        if not isinstance(doc, dict):
            raise SchemaError("request body must be a JSON object")
        if "pose" in doc and doc["pose"] is not None:
            self.pose = _parse_vector(doc["pose"], self.bundle.d_body, "pose")
        expr = doc.get("expression")
        if expr is not None:
            if not isinstance(expr, dict):
                raise SchemaError("expression must be an object")
            if "gamma" in expr:
                self.gamma = _parse_vector(expr["gamma"], self.bundle.k_gamma, "gamma")
            if "jaw" in expr:
                self.jaw = _parse_vector(expr["jaw"], 3, "jaw")
            if "eyelids" in expr:
                self.eyelids = _parse_vector(expr["eyelids"], 2, "eyelids")
        for key in ("gamma", "jaw", "eyelids"):
            if key in doc and doc[key] is not None:
                setattr(self, key, _parse_vector(doc[key], {"gamma": self.bundle.k_gamma, "jaw": 3, "eyelids": 2}[key], key))
        if "camera" in doc and doc["camera"] is not None:
            if doc["camera"] not in self.bundle.cameras:
                raise SchemaError(f"unknown camera preset {doc['camera']!r}")
            self.camera = doc["camera"]
        if "background" in doc and doc["background"] is not None:
            self.background = _parse_background(doc["background"])

    def expression(self) -> Expression:
        return Expression(self.jaw, self.gamma, self.eyelids)


def create_app(bundle: AvatarBundle, predictor: DeformationPredictor | None = None, static_dir=None) -> FastAPI:
    predictor = predictor or ZeroPredictor()
    app = FastAPI(title="gsavatar render service")
    render_slots = threading.Semaphore(MAX_CONCURRENT_RENDERS)

    @app.exception_handler(RequestValidationError)
    async def validation_handler(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"error": "schema", "detail": exc.errors()})

    def render_frame(state: RenderState):
        if state.camera is None:
            raise SchemaError("bundle has no camera presets")
        camera = bundle.cameras[state.camera]
        stage = "geometry"
        try:
            inputs = FrameInputs.static(state.pose, state.expression())
            stage = "render"
            with render_slots:
                result, timings = render_avatar(
                    bundle, inputs, camera, background=state.background, predictor=predictor
                )
            return result, timings
        except SchemaError:
            raise
        except Exception as e:
            raise RuntimeError(f"render failed in stage {stage}: {e}") from e

    @app.get("/api/model")
    def model_info():
        return {
            "d_body": bundle.d_body,
            "k_gamma": bundle.k_gamma,
            "jaw_dims": 3,
            "eyelid_dims": 2,
            "joint_names": bundle.rig.skeleton.joint_names,
            "dof_layout": [
                {"joint": bundle.rig.skeleton.joints[ji].name, "kind": kind}
                for ji, kind in bundle.rig.skeleton.dof_layout
            ],
            "cameras": {name: cam.to_dict() for name, cam in bundle.cameras.items()},
        }

    @app.post("/api/render")
    async def render_endpoint(request: Request):
        try:
            doc = await request.json()
        except Exception:
            return JSONResponse(status_code=400, content={"error": "schema", "detail": "body must be JSON"})
        state = RenderState(bundle)
        try:
            state.apply(doc)
            result, timings = render_frame(state)
        except SchemaError as e:
            return JSONResponse(status_code=400, content={"error": "schema", "detail": str(e)})
        except RuntimeError as e:
            return JSONResponse(status_code=500, content={"error": "render", "detail": str(e)})
        headers = {
            "X-Timing-Tex-Ms": f"{timings.tex_ms:.3f}",
            "X-Timing-Pred-Ms": f"{timings.pred_ms:.3f}",
            "X-Timing-Tra-Ms": f"{timings.tra_ms:.3f}",
            "X-Timing-Ren-Ms": f"{timings.ren_ms:.3f}",
        }
        return Response(content=png_bytes(result.image), media_type="image/png", headers=headers)

    @app.websocket("/api/stream")
    async def stream(ws: WebSocket):
        await ws.accept()
        state = RenderState(bundle)
        seq = 0
        await ws.send_json({"type": "hello", "d_body": bundle.d_body, "k_gamma": bundle.k_gamma})
        try:
            while True:
                doc = await ws.receive_json()
                try:
                    state.apply(doc.get("set", doc))
                    result, timings = render_frame(state)
                except SchemaError as e:
                    await ws.send_json({"type": "error", "error": "schema", "detail": str(e)})
                    continue
                except RuntimeError as e:
                    await ws.send_json({"type": "error", "error": "render", "detail": str(e)})
                    continue
                seq += 1
                await ws.send_json(
                    {
                        "type": "frame",
                        "seq": seq,
                        "timings_ms": timings.as_dict(),
                        "png_base64": base64.b64encode(png_bytes(result.image)).decode("ascii"),
                    }
                )
        except WebSocketDisconnect:
            return

    if static_dir is not None:
        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="viewer")
    return app
