"""HTTP service exposing the extraction pipeline to interactive clients.

Sessions hold an uploaded image and its cached pipeline (filter outputs
and lifted tensors, stamped by config hash); extraction requests then
cost one early-exit solve plus a trace.  Bodies are JSON except the
image upload, which is the raw PNG bytes.
"""

from __future__ import annotations

import io
import threading
import uuid
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, Request, Response
from fastapi.middleware.cors import CORSMiddleware
from starlette.concurrency import run_in_threadpool

from .config import parse_config
from .errors import ParameterError, VesselPathError
from .fields import ScalarField2D
from .pipeline import ImagePipeline, PipelineConfig


class Session:
    def __init__(self, image: ScalarField2D, config: PipelineConfig):
        self.image = image
        self.lock = threading.Lock()
        self.pipeline = ImagePipeline(image, config)
        self.history: list[dict] = []

    def reconfigure(self, config: PipelineConfig) -> None:
        with self.lock:
            if config.config_hash() != self.pipeline.config_hash:
                self.pipeline = ImagePipeline(self.image, config)

    def pipeline_for(self, overrides: dict | None) -> ImagePipeline:
        """The cached pipeline, or an ephemeral one for per-request
        parameter overrides that do not touch the session cache."""
        current = self.pipeline
        if not overrides:
            return current
        data = current.config.to_dict()
        merged = _merge_params(data, overrides)
        config = parse_config(merged)
        if config.config_hash() == current.config_hash:
            return current
        return ImagePipeline(self.image, config)


def _merge_params(data: dict, overrides: dict) -> dict:
    from .config import FLAT_METRIC_KEYS, FLAT_OOF_KEYS, FLAT_TOP_KEYS, FLAT_TRACER_KEYS

    for key, value in overrides.items():
        if key in FLAT_METRIC_KEYS:
            data["metric"][key] = value
        elif key in FLAT_OOF_KEYS:
            data["oof"][key] = value
        elif key in FLAT_TRACER_KEYS:
            data["tracer"][key] = value
        elif key in FLAT_TOP_KEYS:
            data[key] = value
        elif key in ("oof", "metric", "tracer") and isinstance(value, dict):
            data[key].update(value)
        else:
            raise ParameterError(f"unknown parameter {key!r}")
    return data


def _png_response(values: np.ndarray) -> Response:
    from PIL import Image

    lo, hi = float(values.min()), float(values.max())
    scaled = (values - lo) / (hi - lo) if hi > lo else np.zeros_like(values)
    arr = np.clip(scaled * 255.0, 0, 255).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(arr, mode="L").save(buf, format="PNG")
    return Response(content=buf.getvalue(), media_type="image/png")


def create_app(config: PipelineConfig | None = None, static_dir: str | None = None) -> FastAPI:
    base_config = config or PipelineConfig()
    app = FastAPI(title="vesselpath", version="0.1.0")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    sessions: dict[str, Session] = {}
    registry_lock = threading.Lock()

    def get_session(session_id: str) -> Session:
        with registry_lock:
            session = sessions.get(session_id)
        if session is None:
            raise HTTPException(status_code=404, detail=f"unknown session {session_id}")
        return session

    @app.post("/sessions")
    async def create_session(request: Request):
        body = await request.body()
        if not body:
            raise HTTPException(status_code=400, detail="upload the image as the request body")
        try:
            from .fields import read_image_png
            import tempfile, os

            with tempfile.NamedTemporaryFile(suffix=".png", delete=False) as fh:
                fh.write(body)
                tmp = fh.name
            try:
                image = read_image_png(tmp)
            finally:
                os.unlink(tmp)
        except VesselPathError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        session = await run_in_threadpool(Session, image, base_config)
        session_id = uuid.uuid4().hex[:12]
        with registry_lock:
            sessions[session_id] = session
        return {
            "session_id": session_id,
            "width": image.spec.width,
            "height": image.spec.height,
            "config_hash": session.pipeline.config_hash,
        }

    @app.get("/sessions/{session_id}/vesselness")
    def vesselness(session_id: str):
        session = get_session(session_id)
        return _png_response(session.pipeline.oof.vesselness.values)

    @app.get("/sessions/{session_id}/feature")
    def feature(session_id: str):
        session = get_session(session_id)
        return _png_response(session.pipeline.feature.values)

    @app.get("/sessions/{session_id}/history")
    def history(session_id: str):
        session = get_session(session_id)
        with session.lock:
            return {"extractions": list(session.history)}

    @app.post("/sessions/{session_id}/extract")
    async def extract(session_id: str, request: Request):
        session = get_session(session_id)
        try:
            body = await request.json()
        except Exception:
            raise HTTPException(status_code=400, detail="malformed JSON body")
        for key in ("source", "end"):
            if key not in body or not isinstance(body[key], (list, tuple)) or len(body[key]) != 2:
                raise HTTPException(status_code=400, detail=f"body needs {key!r}: [x, y]")
        source = tuple(float(v) for v in body["source"])
        end = tuple(float(v) for v in body["end"])
        spec = session.image.spec
        for name, pt in (("source", source), ("end", end)):
            if not spec.contains(pt[0], pt[1]):
                raise HTTPException(status_code=422, detail=f"{name} point {pt} outside the image")
        try:
            pipeline = await run_in_threadpool(session.pipeline_for, body.get("params"))
            outcome = await run_in_threadpool(pipeline.extract, source, end)
        except ParameterError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        except VesselPathError as exc:
            raise HTTPException(status_code=409, detail=f"{type(exc).__name__}: {exc}")
        record = {
            "source": list(source),
            "end": list(end),
            "points": len(outcome.path),
            "energy": outcome.energy,
            "action_value": outcome.action_value,
            "refined": outcome.refined,
            "config_hash": pipeline.config_hash,
        }
        with session.lock:
            session.history.append(record)
        return {
            "path": [[float(x), float(y)] for x, y in outcome.path.points],
            "energy": outcome.energy,
            "action_value": outcome.action_value,
            "refined": outcome.refined,
            "steps": outcome.steps,
            "high_energy": outcome.high_energy,
            "warnings": outcome.warnings,
            "config_hash": pipeline.config_hash,
        }

    @app.post("/sessions/{session_id}/params")
    async def update_params(session_id: str, request: Request):
        session = get_session(session_id)
        try:
            body = await request.json()
        except Exception:
            raise HTTPException(status_code=400, detail="malformed JSON body")
        try:
            data = _merge_params(session.pipeline.config.to_dict(), body)
            config = parse_config(data)
            session.reconfigure(config)
        except VesselPathError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return {"config_hash": session.pipeline.config_hash, "config": config.to_dict()}

    @app.delete("/sessions/{session_id}")
    def delete_session(session_id: str):
        with registry_lock:
            if session_id not in sessions:
                raise HTTPException(status_code=404, detail=f"unknown session {session_id}")
            del sessions[session_id]
        return {"deleted": True}

    if static_dir and Path(static_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")
    return app
