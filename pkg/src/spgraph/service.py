"""Session-based HTTP editing service.

Sessions are in-memory; the stroke log is the source of truth and labels
are re-derived by replay, so identical logs always yield identical masks.
Mutations within a session are serialized by a per-session lock; every
response carries the session version it reflects.
"""

from __future__ import annotations

import base64
import binascii
import io
import threading
import uuid
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, Response
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from PIL import Image
from pydantic import BaseModel

from .mrf import DEFAULT_PHI, Stroke
from .pipeline import InferenceResult, polygons_for, run_inference
from .superpixel import InvalidArgument


class CreateSessionRequest(BaseModel):
    image: str  # base64 PNG


class StrokeRequest(BaseModel):
    points: list[list[float]]
    action: str
    radius: int = 3


@dataclass
class Session:
    id: str
    result: InferenceResult
    stroke_log: list[Stroke] = field(default_factory=list)
    version: int = 1
    lock: threading.Lock = field(default_factory=threading.Lock)


def _png_bytes(arr: np.ndarray, mode: str | None = None) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(arr, mode=mode).save(buf, format="PNG")
    return buf.getvalue()


def create_app(sp_net=None, gat=None, cell: int = 16,
               phi: float = DEFAULT_PHI) -> FastAPI:
    app = FastAPI(title="spgraph editing service")
    app.add_middleware(CORSMiddleware, allow_origins=["*"],
                       allow_methods=["*"], allow_headers=["*"])
    sessions: dict[str, Session] = {}
    app.state.sessions = sessions
    app.state.models = (sp_net, gat)

    def get_session(sid: str) -> Session | None:
        return sessions.get(sid)

    @app.post("/v1/sessions", status_code=201)
    def create_session(req: CreateSessionRequest):
        sp, g = app.state.models
        if sp is None or g is None:
            return JSONResponse({"error": "checkpoints not loaded"}, status_code=503)
        try:
            raw = base64.b64decode(req.image, validate=True)
            img = Image.open(io.BytesIO(raw)).convert("RGB")
        except (binascii.Error, OSError, ValueError):
            return JSONResponse({"error": "malformed image"}, status_code=400)
        rgb = np.asarray(img, dtype=np.float64) / 255.0
        try:
            result = run_inference(sp, g, rgb, cell=cell, phi=phi)
        except InvalidArgument as e:
            return JSONResponse({"error": str(e)}, status_code=422)
        sid = uuid.uuid4().hex
        sessions[sid] = Session(id=sid, result=result)
        return {"session_id": sid, "n_superpixels": int(result.graph.n_nodes),
                "version": 1}

    @app.get("/v1/sessions/{sid}/superpixels")
    def get_superpixels(sid: str):
        s = get_session(sid)
        if s is None:
            return JSONResponse({"error": "unknown session"}, status_code=404)
        with s.lock:
            data = _png_bytes(s.result.m.astype(np.uint16))
            version = s.version
        return Response(data, media_type="image/png",
                        headers={"X-Session-Version": str(version)})

    @app.get("/v1/sessions/{sid}/graph")
    def get_graph(sid: str):
        s = get_session(sid)
        if s is None:
            return JSONResponse({"error": "unknown session"}, status_code=404)
        with s.lock:
            payload = s.result.graph.to_json()
            payload["labels"] = [int(v) for v in s.result.labels]
            version = s.version
        return JSONResponse(payload, headers={"X-Session-Version": str(version)})

    @app.get("/v1/sessions/{sid}/mask")
    def get_mask(sid: str):
        s = get_session(sid)
        if s is None:
            return JSONResponse({"error": "unknown session"}, status_code=404)
        with s.lock:
            data = _png_bytes((s.result.mask * 255).astype(np.uint8))
            version = s.version
        return Response(data, media_type="image/png",
                        headers={"X-Session-Version": str(version)})

    @app.get("/v1/sessions/{sid}/polygons")
    def get_polygons(sid: str, eps: float = 1.5, angle_tol: float = 15.0):
        s = get_session(sid)
        if s is None:
            return JSONResponse({"error": "unknown session"}, status_code=404)
        with s.lock:
            fc = polygons_for(s.result, eps, angle_tol)
            version = s.version
        return JSONResponse(fc, headers={"X-Session-Version": str(version)})

    @app.post("/v1/sessions/{sid}/strokes")
    def post_stroke(sid: str, req: StrokeRequest):
        s = get_session(sid)
        if s is None:
            return JSONResponse({"error": "unknown session"}, status_code=404)
        try:
            stroke = Stroke(points=[(float(x), float(y)) for x, y in req.points],
                            action=req.action, radius=req.radius)
        except ValueError as e:
            return JSONResponse({"error": str(e)}, status_code=400)
        with s.lock:
            from .pipeline import replay_strokes
            log = s.stroke_log + [stroke]
            labels, changed, mask = replay_strokes(s.result, log, phi)
            s.stroke_log = log
            s.result.labels = labels
            s.result.mask = mask
            s.version += 1
            return {"version": s.version,
                    "changed_nodes": [int(i) for i in changed],
                    "mask_url": f"/v1/sessions/{sid}/mask"}

    return app
