"""HTTP surface: POST /track and GET /healthz.

The tracker backend is lazily constructed on first use and shared across
requests; inference is serialized behind a lock since tracker sessions hold
state. Malformed requests get 400, an ungroundable object 422, a backend
that failed to load 503, all with an {"error": text} body.
"""

from __future__ import annotations

import base64
import binascii
import threading

import cv2
import numpy as np
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .tracker import ObjectNotFound, SegmentationTracker


class TrackRequest(BaseModel):
    frames: list[str]  # base64-encoded JPEG images
    object_description: str
    fps: float


class PointModel(BaseModel):
    frame_index: int
    cx: float
    cy: float
    bbox: list[float]
    present: bool


class TrackResponse(BaseModel):
    points: list[PointModel]
    frame_size: list[int]


class TrackerRuntime:
    """Lazy holder for the tracker backend."""

    def __init__(self, factory=SegmentationTracker):
        self.factory = factory
        self.lock = threading.Lock()
        self._tracker: SegmentationTracker | None = None
        self._load_error: str | None = None

    def ensure_loaded(self):
        with self.lock:
            if self._tracker is None and self._load_error is None:
                try:
                    self._tracker = self.factory()
                except Exception as exc:  # pragma: no cover - defensive
                    self._load_error = str(exc)
            if self._load_error is not None:
                raise RuntimeError(self._load_error)
            return self._tracker

    @property
    def ready(self) -> bool:
        return self._tracker is not None


def _decode_frame(b64: str, index: int) -> np.ndarray:
    try:
        raw = base64.b64decode(b64, validate=True)
    except (binascii.Error, ValueError) as exc:
        raise ValueError(f"frames[{index}] is not valid base64: {exc}") from exc
    bgr = cv2.imdecode(np.frombuffer(raw, dtype=np.uint8), cv2.IMREAD_COLOR)
    if bgr is None:
        raise ValueError(f"frames[{index}] is not a decodable JPEG image")
    return cv2.cvtColor(bgr, cv2.COLOR_BGR2RGB)


def create_app(tracker_factory=SegmentationTracker) -> FastAPI:
    app = FastAPI(title="tracker-service")
    runtime = TrackerRuntime(tracker_factory)
    inference_lock = threading.Lock()

    @app.exception_handler(RequestValidationError)
    async def malformed(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"error": str(exc.errors()[:3])})

    @app.get("/healthz")
    def healthz():
        try:
            runtime.ensure_loaded()
        except RuntimeError as exc:
            return JSONResponse(status_code=503, content={"error": f"model not ready: {exc}"})
        return {"status": "ok"}

    @app.post("/track")
    def track(request: TrackRequest):
        if len(request.frames) < 2:
            return JSONResponse(
                status_code=400, content={"error": "at least 2 frames are required"}
            )
        if not request.object_description.strip():
            return JSONResponse(
                status_code=400, content={"error": "object_description must be non-empty"}
            )
        try:
            tracker = runtime.ensure_loaded()
        except RuntimeError as exc:
            return JSONResponse(status_code=503, content={"error": f"model not ready: {exc}"})

        try:
            frames = [_decode_frame(b64, i) for i, b64 in enumerate(request.frames)]
        except ValueError as exc:
            return JSONResponse(status_code=400, content={"error": str(exc)})
        sizes = {f.shape[:2] for f in frames}
        if len(sizes) != 1:
            return JSONResponse(
                status_code=400, content={"error": "frames must share one size"}
            )

        with inference_lock:
            try:
                points = tracker.track(frames, request.object_description)
            except ObjectNotFound as exc:
                return JSONResponse(status_code=422, content={"error": str(exc)})

        h, w = frames[0].shape[:2]
        return TrackResponse(
            points=[
                PointModel(
                    frame_index=p.frame_index,
                    cx=p.cx,
                    cy=p.cy,
                    bbox=list(p.bbox),
                    present=p.present,
                )
                for p in points
            ],
            frame_size=[w, h],
        )

    return app


app = create_app()
