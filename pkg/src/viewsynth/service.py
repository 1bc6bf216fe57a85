"""Frame-synthesis service: HTTP session management plus a WebSocket stream
for interactive camera steering.

Wire formats:
  - pose: 12 numbers, row-major [R|t], the transform from the requested
    camera frame into the session's source camera (comma-separated decimals
    over HTTP, little-endian f64 over the stream)
  - stream request: u32 sequence number, u32 payload kind, 12 f64 pose
  - stream reply: u32 sequence number, u32 payload kind, PNG bytes
    (kind 1 = color, 2 = depth visualization, 0 = error with UTF-8 text)

Backpressure is latest-wins: while a frame is being rendered, newer poses
replace the queued one, so replies may be dropped but are never reordered.
"""

from __future__ import annotations

import asyncio
import logging
import struct
import time
import uuid
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from fastapi import FastAPI, HTTPException, Response, WebSocket, WebSocketDisconnect
from pydantic import BaseModel, Field

from . import formats, geometry, scenes, warp
from .geometry import GeometryError, RigidTransform
from .tae import TaeModel, ViewChange, load_model

KIND_ERROR = 0
KIND_COLOR = 1
KIND_DEPTH = 2

POSE_STRUCT = struct.Struct("<12d")
REQUEST_STRUCT = struct.Struct("<II12d")
HEADER_STRUCT = struct.Struct("<II")

logger = logging.getLogger("viewsynth.service")


class CreateSessionRequest(BaseModel):
    mode: Literal["oracle", "learned"]
    scene_seed: int | None = None
    scene_kind: Literal["object", "corridor"] = "object"
    image_size: int = Field(default=64, ge=16, le=512)
    checkpoint: str | None = None
    source_azimuth_deg: float = 0.0
    source_elevation_deg: float = 0.0
    # learned mode on user-supplied data: base64 PNG plus fx fy cx cy w h
    image_png_base64: str | None = None
    intrinsics: list[float] | None = None


class SessionInfo(BaseModel):
    id: str
    mode: str
    width: int
    height: int


class HealthResponse(BaseModel):
    status: str
    sessions: int


@dataclass
class Session:
    id: str
    mode: str
    source: scenes.ViewSample
    spec: scenes.SceneSpec | None = None
    model: TaeModel | None = None
    d_min: float = scenes.DEFAULT_D_MIN
    d_max: float = scenes.DEFAULT_D_MAX
    lock: asyncio.Lock = field(default_factory=asyncio.Lock)


def parse_pose_values(values) -> RigidTransform:
    arr = np.asarray(values, dtype=np.float64)
    if arr.size != 12:
        raise ValueError(f"pose needs 12 numbers, got {arr.size}")
    try:
        return RigidTransform.from_matrix34(arr.reshape(3, 4))
    except GeometryError as e:
        raise ValueError(str(e))


def render_frame(session: Session, pose: RigidTransform, kind: int = KIND_COLOR) -> np.ndarray:
    """Synthesize one frame relative to the session's source view. pose maps
    requested-camera coordinates into the source camera (identity reproduces
    the source view)."""
    start = time.perf_counter()
    k = session.source.intrinsics
    t_st = geometry.invert(pose)
    if session.mode == "oracle":
        target_pose = geometry.compose(session.source.pose, pose)
        target = scenes.raycast(session.spec, target_pose, k,
                                d_min=session.d_min, d_max=session.d_max)
        image, _ = warp.synthesize_oracle(session.source.image, target.depth, t_st, k)
        depth = target.depth.values
    else:
        image, depth, _ = warp.synthesize(session.source.image, t_st, k, session.model)
        if depth is None:
            depth = np.full(image.shape[:2], session.d_min)
    out = formats.depth_to_image(depth, session.d_min, session.d_max) \
        if kind == KIND_DEPTH else image
    logger.info(
        "frame session=%s mode=%s kind=%d latency_ms=%.1f",
        session.id, session.mode, kind, 1e3 * (time.perf_counter() - start),
    )
    return out


def _build_session(req: CreateSessionRequest) -> Session:
    model = None
    if req.mode == "learned":
        if req.checkpoint is None:
            raise ValueError("learned mode requires a checkpoint path")
        try:
            model = load_model(req.checkpoint)
        except FileNotFoundError:
            raise ValueError(f"checkpoint not found: {req.checkpoint}")

    if req.image_png_base64 is not None:
        import base64

        if req.intrinsics is None or len(req.intrinsics) != 6:
            raise ValueError("uploaded image requires intrinsics [fx fy cx cy w h]")
        image = formats.decode_png(base64.b64decode(req.image_png_base64))
        k = geometry.CameraIntrinsics(
            req.intrinsics[0], req.intrinsics[1], req.intrinsics[2],
            req.intrinsics[3], int(req.intrinsics[4]), int(req.intrinsics[5]),
        )
        if image.shape[:2] != (k.height, k.width):
            raise ValueError(
                f"image {image.shape[1]}x{image.shape[0]} does not match "
                f"intrinsics {k.width}x{k.height}"
            )
        source = scenes.ViewSample(
            image=image.astype(np.float64),
            depth=geometry.DepthMap(np.full((k.height, k.width), scenes.DEFAULT_D_MAX)),
            pose=RigidTransform.identity(),
            intrinsics=k,
        )
        spec = None
        if req.mode == "oracle":
            raise ValueError("oracle mode requires a scene seed, not an uploaded image")
    else:
        if req.scene_seed is None:
            raise ValueError("scene_seed is required without an uploaded image")
        size = req.image_size
        if model is not None:
            size = model.config.image_size
        spec = (scenes.corridor_scene(req.scene_seed) if req.scene_kind == "corridor"
                else scenes.random_scene(req.scene_seed))
        k = scenes.default_intrinsics(size)
        pose = scenes.orbit_pose(req.source_azimuth_deg, req.source_elevation_deg)
        source = scenes.raycast(spec, pose, k)

    return Session(id=uuid.uuid4().hex, mode=req.mode, source=source,
                   spec=spec, model=model)


def create_app(checkpoint: str | None = None) -> FastAPI:
    """App factory; `checkpoint` becomes the default for learned sessions."""
    app = FastAPI(title="viewsynth")
    sessions: dict[str, Session] = {}

    def get_session(session_id: str) -> Session:
        session = sessions.get(session_id)
        if session is None:
            raise HTTPException(status_code=404, detail=f"unknown session {session_id}")
        return session

    @app.get("/health", response_model=HealthResponse)
    def health():
        return HealthResponse(status="ok", sessions=len(sessions))

    @app.post("/session", response_model=SessionInfo)
    def create_session(req: CreateSessionRequest):
        if req.checkpoint is None and checkpoint is not None:
            req = req.model_copy(update={"checkpoint": checkpoint})
        try:
            session = _build_session(req)
        except ValueError as e:
            raise HTTPException(status_code=400, detail=str(e))
        sessions[session.id] = session
        k = session.source.intrinsics
        return SessionInfo(id=session.id, mode=session.mode, width=k.width, height=k.height)

    @app.delete("/session/{session_id}")
    def delete_session(session_id: str):
        get_session(session_id)
        del sessions[session_id]
        return {"deleted": session_id}

    @app.get("/session/{session_id}/frame")
    async def get_frame(session_id: str, pose: str, kind: str = "color"):
        session = get_session(session_id)
        try:
            parts = [float(p) for p in pose.split(",")]
            transform = parse_pose_values(parts)
        except ValueError as e:
            raise HTTPException(status_code=400, detail=f"invalid pose: {e}")
        payload_kind = KIND_DEPTH if kind == "depth" else KIND_COLOR
        async with session.lock:
            image = await asyncio.to_thread(render_frame, session, transform, payload_kind)
        return Response(content=formats.encode_png(image), media_type="image/png")

    @app.websocket("/session/{session_id}/stream")
    async def stream(websocket: WebSocket, session_id: str):
        session = sessions.get(session_id)
        await websocket.accept()
        if session is None:
            await websocket.send_bytes(
                HEADER_STRUCT.pack(0, KIND_ERROR) + f"unknown session {session_id}".encode()
            )
            await websocket.close()
            return

        pending: list = []            # latest-wins slot: [(seq, kind, pose)]
        wakeup = asyncio.Event()
        closed = False

        async def worker():
            while not closed or pending:
                if not pending:
                    wakeup.clear()
                    await wakeup.wait()
                    continue
                seq, payload_kind, transform = pending.pop()
                async with session.lock:
                    image = await asyncio.to_thread(
                        render_frame, session, transform, payload_kind
                    )
                try:
                    await websocket.send_bytes(
                        HEADER_STRUCT.pack(seq, payload_kind) + formats.encode_png(image)
                    )
                except Exception:
                    return

        task = asyncio.create_task(worker())
        try:
            while True:
                message = await websocket.receive_bytes()
                try:
                    if len(message) != REQUEST_STRUCT.size:
                        raise ValueError(
                            f"expected {REQUEST_STRUCT.size}-byte pose message, "
                            f"got {len(message)}"
                        )
                    unpacked = REQUEST_STRUCT.unpack(message)
                    seq, payload_kind = unpacked[0], unpacked[1]
                    if payload_kind not in (KIND_COLOR, KIND_DEPTH):
                        raise ValueError(f"unknown payload kind {payload_kind}")
                    transform = parse_pose_values(unpacked[2:])
                except ValueError as e:
                    await websocket.send_bytes(
                        HEADER_STRUCT.pack(0, KIND_ERROR) + str(e).encode()
                    )
                    continue
                pending.clear()
                pending.append((seq, payload_kind, transform))
                wakeup.set()
        except WebSocketDisconnect:
            pass
        finally:
            closed = True
            wakeup.set()
            task.cancel()

    return app


app = create_app()
