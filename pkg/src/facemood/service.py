"""FastAPI service exposing the engine to clients.

REST endpoints wrap single-shot classification; the websocket endpoint
carries the real-time frame stream. Wire protocol (documented in
docs/protocol.md): the client sends a JSON text message

    {"id": <int>, "format": "jpeg" | "png" | "gray8",
     "width": <int, gray8 only>, "height": <int, gray8 only>}

immediately followed by one binary message with the frame payload. The
server answers every processed frame with a JSON text message carrying the
FrameResult; malformed input gets {"type": "error", ...} and the connection
stays open. Frames arriving faster than inference are dropped oldest-first
through a capacity-1 mailbox; the cumulative drop count rides on every
reply. Each connection owns its own smoothing window.
"""

from __future__ import annotations

import asyncio
import base64
import json
import logging
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from fastapi.responses import JSONResponse
from pydantic import BaseModel, ValidationError

from .engine import EmotionEngine, EmotionWindow, FrameResult
from .errors import FacemoodError
from .image import ImagePlane, decode_image
from .svm import EMOTIONS

log = logging.getLogger(__name__)

MAX_FRAME_BYTES = 8 * 1024 * 1024


class FrameHeader(BaseModel):
    id: int
    format: Literal["jpeg", "png", "gray8"]
    width: int | None = None
    height: int | None = None


class FaceBoxModel(BaseModel):
    x: int
    y: int
    side: int


class FrameReply(BaseModel):
    type: Literal["result"] = "result"
    id: int
    face: FaceBoxModel | None
    emotion: str | None
    current_emotion: str | None
    scores: dict[str, float] | None
    latency_ms: float
    dropped: int


class ErrorReply(BaseModel):
    type: Literal["error"] = "error"
    code: str
    message: str
    id: int | None = None


class ClassifyRequest(BaseModel):
    image_b64: str
    format: Literal["jpeg", "png", "gray8"] = "png"
    width: int | None = None
    height: int | None = None


class ClassifyResponse(BaseModel):
    emotion: str | None
    scores: dict[str, float] | None
    face: FaceBoxModel | None
    latency_ms: float


class ModelInfo(BaseModel):
    labels: list[str]
    strategy: str
    tap: int
    feature_dim: int


def decode_frame(header: FrameHeader, payload: bytes) -> ImagePlane:
    if header.format == "gray8":
        if not header.width or not header.height:
            raise FacemoodError("gray8 frames need width and height")
        if len(payload) != header.width * header.height:
            raise FacemoodError(
                f"gray8 payload is {len(payload)} bytes, "
                f"expected {header.width * header.height}"
            )
        data = np.frombuffer(payload, np.uint8).reshape(header.height, header.width)
        return ImagePlane(data)
    return decode_image(payload)


def _result_reply(result: FrameResult, dropped: int) -> FrameReply:
    face = None
    if result.face is not None:
        face = FaceBoxModel(x=result.face.x, y=result.face.y, side=result.face.side)
    return FrameReply(
        id=result.frame_id,
        face=face,
        emotion=EMOTIONS[result.raw_emotion] if result.raw_emotion is not None else None,
        current_emotion=(
            EMOTIONS[result.smoothed_emotion] if result.smoothed_emotion is not None else None
        ),
        scores=result.scores,
        latency_ms=result.latency_ms,
        dropped=dropped,
    )


@dataclass
class _Connection:
    window: EmotionWindow = field(default_factory=EmotionWindow)
    dropped: int = 0


def create_app(engine: EmotionEngine, max_frame_bytes: int = MAX_FRAME_BYTES) -> FastAPI:
    app = FastAPI(title="facemood", version="0.1.0")
    app.state.engine = engine

    @app.get("/health")
    def health():
        return {"status": "ok", "engine_ready": engine.initialized}

    @app.get("/model", response_model=ModelInfo)
    def model_info():
        if not engine.initialized:
            return JSONResponse(status_code=503, content={"detail": "engine not initialized"})
        return ModelInfo(
            labels=[engine.model.label_names[l] for l in engine.model.labels],
            strategy=engine.model.strategy.value,
            tap=engine.tap.value,
            feature_dim=engine.model.dim,
        )

    @app.post("/classify", response_model=ClassifyResponse)
    async def classify(request: ClassifyRequest):
        if not engine.initialized:
            return JSONResponse(status_code=503, content={"detail": "engine not initialized"})
        try:
            payload = base64.b64decode(request.image_b64)
            header = FrameHeader(
                id=0, format=request.format, width=request.width, height=request.height
            )
            img = decode_frame(header, payload)
        except (FacemoodError, ValueError) as exc:
            return JSONResponse(status_code=422, content={"detail": str(exc)})
        loop = asyncio.get_running_loop()
        result, _ = await loop.run_in_executor(
            None, engine.process_frame, img, EmotionWindow(), 0
        )
        reply = _result_reply(result, 0)
        return ClassifyResponse(
            emotion=reply.emotion,
            scores=reply.scores,
            face=reply.face,
            latency_ms=reply.latency_ms,
        )

    @app.websocket("/ws")
    async def stream(ws: WebSocket):
        await ws.accept()
        conn = _Connection()
        slot: asyncio.Queue = asyncio.Queue(maxsize=1)
        worker = asyncio.create_task(_inference_worker(ws, slot, conn, engine))
        header: FrameHeader | None = None
        try:
            while True:
                message = await ws.receive()
                if message.get("type") == "websocket.disconnect":
                    break
                if "text" in message and message["text"] is not None:
                    try:
                        header = FrameHeader.model_validate(json.loads(message["text"]))
                    except (json.JSONDecodeError, ValidationError) as exc:
                        header = None
                        await ws.send_text(
                            ErrorReply(code="BAD_MESSAGE", message=str(exc)).model_dump_json()
                        )
                    continue
                payload = message.get("bytes") or b""
                if header is None:
                    await ws.send_text(
                        ErrorReply(
                            code="BAD_MESSAGE",
                            message="binary frame without a preceding JSON header",
                        ).model_dump_json()
                    )
                    continue
                if len(payload) > max_frame_bytes:
                    await ws.send_text(
                        ErrorReply(
                            code="FRAME_TOO_LARGE",
                            message=f"payload exceeds {max_frame_bytes} bytes",
                            id=header.id,
                        ).model_dump_json()
                    )
                    header = None
                    continue
                if slot.full():
                    try:
                        slot.get_nowait()
                        conn.dropped += 1
                    except asyncio.QueueEmpty:
                        pass
                await slot.put((header, payload))
                header = None
        except WebSocketDisconnect:
            pass
        finally:
            worker.cancel()

    return app


async def _inference_worker(
    ws: WebSocket, slot: asyncio.Queue, conn: _Connection, engine: EmotionEngine
) -> None:
    loop = asyncio.get_running_loop()
    while True:
        header, payload = await slot.get()
        try:
            img = decode_frame(header, payload)
            result, conn.window = await loop.run_in_executor(
                None, engine.process_frame, img, conn.window, header.id
            )
            reply: BaseModel = _result_reply(result, conn.dropped)
        except FacemoodError as exc:
            reply = ErrorReply(code="BAD_FRAME", message=str(exc), id=header.id)
        except Exception as exc:  # noqa: BLE001 - keep the stream alive
            log.exception("inference failed for frame %s", header.id)
            reply = ErrorReply(code="INTERNAL", message=str(exc), id=header.id)
        try:
            await ws.send_text(reply.model_dump_json())
        except (RuntimeError, WebSocketDisconnect):
            return


def serve(
    engine: EmotionEngine,
    host: str = "127.0.0.1",
    port: int = 8400,
    static_dir=None,
) -> None:
    """Run the service until interrupted; FACEMOOD_LOG_LEVEL controls logging."""
    import os

    import uvicorn

    level = os.environ.get("FACEMOOD_LOG_LEVEL", "info").lower()
    logging.basicConfig(level=level.upper())
    app = create_app(engine)
    if static_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=static_dir, html=True), name="frontend")
    uvicorn.run(app, host=host, port=port, log_level=level)
