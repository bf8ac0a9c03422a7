"""HTTP editing service: the browser editor talks only to these endpoints.

POST /edit          multipart (image, mask, labels PNGs) -> edited PNG
GET  /classes       class ids, names, display colors
GET  /checkpoints   loaded checkpoint ids
POST /panorama/start  multipart (image PNG [, labels PNG]) -> session id
POST /panorama/step   {"session": id} -> widened canvas PNG

Responses are deterministic for identical inputs and checkpoint; malformed
uploads get a 4xx with a machine-readable reason, inference failures a 5xx
with an incident id.
"""

import io
import logging
import uuid

import numpy as np
from fastapi import FastAPI, File, Form, UploadFile
from fastapi.responses import JSONResponse, Response
from PIL import Image

from .data import CLASS_COLORS, CLASS_NAMES, float_to_uint8, uint8_to_float
from .editing import EditError, EditRequest, edit, extend_rightmost_column, panorama

log = logging.getLogger(__name__)


def _png_bytes(image_float):
    buf = io.BytesIO()
    Image.fromarray(float_to_uint8(image_float)).save(buf, format="PNG")
    return buf.getvalue()


def _read_rgb(data):
    return uint8_to_float(np.asarray(Image.open(io.BytesIO(data)).convert("RGB")))


def _read_gray(data):
    return np.asarray(Image.open(io.BytesIO(data)).convert("L"))


def _error(status, reason):
    return JSONResponse(status_code=status, content={"error": reason})


def create_app(checkpoints, default_id=None) -> FastAPI:
    """`checkpoints` maps id -> PyramidState; swap entries atomically to hot
    reload. Panorama sessions are kept in process memory."""
    app = FastAPI(title="spmedit")
    app.state.checkpoints = checkpoints
    app.state.default_id = default_id or next(iter(checkpoints))
    app.state.sessions = {}

    def resolve(checkpoint_id):
        cid = checkpoint_id or app.state.default_id
        state = app.state.checkpoints.get(cid)
        return cid, state

    @app.get("/classes")
    def classes():
        return [{"id": i, "name": name, "color": list(color)}
                for i, (name, color) in enumerate(zip(CLASS_NAMES, CLASS_COLORS))]

    @app.get("/checkpoints")
    def list_checkpoints():
        return {"checkpoints": sorted(app.state.checkpoints), "default": app.state.default_id}

    @app.post("/edit")
    async def edit_endpoint(image: UploadFile = File(...), mask: UploadFile = File(...),
                            labels: UploadFile = File(...), checkpoint: str = Form(None)):
        cid, state = resolve(checkpoint)
        if state is None:
            return _error(404, f"unknown checkpoint {cid!r}")
        try:
            img = _read_rgb(await image.read())
            msk = (_read_gray(await mask.read()) >= 128).astype(np.uint8)
            lab = _read_gray(await labels.read()).astype(np.int64)
        except Exception as exc:
            return _error(400, f"could not decode uploads: {exc}")
        if img.shape[:2] != msk.shape or img.shape[:2] != lab.shape:
            return _error(422, f"image {img.shape[:2]}, mask {msk.shape} and "
                               f"labels {lab.shape} must share dimensions")
        try:
            result = edit(EditRequest(image=img * (1.0 - msk[..., None]).astype(np.float32),
                                      mask=msk, label_map=lab, checkpoint_id=cid), state)
        except EditError as exc:
            return _error(422, str(exc))
        except Exception:
            incident = uuid.uuid4().hex[:12]
            log.exception("edit failed (incident %s)", incident)
            return JSONResponse(status_code=500,
                                content={"error": "inference failed", "incident": incident})
        return Response(content=_png_bytes(result), media_type="image/png")

    @app.post("/panorama/start")
    async def panorama_start(image: UploadFile = File(...), labels: UploadFile = File(None),
                             checkpoint: str = Form(None)):
        cid, state = resolve(checkpoint)
        if state is None:
            return _error(404, f"unknown checkpoint {cid!r}")
        try:
            img = _read_rgb(await image.read())
        except Exception as exc:
            return _error(400, f"could not decode image: {exc}")
        bh, bw = state.cfg.base_resolution
        if img.shape[0] != bh or img.shape[1] < bw:
            return _error(422, f"panorama image must be {bh} tall and at least {bw} wide")
        seg = None
        if labels is not None:
            data = await labels.read()
            if data:
                seg = _read_gray(data).astype(np.int64)
        if seg is None:
            seg = np.zeros(img.shape[:2], dtype=np.int64)
        session = uuid.uuid4().hex[:16]
        app.state.sessions[session] = {"canvas": img, "seg": seg, "checkpoint": cid}
        return {"session": session, "width": int(img.shape[1]), "half_width": bw // 2}

    @app.post("/panorama/step")
    def panorama_step(payload: dict):
        session = payload.get("session")
        sess = app.state.sessions.get(session)
        if sess is None:
            return _error(404, f"unknown panorama session {session!r}")
        _cid, state = resolve(sess["checkpoint"])
        if state is None:
            return _error(404, "checkpoint for this session was unloaded")
        bh, bw = state.cfg.base_resolution
        seg = sess["seg"]

        def provider(_step, width):
            return extend_rightmost_column(seg, width)

        try:
            canvas = panorama(sess["canvas"], 1, provider, state)
        except EditError as exc:
            return _error(422, str(exc))
        except Exception:
            incident = uuid.uuid4().hex[:12]
            log.exception("panorama step failed (incident %s)", incident)
            return JSONResponse(status_code=500,
                                content={"error": "inference failed", "incident": incident})
        sess["canvas"] = canvas
        sess["seg"] = np.concatenate(
            [seg, extend_rightmost_column(seg, bw // 2)], axis=1)
        return Response(content=_png_bytes(canvas), media_type="image/png",
                        headers={"X-Canvas-Width": str(canvas.shape[1])})

    return app


def serve(checkpoints, address="127.0.0.1:8000", default_id=None):
    """Run the service with uvicorn (blocking)."""
    import uvicorn

    host, _, port = address.partition(":")
    app = create_app(checkpoints, default_id=default_id)
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port or 8000), log_level="info")
