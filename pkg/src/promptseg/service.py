"""Interactive session server: upload an image once, prompt it many times.

Each session caches the encoder output, so prompt updates pay only the
prompt-embed/fuse/decode cost.  Embeddings live in an LRU cache with a byte
budget; an evicted session transparently re-encodes on its next request
(bitwise the same embedding, encoding is deterministic).
"""

from __future__ import annotations

import hashlib
import io
import os
import threading
import time
import uuid
from dataclasses import dataclass, field

import numpy as np
import yaml
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from PIL import Image, UnidentifiedImageError

from .autodiff import no_grad
from .data import resize_image
from .evaluation import iou
from .model import ImageEmbedding, SegmentationModel, binarize, load_checkpoint
from .prompts import (BoxPrompt, Click, PolygonPrompt, PromptSet,
                      PromptValidationError, ScribblePrompt)
from .rle import decode_rle, encode_rle

DEFAULT_CACHE_BUDGET = 256 * 1024 * 1024


@dataclass
class ServiceConfig:
    checkpoint: str = ""
    host: str = "127.0.0.1"
    port: int = 8000
    cache_budget_bytes: int = DEFAULT_CACHE_BUDGET

    @staticmethod
    def load(path=None, env=os.environ) -> "ServiceConfig":
        raw: dict = {}
        if path:
            with open(path) as fh:
                raw = yaml.safe_load(fh) or {}
        cfg = ServiceConfig(
            checkpoint=raw.get("checkpoint", ""),
            host=raw.get("host", "127.0.0.1"),
            port=int(raw.get("port", 8000)),
            cache_budget_bytes=int(raw.get("cache_budget_bytes", DEFAULT_CACHE_BUDGET)),
        )
        # environment overrides win over the file
        cfg.checkpoint = env.get("PROMPTSEG_CHECKPOINT", cfg.checkpoint)
        cfg.host = env.get("PROMPTSEG_HOST", cfg.host)
        cfg.port = int(env.get("PROMPTSEG_PORT", cfg.port))
        cfg.cache_budget_bytes = int(env.get("PROMPTSEG_CACHE_BUDGET", cfg.cache_budget_bytes))
        return cfg


@dataclass
class Session:
    session_id: str
    original_size: tuple[int, int]          # (h, w) of the uploaded image
    image_hash: str
    model_image: np.ndarray                 # resized to model resolution
    embedding: ImageEmbedding | None
    prompts: PromptSet = field(default_factory=PromptSet)
    last_mask: np.ndarray | None = None
    gt: np.ndarray | None = None
    created_at: float = field(default_factory=time.time)
    accessed_at: float = field(default_factory=time.time)
    lock: threading.Lock = field(default_factory=threading.Lock)


class SessionStore:
    """Thread-safe session map with LRU eviction of embeddings by bytes."""

    def __init__(self, model: SegmentationModel, cache_budget_bytes: int):
        self.model = model
        self.budget = cache_budget_bytes
        self._sessions: dict[str, Session] = {}
        self._lock = threading.Lock()

    def _embedding_bytes(self, emb: ImageEmbedding) -> int:
        return emb.tokens.data.nbytes

    def _evict_if_needed(self) -> None:
        with self._lock:
            cached = [s for s in self._sessions.values() if s.embedding is not None]
            total = sum(self._embedding_bytes(s.embedding) for s in cached)
            cached.sort(key=lambda s: s.accessed_at)
            while total > self.budget and cached:
                victim = cached.pop(0)
                total -= self._embedding_bytes(victim.embedding)
                victim.embedding = None  # re-encoded on next use

    def create(self, image_bytes: bytes) -> tuple[Session, float]:
        try:
            pil = Image.open(io.BytesIO(image_bytes))
            pil.load()
        except (UnidentifiedImageError, OSError) as exc:
            raise ValueError(f"image decode failed: {exc}") from exc
        rgb = np.asarray(pil.convert("RGB"), dtype=np.float32) / 255.0
        h, w = rgb.shape[:2]
        size = self.model.cfg.input_size
        # test-time rule: resize both sides directly, no padding
        model_img = resize_image(rgb.transpose(2, 0, 1), size, size)
        t0 = time.perf_counter()
        with no_grad():
            embedding = self.model.encode_image(model_img)
        encode_seconds = time.perf_counter() - t0
        session = Session(
            session_id=uuid.uuid4().hex,
            original_size=(h, w),
            image_hash=hashlib.sha256(image_bytes).hexdigest()[:16],
            model_image=model_img,
            embedding=embedding,
        )
        with self._lock:
            self._sessions[session.session_id] = session
        self._evict_if_needed()
        return session, encode_seconds

    def get(self, session_id: str) -> Session | None:
        with self._lock:
            session = self._sessions.get(session_id)
            if session is not None:
                session.accessed_at = time.time()
            return session

    def delete(self, session_id: str) -> bool:
        with self._lock:
            return self._sessions.pop(session_id, None) is not None

    def embedding_for(self, session: Session) -> ImageEmbedding:
        if session.embedding is None:
            with no_grad():
                session.embedding = self.model.encode_image(session.model_image)
            self._evict_if_needed()
        return session.embedding


def scale_prompts(prompts: PromptSet, original: tuple[int, int], size: int) -> PromptSet:
    """Original-image coordinates -> model space, rounding half up."""
    oh, ow = original
    sr = size / oh
    sc = size / ow

    def srow(r):
        return min(int(np.floor(r * sr + 0.5)), size - 1)

    def scol(c):
        return min(int(np.floor(c * sc + 0.5)), size - 1)

    return PromptSet(
        clicks=[Click(srow(c.row), scol(c.col), c.polarity) for c in prompts.clicks],
        boxes=[BoxPrompt(srow(b.r0), scol(b.c0), srow(b.r1), scol(b.c1)) for b in prompts.boxes],
        polygons=[PolygonPrompt(tuple((srow(r), scol(c)) for r, c in p.vertices))
                  for p in prompts.polygons],
        scribbles=[ScribblePrompt(tuple((srow(r), scol(c)) for r, c in s.path), s.polarity)
                   for s in prompts.scribbles],
        mask=prompts.mask,
        text_embedding=prompts.text_embedding,
    )


def create_app(model: SegmentationModel, cache_budget_bytes: int = DEFAULT_CACHE_BUDGET,
               static_dir=None) -> FastAPI:
    app = FastAPI(title="promptseg session service")
    store = SessionStore(model, cache_budget_bytes)
    app.state.store = store

    def not_found(session_id: str) -> JSONResponse:
        return JSONResponse({"error": f"unknown session {session_id!r}"}, status_code=404)

    def mask_response(session: Session, decode_ms: float, prompt_echo: dict) -> dict:
        body = {
            "mask_rle": encode_rle(session.last_mask),
            "decode_ms": round(decode_ms, 3),
            "prompts": prompt_echo,
            "iou": None,
        }
        if session.gt is not None:
            body["iou"] = iou(session.last_mask, session.gt)
        return body

    @app.post("/sessions")
    async def create_session(request: Request):
        body = await request.body()
        if not body:
            return JSONResponse({"error": "empty request body; send image bytes"}, status_code=400)
        try:
            session, encode_seconds = store.create(body)
        except ValueError as exc:
            return JSONResponse({"error": str(exc)}, status_code=400)
        return {
            "session_id": session.session_id,
            "encode_ms": round(encode_seconds * 1000, 3),
            "original_size": list(session.original_size),
            "model_size": model.cfg.input_size,
        }

    @app.post("/sessions/{session_id}/prompts")
    async def submit_prompts(session_id: str, request: Request):
        session = store.get(session_id)
        if session is None:
            return not_found(session_id)
        try:
            doc = await request.json()
        except Exception:
            return JSONResponse({"error": "prompt document is not valid JSON"}, status_code=400)
        try:
            prompts = PromptSet.from_wire(doc)
            scaled = scale_prompts(prompts, session.original_size, model.cfg.input_size)
        except (PromptValidationError, ValueError) as exc:
            return JSONResponse({"error": str(exc)}, status_code=400)
        with session.lock:  # serialize within a session; mask feedback stays coherent
            embedding = store.embedding_for(session)
            t0 = time.perf_counter()
            try:
                with no_grad():
                    logits = model.predict_from_embedding(embedding, scaled)
            except PromptValidationError as exc:
                return JSONResponse({"error": str(exc)}, status_code=400)
            decode_ms = (time.perf_counter() - t0) * 1000
            session.prompts = prompts
            session.last_mask = binarize(logits)
        return mask_response(session, decode_ms, doc)

    @app.get("/sessions/{session_id}/mask")
    def get_mask(session_id: str):
        session = store.get(session_id)
        if session is None:
            return not_found(session_id)
        if session.last_mask is None:
            return JSONResponse({"error": "no prompts submitted yet"}, status_code=409)
        return mask_response(session, 0.0, session.prompts.to_wire())

    @app.put("/sessions/{session_id}/gt")
    async def put_gt(session_id: str, request: Request):
        session = store.get(session_id)
        if session is None:
            return not_found(session_id)
        try:
            doc = await request.json()
            gt = decode_rle(doc["mask_rle"])
        except Exception as exc:
            return JSONResponse({"error": f"bad ground-truth document: {exc}"}, status_code=400)
        size = model.cfg.input_size
        if gt.shape != (size, size):
            return JSONResponse(
                {"error": f"ground truth must be {size}x{size} (model space), got {list(gt.shape)}"},
                status_code=400)
        session.gt = gt
        return {"ok": True}

    @app.delete("/sessions/{session_id}")
    def delete_session(session_id: str):
        if not store.delete(session_id):
            return not_found(session_id)
        return {"ok": True}

    @app.get("/healthz")
    def health():
        return {"status": "ok", "model_fingerprint": model.cfg.fingerprint(),
                "input_size": model.cfg.input_size}

    if static_dir is not None:
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")
    return app


def serve(checkpoint_path: str, host: str = "127.0.0.1", port: int = 8000,
          cache_budget_bytes: int = DEFAULT_CACHE_BUDGET, static_dir=None) -> None:
    import uvicorn

    model, _ = load_checkpoint(checkpoint_path)
    app = create_app(model, cache_budget_bytes, static_dir=static_dir)
    uvicorn.run(app, host=host, port=port)
