"""FastAPI application implementing the provider wire protocol.

Routes mirror what the gateway client POSTs: ``/v1/translate``, ``/v1/chat``,
``/v1/embed`` with capability payloads (plus an optional ``settings``
object), responding ``{"body": ..., "meta": {...}}``. ``GET /healthz``
reports the loaded engines.
"""

from __future__ import annotations

from fastapi import FastAPI
from fastapi.responses import JSONResponse
from pydantic import BaseModel, ConfigDict

from .config import ShimConfig
from .engines import build_engines


class Settings(BaseModel):
    model_config = ConfigDict(extra="ignore")
    max_tokens: int | None = None
    deterministic: bool | None = None


class TranslateRequest(BaseModel):
    model_config = ConfigDict(extra="ignore")
    src_lang: str
    tgt_lang: str
    text: str
    settings: Settings | None = None


class ChatRequest(BaseModel):
    # the gateway may add bookkeeping fields (e.g. a retry counter); ignore them
    model_config = ConfigDict(extra="ignore")
    system: str
    user: str
    settings: Settings | None = None


class EmbedRequest(BaseModel):
    model_config = ConfigDict(extra="ignore")
    text: str | None = None
    image_id: str | None = None
    settings: Settings | None = None


def create_app(config: ShimConfig | None = None) -> FastAPI:
    config = config or ShimConfig()
    translate_engine, chat_engine, embed_engine = build_engines(config)
    app = FastAPI(title="crosscap model shim")

    @app.get("/healthz")
    def healthz():
        return {
            "ok": True,
            "engines": {
                "translate": translate_engine.name,
                "chat": chat_engine.name,
                "embed": embed_engine.name,
            },
            "decoding": config.decoding,
            "max_new_tokens": config.max_new_tokens,
        }

    @app.post("/v1/translate")
    def translate(request: TranslateRequest):
        if not request.text.strip():
            return JSONResponse(status_code=400, content={"error": "text must be non-empty"})
        max_tokens = request.settings.max_tokens if request.settings else None
        text = translate_engine.translate(
            request.text, request.src_lang, request.tgt_lang, max_tokens=max_tokens
        )
        return {
            "body": {"text": text},
            "meta": {
                "model_name": translate_engine.name,
                "settings": {
                    "max_tokens": max_tokens or config.max_new_tokens,
                    "deterministic": config.decoding == "deterministic",
                },
            },
        }

    @app.post("/v1/chat")
    def chat(request: ChatRequest):
        if not request.user.strip():
            return JSONResponse(status_code=400, content={"error": "user prompt must be non-empty"})
        reply = chat_engine.reply(request.system, request.user)
        return {
            "body": {"text": reply},
            "meta": {"model_name": chat_engine.name, "settings": {"decoding": config.decoding}},
        }

    @app.post("/v1/embed")
    def embed(request: EmbedRequest):
        if (request.text is None) == (request.image_id is None):
            return JSONResponse(
                status_code=400,
                content={"error": "provide exactly one of 'text' or 'image_id'"},
            )
        material = (
            "txt|" + request.text if request.text is not None else "img|" + request.image_id
        )
        vector = embed_engine.embed(material)
        return {
            "body": {"vector": vector},
            "meta": {"model_name": embed_engine.name, "settings": {"dim": len(vector)}},
        }

    return app
