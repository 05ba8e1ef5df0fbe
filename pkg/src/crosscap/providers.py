"""Cached, replayable gateway to translation / LLM / embedding backends.

Every model call flows through ``Gateway.call``: requests are keyed by a
content hash of (capability, canonical payload), responses are persisted
under ``{root}/{capability}/{key[:2]}/{key}.json`` with atomic writes, and a
warm cache replays a full pipeline with no backend configured.
"""

from __future__ import annotations

import hashlib
import json
import os
import random
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Protocol

import numpy as np

from .errors import BatchError, ProtocolError, TransportError, ValidationError
from .retrieval import EmbeddingTable


class Capability(str, Enum):
    TRANSLATE = "translate"
    CHAT = "chat"
    EMBED_TEXT = "embed_text"
    EMBED_IMAGE = "embed_image"


# capability -> wire endpoint (both embed capabilities share one route)
_ENDPOINTS = {
    Capability.TRANSLATE: "translate",
    Capability.CHAT: "chat",
    Capability.EMBED_TEXT: "embed",
    Capability.EMBED_IMAGE: "embed",
}


def canonical_json(payload: dict) -> str:
    return json.dumps(payload, sort_keys=True, ensure_ascii=True, separators=(",", ":"))


def compute_request_key(capability: Capability, payload: dict) -> str:
    material = capability.value + "\n" + canonical_json(payload)
    return hashlib.sha256(material.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class ProviderRequest:
    capability: Capability
    payload: dict
    request_key: str = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "capability", Capability(self.capability))
        object.__setattr__(
            self, "request_key", compute_request_key(self.capability, self.payload)
        )

    @property
    def endpoint(self) -> str:
        return _ENDPOINTS[self.capability]


@dataclass(frozen=True)
class ProviderResponse:
    request_key: str
    body: dict
    provider_meta: dict
    timestamp: float

    def to_dict(self) -> dict:
        return {
            "request_key": self.request_key,
            "body": self.body,
            "provider_meta": self.provider_meta,
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ProviderResponse":
        return cls(data["request_key"], data["body"], data["provider_meta"], data["timestamp"])


class CacheStore:
    """Content-addressed on-disk response store with atomic writes."""

    def __init__(self, root: str | Path):
        self.root = Path(root)

    def path_for(self, capability: Capability, request_key: str) -> Path:
        return self.root / capability.value / request_key[:2] / f"{request_key}.json"

    def get(self, request: ProviderRequest) -> ProviderResponse | None:
        path = self.path_for(request.capability, request.request_key)
        if not path.exists():
            return None
        return ProviderResponse.from_dict(json.loads(path.read_text(encoding="utf-8")))

    def put(self, request: ProviderRequest, response: ProviderResponse) -> None:
        path = self.path_for(request.capability, request.request_key)
        if path.exists():
            return  # entries are immutable once written
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                json.dump(response.to_dict(), fh, ensure_ascii=False)
            os.replace(tmp, path)
        finally:
            if os.path.exists(tmp):
                os.unlink(tmp)


class Backend(Protocol):
    name: str

    def invoke(self, request: ProviderRequest, settings: dict | None) -> tuple[dict, dict]:
        """Return (body, meta) for the request or raise Transport/ProtocolError."""
        ...


def _validate_body(capability: Capability, body) -> None:
    if not isinstance(body, dict):
        raise ProtocolError(f"{capability.value}: body must be a JSON object")
    if capability in (Capability.TRANSLATE, Capability.CHAT):
        if not isinstance(body.get("text"), str):
            raise ProtocolError(f"{capability.value}: body must carry a 'text' string")
    else:
        vector = body.get("vector")
        if not isinstance(vector, list) or not all(
            isinstance(v, (int, float)) for v in vector
        ):
            raise ProtocolError(f"{capability.value}: body must carry a numeric 'vector'")


@dataclass
class GatewayConfig:
    translate_max_tokens: int = 40
    deterministic: bool = True
    retries: int = 1
    retry_backoff: float = 0.05
    concurrency: int = 1


@dataclass(frozen=True)
class EmbedItem:
    item_id: str
    kind: str  # "text" | "image"
    value: str


class Gateway:
    """Single entry point for all provider calls; ``backend=None`` is replay
    mode and serves exclusively from cache."""

    def __init__(
        self,
        cache: CacheStore,
        backend: Backend | None = None,
        config: GatewayConfig | None = None,
    ):
        self.cache = cache
        self.backend = backend
        self.config = config or GatewayConfig()
        self.backend_calls = 0
        self.cache_hits = 0

    def _settings_for(self, capability: Capability) -> dict | None:
        if capability is Capability.TRANSLATE:
            return {
                "max_tokens": self.config.translate_max_tokens,
                "deterministic": self.config.deterministic,
            }
        return None

    def call(self, request: ProviderRequest) -> ProviderResponse:
        cached = self.cache.get(request)
        if cached is not None:
            self.cache_hits += 1
            return cached
        if self.backend is None:
            raise TransportError(
                f"cache miss for {request.capability.value} request "
                f"{request.request_key[:12]}... and no backend configured (replay mode)"
            )
        settings = self._settings_for(request.capability)
        attempt = 0
        while True:
            try:
                self.backend_calls += 1
                body, meta = self.backend.invoke(request, settings)
                break
            except TransportError:
                if attempt >= self.config.retries:
                    raise
                time.sleep(self.config.retry_backoff * (2**attempt))
                attempt += 1
        _validate_body(request.capability, body)
        response = ProviderResponse(
            request_key=request.request_key,
            body=body,
            provider_meta={"backend_name": getattr(self.backend, "name", "unknown"), **meta},
            timestamp=time.time(),
        )
        self.cache.put(request, response)
        return response

    def _map(self, requests: list[ProviderRequest]) -> list[ProviderResponse]:
        results = self._map_collect(requests)
        for resp, exc in results:
            if exc is not None:
                raise exc
        return [resp for resp, _ in results]  # type: ignore[misc]

    def _map_collect(
        self, requests: list[ProviderRequest]
    ) -> list[tuple[ProviderResponse | None, Exception | None]]:
        def attempt(req: ProviderRequest):
            try:
                return self.call(req), None
            except (TransportError, ProtocolError) as exc:
                return None, exc

        if self.config.concurrency > 1 and len(requests) > 1:
            with ThreadPoolExecutor(max_workers=self.config.concurrency) as pool:
                return list(pool.map(attempt, requests))
        return [attempt(r) for r in requests]

    def translate_batch(self, texts: list[str], src: str, tgt: str) -> list[str]:
        """Order-preserving batch translation; failures are collected and
        reported together with their indices."""
        requests = [
            ProviderRequest(Capability.TRANSLATE, {"src_lang": src, "tgt_lang": tgt, "text": t})
            for t in texts
        ]
        results = self._map_collect(requests)
        failed = [i for i, (_, exc) in enumerate(results) if exc is not None]
        if failed:
            raise BatchError(f"translation failed for {len(failed)} of {len(texts)} texts", failed)
        return [resp.body["text"] for resp, _ in results]  # type: ignore[union-attr]

    def chat(self, system: str, user: str) -> ProviderResponse:
        return self.call(ProviderRequest(Capability.CHAT, {"system": system, "user": user}))

    def embed_batch(self, items: list[EmbedItem]) -> EmbeddingTable:
        """Embed same-modality items; rows align with input order."""
        if not items:
            raise ValidationError("embed_batch needs at least one item")
        kinds = {item.kind for item in items}
        if not kinds <= {"text", "image"}:
            raise ValidationError(f"unknown embed item kinds: {kinds - {'text', 'image'}}")
        if len(kinds) > 1:
            raise ValidationError("embed_batch items must share one modality")
        kind = items[0].kind
        if kind == "text":
            requests = [
                ProviderRequest(Capability.EMBED_TEXT, {"text": item.value}) for item in items
            ]
        else:
            requests = [
                ProviderRequest(Capability.EMBED_IMAGE, {"image_id": item.value}) for item in items
            ]
        responses = self._map(requests)
        vectors = [resp.body["vector"] for resp in responses]
        dims = {len(v) for v in vectors}
        if len(dims) != 1:
            raise ProtocolError(f"embedding dimension varies within batch: {sorted(dims)}")
        return EmbeddingTable([item.item_id for item in items], np.array(vectors, dtype=np.float64))


# ---------------------------------------------------------------------------
# backends
# ---------------------------------------------------------------------------

_FIXTURE_LEXICON = {
    "a": "ein", "an": "ein", "the": "der", "is": "ist", "are": "sind",
    "and": "und", "with": "mit", "on": "auf", "in": "in", "at": "an",
    "two": "zwei", "three": "drei", "man": "mann", "men": "männer",
    "woman": "frau", "women": "frauen", "person": "person", "people": "leute",
    "boy": "bub", "boys": "buben", "girl": "mädchen",
    "dog": "hund", "dogs": "hunde", "cat": "katze", "cats": "katzen",
    "horse": "pferd", "horses": "pferde", "pony": "pony",
    "car": "auto", "cars": "autos", "bench": "bank", "benches": "bänke",
    "bicycle": "fahrrad", "bicycles": "fahrräder", "bike": "rad",
    "street": "straße", "road": "weg", "park": "park", "field": "feld",
    "grass": "gras", "window": "fenster", "wall": "wand",
    "chair": "stuhl", "chairs": "stühle", "sofa": "sofa",
    "table": "tisch", "tables": "tische", "bottle": "flasche", "bottles": "flaschen",
    "ball": "ball", "runs": "läuft", "running": "rennend", "run": "laufen",
    "sits": "sitzt", "sitting": "sitzend", "plays": "spielt", "play": "spielen",
    "playing": "spielend", "riding": "reitend", "rides": "reitet",
    "drives": "fährt", "walks": "geht", "stands": "steht", "stand": "stehen",
    "sleeps": "schläft", "sleeping": "schlafend", "eat": "essen",
    "under": "unter", "over": "über", "red": "rot", "blue": "blau",
    "brown": "braun", "green": "grün", "black": "schwarz", "white": "weiß",
    "small": "klein", "big": "groß", "young": "jung", "old": "alt",
    "long": "lang", "empty": "leer", "animal": "tier", "animals": "tiere",
    "canine": "hundeartig", "vehicle": "fahrzeug",
    "chase": "jagen", "chases": "jagt",
}


# reverse lexicon for de->en, first English word wins for shared targets
_FIXTURE_REVERSE = {}
for _en, _de in _FIXTURE_LEXICON.items():
    _FIXTURE_REVERSE.setdefault(_de, _en)


def _fixture_translate(text: str, src: str, tgt: str) -> str:
    if (src, tgt) == ("en", "de"):
        lexicon = _FIXTURE_LEXICON
    elif (src, tgt) == ("de", "en"):
        lexicon = _FIXTURE_REVERSE
    else:
        return f"({tgt}) {text}"
    out = []
    for raw in text.split():
        head = 0
        tail = len(raw)
        while head < tail and not raw[head].isalnum():
            head += 1
        while tail > head and not raw[tail - 1].isalnum():
            tail -= 1
        core = raw[head:tail]
        translated = lexicon.get(core.lower(), core)
        if core[:1].isupper():
            translated = translated[:1].upper() + translated[1:]
        out.append(raw[:head] + translated + raw[tail:])
    return " ".join(out)


def _fixture_paraphrase(text: str, targeted: bool) -> str:
    body = text.strip()
    trailing = ""
    if body and body[-1] in ".!?":
        body, trailing = body[:-1], body[-1]
    lowered = body[:1].lower() + body[1:]
    if targeted:
        return f"Pictured here, {lowered}{trailing or '.'}"
    return f"In this scene, {lowered}{trailing or '.'}"


def _extract_para_tgt_example(user: str) -> str:
    marker = "Now run each steps 1-3 for the example:"
    pos = user.find(marker)
    tail = user[pos + len(marker) :] if pos >= 0 else user
    first = tail.find('"')
    last = tail.rfind('"')
    if first < 0 or last <= first:
        return tail.strip()
    return tail[first + 1 : last]


class FixtureBackend:
    """Deterministic in-process stand-in for real model backends.

    Translation is lexicon-based, chat applies a rule paraphrase to the
    caption found in the prompt, and embeddings are hash-seeded unit vectors;
    every response is a pure function of the request payload.
    """

    name = "fixture"

    def __init__(self, embed_dim: int = 16):
        self.embed_dim = embed_dim

    def invoke(self, request: ProviderRequest, settings: dict | None) -> tuple[dict, dict]:
        payload = request.payload
        cap = request.capability
        if cap is Capability.TRANSLATE:
            text = _fixture_translate(payload["text"], payload["src_lang"], payload["tgt_lang"])
            return {"text": text}, {"model_name": "fixture-mt", "settings": settings or {}}
        if cap is Capability.CHAT:
            user = payload["user"]
            if "<final>" in user:
                example = _extract_para_tgt_example(user)
                reply = (
                    "Noun phrases identified and aligned with the reference list.\n"
                    f"<final>{_fixture_paraphrase(example, targeted=True)}</final>"
                )
            else:
                caption = user.rsplit("\n\n", 1)[-1]
                reply = f'"{_fixture_paraphrase(caption, targeted=False)}"'
            return {"text": reply}, {"model_name": "fixture-llm", "settings": {"decoding": "default"}}
        seed_material = (
            "img|" + payload["image_id"] if cap is Capability.EMBED_IMAGE else "txt|" + payload["text"]
        )
        digest = hashlib.sha256(seed_material.encode("utf-8")).digest()
        rng = random.Random(int.from_bytes(digest[:8], "big"))
        vec = np.array([rng.gauss(0.0, 1.0) for _ in range(self.embed_dim)])
        vec /= np.linalg.norm(vec)
        return {"vector": [float(v) for v in vec]}, {
            "model_name": "fixture-encoder",
            "settings": {"dim": self.embed_dim},
        }


class RecordedBackend:
    """Serves exact recorded bodies keyed by request_key; anything else is a
    transport failure."""

    name = "recorded"

    def __init__(self, responses: dict[str, dict], meta: dict | None = None):
        self.responses = dict(responses)
        self.meta = meta or {"model_name": "recorded"}

    @classmethod
    def from_file(cls, path: str | Path) -> "RecordedBackend":
        return cls(json.loads(Path(path).read_text(encoding="utf-8")))

    def invoke(self, request: ProviderRequest, settings: dict | None) -> tuple[dict, dict]:
        if request.request_key not in self.responses:
            raise TransportError(f"no recorded response for key {request.request_key[:12]}...")
        return self.responses[request.request_key], dict(self.meta)


class HTTPBackend:
    """POSTs canonical payloads to ``{base_url}/v1/{translate|chat|embed}``.

    Expects ``{"body": ..., "meta": {...}}`` responses; connection problems
    and 5xx map to TransportError (retried), 4xx and malformed JSON map to
    ProtocolError (never retried).
    """

    name = "http"

    def __init__(self, base_url: str, token: str | None = None, timeout: float = 30.0):
        import requests

        self._requests = requests
        self.base_url = base_url.rstrip("/")
        self.token = token if token is not None else os.environ.get("PROVIDER_TOKEN")
        self.timeout = timeout

    def invoke(self, request: ProviderRequest, settings: dict | None) -> tuple[dict, dict]:
        url = f"{self.base_url}/v1/{request.endpoint}"
        body = dict(request.payload)
        if settings:
            body["settings"] = settings
        headers = {}
        if self.token:
            headers["Authorization"] = f"Bearer {self.token}"
        try:
            resp = self._requests.post(url, json=body, headers=headers, timeout=self.timeout)
        except self._requests.RequestException as exc:
            raise TransportError(f"backend unreachable: {exc}") from exc
        if resp.status_code >= 500:
            raise TransportError(f"backend error {resp.status_code} from {url}")
        if resp.status_code >= 400:
            raise ProtocolError(f"backend rejected request ({resp.status_code}): {resp.text[:200]}")
        try:
            data = resp.json()
        except ValueError as exc:
            raise ProtocolError(f"non-JSON response from {url}") from exc
        if "body" not in data:
            raise ProtocolError(f"response from {url} lacks 'body'")
        return data["body"], data.get("meta", {})
