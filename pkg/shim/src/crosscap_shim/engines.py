"""Capability engines behind the wire endpoints.

The fixture engines are pure functions of their inputs, which makes the
deterministic-decoding contract trivial to honor; the ``hf:`` engines wrap
real models and fail loudly at startup when the runtime is missing.
"""

from __future__ import annotations

import hashlib
import math
import random

from .config import ShimConfig


class EngineStartupError(RuntimeError):
    """A configured model could not be loaded."""


_EN_DE = {
    "a": "ein", "an": "ein", "the": "der", "is": "ist", "are": "sind",
    "and": "und", "with": "mit", "on": "auf", "in": "in",
    "two": "zwei", "man": "mann", "woman": "frau", "person": "person",
    "people": "leute", "dog": "hund", "dogs": "hunde", "cat": "katze",
    "horse": "pferd", "car": "auto", "cars": "autos", "bench": "bank",
    "bicycle": "fahrrad", "street": "straße", "park": "park",
    "table": "tisch", "bottle": "flasche", "ball": "ball",
    "runs": "läuft", "sits": "sitzt", "plays": "spielt", "rides": "reitet",
    "red": "rot", "blue": "blau", "brown": "braun", "young": "jung",
}


class FixtureTranslateEngine:
    name = "fixture-mt"

    def __init__(self, config: ShimConfig):
        self.config = config

    def translate(self, text: str, src: str, tgt: str, max_tokens: int | None = None) -> str:
        limit = max_tokens or self.config.max_new_tokens
        words = text.split()[:limit]
        if (src, tgt) == ("en", "de"):
            out = []
            for raw in words:
                core = raw.strip(".,!?;:\"'")
                mapped = _EN_DE.get(core.lower(), core)
                if core[:1].isupper():
                    mapped = mapped[:1].upper() + mapped[1:]
                out.append(raw.replace(core, mapped, 1) if core else raw)
            return " ".join(out)
        if (src, tgt) == ("de", "en"):
            reverse = {}
            for en, de in _EN_DE.items():
                reverse.setdefault(de, en)
            out = []
            for raw in words:
                core = raw.strip(".,!?;:\"'")
                mapped = reverse.get(core.lower(), core)
                if core[:1].isupper():
                    mapped = mapped[:1].upper() + mapped[1:]
                out.append(raw.replace(core, mapped, 1) if core else raw)
            return " ".join(out)
        return f"({tgt}) " + " ".join(words)


class FixtureChatEngine:
    name = "fixture-llm"

    def reply(self, system: str, user: str) -> str:
        if "<final>" in user:
            example = self._extract_example(user)
            return (
                "Noun phrases extracted and aligned with the reference captions.\n"
                f"<final>{self._rewrite(example)}</final>"
            )
        caption = user.rsplit("\n\n", 1)[-1]
        return f'"{self._rewrite(caption)}"'

    @staticmethod
    def _extract_example(user: str) -> str:
        marker = "Now run each steps 1-3 for the example:"
        tail = user[user.find(marker) + len(marker):] if marker in user else user
        first, last = tail.find('"'), tail.rfind('"')
        return tail[first + 1 : last] if 0 <= first < last else tail.strip()

    @staticmethod
    def _rewrite(text: str) -> str:
        body = text.strip()
        tail = ""
        if body and body[-1] in ".!?":
            body, tail = body[:-1], body[-1]
        return f"The picture shows {body[:1].lower()}{body[1:]}{tail or '.'}"


class FixtureEmbedEngine:
    name = "fixture-encoder"

    def __init__(self, config: ShimConfig):
        self.dim = config.embed_dim

    def embed(self, material: str) -> list[float]:
        digest = hashlib.sha256(material.encode("utf-8")).digest()
        rng = random.Random(int.from_bytes(digest[:8], "big"))
        vec = [rng.gauss(0.0, 1.0) for _ in range(self.dim)]
        norm = math.sqrt(sum(v * v for v in vec))
        return [v / norm for v in vec]


class HFTranslateEngine:
    def __init__(self, model_id: str, config: ShimConfig):
        try:
            from transformers import pipeline
        except ImportError as exc:
            raise EngineStartupError("transformers is not installed; install the 'models' extra") from exc
        self.name = model_id
        self.config = config
        try:
            self._pipe = pipeline("translation", model=model_id, device=config.device)
        except Exception as exc:
            raise EngineStartupError(f"could not load translation model {model_id!r}: {exc}") from exc

    def translate(self, text: str, src: str, tgt: str, max_tokens: int | None = None) -> str:
        out = self._pipe(
            text,
            max_new_tokens=max_tokens or self.config.max_new_tokens,
            do_sample=self.config.decoding == "sampling",
            num_beams=1,
        )
        return out[0]["translation_text"]


class HFChatEngine:
    def __init__(self, model_id: str, config: ShimConfig):
        try:
            from transformers import pipeline
        except ImportError as exc:
            raise EngineStartupError("transformers is not installed; install the 'models' extra") from exc
        self.name = model_id
        self.config = config
        try:
            self._pipe = pipeline("text-generation", model=model_id, device=config.device)
        except Exception as exc:
            raise EngineStartupError(f"could not load chat model {model_id!r}: {exc}") from exc

    def reply(self, system: str, user: str) -> str:
        messages = [
            {"role": "system", "content": system},
            {"role": "user", "content": user},
        ]
        out = self._pipe(messages, do_sample=self.config.decoding == "sampling")
        generated = out[0]["generated_text"]
        if isinstance(generated, list):  # chat pipelines return the message list
            return generated[-1]["content"]
        return generated


class HFEmbedEngine:
    def __init__(self, model_id: str, config: ShimConfig):
        try:
            from sentence_transformers import SentenceTransformer
        except ImportError as exc:
            raise EngineStartupError("sentence-transformers is not installed") from exc
        self.name = model_id
        try:
            self._model = SentenceTransformer(model_id, device=config.device)
        except Exception as exc:
            raise EngineStartupError(f"could not load embedding model {model_id!r}: {exc}") from exc

    def embed(self, material: str) -> list[float]:
        return [float(v) for v in self._model.encode([material], normalize_embeddings=True)[0]]


def build_engines(config: ShimConfig):
    """Instantiate the three capability engines from the config."""

    def pick(identifier: str, fixture_factory, hf_factory):
        if identifier == "fixture":
            return fixture_factory()
        if identifier.startswith("hf:"):
            return hf_factory(identifier[3:])
        raise EngineStartupError(f"unknown model identifier {identifier!r}")

    translate = pick(
        config.translate_model,
        lambda: FixtureTranslateEngine(config),
        lambda mid: HFTranslateEngine(mid, config),
    )
    chat = pick(
        config.chat_model,
        lambda: FixtureChatEngine(),
        lambda mid: HFChatEngine(mid, config),
    )
    embed = pick(
        config.embed_model,
        lambda: FixtureEmbedEngine(config),
        lambda mid: HFEmbedEngine(mid, config),
    )
    return translate, chat, embed
