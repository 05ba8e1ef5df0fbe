"""Shim configuration: which engine serves each capability."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass
class ShimConfig:
    """Model identifiers per capability.

    ``fixture`` selects the built-in deterministic engines; ``hf:<model_id>``
    loads a Hugging Face model (requires the ``models`` extra). Translation
    decodes deterministically by default and emits at most ``max_new_tokens``
    tokens.
    """

    translate_model: str = "fixture"
    chat_model: str = "fixture"
    embed_model: str = "fixture"
    device: str = "cpu"
    max_new_tokens: int = 40
    decoding: str = "deterministic"  # deterministic | sampling
    embed_dim: int = 16

    def __post_init__(self):
        if self.max_new_tokens < 1:
            raise ValueError("max_new_tokens must be >= 1")
        if self.decoding not in ("deterministic", "sampling"):
            raise ValueError(f"unknown decoding mode {self.decoding!r}")
