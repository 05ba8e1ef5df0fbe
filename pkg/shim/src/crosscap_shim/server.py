"""Run the shim as a local HTTP process."""

from __future__ import annotations

import argparse
import os

import uvicorn

from .app import create_app
from .config import ShimConfig


def serve(config: ShimConfig, host: str = "127.0.0.1", port: int = 8811) -> None:
    uvicorn.run(create_app(config), host=host, port=port, log_level="warning")


def main(argv: list[str] | None = None) -> None:
    parser = argparse.ArgumentParser(description="crosscap model shim server")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=int(os.environ.get("PORT", "8811")))
    parser.add_argument("--translate-model", default="fixture")
    parser.add_argument("--chat-model", default="fixture")
    parser.add_argument("--embed-model", default="fixture")
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--max-new-tokens", type=int, default=40)
    parser.add_argument("--decoding", choices=["deterministic", "sampling"], default="deterministic")
    parser.add_argument("--embed-dim", type=int, default=16)
    args = parser.parse_args(argv)
    config = ShimConfig(
        translate_model=args.translate_model,
        chat_model=args.chat_model,
        embed_model=args.embed_model,
        device=args.device,
        max_new_tokens=args.max_new_tokens,
        decoding=args.decoding,
        embed_dim=args.embed_dim,
    )
    serve(config, host=args.host, port=args.port)


if __name__ == "__main__":
    main()
