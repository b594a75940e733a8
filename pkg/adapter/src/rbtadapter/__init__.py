"""Adapter SDK for the rbt stdio JSONL protocol."""

from .session import PROTOCOL_VERSION, serve

__version__ = "0.1.0"
__all__ = ["PROTOCOL_VERSION", "serve"]
