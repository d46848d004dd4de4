"""Provider registry: model choice is configuration, not code."""

from __future__ import annotations

import importlib
from dataclasses import dataclass


@dataclass
class AdapterConfig:
    provider: str = "builtin"
    detector_model: str | None = None
    embedder_model: str | None = None
    quality_model: str | None = None
    embed_dim: int | None = None
    score_threshold: float | None = None
    batch_size: int = 32


def get_provider(config: AdapterConfig):
    """Resolve a provider by registry name or dotted path to a class."""
    if config.provider == "builtin":
        from .builtin import BuiltinProvider

        return BuiltinProvider(config)
    if config.provider == "yunet":
        from .yunet import YuNetProvider

        return YuNetProvider(config)
    if "." in config.provider:
        module, _, cls = config.provider.rpartition(".")
        return getattr(importlib.import_module(module), cls)(config)
    raise ValueError(f"unknown provider {config.provider!r}")
