"""HTTP sidecar serving mean-pooled last-hidden-layer LLM embeddings."""

from .backend import (
    BadSpanError,
    InferenceError,
    NoTokensError,
    TransformerBackend,
    load_backend,
)
from .config import PRECISIONS, SidecarConfig
from .service import create_app

__version__ = "0.1.0"

__all__ = [
    "BadSpanError",
    "InferenceError",
    "NoTokensError",
    "PRECISIONS",
    "SidecarConfig",
    "TransformerBackend",
    "create_app",
    "load_backend",
    "__version__",
]
