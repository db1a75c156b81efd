"""HTTP layer.

Wire protocol:

    POST /embed   {"model": str, "text": str,
                   "pooling": "whole_input" | "target_span",
                   "span": [start, end] (target_span only)}
    200           {"model": str, "dim": int, "values": [float, ...]}
    errors        {"error": "<kind>: <detail>"} with 4xx/5xx

    GET /health   {"model": str, "dim": int, "status": "ready"}
                  503 while the model is loading, 500 after a failed load.

Error kinds are stable prefixes clients can dispatch on: bad_json,
bad_span, empty_model_output, model_loading, inference_error.

One forward pass serves one request; at most ``max_concurrent`` run at
once and the rest queue in arrival order.
"""

from __future__ import annotations

import asyncio
import threading
from contextlib import asynccontextmanager
from typing import Callable, Optional

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .backend import (
    POOLING_MODES,
    BadSpanError,
    InferenceError,
    NoTokensError,
    TransformerBackend,
    load_backend,
)
from .config import SidecarConfig


def _error(status: int, kind: str, detail: str) -> JSONResponse:
    return JSONResponse({"error": f"{kind}: {detail}"}, status_code=status)


def create_app(
    config: SidecarConfig,
    backend: Optional[TransformerBackend] = None,
    loader: Optional[Callable[[], TransformerBackend]] = None,
) -> FastAPI:
    """Build the service.

    With ``backend`` given the app starts ready (used by tests and by
    callers that already hold a loaded model). Otherwise ``loader`` (or
    the default weight loading) runs in a background thread at startup
    and the app answers 503 until it finishes.
    """
    load = loader or (
        lambda: load_backend(
            config.model_id,
            device=config.device,
            precision=config.precision,
            include_bos=config.include_bos,
        )
    )

    def _load_in_background():
        try:
            app.state.backend = load()
            app.state.status = "ready"
        except Exception as err:
            app.state.load_error = str(err)
            app.state.status = "failed"

    @asynccontextmanager
    async def lifespan(_app: FastAPI):
        if _app.state.backend is None:
            threading.Thread(target=_load_in_background, daemon=True).start()
        yield

    app = FastAPI(
        title="embed-sidecar", docs_url=None, redoc_url=None, lifespan=lifespan
    )
    app.state.config = config
    app.state.backend = backend
    app.state.status = "ready" if backend is not None else "loading"
    app.state.load_error = ""
    app.state.semaphore = asyncio.Semaphore(config.max_concurrent)

    @app.get("/health")
    def health():
        if app.state.status == "loading":
            return JSONResponse(
                {"model": config.model_id, "status": "loading"}, status_code=503
            )
        if app.state.status == "failed":
            return JSONResponse(
                {
                    "model": config.model_id,
                    "status": "failed",
                    "error": f"load_failed: {app.state.load_error}",
                },
                status_code=500,
            )
        served = app.state.backend
        return {"model": served.model_id, "dim": served.hidden_size, "status": "ready"}

    @app.post("/embed")
    async def embed(request: Request):
        if app.state.status == "loading":
            return _error(503, "model_loading", "model weights are still loading")
        if app.state.status == "failed":
            return _error(500, "inference_error", f"model failed to load: {app.state.load_error}")

        try:
            body = await request.json()
        except Exception as err:
            return _error(400, "bad_json", f"request body is not valid JSON ({err})")
        if not isinstance(body, dict):
            return _error(400, "bad_json", "request body must be a JSON object")

        text = body.get("text")
        if not isinstance(text, str):
            return _error(400, "bad_json", "'text' must be a string")
        pooling = body.get("pooling", "whole_input")
        if pooling not in POOLING_MODES:
            return _error(
                400, "bad_json", f"'pooling' must be one of {list(POOLING_MODES)}"
            )
        span = body.get("span")
        if span is not None and not (
            isinstance(span, (list, tuple)) and len(span) == 2
        ):
            return _error(400, "bad_span", "'span' must be a [start, end] pair")

        served = app.state.backend
        async with app.state.semaphore:
            try:
                values = await asyncio.to_thread(
                    served.embed, text, pooling, tuple(span) if span else None
                )
            except BadSpanError as err:
                return _error(400, "bad_span", str(err))
            except NoTokensError as err:
                return _error(422, "empty_model_output", str(err))
            except InferenceError as err:
                return _error(500, "inference_error", str(err))

        return {
            "model": served.model_id,
            "dim": served.hidden_size,
            "values": values.tolist(),
        }

    return app
