"""Launch the embedding service."""

from __future__ import annotations

import click
import uvicorn

from .config import PRECISIONS, SidecarConfig
from .service import create_app


@click.command()
@click.option("--model", "model_id", required=True, help="Model name or local path.")
@click.option("--device", default="cpu", show_default=True)
@click.option(
    "--precision", type=click.Choice(PRECISIONS), default="float32", show_default=True
)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8642, show_default=True)
@click.option(
    "--max-concurrent", type=int, default=1, show_default=True,
    help="Forward passes allowed to run at once; extra requests queue.",
)
@click.option(
    "--include-bos/--exclude-bos", default=False, show_default=True,
    help="Pool the BOS token's hidden state into whole-input embeddings.",
)
def main(model_id, device, precision, host, port, max_concurrent, include_bos):
    """Serve mean-pooled last-hidden-layer embeddings over HTTP."""
    config = SidecarConfig(
        model_id=model_id,
        device=device,
        precision=precision,
        host=host,
        port=port,
        max_concurrent=max_concurrent,
        include_bos=include_bos,
    )
    uvicorn.run(create_app(config), host=config.host, port=config.port)


if __name__ == "__main__":
    main()
