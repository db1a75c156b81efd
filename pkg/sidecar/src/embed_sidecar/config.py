"""Service configuration."""

from __future__ import annotations

from dataclasses import dataclass

PRECISIONS = ("float32", "float16", "bfloat16", "int8")


@dataclass(frozen=True)
class SidecarConfig:
    """Settings for one served model.

    ``max_concurrent`` bounds simultaneous forward passes; extra requests
    queue in arrival order. ``include_bos`` adds the beginning-of-sequence
    token's hidden state to whole-input pooling (it is always excluded
    from span pooling since it covers no characters).
    """

    model_id: str
    device: str = "cpu"
    precision: str = "float32"
    host: str = "127.0.0.1"
    port: int = 8642
    max_concurrent: int = 1
    include_bos: bool = False

    def __post_init__(self):
        if not self.model_id:
            raise ValueError("model_id must be non-empty")
        if self.precision not in PRECISIONS:
            raise ValueError(
                f"precision must be one of {PRECISIONS}, got {self.precision!r}"
            )
        if self.max_concurrent < 1:
            raise ValueError("max_concurrent must be at least 1")
