"""Model backend: tokenize, forward pass, mean-pool hidden states.

Spans on the wire are character ranges; this module owns the mapping
from characters to tokens via the fast tokenizer's offset mapping, so
clients never see token indices. A token is pooled for a span when its
character range intersects the span (half-open on both sides).

Pooling always uses the final layer's hidden states, upcast to float64
before averaging so the served values do not depend on the model's
native precision more than the forward pass itself does.
"""

from __future__ import annotations

from typing import Optional

import numpy as np
import torch


class BadSpanError(ValueError):
    """Span is malformed or lies outside the text."""


class NoTokensError(ValueError):
    """Nothing to pool: no tokens at all, or none under the span."""


class InferenceError(RuntimeError):
    """The forward pass itself failed."""


POOLING_MODES = ("whole_input", "target_span")

_DTYPES = {
    "float32": torch.float32,
    "float16": torch.float16,
    "bfloat16": torch.bfloat16,
}


def load_backend(
    model_id: str,
    device: str = "cpu",
    precision: str = "float32",
    include_bos: bool = False,
) -> "TransformerBackend":
    """Load tokenizer and model weights by name and wrap them."""
    from transformers import AutoModel, AutoTokenizer

    tokenizer = AutoTokenizer.from_pretrained(model_id, use_fast=True)
    kwargs = {}
    if precision == "int8":
        # 8-bit loading needs the optional bitsandbytes stack; surface a
        # clear error instead of a deep import failure when it is absent.
        try:
            from transformers import BitsAndBytesConfig
        except ImportError as err:  # pragma: no cover
            raise InferenceError(f"int8 precision unavailable: {err}") from err
        kwargs["quantization_config"] = BitsAndBytesConfig(load_in_8bit=True)
    else:
        kwargs["dtype"] = _DTYPES[precision]
    model = AutoModel.from_pretrained(model_id, **kwargs)
    if precision != "int8":
        model = model.to(device)
    return TransformerBackend(
        model, tokenizer, model_id=model_id, device=device, include_bos=include_bos
    )


class TransformerBackend:
    """Wraps a loaded model + fast tokenizer for embedding requests."""

    def __init__(
        self,
        model,
        tokenizer,
        model_id: str,
        device: str = "cpu",
        include_bos: bool = False,
    ):
        if not tokenizer.is_fast:
            raise ValueError("a fast tokenizer is required for offset mapping")
        self.model = model.eval()
        self.tokenizer = tokenizer
        self.model_id = model_id
        self.device = device
        self.include_bos = include_bos
        self.hidden_size = int(model.config.hidden_size)
        self._bos_id = tokenizer.bos_token_id
        if self._bos_id is None:
            self._bos_id = tokenizer.eos_token_id

    def embed(
        self, text: str, pooling: str = "whole_input", span: Optional[tuple] = None
    ) -> np.ndarray:
        """Return the mean-pooled last-layer hidden state as float64.

        Raises:
            BadSpanError: span missing/extra or outside the text.
            NoTokensError: nothing to pool.
            InferenceError: the forward pass failed.
        """
        if pooling not in POOLING_MODES:
            raise ValueError(f"pooling must be one of {POOLING_MODES}")
        span = self._check_span(text, pooling, span)

        encoding = self.tokenizer(
            text, add_special_tokens=False, return_offsets_mapping=True
        )
        content_ids = list(encoding["input_ids"])
        offsets = [tuple(pair) for pair in encoding["offset_mapping"]]

        ids = list(content_ids)
        bos_position = None
        if self._bos_id is not None:
            ids = [self._bos_id] + ids
            bos_position = 0
        if not ids:
            raise NoTokensError(
                "tokenizer produced no tokens and the model has no BOS token"
            )
        content_start = 0 if bos_position is None else 1

        if pooling == "whole_input":
            positions = list(range(content_start, len(ids)))
            if self.include_bos and bos_position is not None:
                positions = [bos_position] + positions
            if not positions:
                # empty input embeds the BOS-only sequence
                positions = [bos_position]
        else:
            start, end = span
            positions = [
                content_start + index
                for index, (tok_start, tok_end) in enumerate(offsets)
                if tok_start < end and start < tok_end
            ]
            if not positions:
                raise NoTokensError(f"span [{start}, {end}) overlaps no tokens")

        hidden = self._forward(ids)
        pooled = hidden[positions].to(torch.float64).mean(dim=0)
        return pooled.cpu().numpy()

    def _forward(self, ids: list) -> torch.Tensor:
        input_ids = torch.tensor([ids], dtype=torch.long, device=self.device)
        try:
            with torch.no_grad():
                output = self.model(input_ids=input_ids)
        except Exception as err:
            raise InferenceError(f"forward pass failed: {err}") from err
        hidden = output.last_hidden_state
        if hidden.shape[-1] != self.hidden_size:  # pragma: no cover
            raise InferenceError(
                f"model returned width {hidden.shape[-1]}, "
                f"config says {self.hidden_size}"
            )
        return hidden[0]

    @staticmethod
    def _check_span(text: str, pooling: str, span) -> Optional[tuple]:
        if pooling != "target_span":
            if span is not None:
                raise BadSpanError("span is only valid with target_span pooling")
            return None
        if span is None:
            raise BadSpanError("target_span pooling requires a span")
        try:
            start, end = int(span[0]), int(span[1])
        except (TypeError, ValueError, IndexError):
            raise BadSpanError(f"span must be [start, end] integers, got {span!r}")
        if not (0 <= start < end <= len(text)):
            raise BadSpanError(
                f"span [{start}, {end}) outside text of length {len(text)}"
            )
        return (start, end)
