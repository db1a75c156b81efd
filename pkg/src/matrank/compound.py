"""Compound vector construction.

Two strategies are supported. ``whole_formula`` embeds the canonical
formula string directly. ``composition_averaged`` embeds each element's
English name (optionally biased by a context term such as
``"ferromagnet"``, rendered as ``"ferromagnet iron"``) and combines the
element vectors as a sum weighted by atomic fraction:

    v_compound = sum over elements of  fraction * v_element

The weighted sum accumulates left to right over canonical element order
in 64-bit arithmetic, so repeated construction is bit-reproducible. The
result is deliberately not normalized; cosine comparison divides by the
magnitudes anyway, and an unnormalized sum keeps the convex-combination
structure visible to tests.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from .errors import DimensionMismatch, ProviderError
from .formula import Composition, Element, atomic_fractions, canonical_string
from .providers import EmbeddingProvider, EmbeddingRequest, EmbeddingVector

Strategy = Literal["whole_formula", "composition_averaged"]

STRATEGIES: tuple[str, ...] = ("whole_formula", "composition_averaged")


@dataclass(frozen=True)
class ContextSpec:
    """A biasing term placed before a name prior to embedding.

    An empty term means no contextualization; otherwise the rendered
    phrase is ``"<term> <name>"`` with a single separating space. Any
    string is accepted as a term, including multi-word phrases.
    """

    term: str = ""

    def render(self, name: str) -> str:
        return f"{self.term} {name}" if self.term else name

    def span_of(self, name: str) -> tuple[int, int]:
        """Character range of ``name`` inside the rendered phrase."""
        start = len(self.term) + 1 if self.term else 0
        return (start, start + len(name))


@dataclass(frozen=True)
class CompoundVector:
    """A compound's embedding along with how it was built."""

    composition: Composition
    strategy: str
    context: ContextSpec
    vector: EmbeddingVector


def _attach(err: ProviderError, what: str) -> ProviderError:
    try:
        return type(err)(f"{err} [while embedding {what}]")
    except TypeError:  # subclasses with custom constructors
        return err


def whole_formula_vector(
    composition: Composition, provider: EmbeddingProvider
) -> CompoundVector:
    """Embed the canonical formula string of a compound directly."""
    text = canonical_string(composition)
    try:
        vector = provider.embed(EmbeddingRequest(text=text))
    except ProviderError as err:
        raise _attach(err, repr(text)) from err
    return CompoundVector(composition, "whole_formula", ContextSpec(""), vector)


def element_vector(
    el: Element,
    context: ContextSpec,
    provider: EmbeddingProvider,
    pooling: str = "whole_input",
) -> EmbeddingVector:
    """Embed one element's name, biased by the context term.

    With ``pooling="whole_input"`` the whole rendered phrase is pooled;
    with ``"target_span"`` only the element-name characters are.
    """
    phrase = context.render(el.name)
    span = context.span_of(el.name) if pooling == "target_span" else None
    return provider.embed(EmbeddingRequest(text=phrase, pooling=pooling, span=span))


def composition_averaged_vector(
    composition: Composition,
    context: ContextSpec,
    provider: EmbeddingProvider,
    pooling: str = "whole_input",
) -> CompoundVector:
    """Build the atomic-fraction-weighted sum of element vectors.

    A single-element composition returns that element's vector exactly;
    scaling all amounts by a common factor leaves the result unchanged
    because only fractions enter the sum.

    Raises:
        DimensionMismatch: element vectors disagree in dimension.
        ProviderError: propagated from the provider with the formula and
            element attached to the message.
    """
    accumulated: np.ndarray | None = None
    for el, fraction in atomic_fractions(composition):
        try:
            vector = element_vector(el, context, provider, pooling=pooling)
        except ProviderError as err:
            raise _attach(
                err, f"{el.name!r} for formula {canonical_string(composition)!r}"
            ) from err
        if accumulated is None:
            accumulated = fraction * vector.values
        else:
            if vector.dim != accumulated.shape[0]:
                raise DimensionMismatch(
                    f"element {el.symbol} vector has dim {vector.dim}, "
                    f"expected {accumulated.shape[0]}"
                )
            accumulated = accumulated + fraction * vector.values
    assert accumulated is not None  # compositions are never empty
    return CompoundVector(
        composition, "composition_averaged", context, EmbeddingVector(accumulated)
    )
