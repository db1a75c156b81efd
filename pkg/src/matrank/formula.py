"""Chemical formula parsing and canonicalization.

A formula string such as ``"La(Fe0.88Si0.12)13"`` is parsed into a
:class:`Composition`, a map from elements to positive stoichiometric
amounts. Parenthesized groups expand multiplicatively, omitted amounts
default to 1, and repeated mentions of an element accumulate. The
canonical string form sorts elements alphabetically by symbol so that
equivalent formulas compare equal after a parse/print round trip.

Amounts are kept exactly as parsed; compositions are never reduced to an
empirical formula. Atomic fractions (amount over total atom count) are
what downstream vector averaging consumes, and reduction leaves them
unchanged anyway.
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass
from importlib import resources
from typing import Iterator, Mapping

import numpy as np

from .errors import MalformedFormula, NonPositiveAmount, UnknownElement

# Parenthesis nesting beyond this is almost certainly an input error and
# would otherwise allow unbounded recursion.
MAX_NESTING = 16

_ROUND_TRIP_TOL = 1e-9


@dataclass(frozen=True, order=True)
class Element:
    """One entry of the periodic table.

    Attributes:
        symbol: 1-2 character IUPAC symbol, e.g. ``"Fe"``.
        name: lowercase English name, e.g. ``"iron"``.
        atomic_number: 1..118.
    """

    symbol: str
    name: str
    atomic_number: int


def _load_elements() -> tuple[Element, ...]:
    path = resources.files("matrank.data").joinpath("elements.csv")
    with path.open("r", encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    return tuple(
        Element(row["symbol"], row["name"], int(row["atomic_number"])) for row in rows
    )


#: All 118 elements in atomic-number order.
ELEMENTS: tuple[Element, ...] = _load_elements()

_BY_SYMBOL = {el.symbol: el for el in ELEMENTS}
_BY_NAME = {el.name: el for el in ELEMENTS}


def element(symbol: str) -> Element:
    """Look up an element by its symbol.

    Raises:
        UnknownElement: if ``symbol`` is not one of the 118 symbols.
    """
    try:
        return _BY_SYMBOL[symbol]
    except KeyError:
        raise UnknownElement(f"{symbol!r} is not a chemical element symbol") from None


def element_by_name(name: str) -> Element:
    """Look up an element by its lowercase English name."""
    try:
        return _BY_NAME[name]
    except KeyError:
        raise UnknownElement(f"{name!r} is not a known element name") from None


class Composition:
    """Immutable map from :class:`Element` to a positive amount.

    Iteration and all derived listings use canonical order (alphabetical
    by element symbol). Construction validates that every amount is a
    positive finite number and that at least one element is present.

    Equality is exact on both the element set and the amounts; use
    :meth:`allclose` for tolerance-based comparison after round trips.
    """

    __slots__ = ("_amounts",)

    def __init__(self, amounts: Mapping[Element | str, float]):
        if not amounts:
            raise MalformedFormula("a composition needs at least one element")
        resolved: dict[Element, float] = {}
        for key, raw in amounts.items():
            el = element(key) if isinstance(key, str) else key
            amount = float(raw)
            if not np.isfinite(amount) or amount <= 0.0:
                raise NonPositiveAmount(
                    f"amount for {el.symbol} must be a positive finite number, got {raw!r}"
                )
            resolved[el] = resolved.get(el, 0.0) + amount
        self._amounts = dict(sorted(resolved.items(), key=lambda kv: kv[0].symbol))

    @property
    def amounts(self) -> dict[Element, float]:
        """Copy of the element -> amount map in canonical order."""
        return dict(self._amounts)

    @property
    def total(self) -> float:
        """Total atom count (sum of amounts)."""
        return sum(self._amounts.values())

    @property
    def elements(self) -> tuple[Element, ...]:
        return tuple(self._amounts)

    def __getitem__(self, key: Element | str) -> float:
        el = element(key) if isinstance(key, str) else key
        return self._amounts[el]

    def __contains__(self, key: Element | str) -> bool:
        el = element(key) if isinstance(key, str) else key
        return el in self._amounts

    def __iter__(self) -> Iterator[Element]:
        return iter(self._amounts)

    def __len__(self) -> int:
        return len(self._amounts)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Composition):
            return NotImplemented
        return self._amounts == other._amounts

    def __hash__(self) -> int:
        return hash(tuple(self._amounts.items()))

    def __repr__(self) -> str:
        return f"Composition({canonical_string(self)!r})"

    def allclose(self, other: "Composition", tol: float = _ROUND_TRIP_TOL) -> bool:
        """True if both compositions have the same elements and amounts
        that agree within ``tol`` per element."""
        if self.elements != other.elements:
            return False
        return all(
            abs(self._amounts[el] - other._amounts[el]) <= tol for el in self._amounts
        )


# --- tokenizer -------------------------------------------------------------

# Symbol candidates include bare lowercase runs so that e.g. "xenon" or a
# typo like "fe2" is reported as an unknown element rather than a stray
# character.
_TOKEN_RE = re.compile(r"([A-Z][a-z]*|[a-z]+)|(\d+(?:\.\d+)?|\.\d+)|([()])")


def _tokenize(text: str) -> list[tuple[str, str]]:
    tokens: list[tuple[str, str]] = []
    pos = 0
    while pos < len(text):
        if text[pos].isspace():
            raise MalformedFormula(
                f"whitespace at position {pos} is not allowed inside a formula"
            )
        match = _TOKEN_RE.match(text, pos)
        if match is None:
            raise MalformedFormula(f"unexpected character {text[pos]!r} at position {pos}")
        if match.group(1) is not None:
            tokens.append(("symbol", match.group(1)))
        elif match.group(2) is not None:
            tokens.append(("number", match.group(2)))
        else:
            tokens.append(("paren", match.group(3)))
        pos = match.end()
    return tokens


def _maybe_amount(tokens: list[tuple[str, str]], i: int) -> tuple[float, int]:
    """Consume an optional amount token; defaults to 1."""
    if i < len(tokens) and tokens[i][0] == "number":
        literal = tokens[i][1]
        amount = float(literal)
        if amount <= 0.0:
            raise NonPositiveAmount(f"explicit amount {literal!r} must be positive")
        return amount, i + 1
    return 1.0, i


def _parse_sequence(
    tokens: list[tuple[str, str]],
    i: int,
    multiplier: float,
    out: dict[Element, float],
    depth: int,
) -> int:
    """Parse units until a closing parenthesis or end of input.

    Returns the index of the first unconsumed token (either ``len(tokens)``
    or the position of a ``")"`` for the caller to match).
    """
    if depth > MAX_NESTING:
        raise MalformedFormula(f"parentheses nested deeper than {MAX_NESTING}")
    while i < len(tokens):
        kind, value = tokens[i]
        if kind == "symbol":
            el = element(value)
            amount, i = _maybe_amount(tokens, i + 1)
            out[el] = out.get(el, 0.0) + amount * multiplier
        elif kind == "paren" and value == "(":
            group: dict[Element, float] = {}
            i = _parse_sequence(tokens, i + 1, 1.0, group, depth + 1)
            if i >= len(tokens) or tokens[i] != ("paren", ")"):
                raise MalformedFormula("unbalanced '(' in formula")
            if not group:
                raise MalformedFormula("empty group '()' in formula")
            group_amount, i = _maybe_amount(tokens, i + 1)
            for el, amount in group.items():
                out[el] = out.get(el, 0.0) + amount * group_amount * multiplier
        elif kind == "paren":  # ")" -- caller decides whether it matches
            return i
        else:
            raise MalformedFormula(
                f"dangling multiplier {value!r}: a number must follow an element or group"
            )
    return i


def parse_formula(text: str) -> Composition:
    """Parse a chemical formula string into a :class:`Composition`.

    Parenthesized groups are expanded multiplicatively, omitted amounts
    default to 1, and repeated element mentions accumulate additively:
    ``"Ca(OH)2"`` -> ``{Ca: 1, O: 2, H: 2}``.

    Raises:
        UnknownElement: a token is not a valid element symbol.
        MalformedFormula: unbalanced parentheses, a dangling multiplier,
            an empty group, embedded whitespace, or a stray character.
        NonPositiveAmount: an explicit amount of zero.
    """
    if not text:
        raise MalformedFormula("empty formula")
    tokens = _tokenize(text)
    amounts: dict[Element, float] = {}
    stop = _parse_sequence(tokens, 0, 1.0, amounts, depth=0)
    if stop != len(tokens):
        raise MalformedFormula("unbalanced ')' in formula")
    if not amounts:
        raise MalformedFormula("formula contains no elements")
    return Composition(amounts)


def atomic_fractions(composition: Composition) -> list[tuple[Element, float]]:
    """Atomic fraction of each element, in canonical order.

    Fractions are each element's amount divided by the total atom count
    and sum to 1 within 1e-12.
    """
    total = composition.total
    return [(el, amount / total) for el, amount in composition.amounts.items()]


def _format_amount(amount: float) -> str:
    nearest = round(amount)
    if nearest >= 1 and abs(amount - nearest) <= _ROUND_TRIP_TOL:
        return "" if nearest == 1 else str(int(nearest))
    # 6 significant digits normally; escalate only when that would not
    # survive a parse round trip within tolerance.
    for digits in range(6, 18):
        text = np.format_float_positional(
            amount, precision=digits, unique=False, fractional=False, trim="-"
        )
        if abs(float(text) - amount) <= _ROUND_TRIP_TOL:
            return text
    return repr(amount)


def canonical_string(composition: Composition) -> str:
    """Render a composition in its canonical text form.

    Elements are sorted alphabetically by symbol, unit amounts are
    omitted, integral amounts print without a decimal point, and
    fractional amounts print with 6 significant digits (more only when
    needed so that parsing the result reproduces the composition within
    1e-9 per amount).
    """
    return "".join(
        el.symbol + _format_amount(amount)
        for el, amount in composition.amounts.items()
    )
