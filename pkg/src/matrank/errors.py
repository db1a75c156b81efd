"""Exception hierarchy for the toolkit.

All domain errors derive from :class:`MatrankError` so callers can catch
one base type at a boundary (the CLI and the grid runner both do).
"""


class MatrankError(Exception):
    """Base class for every error raised by this package."""


class DimensionMismatch(MatrankError):
    """Vectors of different dimensions were combined or compared."""


# --- chemical formulas ---------------------------------------------------

class FormulaError(MatrankError):
    """Base class for formula parsing errors."""


class UnknownElement(FormulaError):
    """A token is not one of the 118 element symbols."""


class MalformedFormula(FormulaError):
    """Structurally invalid formula: unbalanced parentheses, dangling
    multiplier, empty group, embedded whitespace, or stray characters."""


class NonPositiveAmount(FormulaError):
    """An explicit stoichiometric amount was zero or negative."""


# --- embedding providers --------------------------------------------------

class ProviderError(MatrankError):
    """Base class for embedding provider failures."""


class ProviderUnavailable(ProviderError):
    """The remote provider could not be reached or failed server-side."""


class BadSpan(ProviderError):
    """A pooling span is missing, empty, or out of bounds for its text."""


class EmptyModelOutput(ProviderError):
    """The provider produced no token embeddings for a non-empty input."""


class EmptyBatch(ProviderError):
    """embed_batch was called with an empty request list."""


class BatchItemError(ProviderError):
    """One request inside a batch failed; carries the failing index."""

    def __init__(self, index: int, cause: Exception):
        super().__init__(f"batch request {index} failed: {cause}")
        self.index = index
        self.cause = cause


# --- ranking metrics ------------------------------------------------------

class ZeroNorm(MatrankError):
    """A vector with (near-)zero Euclidean norm has no cosine direction."""


class EmptyInput(MatrankError):
    """An operation that needs at least one item received none."""


class NonFiniteScore(MatrankError):
    """A NaN or infinite score cannot be ranked."""


class ItemSetMismatch(MatrankError):
    """Two rank tables do not cover the same set of items."""


class DegenerateInput(MatrankError):
    """Correlation is undefined: fewer than two items, or all ranks tied."""


# --- datasets ---------------------------------------------------------------

class DatasetError(MatrankError):
    """Base class for ground-truth dataset errors."""


class FileUnreadable(DatasetError):
    """The dataset file could not be opened or decoded."""


class SchemaMismatch(DatasetError):
    """The CSV header lacks a required column."""


class AllRowsRejected(DatasetError):
    """Ingestion produced no usable records."""


# --- experiments ----------------------------------------------------------

class SpecInvalid(MatrankError):
    """An experiment description failed validation."""


class RunFailed(MatrankError):
    """A ranking run aborted because one or more items could not be
    embedded; a partial ranking would corrupt the correlation."""

    def __init__(self, failures: list[tuple[str, str]]):
        preview = "; ".join(f"{item}: {reason}" for item, reason in failures[:3])
        more = f" (+{len(failures) - 3} more)" if len(failures) > 3 else ""
        super().__init__(f"{len(failures)} item(s) failed to embed: {preview}{more}")
        self.failures = failures


class OutputUnwritable(MatrankError):
    """A report file could not be written."""
