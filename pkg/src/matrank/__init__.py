"""matrank: rank materials by text-embedding similarity to a query key.

The pipeline: parse chemical formulas into compositions, embed each
compound either as its whole formula string or as an atomic-fraction
weighted average of contextualized element-name embeddings, score every
compound against a query key by cosine similarity, rank, and compare
that ranking to ground-truth property values with Spearman correlation.
Grids sweep (contextualization term x query key) pairs and render the
correlation matrix as CSV/JSON/SVG reports.
"""

from .cache import VectorCache
from .compound import (
    STRATEGIES,
    CompoundVector,
    ContextSpec,
    composition_averaged_vector,
    element_vector,
    whole_formula_vector,
)
from .dataset import (
    DEDUP_POLICIES,
    KINDS,
    IngestConfig,
    PropertyDataset,
    PropertyRecord,
    RejectedRow,
    ground_truth_ranks,
    ingest_csv,
    write_canonical_csv,
    write_rejects_csv,
)
from .errors import (
    AllRowsRejected,
    BadSpan,
    BatchItemError,
    DatasetError,
    DegenerateInput,
    DimensionMismatch,
    EmptyBatch,
    EmptyInput,
    EmptyModelOutput,
    FileUnreadable,
    FormulaError,
    ItemSetMismatch,
    MalformedFormula,
    MatrankError,
    NonFiniteScore,
    NonPositiveAmount,
    OutputUnwritable,
    ProviderError,
    ProviderUnavailable,
    RunFailed,
    SchemaMismatch,
    SpecInvalid,
    UnknownElement,
    ZeroNorm,
)
from .formula import (
    ELEMENTS,
    Composition,
    Element,
    atomic_fractions,
    canonical_string,
    element,
    element_by_name,
    parse_formula,
)
from .harness import (
    ExperimentSpec,
    GridCell,
    GridResult,
    ParitySeries,
    RankingOutcome,
    build_provider,
    emit_reports,
    make_parity,
    read_grid_json,
    run_grid,
    run_ranking,
    write_grid_csv,
    write_grid_json,
    write_parity_csv,
)
from .providers import (
    POOLING_MODES,
    CachedProvider,
    EmbeddingProvider,
    EmbeddingRequest,
    EmbeddingVector,
    MockProvider,
    ProviderKey,
    RemoteProvider,
)
from .ranking import RankTable, cosine_similarity, rank_by_score, spearman_rho

__version__ = "0.1.0"

__all__ = [
    "AllRowsRejected",
    "BadSpan",
    "BatchItemError",
    "CachedProvider",
    "CompoundVector",
    "Composition",
    "ContextSpec",
    "DEDUP_POLICIES",
    "DatasetError",
    "DegenerateInput",
    "DimensionMismatch",
    "ELEMENTS",
    "Element",
    "EmbeddingProvider",
    "EmbeddingRequest",
    "EmbeddingVector",
    "EmptyBatch",
    "EmptyInput",
    "EmptyModelOutput",
    "ExperimentSpec",
    "FileUnreadable",
    "FormulaError",
    "GridCell",
    "GridResult",
    "IngestConfig",
    "ItemSetMismatch",
    "KINDS",
    "MalformedFormula",
    "MatrankError",
    "MockProvider",
    "NonFiniteScore",
    "NonPositiveAmount",
    "OutputUnwritable",
    "POOLING_MODES",
    "ParitySeries",
    "PropertyDataset",
    "PropertyRecord",
    "ProviderError",
    "ProviderKey",
    "ProviderUnavailable",
    "RankTable",
    "RankingOutcome",
    "RejectedRow",
    "RemoteProvider",
    "RunFailed",
    "STRATEGIES",
    "SchemaMismatch",
    "SpecInvalid",
    "UnknownElement",
    "VectorCache",
    "ZeroNorm",
    "atomic_fractions",
    "build_provider",
    "canonical_string",
    "composition_averaged_vector",
    "cosine_similarity",
    "element",
    "element_by_name",
    "element_vector",
    "emit_reports",
    "ground_truth_ranks",
    "ingest_csv",
    "make_parity",
    "parse_formula",
    "rank_by_score",
    "read_grid_json",
    "run_grid",
    "run_ranking",
    "spearman_rho",
    "whole_formula_vector",
    "write_canonical_csv",
    "write_grid_csv",
    "write_grid_json",
    "write_parity_csv",
    "write_rejects_csv",
]
