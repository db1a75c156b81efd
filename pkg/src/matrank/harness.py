"""Experiment orchestration: single rankings, term-by-key grids, reports.

A grid sweeps contextualization terms (rows) against query keys
(columns). The empty term and the empty key are always injected as the
first row and first column, so a spec listing T terms and K keys yields
a (T+1) x (K+1) matrix; the top-left cell is the fully uncontextualized
baseline. A failed cell carries an error marker instead of aborting the
sweep, and cells never influence one another: each is a self-contained
ranking of the whole dataset against one key.

Reports: the grid CSV holds only labels and cells (byte-stable across
platforms for deterministic providers), the JSON adds metadata and
round-trips the matrix exactly, and the optional SVG renders a heat map
with a diverging color scale centered at 0.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .compound import (
    STRATEGIES,
    ContextSpec,
    composition_averaged_vector,
    whole_formula_vector,
)
from .dataset import (
    DEDUP_POLICIES,
    KINDS,
    IngestConfig,
    PropertyDataset,
    ground_truth_ranks,
    ingest_csv,
)
from .errors import (
    MatrankError,
    OutputUnwritable,
    RunFailed,
    SpecInvalid,
)
from .providers import (
    POOLING_MODES,
    CachedProvider,
    EmbeddingProvider,
    EmbeddingRequest,
    MockProvider,
    RemoteProvider,
)
from .ranking import RankTable, cosine_similarity, rank_by_score, spearman_rho

DEFAULT_PARITY_BINS = 50


# --- experiment description -------------------------------------------------

def _unique(strings: Sequence[str]) -> list[str]:
    seen = set()
    out = []
    for s in strings:
        if s not in seen:
            seen.add(s)
            out.append(s)
    return out


def _inject_empty(strings: Sequence[str]) -> tuple[str, ...]:
    # "" goes first exactly once regardless of where (or whether) the
    # spec listed it.
    return ("",) + tuple(s for s in _unique(strings) if s != "")


@dataclass(frozen=True)
class ExperimentSpec:
    """A validated grid experiment: dataset, strategy, terms, keys, provider.

    ``context_terms`` and ``query_keys`` are stored deduplicated with the
    empty string injected as the first entry of each.
    """

    name: str
    dataset_path: Path
    ingest: IngestConfig
    strategy: str
    pooling: str
    context_terms: tuple[str, ...]
    query_keys: tuple[str, ...]
    provider: dict
    cache_path: Optional[Path] = None
    output_dir: Optional[Path] = None
    bins: int = DEFAULT_PARITY_BINS
    source_path: Optional[Path] = None

    @staticmethod
    def from_dict(raw: dict, base_dir=None, name: str = "experiment",
                  source_path=None) -> "ExperimentSpec":
        """Validate a parsed spec dictionary.

        Relative paths resolve against ``base_dir`` (the spec file's
        directory when loaded via :meth:`from_json`).
        """
        if not isinstance(raw, dict):
            raise SpecInvalid("experiment spec must be a JSON object")
        base = Path(base_dir) if base_dir is not None else Path(".")

        def resolve(value) -> Path:
            p = Path(value)
            return p if p.is_absolute() else base / p

        unknown = set(raw) - {
            "name", "dataset", "dataset_kind", "unit", "dedup_policy",
            "strategy", "pooling", "context_terms", "query_keys",
            "provider", "cache", "output_dir", "bins",
        }
        if unknown:
            raise SpecInvalid(f"unknown spec field(s): {sorted(unknown)}")

        dataset = raw.get("dataset")
        if not isinstance(dataset, str) or not dataset:
            raise SpecInvalid("spec requires a 'dataset' path")

        strategy = raw.get("strategy", "composition_averaged")
        if strategy not in STRATEGIES:
            raise SpecInvalid(f"strategy must be one of {STRATEGIES}, got {strategy!r}")
        pooling = raw.get("pooling", "whole_input")
        if pooling not in POOLING_MODES:
            raise SpecInvalid(f"pooling must be one of {POOLING_MODES}, got {pooling!r}")
        kind = raw.get("dataset_kind", "formula")
        if kind not in KINDS:
            raise SpecInvalid(f"dataset_kind must be one of {KINDS}, got {kind!r}")
        policy = raw.get("dedup_policy", "mean")
        if policy not in DEDUP_POLICIES:
            raise SpecInvalid(
                f"dedup_policy must be one of {DEDUP_POLICIES}, got {policy!r}"
            )

        for label, value in (("context_terms", raw.get("context_terms", [])),
                             ("query_keys", raw.get("query_keys", []))):
            if not isinstance(value, list) or not all(
                isinstance(s, str) for s in value
            ):
                raise SpecInvalid(f"{label} must be a list of strings")

        provider = raw.get("provider", {"type": "mock"})
        if not isinstance(provider, dict):
            raise SpecInvalid("provider config must be an object")
        ptype = provider.get("type", "mock")
        if ptype not in ("mock", "remote"):
            raise SpecInvalid(f"provider type must be 'mock' or 'remote', got {ptype!r}")
        if ptype == "remote" and not provider.get("base_url"):
            raise SpecInvalid("remote provider config requires 'base_url'")

        bins = raw.get("bins", DEFAULT_PARITY_BINS)
        if not isinstance(bins, int) or bins < 1:
            raise SpecInvalid(f"bins must be a positive integer, got {bins!r}")

        return ExperimentSpec(
            name=str(raw.get("name", name)),
            dataset_path=resolve(dataset),
            ingest=IngestConfig(
                unit=str(raw.get("unit", "")), dedup_policy=policy, kind=kind
            ),
            strategy=strategy,
            pooling=pooling,
            context_terms=_inject_empty(raw.get("context_terms", [])),
            query_keys=_inject_empty(raw.get("query_keys", [])),
            provider=dict(provider, type=ptype),
            cache_path=resolve(raw["cache"]) if raw.get("cache") else None,
            output_dir=resolve(raw["output_dir"]) if raw.get("output_dir") else None,
            bins=bins,
            source_path=Path(source_path) if source_path else None,
        )

    @staticmethod
    def from_json(path, overrides: Optional[dict] = None) -> "ExperimentSpec":
        """Load a spec file; ``overrides`` replace top-level fields."""
        path = Path(path)
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except OSError as err:
            raise SpecInvalid(f"cannot read spec {path}: {err}") from err
        except json.JSONDecodeError as err:
            raise SpecInvalid(f"spec {path} is not valid JSON: {err}") from err
        if overrides:
            if not isinstance(raw, dict):
                raise SpecInvalid("experiment spec must be a JSON object")
            raw = dict(raw)
            for key, value in overrides.items():
                if value is not None:
                    raw[key] = value
        return ExperimentSpec.from_dict(
            raw, base_dir=path.parent, name=path.stem, source_path=path
        )

    def describe(self) -> dict:
        """Effective configuration, echoed into report metadata."""
        return {
            "name": self.name,
            "dataset": str(self.dataset_path),
            "dataset_kind": self.ingest.kind,
            "unit": self.ingest.unit,
            "dedup_policy": self.ingest.dedup_policy,
            "strategy": self.strategy,
            "pooling": self.pooling,
            "context_terms": list(self.context_terms),
            "query_keys": list(self.query_keys),
            "provider": {k: v for k, v in self.provider.items()},
            "cache": str(self.cache_path) if self.cache_path else None,
            "bins": self.bins,
        }

    def spec_hash(self) -> str:
        """Short stable digest of the semantically relevant fields."""
        payload = self.describe()
        payload.pop("cache", None)  # cache location does not change results
        encoded = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(encoded.encode("utf-8")).hexdigest()[:12]


def build_provider(spec: ExperimentSpec) -> CachedProvider:
    """Construct the provider a spec asks for, wrapped in a cache layer.

    The wrapper always memoizes in memory (this is what bounds provider
    calls across grid cells); a persistent cache file is attached when
    the spec names one.
    """
    config = spec.provider
    if config["type"] == "mock":
        inner: EmbeddingProvider = MockProvider(
            dim=int(config.get("dim", 64)),
            model_id=config.get("model_id"),
        )
    else:
        inner = RemoteProvider(
            base_url=config["base_url"],
            model_id=config.get("model_id", "default"),
            timeout=float(config.get("timeout", 60.0)),
            max_in_flight=int(config.get("max_in_flight", 4)),
        )
    cache = None
    if spec.cache_path is not None:
        from .cache import VectorCache

        cache = VectorCache(spec.cache_path)
    return CachedProvider(inner, cache=cache)


# --- results ----------------------------------------------------------------

@dataclass(frozen=True)
class GridCell:
    """One grid entry: either a correlation or an error marker."""

    rho: Optional[float] = None
    error: Optional[str] = None

    def __post_init__(self):
        if (self.rho is None) == (self.error is None):
            raise ValueError("a cell holds exactly one of rho or error")
        if self.rho is not None and not (-1.0 <= self.rho <= 1.0):
            raise ValueError(f"rho {self.rho} outside [-1, 1]")

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass(frozen=True)
class ParitySeries:
    """Per-item (truth rank, similarity rank) pairs plus a 2-D histogram.

    ``counts[i, j]`` is the number of items whose truth rank falls in
    bin i and similarity rank in bin j; bins are equal-width over
    [0.5, n + 0.5] so integer ranks sit at bin centers and the counts
    always sum to n.
    """

    items: tuple[str, ...]
    truth_ranks: np.ndarray
    similarity_ranks: np.ndarray
    bins: int
    counts: np.ndarray = field(repr=False)
    edges: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return len(self.items)

    def bin_of(self, rank: float) -> int:
        index = int(np.searchsorted(self.edges, rank, side="right")) - 1
        return min(max(index, 0), self.bins - 1)

    def pair_counts(self) -> list[int]:
        """Histogram count of the bin each (truth, similarity) pair falls in."""
        return [
            int(self.counts[self.bin_of(t), self.bin_of(s)])
            for t, s in zip(self.truth_ranks, self.similarity_ranks)
        ]


def make_parity(
    truth: RankTable, similarity: RankTable, bins: int = DEFAULT_PARITY_BINS
) -> ParitySeries:
    """Pair up two rank tables over the same items into a parity series."""
    items = tuple(truth.items)
    sim_by_item = similarity.as_dict()
    truth_ranks = np.asarray(truth.ranks, dtype=np.float64)
    sim_ranks = np.asarray([sim_by_item[item] for item in items], dtype=np.float64)
    n = len(items)
    span = (0.5, n + 0.5)
    counts, edges, _ = np.histogram2d(
        truth_ranks, sim_ranks, bins=bins, range=[span, span]
    )
    counts = counts.astype(np.int64)
    counts.setflags(write=False)
    edges.setflags(write=False)
    truth_ranks.setflags(write=False)
    sim_ranks.setflags(write=False)
    return ParitySeries(
        items=items,
        truth_ranks=truth_ranks,
        similarity_ranks=sim_ranks,
        bins=bins,
        counts=counts,
        edges=edges,
    )


@dataclass(frozen=True)
class RankingOutcome:
    """Everything one (term, key) ranking run produces."""

    similarity: RankTable
    rho: float
    parity: ParitySeries
    scores: dict  # item -> cosine similarity against the query key


@dataclass(frozen=True)
class GridResult:
    """A (terms+1) x (keys+1) matrix of correlations with metadata."""

    context_terms: tuple[str, ...]
    query_keys: tuple[str, ...]
    cells: tuple[tuple[GridCell, ...], ...]
    metadata: dict

    def __post_init__(self):
        if len(self.cells) != len(self.context_terms):
            raise ValueError("row count does not match term labels")
        for row in self.cells:
            if len(row) != len(self.query_keys):
                raise ValueError("column count does not match key labels")

    @property
    def shape(self) -> tuple[int, int]:
        return (len(self.context_terms), len(self.query_keys))

    def cell(self, term: str, key: str) -> GridCell:
        return self.cells[self.context_terms.index(term)][self.query_keys.index(key)]

    def rho_matrix(self) -> np.ndarray:
        """Float matrix with NaN in failed cells (for plotting)."""
        out = np.full(self.shape, np.nan, dtype=np.float64)
        for i, row in enumerate(self.cells):
            for j, cell in enumerate(row):
                if cell.ok:
                    out[i, j] = cell.rho
        return out

    def failed_cells(self) -> list[tuple[str, str, str]]:
        return [
            (term, key, cell.error)
            for term, row in zip(self.context_terms, self.cells)
            for key, cell in zip(self.query_keys, row)
            if not cell.ok
        ]


# --- execution ----------------------------------------------------------------

def _item_vector(
    record, strategy: str, context: ContextSpec, provider: EmbeddingProvider,
    pooling: str,
):
    if record.composition is None:
        # Entity datasets (e.g. country names): the item is embedded
        # directly as "<term> <name>", the single-entity analogue of the
        # contextualized element phrase.
        phrase = context.render(record.item)
        span = context.span_of(record.item) if pooling == "target_span" else None
        return provider.embed(EmbeddingRequest(phrase, pooling=pooling, span=span))
    if strategy == "whole_formula":
        return whole_formula_vector(record.composition, provider).vector
    return composition_averaged_vector(
        record.composition, context, provider, pooling=pooling
    ).vector


def run_ranking(
    dataset: PropertyDataset,
    provider: EmbeddingProvider,
    strategy: str,
    context: ContextSpec,
    query_key: str,
    pooling: str = "whole_input",
    bins: int = DEFAULT_PARITY_BINS,
    truth: Optional[RankTable] = None,
) -> RankingOutcome:
    """Rank one dataset by similarity to one query key and score it.

    Every item is embedded per ``strategy`` under ``context``; the query
    key is embedded once (always whole-input pooled). Items are ranked
    by descending cosine similarity and correlated against the ground
    truth. The whole-formula strategy ignores the context term: it
    embeds the bare canonical formula string.

    Raises:
        RunFailed: one or more items could not be embedded or scored
            (a partial ranking would corrupt the correlation); the
            failure list rides on the exception.
        DegenerateInput: via ground truth or correlation (e.g. all
            similarity scores tied).
    """
    if truth is None:
        truth = ground_truth_ranks(dataset)

    try:
        key_vector = provider.embed(EmbeddingRequest(query_key))
    except MatrankError as err:
        raise RunFailed([(f"query key {query_key!r}", str(err))]) from err

    scores: list[tuple[str, float]] = []
    failures: list[tuple[str, str]] = []
    for record in dataset:
        try:
            vector = _item_vector(record, strategy, context, provider, pooling)
            scores.append((record.item, cosine_similarity(vector, key_vector)))
        except MatrankError as err:
            failures.append((record.item, str(err)))
    if failures:
        raise RunFailed(failures)

    similarity = rank_by_score(scores)
    rho = spearman_rho(truth, similarity)
    parity = make_parity(truth, similarity, bins=bins)
    return RankingOutcome(
        similarity=similarity, rho=rho, parity=parity,
        scores=dict(scores),
    )


def run_grid(
    spec: ExperimentSpec,
    provider: Optional[EmbeddingProvider] = None,
    dataset: Optional[PropertyDataset] = None,
) -> GridResult:
    """Run every (context term, query key) cell of a grid experiment.

    Cell failures are contained: a failed cell carries an error marker
    and the sweep continues. The ground-truth ranking is computed once
    and shared by all cells. Cells run sequentially; the in-memory cache
    layer makes element vectors shared across cells with the same term,
    which is what keeps provider calls within the documented bound.
    """
    if dataset is None:
        dataset = ingest_csv(spec.dataset_path, spec.ingest)
    if provider is None:
        provider = build_provider(spec)
    truth = ground_truth_ranks(dataset)

    rows = []
    for term in spec.context_terms:
        context = ContextSpec(term)
        row = []
        for key in spec.query_keys:
            try:
                outcome = run_ranking(
                    dataset, provider, spec.strategy, context, key,
                    pooling=spec.pooling, bins=spec.bins, truth=truth,
                )
                row.append(GridCell(rho=outcome.rho))
            except MatrankError as err:
                row.append(GridCell(error=f"{type(err).__name__}: {err}"))
        rows.append(tuple(row))

    metadata = {
        "model_id": getattr(provider, "model_id", spec.provider.get("model_id")),
        "dataset": dataset.name,
        "dataset_kind": dataset.kind,
        "unit": dataset.unit,
        "n_records": dataset.n,
        "rejected_rows": len(dataset.rejects),
        "timestamp": datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ"),
        "spec_hash": spec.spec_hash(),
        "config": spec.describe(),
    }
    return GridResult(
        context_terms=spec.context_terms,
        query_keys=spec.query_keys,
        cells=tuple(rows),
        metadata=metadata,
    )


# --- reports ------------------------------------------------------------------

ERROR_MARKER = "ERR"


def _open_out(path: Path):
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        return open(path, "w", encoding="utf-8", newline="")
    except OSError as err:
        raise OutputUnwritable(f"cannot write report {path}: {err}") from err


def write_grid_csv(grid: GridResult, path) -> None:
    """Labels plus cells only; no metadata, so the bytes are stable.

    Successful cells print with shortest round-trip float formatting,
    failed cells print as "ERR"; the first column holds term labels and
    the header row holds key labels (empty strings stay empty).
    """
    import csv

    path = Path(path)
    with _open_out(path) as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["term"] + list(grid.query_keys))
        for term, row in zip(grid.context_terms, grid.cells):
            writer.writerow(
                [term]
                + [repr(cell.rho) if cell.ok else ERROR_MARKER for cell in row]
            )


def write_grid_json(grid: GridResult, path) -> None:
    """Matrix plus metadata; cell floats survive the round trip exactly."""
    path = Path(path)
    payload = {
        "kind": "grid",
        "metadata": grid.metadata,
        "context_terms": list(grid.context_terms),
        "query_keys": list(grid.query_keys),
        "cells": [
            [cell.rho if cell.ok else {"error": cell.error} for cell in row]
            for row in grid.cells
        ],
    }
    with _open_out(path) as handle:
        json.dump(payload, handle, indent=2)
        handle.write("\n")


def read_grid_json(path) -> GridResult:
    """Inverse of :func:`write_grid_json`."""
    path = Path(path)
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    cells = tuple(
        tuple(
            GridCell(error=cell["error"]) if isinstance(cell, dict)
            else GridCell(rho=float(cell))
            for cell in row
        )
        for row in raw["cells"]
    )
    return GridResult(
        context_terms=tuple(raw["context_terms"]),
        query_keys=tuple(raw["query_keys"]),
        cells=cells,
        metadata=raw.get("metadata", {}),
    )


def write_parity_csv(series: ParitySeries, path) -> None:
    """Rows of ``truth_rank,similarity_rank,bin_count``, one per item."""
    import csv

    path = Path(path)
    with _open_out(path) as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["truth_rank", "similarity_rank", "bin_count"])
        for t, s, c in zip(
            series.truth_ranks, series.similarity_ranks, series.pair_counts()
        ):
            writer.writerow([repr(float(t)), repr(float(s)), c])


def emit_reports(
    result,
    output_dir,
    formats: Sequence[str] = ("csv", "json"),
    basename: Optional[str] = None,
) -> list[Path]:
    """Serialize a GridResult or ParitySeries into ``output_dir``.

    Formats: "csv" and "json" (grids only) write data files; "svg" adds
    a rendered figure (heat map for grids, rank-pair histogram for
    parity series). Returns the written paths.

    Raises:
        OutputUnwritable: the directory or a file cannot be written.
        ValueError: unknown format name or result type.
    """
    output_dir = Path(output_dir)
    known = {"csv", "json", "svg"}
    bad = set(formats) - known
    if bad:
        raise ValueError(f"unknown report format(s): {sorted(bad)}")

    written: list[Path] = []
    if isinstance(result, GridResult):
        base = basename or f"{result.metadata.get('config', {}).get('name', 'experiment')}_grid"
        if "csv" in formats:
            target = output_dir / f"{base}.csv"
            write_grid_csv(result, target)
            written.append(target)
        if "json" in formats:
            target = output_dir / f"{base}.json"
            write_grid_json(result, target)
            written.append(target)
        if "svg" in formats:
            from .plots import render_heatmap, save_svg

            target = output_dir / f"{base}.svg"
            try:
                save_svg(render_heatmap(result), target)
            except OSError as err:
                raise OutputUnwritable(f"cannot write report {target}: {err}") from err
            written.append(target)
    elif isinstance(result, ParitySeries):
        base = basename or "parity"
        if "csv" in formats:
            target = output_dir / f"{base}.csv"
            write_parity_csv(result, target)
            written.append(target)
        if "svg" in formats:
            from .plots import render_parity, save_svg

            target = output_dir / f"{base}.svg"
            try:
                save_svg(render_parity(result), target)
            except OSError as err:
                raise OutputUnwritable(f"cannot write report {target}: {err}") from err
            written.append(target)
    else:
        raise ValueError(f"cannot emit reports for {type(result).__name__}")
    return written
