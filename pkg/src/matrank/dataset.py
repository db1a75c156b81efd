"""Ground-truth property tables: ingestion, canonicalization, deduplication.

A dataset is a CSV with a header row. Formula datasets require columns
``formula,value`` and entity datasets (items that are plain names, e.g.
countries) require ``name,value``; a ``source`` column is optional and
carried through as provenance. Values are unitless floats as far as the
math is concerned; the unit string is metadata only and never converted
(rankings are invariant under monotone unit changes anyway).

Rows whose item cannot be canonicalized or whose value is not a finite
number are collected into a rejects list with their line numbers rather
than aborting the ingest. Duplicate rows (same canonical item) are
merged per the dataset's dedup policy. Count conservation holds:
``rows_in == len(records) + merged_duplicates + len(rejects)``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional

from .errors import (
    AllRowsRejected,
    DegenerateInput,
    FileUnreadable,
    FormulaError,
    OutputUnwritable,
    SchemaMismatch,
)
from .formula import Composition, canonical_string, parse_formula
from .ranking import RankTable, rank_by_score

KINDS = ("formula", "entity")
DEDUP_POLICIES = ("mean", "max", "first")


@dataclass(frozen=True)
class IngestConfig:
    """Knobs for :func:`ingest_csv`; the defaults suit formula datasets."""

    name: Optional[str] = None  # None: use the file stem
    unit: str = ""
    dedup_policy: str = "mean"
    kind: str = "formula"

    def __post_init__(self):
        if self.dedup_policy not in DEDUP_POLICIES:
            raise ValueError(f"dedup_policy must be one of {DEDUP_POLICIES}")
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")


@dataclass(frozen=True)
class PropertyRecord:
    """One deduplicated ground-truth entry."""

    raw_formula: str  # item text as it appeared in the file (first occurrence)
    item: str  # canonical key: canonical formula string, or cleaned entity name
    composition: Optional[Composition]  # None for entity datasets
    value: float
    source_line: int
    source: str = ""


@dataclass(frozen=True)
class RejectedRow:
    line: int
    raw_formula: str
    reason: str


@dataclass(frozen=True)
class PropertyDataset:
    """Immutable deduplicated property table, one record per canonical item.

    Equality compares the ground truth itself (kind, unit, dedup policy,
    and the item -> value mapping with exact float equality) and ignores
    provenance (dataset name, file line numbers, raw spellings), so a
    dataset survives a write/re-ingest round trip unchanged.
    """

    name: str
    unit: str
    kind: str
    dedup_policy: str
    records: tuple[PropertyRecord, ...]
    rejects: tuple[RejectedRow, ...] = ()
    merged_duplicates: int = 0
    _by_item: dict = field(
        default_factory=dict, repr=False, compare=False, hash=False
    )

    def __post_init__(self):
        object.__setattr__(
            self, "_by_item", {record.item: record for record in self.records}
        )
        if len(self._by_item) != len(self.records):
            raise ValueError("duplicate canonical items after deduplication")

    @property
    def n(self) -> int:
        return len(self.records)

    @property
    def rows_in(self) -> int:
        return len(self.records) + self.merged_duplicates + len(self.rejects)

    def items(self) -> list[str]:
        return [record.item for record in self.records]

    def record(self, item: str) -> PropertyRecord:
        return self._by_item[item]

    def __len__(self) -> int:
        return len(self.records)

    def __contains__(self, item: str) -> bool:
        return item in self._by_item

    def __iter__(self) -> Iterator[PropertyRecord]:
        return iter(self.records)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PropertyDataset):
            return NotImplemented
        mine = [(record.item, record.value) for record in self.records]
        theirs = [(record.item, record.value) for record in other.records]
        return (
            self.kind == other.kind
            and self.unit == other.unit
            and self.dedup_policy == other.dedup_policy
            and mine == theirs
        )

    def __hash__(self):
        return hash(
            (
                self.kind,
                self.unit,
                self.dedup_policy,
                tuple((record.item, record.value) for record in self.records),
            )
        )


def _canonical_entity(raw: str) -> str:
    cleaned = " ".join(raw.split())
    if not cleaned:
        raise ValueError("empty name")
    return cleaned


def _merge(values: list[float], policy: str) -> float:
    if policy == "first":
        return values[0]
    if policy == "max":
        return max(values)
    return math.fsum(values) / len(values)


def ingest_csv(path, config: Optional[IngestConfig] = None) -> PropertyDataset:
    """Read a property CSV into a deduplicated :class:`PropertyDataset`.

    Bad rows (unparseable item, non-finite or non-numeric value) become
    reject entries instead of errors; duplicates by canonical item merge
    per ``config.dedup_policy``.

    Raises:
        FileUnreadable: the path cannot be opened.
        SchemaMismatch: required header columns are missing.
        AllRowsRejected: the file has no usable rows at all.
    """
    config = config or IngestConfig()
    path = Path(path)
    item_column = "formula" if config.kind == "formula" else "name"
    try:
        handle = open(path, "r", encoding="utf-8", newline="")
    except OSError as err:
        raise FileUnreadable(f"cannot read dataset {path}: {err}") from err

    order: list[str] = []  # canonical items, first-seen order
    first_seen: dict[str, tuple[str, int, str]] = {}  # item -> (raw, line, source)
    values: dict[str, list[float]] = {}
    rejects: list[RejectedRow] = []

    with handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames is None:
            raise AllRowsRejected(f"dataset {path} is empty")
        columns = [name.strip() for name in reader.fieldnames]
        missing = {item_column, "value"} - set(columns)
        if missing:
            raise SchemaMismatch(
                f"dataset {path} is missing required column(s) "
                f"{sorted(missing)}; header must contain "
                f"'{item_column},value' for kind={config.kind}"
            )
        for row in reader:
            line = reader.line_num
            raw_item = (row.get(item_column) or "").strip()
            raw_value = (row.get("value") or "").strip()
            source = (row.get("source") or "").strip()
            try:
                if config.kind == "formula":
                    composition = parse_formula(raw_item)
                    item = canonical_string(composition)
                else:
                    item = _canonical_entity(raw_item)
            except (FormulaError, ValueError) as err:
                rejects.append(RejectedRow(line, raw_item, str(err)))
                continue
            try:
                value = float(raw_value)
            except (TypeError, ValueError):
                rejects.append(
                    RejectedRow(line, raw_item, f"value {raw_value!r} is not a number")
                )
                continue
            if not math.isfinite(value):
                rejects.append(
                    RejectedRow(line, raw_item, f"value {raw_value!r} is not finite")
                )
                continue
            if item not in values:
                order.append(item)
                first_seen[item] = (raw_item, line, source)
                values[item] = []
            values[item].append(value)

    if not order:
        raise AllRowsRejected(
            f"dataset {path} yielded no usable rows ({len(rejects)} rejected)"
        )

    records = []
    merged = 0
    for item in sorted(order):
        raw, line, source = first_seen[item]
        merged += len(values[item]) - 1
        composition = parse_formula(raw) if config.kind == "formula" else None
        records.append(
            PropertyRecord(
                raw_formula=raw,
                item=item,
                composition=composition,
                value=_merge(values[item], config.dedup_policy),
                source_line=line,
                source=source,
            )
        )
    return PropertyDataset(
        name=config.name if config.name is not None else path.stem,
        unit=config.unit,
        kind=config.kind,
        dedup_policy=config.dedup_policy,
        records=tuple(records),
        rejects=tuple(rejects),
        merged_duplicates=merged,
    )


def ground_truth_ranks(dataset: PropertyDataset) -> RankTable:
    """Rank the dataset by true property value, rank 1 = highest.

    Ties share fractional ranks; two equal values rank 1.5 each.

    Raises:
        DegenerateInput: fewer than two records.
    """
    if dataset.n < 2:
        raise DegenerateInput(
            f"dataset {dataset.name!r} has {dataset.n} record(s); ranking needs >= 2"
        )
    return rank_by_score([(record.item, record.value) for record in dataset])


def write_canonical_csv(dataset: PropertyDataset, path) -> None:
    """Write the deduplicated dataset back out in the ingestion schema.

    Items are canonical and sorted, values use shortest round-trip float
    formatting, and line endings are always "\\n", so the output is
    byte-stable across platforms and re-ingesting it reproduces an equal
    dataset.
    """
    path = Path(path)
    item_column = "formula" if dataset.kind == "formula" else "name"
    with_source = any(record.source for record in dataset.records)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            header = [item_column, "value"] + (["source"] if with_source else [])
            writer.writerow(header)
            for record in dataset.records:
                row = [record.item, repr(record.value)]
                if with_source:
                    row.append(record.source)
                writer.writerow(row)
    except OSError as err:
        raise OutputUnwritable(f"cannot write dataset to {path}: {err}") from err


def write_rejects_csv(dataset: PropertyDataset, path) -> None:
    """Write the rejects report as ``line,raw_formula,reason`` rows."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(["line", "raw_formula", "reason"])
            for reject in dataset.rejects:
                writer.writerow([reject.line, reject.raw_formula, reject.reason])
    except OSError as err:
        raise OutputUnwritable(f"cannot write rejects to {path}: {err}") from err
