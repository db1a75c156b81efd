"""Command-line interface.

Exit codes: 0 success, 1 partial or runtime failure (failed grid cells,
unreachable provider, aborted ranking), 2 usage or configuration error
(bad formula, bad flags, unreadable dataset, invalid spec).

Configuration precedence is flags over environment over spec file. The
environment variables are MATRANK_PROVIDER_URL, MATRANK_MODEL_ID and
MATRANK_CACHE. A spec file's provider *type* is part of the experiment
definition, so only explicit flags (--provider-url, --mock) change it;
the environment fills in settings for the type already chosen.

stdout carries human-readable summaries only; everything machine-read
lives in the written files.
"""

from __future__ import annotations

import dataclasses
import json
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import click

from .cache import VectorCache
from .compound import STRATEGIES, ContextSpec
from .dataset import (
    DEDUP_POLICIES,
    KINDS,
    IngestConfig,
    ground_truth_ranks,
    ingest_csv,
    write_rejects_csv,
)
from .errors import (
    DatasetError,
    FormulaError,
    MatrankError,
    ProviderError,
    RunFailed,
    SpecInvalid,
)
from .formula import atomic_fractions, canonical_string, parse_formula
from .harness import (
    ExperimentSpec,
    build_provider,
    emit_reports,
    run_grid,
    run_ranking,
    write_parity_csv,
)
from .providers import (
    POOLING_MODES,
    CachedProvider,
    EmbeddingRequest,
    MockProvider,
    RemoteProvider,
)

ENV_URL = "MATRANK_PROVIDER_URL"
ENV_MODEL = "MATRANK_MODEL_ID"
ENV_CACHE = "MATRANK_CACHE"

EXIT_PARTIAL = 1
EXIT_USAGE = 2


def _fail(message: str, code: int):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _exit_code_for(err: MatrankError) -> int:
    if isinstance(err, (SpecInvalid, DatasetError, FormulaError)):
        return EXIT_USAGE
    return EXIT_PARTIAL


def _standalone_provider(url, model, mock, dim, cache_path):
    """Provider for spec-less commands (embed, rank): flags/env only."""
    if mock or not url:
        inner = MockProvider(dim=dim, model_id=model)
    else:
        inner = RemoteProvider(base_url=url, model_id=model or "default")
    cache = VectorCache(cache_path) if cache_path else None
    return CachedProvider(inner, cache=cache)


provider_options = [
    click.option(
        "--provider-url", envvar=ENV_URL,
        help=f"Embedding service base URL (env {ENV_URL}); omit to use the mock provider.",
    ),
    click.option(
        "--model", envvar=ENV_MODEL,
        help=f"Model id sent to the provider (env {ENV_MODEL}).",
    ),
    click.option(
        "--mock", is_flag=True,
        help="Force the deterministic mock provider even when a URL is set.",
    ),
    click.option(
        "--dim", type=int, default=64, show_default=True,
        help="Vector dimension of the mock provider.",
    ),
    click.option(
        "--cache", "cache_path", envvar=ENV_CACHE,
        help=f"Persistent vector cache file (env {ENV_CACHE}).",
    ),
]


def _with(options):
    def wrap(fn):
        for option in reversed(options):
            fn = option(fn)
        return fn
    return wrap


@click.group()
@click.version_option(package_name="matrank", prog_name="matrank")
def main():
    """Rank compounds by text-embedding similarity and score the rankings."""


@main.command("parse")
@click.argument("formula")
def cmd_parse(formula: str):
    """Parse FORMULA and print its canonical form and atomic fractions."""
    try:
        composition = parse_formula(formula)
    except FormulaError as err:
        _fail(f"{type(err).__name__}: {err}", EXIT_USAGE)
    click.echo(canonical_string(composition))
    for el, fraction in atomic_fractions(composition):
        click.echo(
            f"  {el.symbol:<2} {el.name:<13} amount {composition[el.symbol]:g}"
            f"  fraction {fraction:.4f}"
        )


@main.command("embed")
@click.argument("text")
@_with(provider_options)
@click.option(
    "--pooling", type=click.Choice(POOLING_MODES), default="whole_input",
    show_default=True,
)
@click.option("--span", help="Character range START:END for target_span pooling.")
def cmd_embed(text, provider_url, model, mock, dim, cache_path, pooling, span):
    """Embed TEXT once and print the vector head (debug utility)."""
    span_tuple = None
    if span:
        try:
            start, end = span.split(":", 1)
            span_tuple = (int(start), int(end))
        except ValueError:
            _fail(f"--span must be START:END integers, got {span!r}", EXIT_USAGE)
    provider = _standalone_provider(provider_url, model, mock, dim, cache_path)
    try:
        request = EmbeddingRequest(text, pooling=pooling, span=span_tuple)
    except MatrankError as err:
        _fail(f"{type(err).__name__}: {err}", EXIT_USAGE)
    try:
        vector = provider.embed(request)
    except MatrankError as err:
        _fail(f"{type(err).__name__}: {err}", _exit_code_for(err))
    values = vector.values
    head = ", ".join(f"{v:+.6f}" for v in values[:8])
    click.echo(f"model   {provider.model_id}")
    click.echo(f"dim     {vector.dim}")
    click.echo(f"norm    {float((values ** 2).sum()) ** 0.5:.6f}")
    click.echo(f"values  [{head}{', ...' if vector.dim > 8 else ''}]")


@main.command("rank")
@click.option(
    "--dataset", "dataset_path", required=True,
    type=click.Path(exists=True, dir_okay=False),
    help="Ground-truth CSV (formula,value or name,value).",
)
@click.option("--kind", type=click.Choice(KINDS), default="formula", show_default=True)
@click.option("--unit", default="", help="Unit label recorded in metadata.")
@click.option(
    "--dedup", "dedup_policy", type=click.Choice(DEDUP_POLICIES),
    default="mean", show_default=True,
)
@click.option(
    "--strategy", type=click.Choice(STRATEGIES),
    default="composition_averaged", show_default=True,
)
@click.option(
    "--context", "context_term", default="",
    help="Contextualization term put before each element name.",
)
@click.option("--key", "query_key", required=True, help="Query key to rank against.")
@click.option(
    "--pooling", type=click.Choice(POOLING_MODES), default="whole_input",
    show_default=True,
)
@_with(provider_options)
@click.option(
    "--output-dir", default="matrank_out", show_default=True,
    type=click.Path(file_okay=False),
)
@click.option(
    "--svg/--no-svg", "render_svg", default=True, show_default=True,
    help="Render the rank-parity figure alongside the CSV output.",
)
def cmd_rank(
    dataset_path, kind, unit, dedup_policy, strategy, context_term, query_key,
    pooling, provider_url, model, mock, dim, cache_path, output_dir, render_svg,
):
    """Rank one dataset against one query key and write the reports.

    Writes ranking.csv, parity.csv and summary.json (plus parity.svg
    unless --no-svg) into --output-dir.
    """
    try:
        dataset = ingest_csv(
            dataset_path,
            IngestConfig(unit=unit, dedup_policy=dedup_policy, kind=kind),
        )
    except MatrankError as err:
        _fail(f"{type(err).__name__}: {err}", _exit_code_for(err))

    provider = _standalone_provider(provider_url, model, mock, dim, cache_path)
    out = Path(output_dir)
    try:
        truth = ground_truth_ranks(dataset)
        outcome = run_ranking(
            dataset, provider, strategy, ContextSpec(context_term), query_key,
            pooling=pooling, truth=truth,
        )
    except RunFailed as err:
        _fail(str(err), EXIT_PARTIAL)
    except MatrankError as err:
        _fail(f"{type(err).__name__}: {err}", _exit_code_for(err))

    config = {
        "dataset": str(dataset_path),
        "dataset_kind": kind,
        "unit": unit,
        "dedup_policy": dedup_policy,
        "strategy": strategy,
        "context_term": context_term,
        "query_key": query_key,
        "pooling": pooling,
        "provider": provider.model_id,
        "cache": cache_path or None,
    }
    import csv as _csv

    try:
        out.mkdir(parents=True, exist_ok=True)
        ranking_path = out / "ranking.csv"
        with open(ranking_path, "w", encoding="utf-8", newline="") as handle:
            writer = _csv.writer(handle, lineterminator="\n")
            writer.writerow(
                ["item", "similarity", "similarity_rank", "truth_rank", "value"]
            )
            ordered = sorted(
                dataset, key=lambda record: outcome.similarity.rank_of(record.item)
            )
            for record in ordered:
                writer.writerow(
                    [
                        record.item,
                        repr(outcome.scores[record.item]),
                        repr(outcome.similarity.rank_of(record.item)),
                        repr(truth.rank_of(record.item)),
                        repr(record.value),
                    ]
                )
        parity_path = out / "parity.csv"
        write_parity_csv(outcome.parity, parity_path)
        summary_path = out / "summary.json"
        with open(summary_path, "w", encoding="utf-8", newline="") as handle:
            json.dump(
                {
                    "spearman_rho": outcome.rho,
                    "n": dataset.n,
                    "rejected_rows": len(dataset.rejects),
                    "merged_duplicates": dataset.merged_duplicates,
                    "timestamp": datetime.now(timezone.utc).strftime(
                        "%Y-%m-%dT%H:%M:%SZ"
                    ),
                    "config": config,
                },
                handle,
                indent=2,
            )
            handle.write("\n")
        written = [ranking_path, parity_path, summary_path]
        if dataset.rejects:
            rejects_path = out / "rejects.csv"
            write_rejects_csv(dataset, rejects_path)
            written.append(rejects_path)
        if render_svg:
            written += emit_reports(
                outcome.parity, out, formats=("svg",), basename="parity"
            )
    except MatrankError as err:
        _fail(f"{type(err).__name__}: {err}", EXIT_PARTIAL)

    click.echo(
        f"rho = {outcome.rho:+.4f}  (n={dataset.n}, strategy={strategy}, "
        f"term={context_term!r}, key={query_key!r})"
    )
    for path in written:
        click.echo(f"wrote {path}")


@main.command("grid")
@click.argument("spec_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--provider-url", help=f"Switch the provider to remote at this URL (env {ENV_URL} fills the URL for specs already remote).")
@click.option("--model", help=f"Override the model id (env {ENV_MODEL}).")
@click.option("--mock", is_flag=True, help="Force the mock provider.")
@click.option("--cache", "cache_path", help=f"Override the cache file (env {ENV_CACHE}).")
@click.option("--output-dir", help="Override the spec's output directory.")
@click.option(
    "--format", "extra_formats", multiple=True,
    type=click.Choice(["csv", "json", "svg"]),
    help="Additional report formats; csv and json are always written.",
)
def cmd_grid(spec_path, provider_url, model, mock, cache_path, output_dir, extra_formats):
    """Run the (context term x query key) grid described by SPEC_PATH."""
    try:
        spec = _load_grid_spec(
            spec_path, provider_url, model, mock, cache_path, output_dir
        )
    except MatrankError as err:
        _fail(f"{type(err).__name__}: {err}", EXIT_USAGE)

    try:
        dataset = ingest_csv(spec.dataset_path, spec.ingest)
    except MatrankError as err:
        _fail(f"{type(err).__name__}: {err}", _exit_code_for(err))

    try:
        result = run_grid(spec, dataset=dataset)
    except MatrankError as err:
        _fail(f"{type(err).__name__}: {err}", _exit_code_for(err))

    out = spec.output_dir or Path("matrank_out")
    formats = tuple(dict.fromkeys(("csv", "json") + tuple(extra_formats)))
    try:
        written = emit_reports(result, out, formats=formats, basename=f"{spec.name}_grid")
        if dataset.rejects:
            rejects_path = Path(out) / f"{spec.name}_rejects.csv"
            write_rejects_csv(dataset, rejects_path)
            written.append(rejects_path)
    except MatrankError as err:
        _fail(f"{type(err).__name__}: {err}", EXIT_PARTIAL)

    failed = result.failed_cells()
    n_rows, n_cols = result.shape
    total = n_rows * n_cols
    click.echo(
        f"grid {n_rows}x{n_cols} ({total - len(failed)}/{total} cells ok, "
        f"n={dataset.n}, model={result.metadata.get('model_id')})"
    )
    matrix = result.rho_matrix()
    import numpy as np

    if np.isfinite(matrix).any():
        best = np.unravel_index(np.nanargmax(matrix), matrix.shape)
        click.echo(
            f"best rho = {matrix[best]:+.4f} at term="
            f"{result.context_terms[best[0]]!r}, key={result.query_keys[best[1]]!r}"
        )
    for path in written:
        click.echo(f"wrote {path}")
    if failed:
        preview = "; ".join(
            f"({term!r}, {key!r}): {reason}" for term, key, reason in failed[:3]
        )
        more = f" (+{len(failed) - 3} more)" if len(failed) > 3 else ""
        click.echo(f"{len(failed)} cell(s) failed: {preview}{more}", err=True)
        sys.exit(EXIT_PARTIAL)


def _load_grid_spec(spec_path, provider_url, model, mock, cache_path, output_dir):
    path = Path(spec_path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as err:
        raise SpecInvalid(f"cannot load spec {path}: {err}") from err
    if not isinstance(raw, dict):
        raise SpecInvalid("experiment spec must be a JSON object")

    provider = dict(raw.get("provider") or {"type": "mock"})
    if mock:
        provider = {"type": "mock", "dim": int(provider.get("dim", 64))}
        if provider_url:
            raise SpecInvalid("--mock and --provider-url are mutually exclusive")
    elif provider_url:  # flag switches the experiment to a remote provider
        provider["type"] = "remote"
        provider["base_url"] = provider_url
    elif provider.get("type") == "remote" and os.environ.get(ENV_URL):
        provider["base_url"] = os.environ[ENV_URL]
    effective_model = model or os.environ.get(ENV_MODEL) or provider.get("model_id")
    if effective_model:
        provider["model_id"] = effective_model
    raw["provider"] = provider

    spec = ExperimentSpec.from_dict(
        raw, base_dir=path.parent, name=path.stem, source_path=path
    )
    # flag- and env-given paths resolve against the working directory,
    # spec-file paths against the spec's own directory
    replacements = {}
    effective_cache = cache_path or os.environ.get(ENV_CACHE)
    if effective_cache:
        replacements["cache_path"] = Path(effective_cache)
    if output_dir:
        replacements["output_dir"] = Path(output_dir)
    if replacements:
        spec = dataclasses.replace(spec, **replacements)
    return spec


@main.group("cache")
def cmd_cache():
    """Inspect or clear a persistent vector cache."""


@cmd_cache.command("stats")
@click.argument("path", required=False)
def cache_stats(path):
    """Print entry count and file size of the cache at PATH."""
    effective = path or os.environ.get(ENV_CACHE)
    if not effective:
        _fail(f"no cache path given (argument or {ENV_CACHE})", EXIT_USAGE)
    stats = VectorCache(effective).stats()
    click.echo(f"path     {stats['path']}")
    click.echo(f"entries  {stats['entries']}")
    click.echo(f"bytes    {stats['file_bytes']}")


@cmd_cache.command("clear")
@click.argument("path", required=False)
def cache_clear(path):
    """Delete every record in the cache at PATH."""
    effective = path or os.environ.get(ENV_CACHE)
    if not effective:
        _fail(f"no cache path given (argument or {ENV_CACHE})", EXIT_USAGE)
    cache = VectorCache(effective)
    before = len(cache)
    cache.clear()
    click.echo(f"cleared {before} entries from {cache.path}")


if __name__ == "__main__":
    main()
