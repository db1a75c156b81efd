"""Experiment harness: specs, ranking runs, grids, reports."""

import json

import numpy as np
import pytest

from matrank import (
    CachedProvider,
    ContextSpec,
    ExperimentSpec,
    GridResult,
    IngestConfig,
    MockProvider,
    ProviderUnavailable,
    RemoteProvider,
    RunFailed,
    SpecInvalid,
    VectorCache,
    build_provider,
    emit_reports,
    ground_truth_ranks,
    ingest_csv,
    make_parity,
    read_grid_json,
    run_grid,
    run_ranking,
    whole_formula_vector,
    write_grid_csv,
    write_grid_json,
)
from matrank.harness import ERROR_MARKER

from conftest import SAMPLES, write_csv


def _spec(tmp_path, **overrides) -> ExperimentSpec:
    raw = {
        "dataset": str(SAMPLES / "curie_sample.csv"),
        "unit": "K",
        "strategy": "composition_averaged",
        "pooling": "whole_input",
        "context_terms": ["ferromagnet", "magnetic"],
        "query_keys": ["magnet"],
        "provider": {"type": "mock", "dim": 32},
    }
    raw.update(overrides)
    return ExperimentSpec.from_dict(raw, base_dir=tmp_path, name="t")


# --- spec validation ----------------------------------------------------------------

def test_unknown_field_is_rejected(tmp_path):
    with pytest.raises(SpecInvalid):
        _spec(tmp_path, typo_field=1)


def test_bad_enums_are_rejected(tmp_path):
    with pytest.raises(SpecInvalid):
        _spec(tmp_path, strategy="averaged")
    with pytest.raises(SpecInvalid):
        _spec(tmp_path, pooling="first_token")
    with pytest.raises(SpecInvalid):
        _spec(tmp_path, provider={"type": "oracle"})
    with pytest.raises(SpecInvalid):
        _spec(tmp_path, provider={"type": "remote"})  # base_url required


def test_empty_control_is_injected_exactly_once(tmp_path):
    spec = _spec(tmp_path, context_terms=["a", "", "b"], query_keys=["k"])
    assert spec.context_terms == ("", "a", "b")
    assert spec.query_keys == ("", "k")


def test_spec_hash_is_stable_and_ignores_cache(tmp_path):
    one = _spec(tmp_path)
    two = _spec(tmp_path, cache="vectors.bin")
    assert one.spec_hash() == two.spec_hash()
    assert len(one.spec_hash()) == 12
    assert one.spec_hash() != _spec(tmp_path, query_keys=["other"]).spec_hash()


def test_from_json_applies_overrides(tmp_path):
    path = tmp_path / "spec.json"
    path.write_text(
        json.dumps(
            {
                "dataset": str(SAMPLES / "curie_sample.csv"),
                "strategy": "whole_formula",
                "context_terms": ["x"],
                "query_keys": ["k"],
                "provider": {"type": "mock", "dim": 16},
            }
        )
    )
    spec = ExperimentSpec.from_json(path, overrides={"strategy": "composition_averaged"})
    assert spec.strategy == "composition_averaged"
    assert spec.name == "spec"
    assert spec.source_path == path


def test_build_provider_layers_cache(tmp_path):
    spec = _spec(tmp_path, cache="vectors.bin")
    provider = build_provider(spec)
    assert isinstance(provider, CachedProvider)
    assert isinstance(provider.provider, MockProvider)
    spec_remote = _spec(
        tmp_path,
        provider={"type": "remote", "base_url": "http://127.0.0.1:9", "model_id": "m"},
    )
    assert isinstance(build_provider(spec_remote).provider, RemoteProvider)


# --- ranking runs --------------------------------------------------------------------

def test_key_matching_a_compound_ranks_it_first(tmp_path, mock_provider):
    path = write_csv(
        tmp_path / "t.csv", ["formula,value", "Fe2O3,948", "NaCl,1", "SiC,100"]
    )
    data = ingest_csv(path)

    target_record = next(record for record in data.records if record.item == "Fe2O3")

    class KeyIsCompound(MockProvider):
        def embed(self, request):
            if request.text == "the key":
                target = whole_formula_vector(
                    target_record.composition, MockProvider(dim=self.dim)
                )
                return target.vector
            return super().embed(request)

    outcome = run_ranking(
        data, KeyIsCompound(dim=32), "whole_formula", ContextSpec(""), "the key"
    )
    assert outcome.similarity.rank_of("Fe2O3") == 1.0
    assert outcome.scores["Fe2O3"] == pytest.approx(1.0, abs=1e-12)


def test_two_items_give_plus_or_minus_one(tmp_path, mock_provider):
    path = write_csv(tmp_path / "t.csv", ["formula,value", "Fe,1043", "Cu,100"])
    outcome = run_ranking(
        ingest_csv(path), mock_provider, "composition_averaged", ContextSpec(""), "k"
    )
    assert outcome.rho in (1.0, -1.0)


def test_item_failures_are_collected(tmp_path):
    path = write_csv(
        tmp_path / "t.csv", ["formula,value", "Fe,1", "Co,2", "Ni,3"]
    )
    data = ingest_csv(path)

    class FailsOnMetals(MockProvider):
        def embed(self, request):
            if request.text in ("iron", "cobalt"):
                raise ProviderUnavailable("backend down")
            return super().embed(request)

    with pytest.raises(RunFailed) as info:
        run_ranking(
            data, FailsOnMetals(dim=16), "composition_averaged", ContextSpec(""), "k"
        )
    assert len(info.value.failures) == 2
    failed_items = [item for item, _ in info.value.failures]
    assert failed_items == ["Co", "Fe"]


def test_key_failure_aborts_early(tmp_path):
    path = write_csv(tmp_path / "t.csv", ["formula,value", "Fe,1", "Co,2"])

    class NoKeys(MockProvider):
        def embed(self, request):
            if request.text == "bad key":
                raise ProviderUnavailable("nope")
            return super().embed(request)

    with pytest.raises(RunFailed) as info:
        run_ranking(
            ingest_csv(path),
            NoKeys(dim=16),
            "composition_averaged",
            ContextSpec(""),
            "bad key",
        )
    assert "bad key" in info.value.failures[0][0]


def test_parity_counts_every_item(tmp_path, mock_provider):
    data = ingest_csv(SAMPLES / "curie_sample.csv")
    outcome = run_ranking(
        data, mock_provider, "composition_averaged", ContextSpec("magnetic"), "magnet"
    )
    assert outcome.parity.counts.sum() == len(data.records)
    truth = ground_truth_ranks(data)
    rebuilt = make_parity(truth, outcome.similarity, bins=outcome.parity.bins)
    assert np.array_equal(rebuilt.counts, outcome.parity.counts)


# --- grids ---------------------------------------------------------------------------

def test_grid_shape_includes_controls(tmp_path):
    spec = _spec(
        tmp_path,
        context_terms=["a", "b", "c"],
        query_keys=["k1", "k2", "k3", "k4"],
    )
    result = run_grid(spec)
    assert result.shape == (4, 5)
    assert result.context_terms[0] == ""
    assert result.query_keys[0] == ""
    assert all(cell.ok for row in result.cells for cell in row)


def test_grid_is_deterministic(tmp_path):
    spec = _spec(tmp_path)
    one = run_grid(spec).rho_matrix()
    two = run_grid(spec).rho_matrix()
    assert np.array_equal(one, two)


def test_grid_cells_are_independent(tmp_path):
    # a cell's value does not depend on which other cells run with it
    wide = _spec(tmp_path, context_terms=["a", "b"], query_keys=["k1", "k2"])
    narrow = _spec(tmp_path, context_terms=["b"], query_keys=["k2"])
    wide_result = run_grid(wide)
    narrow_result = run_grid(narrow)
    assert wide_result.cell("b", "k2").rho == narrow_result.cell("b", "k2").rho


def test_grid_call_count_is_bounded(tmp_path):
    data = ingest_csv(SAMPLES / "curie_sample.csv")
    elements = {el.symbol for record in data.records for el in record.composition}
    spec = _spec(
        tmp_path,
        context_terms=["ferromagnet", "magnetic", "iron"],
        query_keys=["magnet", "cobalt"],
    )
    inner = MockProvider(dim=32)
    run_grid(spec, provider=CachedProvider(inner), dataset=data)
    bound = (3 + 1) * len(elements) + (2 + 1)
    assert inner.call_count <= bound


def test_grid_second_run_hits_persistent_cache(tmp_path):
    spec = _spec(tmp_path, cache="vectors.bin")
    inner_one = MockProvider(dim=32)
    run_grid(spec, provider=CachedProvider(inner_one, cache=VectorCache(spec.cache_path)))
    assert inner_one.call_count > 0

    inner_two = MockProvider(dim=32)
    run_grid(spec, provider=CachedProvider(inner_two, cache=VectorCache(spec.cache_path)))
    assert inner_two.call_count == 0


def test_cell_failures_are_contained(tmp_path):
    spec = _spec(tmp_path, context_terms=["poison", "fine"], query_keys=["k"])

    class PoisonTerm(MockProvider):
        def embed(self, request):
            if request.text.startswith("poison "):
                raise ProviderUnavailable("backend down")
            return super().embed(request)

    result = run_grid(spec, provider=CachedProvider(PoisonTerm(dim=32)))
    failed = result.failed_cells()
    poison_row = result.context_terms.index("poison")
    assert failed
    assert all(term == "poison" for term, _key, _err in failed)
    assert all("RunFailed" in err and "backend down" in err for _t, _k, err in failed)
    for i, row in enumerate(result.cells):
        for cell in row:
            assert cell.ok == (i != poison_row)
    matrix = result.rho_matrix()
    assert np.isnan(matrix[poison_row]).all()
    assert np.isfinite(matrix[[i for i in range(len(result.cells)) if i != poison_row]]).all()


def test_grid_metadata_describes_the_run(tmp_path):
    spec = _spec(tmp_path)
    result = run_grid(spec)
    meta = result.metadata
    assert meta["dataset"] == "curie_sample"
    assert meta["n_records"] == 30
    assert meta["spec_hash"] == spec.spec_hash()
    assert meta["config"]["strategy"] == "composition_averaged"


def test_whole_formula_grid_rows_are_constant(tmp_path):
    # without element phrases the context term cannot enter the pipeline
    spec = _spec(
        tmp_path,
        strategy="whole_formula",
        context_terms=["ferromagnet", "magnetic"],
        query_keys=["magnet", "spin"],
    )
    matrix = run_grid(spec).rho_matrix()
    assert np.array_equal(matrix[0], matrix[1])
    assert np.array_equal(matrix[0], matrix[2])


# --- reports -------------------------------------------------------------------------

def test_grid_csv_shape_and_markers(tmp_path):
    spec = _spec(tmp_path, context_terms=["a"], query_keys=["k"])
    result = run_grid(spec)
    path = tmp_path / "grid.csv"
    write_grid_csv(result, path)
    lines = path.read_text().splitlines()
    assert len(lines) == 3  # header + control row + term row
    assert lines[0] == "term,,k"
    for line in lines[1:]:
        assert len(line.split(",")) == 3


def test_error_cells_render_as_markers(tmp_path):
    spec = _spec(tmp_path, context_terms=["poison"], query_keys=["k"])

    class PoisonTerm(MockProvider):
        def embed(self, request):
            if request.text.startswith("poison "):
                raise ProviderUnavailable("down")
            return super().embed(request)

    result = run_grid(spec, provider=CachedProvider(PoisonTerm(dim=32)))
    csv_path, json_path = tmp_path / "g.csv", tmp_path / "g.json"
    write_grid_csv(result, csv_path)
    write_grid_json(result, json_path)
    assert ERROR_MARKER in csv_path.read_text()
    payload = json.loads(json_path.read_text())
    flat = [cell for row in payload["cells"] for cell in row]
    assert any(isinstance(cell, dict) and "error" in cell for cell in flat)
    assert any(isinstance(cell, float) for cell in flat)


def test_grid_json_round_trip_is_exact(tmp_path):
    result = run_grid(_spec(tmp_path))
    path = tmp_path / "grid.json"
    write_grid_json(result, path)
    loaded = read_grid_json(path)
    assert loaded.context_terms == result.context_terms
    assert loaded.query_keys == result.query_keys
    original = result.rho_matrix()
    recovered = loaded.rho_matrix()
    assert np.array_equal(
        np.nan_to_num(original, nan=-9.0), np.nan_to_num(recovered, nan=-9.0)
    )
    assert loaded.metadata == result.metadata


def test_grid_csv_bytes_are_stable(tmp_path):
    spec = _spec(tmp_path)
    one, two = tmp_path / "one.csv", tmp_path / "two.csv"
    write_grid_csv(run_grid(spec), one)
    write_grid_csv(run_grid(spec), two)
    assert one.read_bytes() == two.read_bytes()


def test_emit_reports_writes_requested_formats(tmp_path):
    result = run_grid(_spec(tmp_path))
    out = tmp_path / "reports"
    written = emit_reports(result, out, formats=("csv", "json", "svg"))
    names = sorted(path.name for path in written)
    assert names == ["t_grid.csv", "t_grid.json", "t_grid.svg"]
    for path in written:
        assert path.exists() and path.stat().st_size > 0
    svg = next(path for path in written if path.suffix == ".svg")
    assert svg.read_text().lstrip().startswith("<?xml")


def test_emit_reports_for_parity(tmp_path, mock_provider):
    data = ingest_csv(SAMPLES / "curie_sample.csv")
    outcome = run_ranking(
        data, mock_provider, "composition_averaged", ContextSpec(""), "magnet"
    )
    written = emit_reports(outcome.parity, tmp_path, formats=("csv", "svg"))
    names = sorted(path.name for path in written)
    assert names == ["parity.csv", "parity.svg"]
    header = (tmp_path / "parity.csv").read_text().splitlines()[0]
    assert header == "truth_rank,similarity_rank,bin_count"


def test_emit_reports_rejects_unknown_format(tmp_path):
    result = run_grid(_spec(tmp_path))
    with pytest.raises(ValueError):
        emit_reports(result, tmp_path, formats=("xml",))


def test_grid_result_validates_dimensions():
    with pytest.raises(ValueError):
        GridResult(
            context_terms=("", "a"),
            query_keys=("", "k"),
            cells=((),),
            metadata={},
        )
