"""Backend pooling semantics against a reference implementation."""

import numpy as np
import pytest
import torch

from embed_sidecar import BadSpanError, NoTokensError

from conftest import PHRASES, build_backend


def reference_token_vectors(backend, text):
    """Per-token last-layer vectors and offsets, computed independently."""
    encoding = backend.tokenizer(
        text, add_special_tokens=False, return_offsets_mapping=True
    )
    ids = [backend.tokenizer.bos_token_id] + list(encoding["input_ids"])
    with torch.no_grad():
        hidden = backend.model(input_ids=torch.tensor([ids])).last_hidden_state[0]
    vectors = hidden[1:].to(torch.float64).numpy()  # content tokens only
    return vectors, [tuple(pair) for pair in encoding["offset_mapping"]]


def test_dim_equals_hidden_size(backend):
    vector = backend.embed("iron")
    assert vector.shape == (backend.hidden_size,)
    assert vector.dtype == np.float64
    assert backend.hidden_size == backend.model.config.hidden_size


def test_embedding_is_deterministic(backend):
    for text in ("iron", "economy of Ireland", ""):
        first = backend.embed(text)
        second = backend.embed(text)
        assert np.array_equal(first, second)


def test_whole_input_is_the_token_mean(backend):
    for phrase in PHRASES:
        vectors, _offsets = reference_token_vectors(backend, phrase)
        expected = vectors.mean(axis=0)
        produced = backend.embed(phrase)
        scale = np.max(np.abs(expected)) or 1.0
        assert np.max(np.abs(produced - expected)) / scale <= 1e-6, phrase


def test_span_pooling_matches_reference_on_fixed_phrases(backend):
    checked = 0
    for phrase in PHRASES:
        words = phrase.split()
        target = words[-1]
        start = phrase.rindex(target)
        span = (start, start + len(target))

        vectors, offsets = reference_token_vectors(backend, phrase)
        selected = [
            vectors[i]
            for i, (tok_start, tok_end) in enumerate(offsets)
            if tok_start < span[1] and span[0] < tok_end
        ]
        assert selected, phrase
        expected = np.mean(selected, axis=0)

        produced = backend.embed(phrase, pooling="target_span", span=span)
        scale = np.max(np.abs(expected)) or 1.0
        assert np.max(np.abs(produced - expected)) / scale <= 1e-6, phrase
        checked += 1
    assert checked == 20


def test_whole_input_equals_full_text_span(backend):
    for phrase in PHRASES:
        whole = backend.embed(phrase)
        spanned = backend.embed(phrase, pooling="target_span", span=(0, len(phrase)))
        scale = np.max(np.abs(whole)) or 1.0
        assert np.max(np.abs(whole - spanned)) / scale <= 1e-6, phrase


def test_span_selects_only_the_target_tokens(backend):
    phrase = "ferromagnet iron"
    iron_only = backend.embed(phrase, pooling="target_span", span=(12, 16))
    ferromagnet_only = backend.embed(phrase, pooling="target_span", span=(0, 11))
    whole = backend.embed(phrase)
    assert not np.array_equal(iron_only, ferromagnet_only)
    assert np.max(np.abs(whole - (iron_only + ferromagnet_only) / 2.0)) <= 1e-9


def test_span_with_partial_overlap_includes_the_token(backend):
    phrase = "ferromagnet iron"
    # covers just the first character of "iron"; intersection rule pools it
    partial = backend.embed(phrase, pooling="target_span", span=(12, 13))
    full = backend.embed(phrase, pooling="target_span", span=(12, 16))
    assert np.array_equal(partial, full)


def test_empty_text_embeds_the_bos_sequence(backend):
    vector = backend.embed("")
    ids = [backend.tokenizer.bos_token_id]
    with torch.no_grad():
        hidden = backend.model(input_ids=torch.tensor([ids])).last_hidden_state[0]
    expected = hidden[0].to(torch.float64).numpy()
    assert np.array_equal(vector, expected)


def test_bos_toggle_changes_whole_input_only():
    excluded = build_backend(include_bos=False)
    included = build_backend(include_bos=True)
    phrase = "ferromagnet iron"
    assert not np.array_equal(excluded.embed(phrase), included.embed(phrase))
    span = (12, 16)
    assert np.array_equal(
        excluded.embed(phrase, pooling="target_span", span=span),
        included.embed(phrase, pooling="target_span", span=span),
    )


def test_out_of_vocabulary_words_still_pool(backend):
    vector = backend.embed("wholly unseen words")
    assert vector.shape == (backend.hidden_size,)


def test_span_errors(backend):
    with pytest.raises(BadSpanError):
        backend.embed("iron", pooling="target_span")
    with pytest.raises(BadSpanError):
        backend.embed("iron", pooling="target_span", span=(0, 9))
    with pytest.raises(BadSpanError):
        backend.embed("iron", pooling="target_span", span=(3, 3))
    with pytest.raises(BadSpanError):
        backend.embed("iron", span=(0, 2))


def test_span_over_whitespace_only_is_empty_output(backend):
    with pytest.raises(NoTokensError):
        backend.embed("a b", pooling="target_span", span=(1, 2))
