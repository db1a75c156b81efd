"""Fixtures: a tiny randomly initialized decoder model built in-process.

No weights are downloaded; the tokenizer is a whitespace word-level
tokenizer over the test vocabulary and the model is a two-layer GPT-2
shape with seeded random weights. Everything the backend contract
depends on (fast-tokenizer offsets, last_hidden_state, hidden_size) is
real; only the learned weights are fake.
"""

import pytest
import torch
from fastapi.testclient import TestClient
from tokenizers import Tokenizer, models, pre_tokenizers
from transformers import GPT2Config, GPT2Model, PreTrainedTokenizerFast

from embed_sidecar import SidecarConfig, TransformerBackend, create_app

PHRASES = [
    "ferromagnet iron",
    "ferromagnet cobalt",
    "magnetic iron",
    "thermoelectric bismuth",
    "insulator silicon",
    "economy of Ireland",
    "economy of Japan",
    "gross domestic product",
    "Curie temperature iron",
    "iron",
    "cobalt",
    "oxygen",
    "the Curie temperature of iron",
    "band gap silicon",
    "sulfide sulfur",
    "nitride nitrogen",
    "magnet",
    "economy of the United States",
    "power factor bismuth telluride",
    "ferromagnet gadolinium",
]

_WORDS = sorted({word for phrase in PHRASES for word in phrase.split()})
HIDDEN_SIZE = 32


def build_tokenizer() -> PreTrainedTokenizerFast:
    vocab = {"[UNK]": 0, "[BOS]": 1}
    for word in _WORDS:
        vocab[word] = len(vocab)
    core = Tokenizer(models.WordLevel(vocab, unk_token="[UNK]"))
    core.pre_tokenizer = pre_tokenizers.Whitespace()
    return PreTrainedTokenizerFast(
        tokenizer_object=core, unk_token="[UNK]", bos_token="[BOS]"
    )


def build_model(vocab_size: int) -> GPT2Model:
    torch.manual_seed(20260822)
    config = GPT2Config(
        vocab_size=vocab_size,
        n_positions=64,
        n_embd=HIDDEN_SIZE,
        n_layer=2,
        n_head=2,
        bos_token_id=1,
        eos_token_id=1,
    )
    model = GPT2Model(config)
    model.eval()
    return model


def build_backend(include_bos: bool = False) -> TransformerBackend:
    tokenizer = build_tokenizer()
    model = build_model(tokenizer.vocab_size)
    return TransformerBackend(
        model, tokenizer, model_id="tiny-test", include_bos=include_bos
    )


@pytest.fixture(scope="session")
def backend() -> TransformerBackend:
    return build_backend()


@pytest.fixture
def client(backend):
    app = create_app(SidecarConfig(model_id="tiny-test"), backend=backend)
    with TestClient(app) as instance:
        yield instance
