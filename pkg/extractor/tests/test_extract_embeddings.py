"""Embedding export: f32 round trip plus neighbor agreement with the framework."""

import json
import random
import types

import numpy as np
import pytest
import torch
from mutaprobe_extract.embeddings import export_embeddings
from mutaprobe_extract.errors import ModelLoadFailure, WeightAccessFailure
from mutaprobe_extract.hf import input_embedding_matrix

from mutaprobe.embeddings import load_embedding_table, top_k_similar
from mutaprobe.tensorio import read_embeddings
from transformers import AutoModel, AutoTokenizer


@pytest.fixture(scope="module")
def export(tiny_checkpoint, tmp_path_factory):
    out = tmp_path_factory.mktemp("emb")
    dims = export_embeddings(tiny_checkpoint, out / "embeddings.actv", out / "vocab.json")
    return tiny_checkpoint, out, dims


def test_export_dims_match_model(export):
    ckpt, out, (vocab_size, hidden_dim) = export
    model = AutoModel.from_pretrained(ckpt)
    assert vocab_size == model.config.vocab_size
    assert hidden_dim == model.config.hidden_size
    matrix = read_embeddings(out / "embeddings.actv")
    assert matrix.shape == (vocab_size, hidden_dim)


def test_round_trip_equals_source_to_f32(export):
    ckpt, out, _ = export
    model = AutoModel.from_pretrained(ckpt)
    source = model.get_input_embeddings().weight.detach().numpy().astype(np.float32)
    matrix = read_embeddings(out / "embeddings.actv")
    assert matrix.tobytes() == source.tobytes()


def test_vocab_sidecar_lists_surfaces(export):
    ckpt, out, (vocab_size, _) = export
    sidecar = json.loads((out / "vocab.json").read_text(encoding="utf-8"))
    tokenizer = AutoTokenizer.from_pretrained(ckpt)
    assert len(sidecar["surfaces"]) == vocab_size
    assert sidecar["surfaces"][: len(tokenizer)] == tokenizer.convert_ids_to_tokens(
        list(range(len(tokenizer)))
    )


def _framework_top_k(weight: torch.Tensor, token_id: int, k: int) -> list[int]:
    unit = weight.double() / weight.double().norm(dim=1, keepdim=True)
    sims = (unit @ unit[token_id]).numpy()
    candidates = [j for j in range(weight.shape[0]) if j != token_id]
    candidates.sort(key=lambda j: (-sims[j], j))
    return candidates[:k]


def test_neighbors_agree_with_framework(export):
    ckpt, out, (vocab_size, _) = export
    table = load_embedding_table(out / "embeddings.actv", out / "vocab.json")
    weight = AutoModel.from_pretrained(ckpt).get_input_embeddings().weight.detach()
    rng = random.Random(0)
    for token_id in rng.sample(range(vocab_size), 100):
        assert top_k_similar(table, token_id, 10) == _framework_top_k(weight, token_id, 10)


def test_weight_access_failures_typed():
    class NoEmbeddings:
        pass

    class FlatEmbeddings:
        def get_input_embeddings(self):
            return types.SimpleNamespace(weight=torch.zeros(4))

    with pytest.raises(WeightAccessFailure):
        input_embedding_matrix(NoEmbeddings())
    with pytest.raises(WeightAccessFailure):
        input_embedding_matrix(FlatEmbeddings())


def test_missing_model_fails_typed(tiny_checkpoint, tmp_path):
    # a directory holding only tokenizer files: tokenizer loads, model does not
    tok_only = tmp_path / "tok_only"
    AutoTokenizer.from_pretrained(tiny_checkpoint).save_pretrained(tok_only)
    with pytest.raises(ModelLoadFailure):
        export_embeddings(str(tok_only), tmp_path / "e.actv", tmp_path / "v.json")
