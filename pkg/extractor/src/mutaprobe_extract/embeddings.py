"""Export the model's input-embedding matrix plus its vocabulary sidecar."""

from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

from .containers import write_embedding_container
from .hf import input_embedding_matrix, load_model, load_tokenizer


def _surfaces(tokenizer, vocab_size: int) -> list[str]:
    surfaces = tokenizer.convert_ids_to_tokens(list(range(min(vocab_size, len(tokenizer)))))
    # embedding matrices are often padded past the tokenizer's vocabulary
    surfaces += [f"<extra_{i}>" for i in range(len(surfaces), vocab_size)]
    return [s if isinstance(s, str) else f"<extra_{i}>" for i, s in enumerate(surfaces)]


def export_embeddings(
    model_ref: str, container_path: str | Path, vocab_path: str | Path
) -> tuple[int, int]:
    """Write the full-vocabulary matrix as f32; returns (vocab_size, hidden_dim)."""
    tokenizer = load_tokenizer(model_ref)
    model = load_model(model_ref)
    matrix = input_embedding_matrix(model).detach().to("cpu").float().numpy().astype(np.float32)
    write_embedding_container(container_path, matrix)
    vocab_path = Path(vocab_path)
    tmp = vocab_path.with_name(vocab_path.name + ".tmp")
    tmp.write_text(
        json.dumps({"surfaces": _surfaces(tokenizer, matrix.shape[0])}, ensure_ascii=False, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    os.replace(tmp, vocab_path)
    return int(matrix.shape[0]), int(matrix.shape[1])
