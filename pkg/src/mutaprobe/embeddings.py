"""Token embedding table and cosine neighborhood queries.

The table is read from a binary embedding container plus a JSON vocab
sidecar ({"surfaces": [...]}, index = token id). Zero vectors carry no
direction, so those tokens are excluded from neighborhoods on both ends.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ContainerFormatError, UnknownToken
from .tensorio import read_embeddings, write_embeddings


@dataclass(frozen=True)
class EmbeddingTable:
    surfaces: tuple[str, ...]
    vectors: np.ndarray  # (vocab, dim) float32

    def __post_init__(self):
        if self.vectors.ndim != 2 or len(self.surfaces) != self.vectors.shape[0]:
            raise ContainerFormatError("vocab and vectors disagree in size")
        norms = np.linalg.norm(self.vectors.astype(np.float64), axis=1)
        with np.errstate(invalid="ignore"):
            unit = np.where(norms[:, None] > 0, self.vectors / np.where(norms == 0, 1, norms)[:, None], 0.0)
        object.__setattr__(self, "_unit", unit)
        object.__setattr__(self, "_nonzero", norms > 0)

    def __len__(self) -> int:
        return len(self.surfaces)

    def has_token(self, token_id: int) -> bool:
        return 0 <= token_id < len(self.surfaces)

    def directional(self, token_id: int) -> bool:
        return self.has_token(token_id) and bool(self._nonzero[token_id])


def top_k_similar(table: EmbeddingTable, token_id: int, k: int) -> list[int]:
    """The k ids most cosine-similar to token_id, self excluded.

    Ties break to the ascending token id; zero-norm tokens never appear.
    Fewer than k come back only when the vocabulary is exhausted.
    """
    if not table.has_token(token_id):
        raise UnknownToken(f"token id {token_id} not in table")
    if k < 1:
        raise ValueError("k must be >= 1")
    unit = table._unit
    sims = unit @ unit[token_id]
    candidates = np.flatnonzero(table._nonzero)
    candidates = candidates[candidates != token_id]
    if candidates.size == 0:
        return []
    # stable sort on ids, then stable sort on descending similarity
    order = candidates[np.argsort(-sims[candidates], kind="mergesort")]
    return order[:k].tolist()


def load_embedding_table(container_path: str | Path, vocab_path: str | Path) -> EmbeddingTable:
    matrix = read_embeddings(container_path)
    sidecar = json.loads(Path(vocab_path).read_text(encoding="utf-8"))
    surfaces = sidecar.get("surfaces")
    if not isinstance(surfaces, list):
        raise ContainerFormatError(f"{vocab_path}: missing surfaces list")
    return EmbeddingTable(surfaces=tuple(surfaces), vectors=matrix)


def write_embedding_table(table: EmbeddingTable, container_path: str | Path, vocab_path: str | Path) -> None:
    write_embeddings(container_path, table.vectors)
    Path(vocab_path).write_text(
        json.dumps({"surfaces": list(table.surfaces)}, ensure_ascii=False, sort_keys=True) + "\n",
        encoding="utf-8",
    )
