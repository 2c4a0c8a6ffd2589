"""Activation access and probe-cell assembly.

Activation matrices are row-per-layer: row 0 is the embedding output and
row l (1-based) the residual stream after block l, all taken at the
prompt's last token. A store's layer_count is the number of blocks L, one
less than the row count. Cells group mutant instances by
(model, language, cwe, target) and are admitted when the minority label
fraction reaches the flip-rate floor and the instance count is large
enough for stratified cross-validation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..corpus import Corpus
from ..errors import ContainerFormatError, MissingActivation, ValidationError
from ..hashing import fnv1a_64
from ..ledger import ORIGINAL_REF, OutcomeRecord, prompt_key
from ..tensorio import read_activations, write_activations

TARGETS = ("functional", "functional_and_secure")


@dataclass(frozen=True)
class ProbeCellKey:
    model_id: str
    language: str
    cwe: str
    target: str

    def __post_init__(self):
        if self.target not in TARGETS:
            raise ValidationError(f"unknown probe target {self.target!r}")

    def label(self) -> str:
        return f"{self.model_id}|{self.language}|{self.cwe}|{self.target}"


@dataclass(frozen=True)
class ProbeCell:
    key: ProbeCellKey
    prompt_keys: tuple[str, ...]
    labels: np.ndarray  # bool, one per instance
    features: np.ndarray  # (n, layer_count + 1, hidden_dim) float32
    flip_rate: float

    @property
    def n(self) -> int:
        return len(self.prompt_keys)

    def features_at(self, layer_index: int) -> np.ndarray:
        if not 0 <= layer_index < self.features.shape[1]:
            raise ValidationError(f"layer {layer_index} outside [0, {self.features.shape[1]})")
        return self.features[:, layer_index, :]


class InMemoryActivationStore:
    """Dict-backed store, mainly for tests and synthetic campaigns."""

    def __init__(self, matrices: dict[str, np.ndarray], layer_count: int, hidden_dim: int):
        self.layer_count = layer_count
        self.hidden_dim = hidden_dim
        self._matrices = matrices

    def get(self, key: str) -> np.ndarray:
        if key not in self._matrices:
            raise MissingActivation(key)
        return self._matrices[key]


class SyntheticActivationStore:
    """Deterministic standard-normal activations keyed by prompt key.

    A stand-in for a real extractor: every prompt key maps to a fixed
    (layer_count + 1, hidden_dim) matrix derived from the store seed and
    the key, so campaigns are reproducible without any model.
    """

    def __init__(self, layer_count: int = 12, hidden_dim: int = 32, seed: int = 0):
        self.layer_count = layer_count
        self.hidden_dim = hidden_dim
        self.seed = seed

    def get(self, key: str) -> np.ndarray:
        rng = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence([self.seed, fnv1a_64(key.encode("utf-8"))]))
        )
        return rng.normal(size=(self.layer_count + 1, self.hidden_dim)).astype(np.float32)


class DirectoryActivationStore:
    """Container files under one directory, addressed through index.json."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        index_path = self.root / "index.json"
        if not index_path.exists():
            raise MissingActivation(f"{index_path} (no activation index)")
        index = json.loads(index_path.read_text(encoding="utf-8"))
        try:
            self.layer_count = int(index["layer_count"])
            self.hidden_dim = int(index["hidden_dim"])
            self._files = dict(index["files"])
        except (KeyError, TypeError, ValueError) as e:
            raise ContainerFormatError(f"{index_path}: bad index: {e}") from None

    def get(self, key: str) -> np.ndarray:
        if key not in self._files:
            raise MissingActivation(key)
        stored_key, matrix = read_activations(self.root / self._files[key])
        if stored_key != key:
            raise ContainerFormatError(f"container for {key!r} holds {stored_key!r}")
        if matrix.shape != (self.layer_count + 1, self.hidden_dim):
            raise ContainerFormatError(
                f"{key!r}: shape {matrix.shape} != {(self.layer_count + 1, self.hidden_dim)}"
            )
        return matrix


def write_activation_store(
    root: str | Path, matrices: dict[str, np.ndarray], layer_count: int, hidden_dim: int
) -> None:
    """Persist matrices as one container per prompt key plus an index."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    files = {}
    for key in sorted(matrices):
        name = f"{fnv1a_64(key.encode('utf-8')):016x}.actv"
        write_activations(root / name, key, matrices[key])
        files[key] = name
    index = {"layer_count": layer_count, "hidden_dim": hidden_dim, "files": files}
    (root / "index.json").write_text(
        json.dumps(index, ensure_ascii=False, sort_keys=True, indent=1) + "\n", encoding="utf-8"
    )


def target_label(rec_bits: tuple[bool, bool], target: str) -> bool:
    func, sec = rec_bits
    if target == "functional":
        return func
    if target == "functional_and_secure":
        return func and sec
    raise ValidationError(f"unknown probe target {target!r}")


def assemble_cells(
    outcomes: list[OutcomeRecord],
    corpus: Corpus,
    store,
    min_flip_rate: float = 0.10,
    min_instances: int = 20,
    policy: str = "first",
) -> list[ProbeCell]:
    """One admitted cell per (model, language, cwe, target).

    Instances are the mutated prompts; the label is the mutant generation's
    target outcome. Admission needs minority fraction >= min_flip_rate
    (inclusive at the boundary) and n >= min_instances. Every admitted
    instance must have activations in the store.
    """
    from ..analysis import collapse_bits

    bits = collapse_bits(outcomes, policy)
    grouped: dict[tuple[str, str, str], list[tuple[str, tuple[bool, bool]]]] = {}
    for (task_id, model_id, ref), b in sorted(bits.items()):
        if ref == ORIGINAL_REF:
            continue
        task = corpus.by_id[task_id]
        grouped.setdefault((model_id, task.language, task.cwe), []).append(
            (prompt_key(task_id, ref), b)
        )
    cells = []
    for (model_id, language, cwe), instances in sorted(grouped.items()):
        for target in TARGETS:
            labels = np.array([target_label(b, target) for _, b in instances], dtype=bool)
            n = len(labels)
            if n < min_instances:
                continue
            minority = min(labels.sum(), n - labels.sum()) / n
            if minority < min_flip_rate:
                continue
            features = np.stack([store.get(pk) for pk, _ in instances])
            cells.append(
                ProbeCell(
                    key=ProbeCellKey(model_id=model_id, language=language, cwe=cwe, target=target),
                    prompt_keys=tuple(pk for pk, _ in instances),
                    labels=labels,
                    features=features,
                    flip_rate=float(minority),
                )
            )
    return cells
