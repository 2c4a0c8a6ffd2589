"""Bundled toy fixtures: a 5-task corpus, an embedding table, a grouping.

Everything the pipeline needs to run end to end with no model and no
network. The stub endpoint emits FUNC_OK / SEC_OK markers and the toy
oracles grep for them; every prompt token is at least three characters
long and present in the fixture vocabulary, so all three mutation
operators act on every position and the plan arithmetic is exact.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .corpus import Corpus, TaskSpec, write_corpus
from .embeddings import EmbeddingTable, write_embedding_table
from .tokenization import TokenizationView, whitespace_tokenize

FUNC_ORACLE = "grep -q FUNC_OK {completion_file}"
SEC_ORACLE = "grep -q SEC_OK {completion_file}"

_PROMPTS = (
    ("toy-001", "CWE-089", None, "sanitize the query"),
    ("toy-002", "CWE-798", None, "escape shell arguments"),
    ("toy-003", "CWE-798", "# scaffold header\n{completion}\n# scaffold footer", "hash passwords safely"),
    ("toy-004", "CWE-089", None, "parse untrusted json values"),
    ("toy-005", "CWE-089", None, "render user supplied templates"),
)

_FILLER_WORDS = (
    "buffer", "cipher", "clean", "config", "decode", "digest", "encode",
    "filter", "format", "inspect", "limits", "logger", "memory", "quote",
    "random", "schema", "secret", "socket", "stream", "strip", "thread",
    "token", "verify",
)

_EMBED_DIM = 16
_EMBED_SEED = 1337


def toy_corpus() -> Corpus:
    tasks = tuple(
        TaskSpec(
            task_id=task_id,
            language="py",
            cwe=cwe,
            prompt=prompt,
            functional_oracle=FUNC_ORACLE,
            security_oracle=SEC_ORACLE,
            scaffold=scaffold,
        )
        for task_id, cwe, scaffold, prompt in _PROMPTS
    )
    return Corpus(tasks=tasks)


def toy_vocab() -> list[str]:
    """Prompt surfaces plus fillers, sorted; index is the token id."""
    words = {w for _, _, _, prompt in _PROMPTS for w in prompt.split()}
    words.update(_FILLER_WORDS)
    return sorted(words)


def toy_embedding_table() -> EmbeddingTable:
    surfaces = toy_vocab()
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(_EMBED_SEED)))
    vectors = rng.normal(size=(len(surfaces), _EMBED_DIM)).astype(np.float32)
    return EmbeddingTable(surfaces=tuple(surfaces), vectors=vectors)


def toy_grouping() -> dict[str, str]:
    return {"CWE-089": "I", "CWE-798": "D"}


def toy_views(corpus: Corpus | None = None, table: EmbeddingTable | None = None) -> dict[str, TokenizationView]:
    """Whitespace views with ids bound to the fixture vocabulary."""
    corpus = corpus or toy_corpus()
    table = table or toy_embedding_table()
    vocab = {surface: i for i, surface in enumerate(table.surfaces)}
    return {t.task_id: whitespace_tokenize(t.prompt, vocab) for t in corpus.tasks}


def write_toy_fixtures(outdir: str | Path) -> dict[str, Path]:
    """Materialize corpus, embeddings, and grouping files; returns their paths."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = {
        "corpus": outdir / "corpus.jsonl",
        "embeddings": outdir / "embeddings.actv",
        "vocab": outdir / "vocab.json",
        "grouping": outdir / "grouping.json",
    }
    write_corpus(toy_corpus(), paths["corpus"])
    write_embedding_table(toy_embedding_table(), paths["embeddings"], paths["vocab"])
    paths["grouping"].write_text(
        json.dumps(toy_grouping(), ensure_ascii=False, sort_keys=True, indent=1) + "\n",
        encoding="utf-8",
    )
    return paths
