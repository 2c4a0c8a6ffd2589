"""Deterministic prompt mutation operators.

Three operators, each keyed by a 64-bit seed derived from
(task_id, kind, token_index, variant_index):

- SingleChar: one character inside the token becomes a different ASCII letter.
- ThreeChar: three distinct characters inside the token each become an ASCII
  letter different from the character they replace.
- TokenReplace: the token's surface becomes the surface of one of its top-k
  cosine neighbors in the embedding table.

Draws are counter-indexed SplitMix64 streams, so every record is a pure
function of its seed and two runs of a plan are byte-identical. The draw
order per operator is part of the format: SingleChar uses counter 0 for the
position and counter 1 for the letter; ThreeChar uses counters 0..2 for a
partial Fisher-Yates position draw and counters 3..5 for the letters in
draw order; TokenReplace uses counter 0 over the neighbor list.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .embeddings import EmbeddingTable, top_k_similar
from .errors import (
    EmptyNeighborhood,
    IneligibleToken,
    MalformedRecord,
    TableRequired,
)
from .hashing import counter_rand_vec, fnv1a_64, rand_below
from .tokenization import TokenizationView

KINDS = ("SingleChar", "ThreeChar", "TokenReplace")

LETTERS = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ"
_LETTER_INDEX = {ch: i for i, ch in enumerate(LETTERS)}


@dataclass(frozen=True)
class MutationRecord:
    task_id: str
    kind: str
    token_index: int
    variant_index: int
    seed: int
    original_surface: str
    mutated_surface: str
    mutated_prompt: str
    duplicate_of: str | None = None

    @property
    def key(self) -> str:
        return f"{self.kind}:{self.token_index}:{self.variant_index}"


@dataclass(frozen=True)
class MutationPlan:
    task_id: str
    records: tuple[MutationRecord, ...]


def derive_seed(task_id: str, kind: str, token_index: int, variant_index: int) -> int:
    """FNV-1a 64 over "task_id|kind|token_index|variant_index"; platform-stable."""
    return fnv1a_64(f"{task_id}|{kind}|{token_index}|{variant_index}".encode("utf-8"))


def _is_word(surface: str) -> bool:
    return any(ch.isalnum() or ch == "_" for ch in surface)


def eligible_positions(
    view: TokenizationView,
    kind: str,
    table: EmbeddingTable | None = None,
    skip_nonword: bool = False,
) -> list[int]:
    """Token indices the operator can act on.

    SingleChar needs a non-empty surface, ThreeChar at least three
    characters, TokenReplace an id present in the table with a usable
    direction and at least one other directional token. skip_nonword
    additionally drops tokens with no alphanumeric/underscore character.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown mutation kind {kind!r}")
    if kind == "TokenReplace" and table is None:
        raise TableRequired("TokenReplace needs an embedding table")
    out = []
    if kind == "TokenReplace":
        directional_total = int(np.count_nonzero(table._nonzero))
    for i, tok in enumerate(view.tokens):
        if skip_nonword and not _is_word(tok.surface):
            continue
        if kind == "SingleChar":
            ok = len(tok.surface) >= 1
        elif kind == "ThreeChar":
            ok = len(tok.surface) >= 3
        else:
            ok = table.directional(tok.token_id) and directional_total >= 2
        if ok:
            out.append(i)
    return out


def _replacement_candidates(original: str) -> str:
    """Ordered ASCII-letter alphabet minus the character being replaced."""
    return LETTERS.replace(original, "") if original in _LETTER_INDEX else LETTERS


def mutate_surface_single_char(surface: str, seed: int) -> str:
    pos = rand_below(seed, 0, len(surface))
    candidates = _replacement_candidates(surface[pos])
    letter = candidates[rand_below(seed, 1, len(candidates))]
    return surface[:pos] + letter + surface[pos + 1 :]


def _draw_three_positions(n: int, seed: int) -> list[int]:
    # partial Fisher-Yates: draw into the hole, move the last active element in
    pool = list(range(n))
    positions = []
    for j in range(3):
        i = rand_below(seed, j, n - j)
        positions.append(pool[i])
        pool[i] = pool[n - 1 - j]
    return positions


def mutate_surface_three_char(surface: str, seed: int) -> str:
    if len(surface) < 3:
        raise IneligibleToken(f"token {surface!r} shorter than 3 characters")
    chars = list(surface)
    for j, pos in enumerate(_draw_three_positions(len(surface), seed)):
        candidates = _replacement_candidates(surface[pos])
        chars[pos] = candidates[rand_below(seed, 3 + j, len(candidates))]
    return "".join(chars)


def _splice(view: TokenizationView, token_index: int, mutated_surface: str) -> str:
    tok = view.tokens[token_index]
    data = view.prompt_text.encode("utf-8")
    return (data[: tok.start] + mutated_surface.encode("utf-8") + data[tok.end :]).decode("utf-8")


def _record(view, task_id, kind, token_index, variant_index, seed, mutated_surface) -> MutationRecord:
    return MutationRecord(
        task_id=task_id,
        kind=kind,
        token_index=token_index,
        variant_index=variant_index,
        seed=seed,
        original_surface=view.tokens[token_index].surface,
        mutated_surface=mutated_surface,
        mutated_prompt=_splice(view, token_index, mutated_surface),
    )


def mutate_single_char(
    view: TokenizationView, token_index: int, seed: int, task_id: str = "", variant_index: int = 0
) -> MutationRecord:
    surface = view.tokens[token_index].surface
    if len(surface) < 1:
        raise IneligibleToken(f"token {token_index} has an empty surface")
    return _record(view, task_id, "SingleChar", token_index, variant_index, seed, mutate_surface_single_char(surface, seed))


def mutate_three_char(
    view: TokenizationView, token_index: int, seed: int, task_id: str = "", variant_index: int = 0
) -> MutationRecord:
    surface = view.tokens[token_index].surface
    return _record(view, task_id, "ThreeChar", token_index, variant_index, seed, mutate_surface_three_char(surface, seed))


def mutate_token_replace(
    view: TokenizationView,
    token_index: int,
    table: EmbeddingTable,
    seed: int,
    k: int = 10,
    task_id: str = "",
    variant_index: int = 0,
) -> MutationRecord:
    tok = view.tokens[token_index]
    if not table.directional(tok.token_id):
        raise IneligibleToken(f"token {token_index} (id {tok.token_id}) has no usable embedding")
    neighbors = top_k_similar(table, tok.token_id, k)
    if not neighbors:
        raise EmptyNeighborhood(f"token id {tok.token_id} has no neighbors")
    choice = neighbors[rand_below(seed, 0, len(neighbors))]
    return _record(view, task_id, "TokenReplace", token_index, variant_index, seed, table.surfaces[choice])


def build_plan(
    view: TokenizationView,
    task_id: str,
    table: EmbeddingTable | None = None,
    variants_per_kind: int = 6,
    kinds: tuple[str, ...] = KINDS,
    k: int = 10,
    skip_nonword: bool = False,
) -> MutationPlan:
    """Every eligible (position, kind) gets exactly variants_per_kind records.

    Variants that collide on mutated_prompt are kept (plan size stays
    position-count x kinds x variants) and flagged with the key of the
    first record producing that prompt.
    """
    eligible = {kind: set(eligible_positions(view, kind, table, skip_nonword)) for kind in kinds}
    records: list[MutationRecord] = []
    first_for_prompt: dict[str, str] = {}
    for token_index in range(len(view.tokens)):
        for kind in kinds:
            if token_index not in eligible[kind]:
                continue
            for variant_index in range(variants_per_kind):
                seed = derive_seed(task_id, kind, token_index, variant_index)
                if kind == "SingleChar":
                    rec = mutate_single_char(view, token_index, seed, task_id, variant_index)
                elif kind == "ThreeChar":
                    rec = mutate_three_char(view, token_index, seed, task_id, variant_index)
                else:
                    rec = mutate_token_replace(view, token_index, table, seed, k, task_id, variant_index)
                prior = first_for_prompt.get(rec.mutated_prompt)
                if prior is not None:
                    rec = replace(rec, duplicate_of=prior)
                else:
                    first_for_prompt[rec.mutated_prompt] = rec.key
                records.append(rec)
    return MutationPlan(task_id=task_id, records=tuple(records))


def write_mutations(plans: list[MutationPlan], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for plan in plans:
            for r in plan.records:
                fh.write(
                    json.dumps(
                        {
                            "task_id": r.task_id,
                            "kind": r.kind,
                            "token_index": r.token_index,
                            "variant_index": r.variant_index,
                            "seed": r.seed,
                            "original_surface": r.original_surface,
                            "mutated_surface": r.mutated_surface,
                            "mutated_prompt": r.mutated_prompt,
                            "duplicate_of": r.duplicate_of,
                        },
                        ensure_ascii=False,
                        sort_keys=True,
                    )
                    + "\n"
                )


def load_mutations(path: str | Path) -> dict[str, list[MutationRecord]]:
    """Records grouped by task_id, in file order."""
    out: dict[str, list[MutationRecord]] = {}
    with Path(path).open(encoding="utf-8") as fh:
        for line_number, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                rec = MutationRecord(**obj)
            except (json.JSONDecodeError, TypeError) as e:
                raise MalformedRecord(line_number=line_number, detail=str(e)) from None
            out.setdefault(rec.task_id, []).append(rec)
    return out


# -------------------------------------------------- constructive witness search


def _candidate_counts_and_needed(surface: str, target: str) -> tuple[np.ndarray, np.ndarray]:
    """Per position: candidate alphabet size, and the draw index that hits target.

    needed[p] is -1 where target[p] == surface[p] (position must not be drawn)
    or where target[p] is not reachable (not an ASCII letter).
    """
    n = len(surface)
    counts = np.zeros(n, dtype=np.uint64)
    needed = np.full(n, -1, dtype=np.int64)
    for p in range(n):
        candidates = _replacement_candidates(surface[p])
        counts[p] = len(candidates)
        if target[p] != surface[p]:
            idx = candidates.find(target[p])
            needed[p] = idx  # -1 when not a legal replacement
    return counts, needed


def find_witness_seed(
    kind: str,
    surface: str,
    target: str,
    limit: int = 20_000_000,
    batch: int = 1_000_000,
) -> int | None:
    """Smallest seed in [0, limit) whose draw realizes surface -> target.

    Searches the raw seed space with vectorized counter draws; the returned
    seed is verified by applying the real operator. None when no seed below
    the limit works; ValueError when no seed can ever work (malformed pair).
    """
    if kind == "TokenReplace":
        raise ValueError("TokenReplace witnesses depend on a table; search neighbors directly")
    if len(surface) != len(target):
        raise ValueError("witness search needs equal-length surfaces")
    n = len(surface)
    diff = [p for p in range(n) if surface[p] != target[p]]
    counts, needed = _candidate_counts_and_needed(surface, target)
    if kind == "SingleChar":
        if len(diff) != 1 or needed[diff[0]] < 0:
            raise ValueError(f"{surface!r} -> {target!r} is not a single-letter substitution")
    elif kind == "ThreeChar":
        if len(diff) != 3 or any(needed[p] < 0 for p in diff) or n < 3:
            raise ValueError(f"{surface!r} -> {target!r} is not a three-letter substitution")
    else:
        raise ValueError(f"unknown mutation kind {kind!r}")

    mutate = mutate_surface_single_char if kind == "SingleChar" else mutate_surface_three_char
    for lo in range(0, limit, batch):
        seeds = np.arange(lo, min(lo + batch, limit), dtype=np.uint64)
        if kind == "SingleChar":
            pos = counter_rand_vec(seeds, 0) % np.uint64(n)
            mask = pos == np.uint64(diff[0])
            letter = counter_rand_vec(seeds, 1) % counts[diff[0]]
            mask &= letter == np.uint64(needed[diff[0]])
        else:
            pools = np.tile(np.arange(n, dtype=np.int64), (len(seeds), 1))
            rows = np.arange(len(seeds))
            drawn = np.empty((len(seeds), 3), dtype=np.int64)
            for j in range(3):
                r = (counter_rand_vec(seeds, j) % np.uint64(n - j)).astype(np.int64)
                drawn[:, j] = pools[rows, r]
                pools[rows, r] = pools[:, n - 1 - j]
            mask = np.ones(len(seeds), dtype=bool)
            mask &= (np.sort(drawn, axis=1) == np.asarray(diff, dtype=np.int64)).all(axis=1)
            for j in range(3):
                r = counter_rand_vec(seeds, 3 + j) % counts[drawn[:, j]]
                mask &= r.astype(np.int64) == needed[drawn[:, j]]
        hits = np.flatnonzero(mask)
        if hits.size:
            seed = int(seeds[hits[0]])
            assert mutate(surface, seed) == target
            return seed
    return None
