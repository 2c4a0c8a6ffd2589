"""Stratified splitting, cross-validation folds, and the test-split audit.

All randomness flows through explicit integer seeds derived from the run
seed and the cell identity, so a campaign's splits are reproducible from
the manifest alone.
"""

from __future__ import annotations

import numpy as np

from ..corpus import round_half_up
from ..errors import DegenerateStratification, ValidationError
from ..hashing import fnv1a_64
from .cells import ProbeCell


def derive_probe_seed(run_seed: int, cell_label: str, purpose: str) -> int:
    return fnv1a_64(f"{run_seed}|{cell_label}|{purpose}".encode("utf-8"))


def stratified_holdout_indices(
    labels: np.ndarray, seed: int, holdout_fraction: float
) -> tuple[np.ndarray, np.ndarray]:
    """(rest, holdout) index arrays, stratified by label.

    Each class contributes round-half-up(fraction * class size) members,
    forced into [1, class size - 1] so both sides see both classes. A class
    with fewer than 2 members cannot be split.
    """
    labels = np.asarray(labels, dtype=bool)
    if not 0.0 < holdout_fraction < 1.0:
        raise ValidationError("holdout fraction must be in (0, 1)")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    rest, hold = [], []
    for cls in (False, True):
        idx = np.flatnonzero(labels == cls)
        n_k = len(idx)
        if n_k < 2:
            raise DegenerateStratification(f"class {cls} has {n_k} member(s)")
        t_k = min(max(round_half_up(holdout_fraction * n_k), 1), n_k - 1)
        perm = rng.permutation(idx)
        hold.append(perm[:t_k])
        rest.append(perm[t_k:])
    return np.sort(np.concatenate(rest)), np.sort(np.concatenate(hold))


def split_dev_test(cell: ProbeCell, seed: int, dev_fraction: float = 0.8) -> tuple[np.ndarray, np.ndarray]:
    """(dev, test) instance indices for one cell, stratified by label."""
    return stratified_holdout_indices(cell.labels, seed, 1.0 - dev_fraction)


def stratified_folds(labels: np.ndarray, folds: int, seed: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """k stratified (train, validation) index pairs over the given labels.

    Per class, a seeded permutation is dealt round-robin across folds, so
    fold class counts differ by at most one. With a class smaller than k,
    some validation folds are single-class; cross-validation skips those.
    """
    labels = np.asarray(labels, dtype=bool)
    if folds < 2:
        raise ValidationError("need at least 2 folds")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    fold_of = np.empty(len(labels), dtype=int)
    for cls in (False, True):
        idx = np.flatnonzero(labels == cls)
        perm = rng.permutation(idx)
        fold_of[perm] = np.arange(len(perm)) % folds
    out = []
    for f in range(folds):
        val = np.flatnonzero(fold_of == f)
        train = np.flatnonzero(fold_of != f)
        out.append((train, val))
    return out


class TestSplitGuard:
    """Audit that each cell's held-out split is consumed exactly once.

    Tuning code never touches the guard; only the final evaluation calls
    read(). A second read raises, and the audit can prove after the fact
    that no cell was peeked at twice or left unevaluated.
    """

    __test__ = False  # not a pytest case despite the name

    def __init__(self):
        self._splits: dict[str, np.ndarray] = {}
        self._reads: dict[str, int] = {}

    def register(self, cell_label: str, test_indices: np.ndarray) -> None:
        if cell_label in self._splits:
            raise ValidationError(f"test split for {cell_label!r} registered twice")
        self._splits[cell_label] = np.asarray(test_indices)
        self._reads[cell_label] = 0

    def read(self, cell_label: str) -> np.ndarray:
        if cell_label not in self._splits:
            raise ValidationError(f"no registered test split for {cell_label!r}")
        if self._reads[cell_label] >= 1:
            raise ValidationError(f"test split for {cell_label!r} read more than once")
        self._reads[cell_label] += 1
        return self._splits[cell_label]

    def audit(self) -> dict[str, int]:
        return dict(self._reads)

    def assert_complete(self) -> None:
        stale = {k: v for k, v in self._reads.items() if v != 1}
        if stale:
            raise ValidationError(f"test splits not read exactly once: {stale}")
