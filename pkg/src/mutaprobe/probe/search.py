"""Two-phase hyperparameter search and the final guarded evaluation.

Phase 1 scores 40 configurations per model: logistic probes over a
10-layer grid at C in {0.1, 1.0}, and 2-layer MLPs over the same grid at
hidden sizes (1024,256) and (256,64) with dropout 0.3 and weight decay
1e-4. Phase 2 refines the winner at its layer: C in {0.25,0.5,1.0,2.0}
for logistic, dropout x weight-decay grid for the MLP, ties resolved
toward stronger regularization. All scores are stratified k-fold CV AUC
on dev splits only; the held-out split is consumed exactly once, later.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..corpus import round_half_up
from ..errors import InsufficientCells, SingleClass
from ..stats import roc_auc
from .cells import ProbeCell
from .models import ProbeConfig, train_probe
from .split import derive_probe_seed, stratified_folds

PHASE1_C = (0.1, 1.0)
PHASE1_HIDDEN = ((1024, 256), (256, 64))
PHASE1_MLP_DROPOUT = 0.3
PHASE1_MLP_WEIGHT_DECAY = 1e-4
PHASE2_C = (0.25, 0.5, 1.0, 2.0)
PHASE2_DROPOUT = (0.1, 0.3, 0.5)
PHASE2_WEIGHT_DECAY = (1e-5, 1e-4, 1e-3)


def layer_grid(layer_count: int) -> list[int]:
    """Ten block indices evenly spaced over (0, layer_count], deduplicated."""
    if layer_count < 1:
        raise ValueError("layer_count must be positive")
    return sorted({max(1, round_half_up(i * layer_count / 10)) for i in range(1, 11)})


def phase1_configs(grid: list[int]) -> list[ProbeConfig]:
    configs = [
        ProbeConfig(family="logistic_l2", layer_index=layer, C=c) for layer in grid for c in PHASE1_C
    ]
    configs += [
        ProbeConfig(
            family="mlp_2layer",
            layer_index=layer,
            hidden_sizes=h,
            dropout=PHASE1_MLP_DROPOUT,
            weight_decay=PHASE1_MLP_WEIGHT_DECAY,
        )
        for layer in grid
        for h in PHASE1_HIDDEN
    ]
    return configs


def cv_auc_for_cell(
    cell: ProbeCell,
    dev_indices: np.ndarray,
    config: ProbeConfig,
    folds: int,
    run_seed: int,
) -> float | None:
    """Mean validation AUC over stratified folds of this cell's dev split.

    Folds are fixed per cell (not per config) so configurations compete on
    identical splits. Folds whose validation part is single-class are
    skipped; None means no fold was scoreable.
    """
    X = cell.features_at(config.layer_index)[dev_indices]
    y = cell.labels[dev_indices]
    fold_seed = derive_probe_seed(run_seed, cell.key.label(), "folds")
    aucs = []
    for fold_index, (train, val) in enumerate(stratified_folds(y, folds, fold_seed)):
        if len(np.unique(y[val])) < 2 or len(np.unique(y[train])) < 2:
            continue
        train_seed = derive_probe_seed(run_seed, cell.key.label(), f"{config.label()}|fold{fold_index}")
        probe = train_probe(X[train], y[train], config, train_seed)
        aucs.append(roc_auc(y[val], probe.score(X[val])))
    return float(np.mean(aucs)) if aucs else None


def _mean_over_cells(
    cells: list[ProbeCell],
    dev_map: dict[str, np.ndarray],
    config: ProbeConfig,
    folds: int,
    run_seed: int,
) -> float | None:
    scores = []
    for cell in cells:
        auc = cv_auc_for_cell(cell, dev_map[cell.key.label()], config, folds, run_seed)
        if auc is not None:
            scores.append(auc)
    return float(np.mean(scores)) if scores else None


def phase1_search(
    cells: list[ProbeCell],
    dev_map: dict[str, np.ndarray],
    layer_count: int,
    folds: int = 5,
    run_seed: int = 0,
) -> list[tuple[ProbeConfig, float]]:
    """All 40 configs scored by unweighted mean CV AUC over cells, ranked.

    Ties keep the enumeration order of the grid (stable sort), so rankings
    are deterministic for a given run seed.
    """
    if not cells:
        raise InsufficientCells("no admitted cells to search over")
    scored = []
    for config in phase1_configs(layer_grid(layer_count)):
        mean_auc = _mean_over_cells(cells, dev_map, config, folds, run_seed)
        if mean_auc is not None:
            scored.append((config, mean_auc))
    if not scored:
        raise InsufficientCells("no config produced a scoreable fold")
    return sorted(scored, key=lambda item: -item[1])


def phase2_candidates(winner: ProbeConfig) -> list[ProbeConfig]:
    """Local refinement grid, ordered so the first tied maximum is the
    stronger-regularization choice (ascending C; descending dropout, then
    descending weight decay)."""
    if winner.family == "logistic_l2":
        return [
            ProbeConfig(family="logistic_l2", layer_index=winner.layer_index, C=c) for c in PHASE2_C
        ]
    return [
        ProbeConfig(
            family="mlp_2layer",
            layer_index=winner.layer_index,
            hidden_sizes=winner.hidden_sizes,
            dropout=do,
            weight_decay=wd,
        )
        for do in sorted(PHASE2_DROPOUT, reverse=True)
        for wd in sorted(PHASE2_WEIGHT_DECAY, reverse=True)
    ]


def phase2_refine(
    winner: ProbeConfig,
    cells: list[ProbeCell],
    dev_map: dict[str, np.ndarray],
    folds: int = 5,
    run_seed: int = 0,
) -> tuple[ProbeConfig, float]:
    """Best refinement of the phase-1 winner; strictly-better replacement
    keeps the earliest candidate on ties."""
    best_config, best_auc = None, -np.inf
    for config in phase2_candidates(winner):
        mean_auc = _mean_over_cells(cells, dev_map, config, folds, run_seed)
        if mean_auc is not None and mean_auc > best_auc:
            best_config, best_auc = config, mean_auc
    if best_config is None:
        return winner, -np.inf
    return best_config, float(best_auc)


def evaluate_probe(probe, X_test: np.ndarray, y_test: np.ndarray) -> float:
    """Held-out AUC; raises SingleClass when the test labels are degenerate."""
    return roc_auc(y_test, probe.score(X_test))


@dataclass(frozen=True)
class CellResult:
    key_label: str
    model_id: str
    language: str
    cwe: str
    target: str
    config_label: str
    n: int
    flip_rate: float
    cv_auc: float | None
    test_auc: float | None
    converged: bool
    dropped: str | None = None


def final_evaluation(
    cells: list[ProbeCell],
    config: ProbeConfig,
    dev_map: dict[str, np.ndarray],
    guard,
    folds: int = 5,
    run_seed: int = 0,
) -> list[CellResult]:
    """Train on each cell's full dev split and read its test split once."""
    results = []
    for cell in cells:
        label = cell.key.label()
        dev = dev_map[label]
        X_dev = cell.features_at(config.layer_index)[dev]
        y_dev = cell.labels[dev]
        cv = cv_auc_for_cell(cell, dev, config, folds, run_seed)
        train_seed = derive_probe_seed(run_seed, label, f"{config.label()}|final")
        probe = train_probe(X_dev, y_dev, config, train_seed)
        test = guard.read(label)
        X_test = cell.features_at(config.layer_index)[test]
        y_test = cell.labels[test]
        try:
            auc = evaluate_probe(probe, X_test, y_test)
            dropped = None
        except SingleClass:
            auc = None
            dropped = "single_class_test"
        results.append(
            CellResult(
                key_label=label,
                model_id=cell.key.model_id,
                language=cell.key.language,
                cwe=cell.key.cwe,
                target=cell.key.target,
                config_label=config.label(),
                n=cell.n,
                flip_rate=cell.flip_rate,
                cv_auc=cv,
                test_auc=auc,
                converged=getattr(probe, "converged", True),
                dropped=dropped,
            )
        )
    return results


def layer_profile(
    phase1_results: list[tuple[ProbeConfig, float]], family: str, layer_count: int
) -> list[tuple[int, float, float]]:
    """(layer_index, relative_depth, mean CV AUC) per grid layer for a family."""
    by_layer: dict[int, list[float]] = {}
    for config, auc in phase1_results:
        if config.family == family:
            by_layer.setdefault(config.layer_index, []).append(auc)
    return [
        (layer, layer / layer_count, float(np.mean(aucs))) for layer, aucs in sorted(by_layer.items())
    ]
