"""End-to-end probe campaign: cells, search, guarded evaluation, reports.

The hyperparameter search runs once per model over all of that model's
admitted cells (both targets pooled), mirroring a per-model budget of 40
phase-1 configurations. Every random choice derives from the single run
seed, and the audit of test-split reads ships with the bundle.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

from ..corpus import Corpus
from ..errors import DegenerateStratification, InsufficientCells
from ..ledger import OutcomeRecord, canonical_json
from .cells import TARGETS, ProbeCell, assemble_cells
from .report import group_report, per_cwe_mean
from .search import (
    CellResult,
    final_evaluation,
    layer_profile,
    phase1_search,
    phase2_refine,
)
from .split import TestSplitGuard, derive_probe_seed, split_dev_test


@dataclass(frozen=True)
class ProbeRunResult:
    cell_results: tuple[CellResult, ...]
    winners: dict[str, dict]  # model_id -> {"phase1": label, "final": label, "final_cv_auc": float}
    layer_profiles: dict[str, dict[str, list[tuple[int, float, float]]]]  # model -> family -> rows
    group_reports: dict[str, dict]  # target -> report
    dropped_cells: tuple[str, ...]
    audit: dict[str, int]


def run_probe_pipeline(
    outcomes: list[OutcomeRecord],
    corpus: Corpus,
    store,
    grouping: dict[str, str],
    run_seed: int = 0,
    min_flip_rate: float = 0.10,
    min_instances: int = 20,
    folds: int = 5,
    dev_fraction: float = 0.8,
    resamples: int = 1000,
    ci_level: float = 0.95,
    policy: str = "first",
) -> ProbeRunResult:
    cells = assemble_cells(outcomes, corpus, store, min_flip_rate, min_instances, policy)
    if not cells:
        raise InsufficientCells("no cell passes the flip-rate and size floors")

    by_model: dict[str, list[ProbeCell]] = {}
    for cell in cells:
        by_model.setdefault(cell.key.model_id, []).append(cell)

    guard = TestSplitGuard()
    all_results: list[CellResult] = []
    winners: dict[str, dict] = {}
    profiles: dict[str, dict] = {}
    dropped: list[str] = []

    for model_id in sorted(by_model):
        model_cells = []
        dev_map: dict[str, list] = {}
        for cell in by_model[model_id]:
            label = cell.key.label()
            try:
                dev, test = split_dev_test(cell, derive_probe_seed(run_seed, label, "split"), dev_fraction)
            except DegenerateStratification:
                dropped.append(label)
                continue
            guard.register(label, test)
            dev_map[label] = dev
            model_cells.append(cell)
        if not model_cells:
            continue
        phase1 = phase1_search(model_cells, dev_map, store.layer_count, folds, run_seed)
        final_config, final_cv = phase2_refine(phase1[0][0], model_cells, dev_map, folds, run_seed)
        winners[model_id] = {
            "phase1": phase1[0][0].label(),
            "phase1_cv_auc": phase1[0][1],
            "final": final_config.label(),
            "final_cv_auc": final_cv,
        }
        profiles[model_id] = {
            family: layer_profile(phase1, family, store.layer_count)
            for family in ("logistic_l2", "mlp_2layer")
        }
        all_results.extend(final_evaluation(model_cells, final_config, dev_map, guard, folds, run_seed))

    guard.assert_complete()

    reports = {}
    for target in TARGETS:
        aucs = per_cwe_mean(all_results, target)
        if aucs:
            reports[target] = group_report(
                aucs, grouping, seed=derive_probe_seed(run_seed, target, "bootstrap"), resamples=resamples, level=ci_level
            )

    return ProbeRunResult(
        cell_results=tuple(all_results),
        winners=winners,
        layer_profiles=profiles,
        group_reports=reports,
        dropped_cells=tuple(dropped),
        audit=guard.audit(),
    )


def write_probe_bundle(outdir: str | Path, result: ProbeRunResult, run_seed: int, config: dict | None = None) -> None:
    """CSV per cell, JSON group summaries and manifest, layer profiles."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    with (outdir / "probe_cells.csv").open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["model_id", "language", "cwe", "target", "config", "n", "flip_rate", "cv_auc", "test_auc", "converged", "dropped"]
        )
        for r in result.cell_results:
            writer.writerow(
                [
                    r.model_id,
                    r.language,
                    r.cwe,
                    r.target,
                    r.config_label,
                    r.n,
                    repr(r.flip_rate),
                    "" if r.cv_auc is None else repr(r.cv_auc),
                    "" if r.test_auc is None else repr(r.test_auc),
                    int(r.converged),
                    r.dropped or "",
                ]
            )
    with (outdir / "probe_layers.csv").open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["model_id", "family", "layer_index", "relative_depth", "mean_cv_auc"])
        for model_id in sorted(result.layer_profiles):
            for family, rows in sorted(result.layer_profiles[model_id].items()):
                for layer, depth, auc in rows:
                    writer.writerow([model_id, family, layer, repr(depth), repr(auc)])
    (outdir / "probe_groups.json").write_text(
        canonical_json(result.group_reports) + "\n", encoding="utf-8"
    )
    manifest = {
        "run_seed": run_seed,
        "winners": result.winners,
        "dropped_cells": list(result.dropped_cells),
        "audit": result.audit,
        "mlp_recipe": {
            "activation": "relu",
            "batch_size": 64,
            "epochs": 200,
            "early_stopping": {"val_fraction": 0.1, "patience": 20},
            "optimizer": "adamw",
            "learning_rate": 1e-3,
        },
        "config": config or {},
    }
    (outdir / "probe_manifest.json").write_text(canonical_json(manifest) + "\n", encoding="utf-8")
