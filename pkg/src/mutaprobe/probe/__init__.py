"""Linear and shallow probes over prompt-end hidden states."""

from .cells import (
    TARGETS,
    DirectoryActivationStore,
    InMemoryActivationStore,
    ProbeCell,
    ProbeCellKey,
    SyntheticActivationStore,
    assemble_cells,
    target_label,
    write_activation_store,
)
from .models import (
    LogisticProbe,
    MlpProbe,
    ProbeConfig,
    Standardizer,
    logistic_loss_and_grad,
    train_logistic,
    train_mlp,
    train_probe,
)
from .report import group_report, load_grouping, per_cwe_mean
from .run import ProbeRunResult, run_probe_pipeline, write_probe_bundle
from .search import (
    CellResult,
    cv_auc_for_cell,
    evaluate_probe,
    final_evaluation,
    layer_grid,
    layer_profile,
    phase1_configs,
    phase1_search,
    phase2_candidates,
    phase2_refine,
)
from .split import (
    TestSplitGuard,
    derive_probe_seed,
    split_dev_test,
    stratified_folds,
    stratified_holdout_indices,
)

__all__ = [
    "TARGETS",
    "CellResult",
    "DirectoryActivationStore",
    "InMemoryActivationStore",
    "LogisticProbe",
    "MlpProbe",
    "ProbeCell",
    "ProbeCellKey",
    "ProbeConfig",
    "ProbeRunResult",
    "Standardizer",
    "SyntheticActivationStore",
    "TestSplitGuard",
    "assemble_cells",
    "cv_auc_for_cell",
    "derive_probe_seed",
    "evaluate_probe",
    "final_evaluation",
    "group_report",
    "layer_grid",
    "layer_profile",
    "load_grouping",
    "logistic_loss_and_grad",
    "per_cwe_mean",
    "phase1_configs",
    "phase1_search",
    "phase2_candidates",
    "phase2_refine",
    "run_probe_pipeline",
    "split_dev_test",
    "stratified_folds",
    "stratified_holdout_indices",
    "target_label",
    "train_logistic",
    "train_mlp",
    "train_probe",
    "write_activation_store",
    "write_probe_bundle",
]
