"""Command implementations behind the service endpoints and the CLI.

Each command reads its inputs from the configured output directory, names
any artifact it finds missing, and is idempotent for identical inputs and
seeds. Writers take an exclusive lock on the output directory so parallel
invocations against the same directory are rejected instead of interleaved.
"""

from __future__ import annotations

import json
from contextlib import contextmanager
from pathlib import Path

from filelock import FileLock, Timeout

from . import __version__
from .analysis import write_analysis_bundle
from .config import RunConfig
from .corpus import Corpus, corpus_stats, load_corpus
from .embeddings import EmbeddingTable, load_embedding_table
from .errors import MissingInputError, OutputLocked, ValidationError
from .hashing import sha256_file
from .ledger import canonical_json, load_outcomes
from .mutate import MutationPlan, build_plan, load_mutations, write_mutations
from .probe import (
    DirectoryActivationStore,
    SyntheticActivationStore,
    load_grouping,
    run_probe_pipeline,
    write_probe_bundle,
)
from .runner import SandboxPolicy, count_stability_anomalies, evaluate_campaign, generate_campaign
from .tokenization import TokenizationView, load_tokenizations, whitespace_tokenize

LOCK_NAME = ".mutaprobe.lock"


@contextmanager
def output_lock(outdir: str | Path):
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    lock = FileLock(str(outdir / LOCK_NAME))
    try:
        lock.acquire(timeout=0)
    except Timeout:
        raise OutputLocked(f"output directory {outdir} is in use by another invocation") from None
    try:
        yield
    finally:
        lock.release()


def artifact_paths(config: RunConfig) -> dict[str, Path]:
    outdir = Path(config.outdir)
    paths = {
        "mutations": outdir / "mutations.jsonl",
        "analysis_dir": outdir / "analysis",
        "probe_dir": outdir / "probe",
        "report_dir": outdir / "report",
        "oracle_logs": outdir / "oracle_logs",
    }
    for p in config.profiles:
        paths[f"completions_{p.name}"] = outdir / f"completions_{p.name}.jsonl"
        paths[f"outcomes_{p.name}"] = outdir / f"outcomes_{p.name}.jsonl"
    return paths


def _require(path: Path, what: str) -> Path:
    if not path.exists():
        raise MissingInputError(f"{what} not found at {path}")
    return path


def _corpus(config: RunConfig) -> Corpus:
    if not config.corpus:
        raise MissingInputError("no corpus path configured")
    return load_corpus(_require(Path(config.corpus), "corpus"))


def _embedding_table(config: RunConfig) -> EmbeddingTable | None:
    if not config.embeddings_container:
        return None
    return load_embedding_table(
        _require(Path(config.embeddings_container), "embedding container"),
        _require(Path(config.embeddings_vocab), "embedding vocab"),
    )


def _views(config: RunConfig, corpus: Corpus, table: EmbeddingTable | None) -> dict[str, TokenizationView]:
    """Exported tokenizations when configured, whitespace views otherwise."""
    if config.tokenizations:
        prompts = {t.task_id: t.prompt for t in corpus.tasks}
        return load_tokenizations(_require(Path(config.tokenizations), "tokenization file"), prompts)
    vocab = {s: i for i, s in enumerate(table.surfaces)} if table is not None else None
    return {t.task_id: whitespace_tokenize(t.prompt, vocab) for t in corpus.tasks}


def _token_counts(views: dict[str, TokenizationView]) -> dict[str, int]:
    return {task_id: len(view.tokens) for task_id, view in views.items()}


def cmd_ingest(config: RunConfig) -> dict:
    corpus = _corpus(config)
    views = _views(config, corpus, _embedding_table(config))
    stats = corpus_stats(corpus, _token_counts(views))
    by_language: dict[str, dict[str, int]] = {}
    for t in corpus.tasks:
        lang = by_language.setdefault(t.language, {})
        lang[t.cwe] = lang.get(t.cwe, 0) + 1
    return {
        "tasks": len(corpus.tasks),
        "cwe_counts": corpus.cwe_counts(),
        "cwe_by_language": by_language,
        "language_stats": stats,
    }


def cmd_mutate(config: RunConfig) -> dict:
    corpus = _corpus(config)
    table = _embedding_table(config)
    if "TokenReplace" in config.mutation_kinds and table is None:
        raise ValidationError("TokenReplace is enabled but no embedding table is configured")
    views = _views(config, corpus, table)
    plans = []
    by_kind: dict[str, int] = {}
    for t in corpus.tasks:
        plan = build_plan(
            views[t.task_id],
            t.task_id,
            table,
            variants_per_kind=config.variants_per_kind,
            kinds=tuple(config.mutation_kinds),
            k=config.top_k,
            skip_nonword=config.skip_nonword,
        )
        plans.append(plan)
        for rec in plan.records:
            by_kind[rec.kind] = by_kind.get(rec.kind, 0) + 1
    paths = artifact_paths(config)
    with output_lock(config.outdir):
        write_mutations(plans, paths["mutations"])
    return {
        "tasks": len(plans),
        "records": sum(len(p.records) for p in plans),
        "by_kind": dict(sorted(by_kind.items())),
        "path": str(paths["mutations"]),
    }


def _plans(config: RunConfig, corpus: Corpus) -> dict[str, MutationPlan]:
    paths = artifact_paths(config)
    records = load_mutations(_require(paths["mutations"], "mutation plan"))
    unknown = set(records) - {t.task_id for t in corpus.tasks}
    if unknown:
        raise ValidationError(f"mutation plan references unknown tasks: {sorted(unknown)}")
    return {tid: MutationPlan(task_id=tid, records=tuple(recs)) for tid, recs in records.items()}


def cmd_generate(config: RunConfig) -> dict:
    corpus = _corpus(config)
    plans = _plans(config, corpus)
    paths = artifact_paths(config)
    summary = {}
    with output_lock(config.outdir):
        for profile in config.profiles:
            new = generate_campaign(
                corpus,
                plans,
                config.models,
                temperature=profile.temperature,
                n_samples=profile.n_samples,
                completions_path=paths[f"completions_{profile.name}"],
                max_new_tokens=config.max_new_tokens,
                request_seed=config.seed,
                timeout_s=config.timeout_s,
            )
            summary[profile.name] = {"new": new}
    return {"profiles": summary}


def cmd_evaluate(config: RunConfig) -> dict:
    corpus = _corpus(config)
    paths = artifact_paths(config)
    policy = SandboxPolicy(timeout_s=config.oracle_timeout_s)
    summary = {}
    with output_lock(config.outdir):
        for profile in config.profiles:
            cpath = paths[f"completions_{profile.name}"]
            if not cpath.exists():
                raise MissingInputError(f"completions for profile {profile.name} not found at {cpath}")
            new = evaluate_campaign(
                corpus,
                cpath,
                paths[f"outcomes_{profile.name}"],
                policy=policy,
                logs_dir=paths["oracle_logs"] if config.save_oracle_logs else None,
                workers=config.eval_workers,
            )
            entry = {"new": new}
            if profile.temperature == 0.0 and profile.n_samples > 1:
                outcomes = load_outcomes(paths[f"outcomes_{profile.name}"])
                entry["stability_anomalies"] = count_stability_anomalies(outcomes)
            summary[profile.name] = entry
    return {"profiles": summary}


def cmd_analyze(config: RunConfig) -> dict:
    corpus = _corpus(config)
    views = _views(config, corpus, _embedding_table(config))
    paths = artifact_paths(config)
    main = config.main_profile
    t0_path = _require(paths[f"outcomes_{main.name}"], f"outcomes for profile {main.name}")
    sampled = config.sampled_profile
    sampled_path = None
    if sampled is not None:
        candidate = paths[f"outcomes_{sampled.name}"]
        if candidate.exists():
            sampled_path = candidate
    with output_lock(config.outdir):
        write_analysis_bundle(
            paths["analysis_dir"],
            corpus,
            t0_path,
            _token_counts(views),
            taus=config.taus,
            alpha=config.alpha,
            outcomes_sampled_path=sampled_path,
            policy=config.anomaly_policy,
            group_by=config.group_by,
            config={"seed": config.seed, "main_profile": main.name,
                    "sampled_profile": sampled.name if sampled_path else None},
        )
    files = sorted(p.name for p in paths["analysis_dir"].iterdir())
    return {"dir": str(paths["analysis_dir"]), "files": files}


def _activation_store(config: RunConfig):
    spec = config.activations
    if not spec:
        raise MissingInputError("no activation store configured for probing")
    if spec == "synthetic" or spec.startswith("synthetic:"):
        parts = spec.split(":")
        layer_count = int(parts[1]) if len(parts) > 1 else 12
        hidden_dim = int(parts[2]) if len(parts) > 2 else 64
        return SyntheticActivationStore(layer_count=layer_count, hidden_dim=hidden_dim, seed=config.seed)
    return DirectoryActivationStore(_require(Path(spec), "activation store"))


def cmd_probe(config: RunConfig) -> dict:
    corpus = _corpus(config)
    paths = artifact_paths(config)
    main = config.main_profile
    outcomes = load_outcomes(_require(paths[f"outcomes_{main.name}"], f"outcomes for profile {main.name}"))
    store = _activation_store(config)
    grouping = load_grouping(_require(Path(config.grouping), "grouping file")) if config.grouping else {}
    result = run_probe_pipeline(
        outcomes,
        corpus,
        store,
        grouping,
        run_seed=config.seed,
        min_flip_rate=config.min_flip_rate,
        min_instances=config.min_instances,
        folds=config.folds,
        dev_fraction=config.dev_fraction,
        resamples=config.resamples,
        ci_level=config.ci_level,
        policy=config.anomaly_policy,
    )
    with output_lock(config.outdir):
        write_probe_bundle(
            paths["probe_dir"],
            result,
            run_seed=config.seed,
            config={"min_flip_rate": config.min_flip_rate, "min_instances": config.min_instances,
                    "folds": config.folds, "dev_fraction": config.dev_fraction},
        )
    return {
        "dir": str(paths["probe_dir"]),
        "cells": len(result.cell_results),
        "dropped": list(result.dropped_cells),
        "winners": result.winners,
    }


def _summarize_csv(path: Path, limit: int = 200) -> list[dict]:
    import csv as _csv

    with path.open(encoding="utf-8", newline="") as fh:
        return list(_csv.DictReader(fh))[:limit]


def cmd_report(config: RunConfig) -> dict:
    paths = artifact_paths(config)
    analysis_dir = _require(paths["analysis_dir"], "analysis bundle")
    outdir = Path(config.outdir)
    sources: dict[str, str] = {}
    for base in (analysis_dir, paths["probe_dir"]):
        if not base.exists():
            continue
        for p in sorted(base.rglob("*")):
            if p.is_file():
                sources[str(p.relative_to(outdir))] = sha256_file(p)
    for profile in config.profiles:
        for stem in ("completions", "outcomes"):
            p = paths[f"{stem}_{profile.name}"]
            if p.exists():
                sources[p.name] = sha256_file(p)

    headline: dict = {}
    baseline = analysis_dir / "baseline_rates.csv"
    if baseline.exists():
        headline["baseline_rates"] = _summarize_csv(baseline)
    affected = analysis_dir / "affected_fraction.csv"
    if affected.exists():
        headline["affected_fraction"] = _summarize_csv(affected)
    groups = paths["probe_dir"] / "probe_groups.json"
    if groups.exists():
        headline["probe_groups"] = json.loads(groups.read_text(encoding="utf-8"))

    manifest = {
        "tool_version": __version__,
        "config": config.to_dict(),
        "sources": sources,
    }
    with output_lock(config.outdir):
        paths["report_dir"].mkdir(parents=True, exist_ok=True)
        (paths["report_dir"] / "manifest.json").write_text(
            canonical_json(manifest) + "\n", encoding="utf-8"
        )
        (paths["report_dir"] / "summary.json").write_text(
            canonical_json(headline) + "\n", encoding="utf-8"
        )
    return {
        "dir": str(paths["report_dir"]),
        "artifacts": len(sources),
        "files": ["manifest.json", "summary.json"],
    }


COMMANDS = {
    "ingest": cmd_ingest,
    "mutate": cmd_mutate,
    "generate": cmd_generate,
    "evaluate": cmd_evaluate,
    "analyze": cmd_analyze,
    "probe": cmd_probe,
    "report": cmd_report,
}


def run_command(name: str, config: RunConfig) -> dict:
    if name not in COMMANDS:
        raise ValidationError(f"unknown command {name!r}")
    return COMMANDS[name](config)
