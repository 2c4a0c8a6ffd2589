"""Grouped AUC reports and the end-to-end probe pipeline on synthetic data."""

import json
from pathlib import Path

import numpy as np
import pytest

import mutaprobe.probe.search as search
from mutaprobe.corpus import Corpus, TaskSpec
from mutaprobe.errors import InsufficientCells, UnknownCwe, ValidationError
from mutaprobe.ledger import OutcomeRecord, prompt_key
from mutaprobe.probe import (
    CellResult,
    InMemoryActivationStore,
    group_report,
    load_grouping,
    per_cwe_mean,
    run_probe_pipeline,
    write_probe_bundle,
)

FIXTURE = Path(__file__).parent / "data" / "cwe_auc_groups.json"


def result_for(cwe, target, auc, model="m"):
    return CellResult(
        key_label=f"{model}|py|{cwe}|{target}",
        model_id=model,
        language="py",
        cwe=cwe,
        target=target,
        config_label="logistic_l2@L1:C=1.0",
        n=40,
        flip_rate=0.2,
        cv_auc=auc,
        test_auc=auc,
        converged=True,
    )


def fixture_report(name, seed=0):
    data = json.loads(FIXTURE.read_text())[name]
    aucs, grouping = {}, {}
    for j, v in enumerate(data["increased"]):
        aucs[f"CWE-I{j:02d}"] = v
        grouping[f"CWE-I{j:02d}"] = "I"
    for j, v in enumerate(data["decreased"]):
        aucs[f"CWE-D{j:02d}"] = v
        grouping[f"CWE-D{j:02d}"] = "D"
    return group_report(aucs, grouping, seed=seed), data


def test_load_grouping_validates_codes(tmp_path):
    path = tmp_path / "groups.json"
    path.write_text('{"CWE-089": "I", "CWE-798": "D"}')
    assert load_grouping(path) == {"CWE-089": "I", "CWE-798": "D"}
    path.write_text('{"CWE-089": "X"}')
    with pytest.raises(ValidationError):
        load_grouping(path)


def test_per_cwe_mean_pools_cells_and_skips_dropped():
    results = [
        result_for("CWE-089", "functional", 0.8, model="m1"),
        result_for("CWE-089", "functional", 0.6, model="m2"),
        result_for("CWE-022", "functional", 0.9),
        result_for("CWE-022", "functional_and_secure", 0.1),
    ]
    dropped = CellResult(
        key_label="m|py|CWE-089|functional",
        model_id="m",
        language="py",
        cwe="CWE-089",
        target="functional",
        config_label="logistic_l2@L1:C=1.0",
        n=40,
        flip_rate=0.2,
        cv_auc=0.5,
        test_auc=None,
        converged=True,
        dropped="single_class_test",
    )
    means = per_cwe_mean(results + [dropped], "functional")
    assert means == {"CWE-022": 0.9, "CWE-089": pytest.approx(0.7)}


def test_balanced_groups_match_reference_statistics():
    report, data = fixture_report("balanced")
    groups = report["groups"]
    assert groups["InputHandling"]["n"] == 9 and groups["SecureDefaults"]["n"] == 9
    assert groups["InputHandling"]["mean"] == pytest.approx(np.mean(data["increased"]))
    assert groups["SecureDefaults"]["mean"] == pytest.approx(np.mean(data["decreased"]))
    assert report["mann_whitney"]["U"] == 68.0
    assert 0.008 <= report["mann_whitney"]["p"] <= 0.010
    assert report["mann_whitney"]["alternative"] == "InputHandling > SecureDefaults"
    assert groups["InputHandling"]["ci_half_width"] == pytest.approx(0.038, abs=0.01)
    assert groups["SecureDefaults"]["ci_half_width"] == pytest.approx(0.037, abs=0.01)


def test_imbalanced_groups_match_reference_statistics():
    report, _ = fixture_report("imbalanced")
    assert report["groups"]["InputHandling"]["n"] == 11
    assert report["groups"]["SecureDefaults"]["n"] == 8
    assert report["mann_whitney"]["U"] == 67.0
    assert 0.028 <= report["mann_whitney"]["p"] <= 0.034


def test_ungrouped_cwes_are_listed_and_excluded():
    aucs = {"CWE-089": 0.8, "CWE-999": 0.9, "CWE-022": 0.6}
    grouping = {"CWE-089": "I", "CWE-022": "D"}
    report = group_report(aucs, grouping, seed=0)
    assert report["ungrouped"] == ["CWE-999"]
    assert report["groups"]["InputHandling"]["values"] == [0.8]
    with pytest.raises(UnknownCwe):
        group_report(aucs, grouping, seed=0, strict=True)


def test_single_sided_report_omits_rank_test():
    report = group_report({"CWE-089": 0.8}, {"CWE-089": "I"}, seed=0)
    assert "mann_whitney" not in report
    assert report["groups"]["SecureDefaults"]["n"] == 0


# ------------------------------------------------------------- the pipeline


def task(task_id, cwe="CWE-089"):
    return TaskSpec(
        task_id=task_id,
        language="py",
        cwe=cwe,
        prompt="write code",
        functional_oracle="exit 0",
        security_oracle="exit 0",
    )


def synthetic_campaign(n=60, seed=0):
    """One model, one CWE, a planted linear signal at the last block."""
    rng = np.random.default_rng(seed)
    corpus = Corpus(tasks=(task("t"),))
    refs = [f"SingleChar:{i}:0" for i in range(n)]
    func = np.arange(n) % 2 == 0
    sec = np.arange(n) % 4 == 0
    outcomes = [
        OutcomeRecord.from_bits("t", "m", r, 0, functional=bool(func[i]), secure=bool(sec[i]))
        for i, r in enumerate(refs)
    ]
    mats = {}
    for i, r in enumerate(refs):
        mat = rng.normal(size=(3, 6)).astype(np.float32)
        mat[2, 0] += 3.0 if func[i] else -3.0
        mat[2, 1] += 3.0 if (func[i] and sec[i]) else -3.0
        mats[prompt_key("t", r)] = mat
    store = InMemoryActivationStore(mats, layer_count=2, hidden_dim=6)
    return outcomes, corpus, store


def test_pipeline_end_to_end_on_planted_signal(monkeypatch, tmp_path):
    monkeypatch.setattr(search, "PHASE1_HIDDEN", ((8, 4), (4, 2)))
    outcomes, corpus, store = synthetic_campaign()
    grouping = {"CWE-089": "I"}
    result = run_probe_pipeline(outcomes, corpus, store, grouping, run_seed=7)

    assert len(result.cell_results) == 2
    by_target = {r.target: r for r in result.cell_results}
    assert set(by_target) == {"functional", "functional_and_secure"}
    assert by_target["functional"].test_auc > 0.9
    assert result.dropped_cells == ()
    assert all(count == 1 for count in result.audit.values()) and len(result.audit) == 2
    assert "m" in result.winners
    assert "@L2" in result.winners["m"]["phase1"]
    assert set(result.layer_profiles["m"]) == {"logistic_l2", "mlp_2layer"}
    for target, report in result.group_reports.items():
        assert report["groups"]["InputHandling"]["n"] == 1

    rerun = run_probe_pipeline(outcomes, corpus, store, grouping, run_seed=7)
    assert rerun.cell_results == result.cell_results
    assert rerun.winners == result.winners

    out_a, out_b = tmp_path / "a", tmp_path / "b"
    write_probe_bundle(out_a, result, run_seed=7)
    write_probe_bundle(out_b, rerun, run_seed=7)
    names = {"probe_cells.csv", "probe_layers.csv", "probe_groups.json", "probe_manifest.json"}
    assert {p.name for p in out_a.iterdir()} == names
    for name in names:
        assert (out_a / name).read_bytes() == (out_b / name).read_bytes()
    cells_csv = (out_a / "probe_cells.csv").read_text().splitlines()
    assert len(cells_csv) == 3  # header plus one row per cell
    manifest = json.loads((out_a / "probe_manifest.json").read_text())
    assert manifest["run_seed"] == 7
    assert manifest["audit"] == result.audit


def test_pipeline_drops_unstratifiable_cells():
    outcomes, corpus, store = synthetic_campaign(n=20)
    # leave one positive only: admission at a permissive floor still passes,
    # but the 80/20 split cannot stratify the singleton class
    for i, rec in enumerate(outcomes):
        outcomes[i] = OutcomeRecord.from_bits(
            rec.task_id, rec.model_id, rec.prompt_ref, 0, functional=(i == 0), secure=False
        )
    result = run_probe_pipeline(
        outcomes, corpus, store, {}, run_seed=0, min_flip_rate=0.04, min_instances=10
    )
    assert result.cell_results == ()
    assert result.dropped_cells == ("m|py|CWE-089|functional",)
    assert result.group_reports == {}


def test_pipeline_requires_admissible_cells():
    outcomes, corpus, store = synthetic_campaign(n=10)
    with pytest.raises(InsufficientCells):
        run_probe_pipeline(outcomes, corpus, store, {}, run_seed=0)
