"""Oracle sandbox behavior, completion client, campaign bookkeeping."""

import json

import numpy as np
import httpx
import pytest

from mutaprobe.corpus import Corpus, TaskSpec
from mutaprobe.embeddings import EmbeddingTable
from mutaprobe.errors import (
    ContextOverflow,
    EndpointUnreachable,
    GenerationError,
    ModelUnknown,
)
from mutaprobe.ledger import ORIGINAL_REF, CompletionRecord, OutcomeRecord, load_completions, load_outcomes
from mutaprobe.mutate import build_plan
from mutaprobe.runner import (
    CompletionClient,
    GenerationRequest,
    SandboxPolicy,
    count_stability_anomalies,
    evaluate_campaign,
    generate_campaign,
    run_oracles,
    work_items,
)
from mutaprobe.tokenization import whitespace_tokenize


def make_task(functional="exit 0", security="exit 0", scaffold=None, prompt="sort items"):
    return TaskSpec(
        task_id="t1",
        language="py",
        cwe="CWE-89",
        prompt=prompt,
        functional_oracle=functional,
        security_oracle=security,
        scaffold=scaffold,
    )


def make_table():
    rng = np.random.default_rng(7)
    surfaces = ("sort", "items", "alpha", "beta")
    vectors = rng.normal(size=(4, 4)).astype(np.float32)
    return EmbeddingTable(surfaces=surfaces, vectors=vectors)


# -------------------------------------------------------------------- oracles


def test_oracle_exit_codes_map_to_bits():
    res = run_oracles(make_task(functional="exit 0", security="exit 1"), "whatever")
    assert res.functional is True
    assert res.secure is False
    assert not res.functional_timeout and not res.security_timeout


def test_oracle_reads_completion_file():
    task = make_task(
        functional="grep -q FUNC_OK {completion_file}",
        security="grep -q SEC_OK {completion_file}",
    )
    res = run_oracles(task, "code\n# FUNC_OK\n")
    assert res.functional is True
    assert res.secure is False


def test_oracle_workdir_exists_and_is_cwd():
    task = make_task(functional="test -d {workdir}", security="test -f completion.txt")
    res = run_oracles(task, "x")
    assert res.functional is True
    assert res.secure is True


def test_oracle_timeout_fails_and_flags():
    task = make_task(functional="sleep 5", security="exit 0")
    res = run_oracles(task, "x", SandboxPolicy(timeout_s=0.2))
    assert res.functional is False
    assert res.functional_timeout is True
    assert res.secure is True
    assert res.security_timeout is False
    assert "timeout" in res.logs["functional"]


def test_scaffold_placeholder_wraps_completion():
    task = make_task(
        functional="grep -q HEADER {completion_file} && grep -q PAYLOAD {completion_file}",
        scaffold="HEADER\n{completion}\nFOOTER",
    )
    assert run_oracles(task, "PAYLOAD").functional is True


def test_scaffold_without_placeholder_prefixes():
    task = make_task(functional='head -c 7 {completion_file} | grep -q PREFIX:', scaffold="PREFIX:")
    assert run_oracles(task, "body").functional is True


def test_oracle_failure_log_captures_output():
    task = make_task(functional="echo boom; exit 3", security="exit 0")
    res = run_oracles(task, "x")
    assert res.functional is False
    assert "exit=3" in res.logs["functional"]
    assert "boom" in res.logs["functional"]


# ------------------------------------------------------------- stub endpoint


def test_stub_client_t0_is_deterministic_and_sample_independent():
    client = CompletionClient("stub")
    req = GenerationRequest(model_id="m1", prompt="sort items", temperature=0.0, n_samples=3)
    a = client.complete(req)
    b = client.complete(req)
    assert [r.completion_text for r in a] == [r.completion_text for r in b]
    assert len({r.completion_text for r in a}) == 1  # same text for every sample


def test_stub_client_sampling_varies_by_sample_index():
    client = CompletionClient("stub")
    req = GenerationRequest(model_id="m1", prompt="sort items", temperature=0.8, n_samples=10)
    texts = [r.completion_text for r in client.complete(req)]
    assert len(set(texts)) > 1


# -------------------------------------------------------------- http client


def ok_handler(n=1):
    def handle(request):
        body = {"choices": [{"text": f"c{i}", "finish_reason": "stop"} for i in range(n)]}
        return httpx.Response(200, json=body)

    return handle


def test_http_client_parses_choices():
    client = CompletionClient("http://api.test", transport=httpx.MockTransport(ok_handler(2)), backoff_base_s=0.0)
    req = GenerationRequest(model_id="m1", prompt="p", temperature=0.8, n_samples=2)
    out = client.complete(req)
    assert [r.completion_text for r in out] == ["c0", "c1"]
    assert all(r.finish_reason == "stop" for r in out)
    assert [r.sample_index for r in out] == [0, 1]


def test_http_client_sends_wire_fields():
    seen = {}

    def handle(request):
        seen.update(json.loads(request.content))
        return httpx.Response(200, json={"choices": [{"text": "", "finish_reason": "stop"}]})

    client = CompletionClient("http://api.test", transport=httpx.MockTransport(handle), backoff_base_s=0.0)
    client.complete(GenerationRequest(model_id="m1", prompt="p", temperature=0.8, n_samples=1, request_seed=9))
    assert seen == {"model": "m1", "prompt": "p", "temperature": 0.8, "n": 1, "max_tokens": 1024, "seed": 9}


def test_http_client_404_is_model_unknown():
    transport = httpx.MockTransport(lambda request: httpx.Response(404))
    client = CompletionClient("http://api.test", transport=transport, backoff_base_s=0.0)
    with pytest.raises(ModelUnknown):
        client.complete(GenerationRequest(model_id="ghost", prompt="p", temperature=0.0, n_samples=1))


def test_http_client_413_is_context_overflow():
    transport = httpx.MockTransport(lambda request: httpx.Response(413))
    client = CompletionClient("http://api.test", transport=transport, backoff_base_s=0.0)
    with pytest.raises(ContextOverflow):
        client.complete(GenerationRequest(model_id="m1", prompt="p" * 99, temperature=0.0, n_samples=1))


def test_http_client_retries_5xx_then_succeeds():
    calls = {"n": 0}

    def handle(request):
        calls["n"] += 1
        if calls["n"] < 3:
            return httpx.Response(500)
        return httpx.Response(200, json={"choices": [{"text": "ok", "finish_reason": "stop"}]})

    client = CompletionClient("http://api.test", transport=httpx.MockTransport(handle), backoff_base_s=0.0)
    out = client.complete(GenerationRequest(model_id="m1", prompt="p", temperature=0.0, n_samples=1))
    assert out[0].completion_text == "ok"
    assert calls["n"] == 3


def test_http_client_exhausted_retries_raise_unreachable():
    calls = {"n": 0}

    def handle(request):
        calls["n"] += 1
        return httpx.Response(503)

    client = CompletionClient("http://api.test", transport=httpx.MockTransport(handle), backoff_base_s=0.0)
    with pytest.raises(EndpointUnreachable):
        client.complete(GenerationRequest(model_id="m1", prompt="p", temperature=0.0, n_samples=1))
    assert calls["n"] == 5


def test_http_client_wrong_choice_count_is_generation_error():
    transport = httpx.MockTransport(ok_handler(1))
    client = CompletionClient("http://api.test", transport=transport, backoff_base_s=0.0)
    with pytest.raises(GenerationError):
        client.complete(GenerationRequest(model_id="m1", prompt="p", temperature=0.8, n_samples=4))


# ----------------------------------------------------------------- campaigns


def campaign_inputs():
    task = make_task(
        functional="grep -q FUNC_OK {completion_file}",
        security="grep -q SEC_OK {completion_file}",
    )
    corpus = Corpus(tasks=(task,))
    table = make_table()
    vocab = {s: i for i, s in enumerate(table.surfaces)}
    view = whitespace_tokenize(task.prompt, vocab)
    plan = build_plan(view, task.task_id, table)
    # 2 tokens, every kind eligible at both: 3 kinds x 2 positions x 6 variants
    assert len(plan.records) == 36
    return corpus, {task.task_id: plan}


def test_work_items_order_models_sorted_original_first():
    corpus, plans = campaign_inputs()
    items = work_items(corpus, plans, ["zeta", "alpha"])
    refs = [(m, ref) for _, m, ref, _ in items]
    assert refs[0] == ("alpha", ORIGINAL_REF)
    assert refs[37] == ("zeta", ORIGINAL_REF)
    assert len(items) == 74
    plan_keys = [r.key for r in plans["t1"].records]
    assert [ref for m, ref in refs[1:37]] == plan_keys


def test_generate_t0_record_count_and_rerun_identical(tmp_path):
    corpus, plans = campaign_inputs()
    path = tmp_path / "completions_t0.jsonl"
    new = generate_campaign(corpus, plans, {"m1": "stub"}, temperature=0.0, n_samples=1, completions_path=path)
    assert new == 37  # original + 36 mutants, one sample each
    first = path.read_bytes()
    again = generate_campaign(corpus, plans, {"m1": "stub"}, temperature=0.0, n_samples=1, completions_path=path)
    assert again == 0
    assert path.read_bytes() == first


def test_generate_t08_record_count(tmp_path):
    corpus, plans = campaign_inputs()
    path = tmp_path / "completions_t08.jsonl"
    new = generate_campaign(
        corpus, plans, {"m1": "stub"}, temperature=0.8, n_samples=10, completions_path=path, request_seed=11
    )
    assert new == 370


def test_generate_resume_after_crash_matches_clean_run(tmp_path):
    corpus, plans = campaign_inputs()
    clean = tmp_path / "clean.jsonl"
    generate_campaign(corpus, plans, {"m1": "stub"}, temperature=0.0, n_samples=1, completions_path=clean)
    reference = clean.read_bytes()

    crashed = tmp_path / "crashed.jsonl"
    crashed.write_bytes(reference[: len(reference) * 2 // 3 + 5])  # mid-line cut
    resumed = generate_campaign(corpus, plans, {"m1": "stub"}, temperature=0.0, n_samples=1, completions_path=crashed)
    assert 0 < resumed < 37
    assert crashed.read_bytes() == reference


def test_evaluate_campaign_outcomes_and_rerun(tmp_path):
    corpus, plans = campaign_inputs()
    cpath = tmp_path / "completions.jsonl"
    opath = tmp_path / "outcomes.jsonl"
    generate_campaign(corpus, plans, {"m1": "stub"}, temperature=0.0, n_samples=1, completions_path=cpath)
    new = evaluate_campaign(corpus, cpath, opath)
    assert new == 37
    outcomes = load_outcomes(opath)
    completions = {r.key: r for r in load_completions(cpath)}
    for rec in outcomes:
        text = completions[rec.key].completion
        assert rec.functional == ("FUNC_OK" in text)
        assert rec.secure == ("SEC_OK" in text)
        assert rec.label_func == rec.functional
        assert rec.label_func_sec == (rec.functional and rec.secure)
    first = opath.read_bytes()
    assert evaluate_campaign(corpus, cpath, opath) == 0
    assert opath.read_bytes() == first
    # the stub mixes outcomes rather than passing everything
    assert 0 < sum(r.functional for r in outcomes) < len(outcomes)


def test_evaluate_parallel_matches_sequential_bytes(tmp_path):
    corpus, plans = campaign_inputs()
    cpath = tmp_path / "completions.jsonl"
    generate_campaign(corpus, plans, {"m1": "stub"}, temperature=0.0, n_samples=1, completions_path=cpath)
    seq, par = tmp_path / "seq.jsonl", tmp_path / "par.jsonl"
    assert evaluate_campaign(corpus, cpath, seq, workers=1) == 37
    assert evaluate_campaign(corpus, cpath, par, workers=8) == 37
    assert par.read_bytes() == seq.read_bytes()


def test_evaluate_writes_log_files(tmp_path):
    task = make_task(functional="echo diagnostics; exit 1", security="exit 0")
    corpus = Corpus(tasks=(task,))
    cpath = tmp_path / "completions.jsonl"
    opath = tmp_path / "outcomes.jsonl"
    logs = tmp_path / "logs"
    generate_campaign(corpus, {}, {"m1": "stub"}, temperature=0.0, n_samples=1, completions_path=cpath)
    evaluate_campaign(corpus, cpath, opath, logs_dir=logs)
    (rec,) = load_outcomes(opath)
    assert rec.functional is False
    ref = rec.oracle_logs["functional"]
    assert (logs / ref).read_text(encoding="utf-8").count("diagnostics") == 1


def test_stability_anomaly_counter():
    stable = [
        OutcomeRecord.from_bits("t1", "m1", ORIGINAL_REF, i, functional=True, secure=False) for i in range(3)
    ]
    assert count_stability_anomalies(stable) == 0
    flappy = stable + [OutcomeRecord.from_bits("t1", "m1", ORIGINAL_REF, 3, functional=False, secure=False)]
    assert count_stability_anomalies(flappy) == 1
    two_groups = flappy + [
        OutcomeRecord.from_bits("t1", "m1", "SingleChar:0:0", i, functional=True, secure=True) for i in range(2)
    ]
    assert count_stability_anomalies(two_groups) == 1
