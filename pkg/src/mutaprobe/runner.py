"""Completion client, sandboxed oracle execution, and campaign driving.

A campaign walks (task, model, prompt, sample) work items in one canonical
order: tasks in corpus order, models sorted by id, the original prompt
before its mutants, mutants in plan order, samples ascending. Appends go
through the resumable ledgers, so an interrupted campaign continues to a
byte-identical file and a completed one is a no-op to rerun.
"""

from __future__ import annotations

import subprocess
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import httpx

from .corpus import Corpus, TaskSpec
from .errors import (
    ContextOverflow,
    EndpointUnreachable,
    GenerationError,
    ModelUnknown,
    SandboxSetupFailure,
)
from .hashing import sha256_text
from .ledger import (
    ORIGINAL_REF,
    CompletionRecord,
    JsonlLedger,
    OutcomeRecord,
)
from .mutate import MutationPlan

MAX_ATTEMPTS = 5
BACKOFF_BASE_S = 0.2


@dataclass(frozen=True)
class GenerationRequest:
    model_id: str
    prompt: str
    temperature: float
    n_samples: int
    max_new_tokens: int = 1024
    request_seed: int | None = None


@dataclass(frozen=True)
class GenerationResult:
    completion_text: str
    finish_reason: str  # stop | length | error
    latency_ms: float
    sample_index: int


@dataclass(frozen=True)
class SandboxPolicy:
    """Oracle execution limits: fresh workdir per oracle, wall-clock cap."""

    timeout_s: float = 60.0
    workdir_root: str | None = None


@dataclass(frozen=True)
class OracleResult:
    functional: bool
    secure: bool
    functional_timeout: bool = False
    security_timeout: bool = False
    logs: dict | None = None  # oracle name -> captured output text


class CompletionClient:
    """Talks the /v1/completions wire contract, or the in-process stub.

    The endpoint "stub" (or "stub:<anything>") short-circuits to the
    deterministic canned-completion generator; anything else is treated as
    a base URL. Transient transport failures are retried with bounded
    exponential backoff, MAX_ATTEMPTS total.
    """

    def __init__(
        self,
        endpoint: str,
        timeout_s: float = 60.0,
        transport: httpx.BaseTransport | None = None,
        backoff_base_s: float = BACKOFF_BASE_S,
    ):
        self.endpoint = endpoint
        self.timeout_s = timeout_s
        self.backoff_base_s = backoff_base_s
        self._transport = transport
        self._client: httpx.Client | None = None

    @property
    def is_stub(self) -> bool:
        return self.endpoint == "stub" or self.endpoint.startswith("stub:")

    def complete(self, req: GenerationRequest) -> list[GenerationResult]:
        if self.is_stub:
            from .service.stub import stub_completions

            pairs = stub_completions(
                req.model_id, req.prompt, req.temperature, req.n_samples, req.max_new_tokens, req.request_seed
            )
            return [
                GenerationResult(completion_text=t, finish_reason=fr, latency_ms=0.0, sample_index=i)
                for i, (t, fr) in enumerate(pairs)
            ]
        return self._complete_http(req)

    def _complete_http(self, req: GenerationRequest) -> list[GenerationResult]:
        if self._client is None:
            self._client = httpx.Client(
                base_url=self.endpoint, timeout=self.timeout_s, transport=self._transport
            )
        payload = {
            "model": req.model_id,
            "prompt": req.prompt,
            "temperature": req.temperature,
            "n": req.n_samples,
            "max_tokens": req.max_new_tokens,
            "seed": req.request_seed,
        }
        last_error: Exception | None = None
        for attempt in range(MAX_ATTEMPTS):
            if attempt:
                time.sleep(self.backoff_base_s * 2 ** (attempt - 1))
            started = time.monotonic()
            try:
                resp = self._client.post("/v1/completions", json=payload)
            except httpx.TransportError as e:
                last_error = e
                continue
            if resp.status_code >= 500:
                last_error = GenerationError(f"server error {resp.status_code}")
                continue
            latency_ms = (time.monotonic() - started) * 1000.0
            if resp.status_code == 404:
                raise ModelUnknown(f"model {req.model_id!r} not served at {self.endpoint}")
            if resp.status_code == 413:
                raise ContextOverflow(f"prompt too long for {req.model_id!r}")
            if resp.status_code != 200:
                raise GenerationError(f"endpoint returned {resp.status_code}: {resp.text[:200]}")
            choices = resp.json().get("choices", [])
            if len(choices) != req.n_samples:
                raise GenerationError(f"expected {req.n_samples} choices, got {len(choices)}")
            return [
                GenerationResult(
                    completion_text=c.get("text", ""),
                    finish_reason=c.get("finish_reason", "stop"),
                    latency_ms=latency_ms,
                    sample_index=i,
                )
                for i, c in enumerate(choices)
            ]
        raise EndpointUnreachable(f"{self.endpoint} failed after {MAX_ATTEMPTS} attempts: {last_error}")

    def close(self) -> None:
        if self._client is not None:
            self._client.close()
            self._client = None


def _render_completion(task: TaskSpec, completion_text: str) -> str:
    if task.scaffold is None:
        return completion_text
    if "{completion}" in task.scaffold:
        return task.scaffold.replace("{completion}", completion_text)
    return task.scaffold + completion_text


def _run_one_oracle(command_template: str, content: str, policy: SandboxPolicy) -> tuple[bool, bool, str]:
    """Returns (passed, timed_out, log_text). Exit 0 passes; anything else fails."""
    try:
        with tempfile.TemporaryDirectory(dir=policy.workdir_root) as workdir:
            completion_file = Path(workdir) / "completion.txt"
            completion_file.write_text(content, encoding="utf-8")
            command = command_template.replace("{completion_file}", str(completion_file)).replace(
                "{workdir}", workdir
            )
            try:
                proc = subprocess.run(
                    ["sh", "-c", command],
                    cwd=workdir,
                    capture_output=True,
                    timeout=policy.timeout_s,
                    text=True,
                    errors="replace",
                )
            except subprocess.TimeoutExpired as e:
                out = (e.stdout or b"").decode("utf-8", "replace") if isinstance(e.stdout, bytes) else (e.stdout or "")
                return False, True, f"timeout after {policy.timeout_s}s\n{out}"
            log = ""
            if proc.stdout or proc.stderr:
                log = f"exit={proc.returncode}\nstdout:\n{proc.stdout}stderr:\n{proc.stderr}"
            return proc.returncode == 0, False, log
    except OSError as e:
        raise SandboxSetupFailure(f"could not prepare oracle sandbox: {e}") from None


def run_oracles(task: TaskSpec, completion_text: str, policy: SandboxPolicy | None = None) -> OracleResult:
    """Run both oracles on one completion; both always run."""
    policy = policy or SandboxPolicy()
    content = _render_completion(task, completion_text)
    func_pass, func_to, func_log = _run_one_oracle(task.functional_oracle, content, policy)
    sec_pass, sec_to, sec_log = _run_one_oracle(task.security_oracle, content, policy)
    logs = {}
    if func_log:
        logs["functional"] = func_log
    if sec_log:
        logs["security"] = sec_log
    return OracleResult(
        functional=func_pass,
        secure=sec_pass,
        functional_timeout=func_to,
        security_timeout=sec_to,
        logs=logs or None,
    )


def work_items(
    corpus: Corpus, plans: dict[str, MutationPlan], model_ids: list[str]
) -> list[tuple[TaskSpec, str, str, str]]:
    """Canonical (task, model_id, prompt_ref, prompt_text) order for a campaign."""
    items = []
    for task in corpus.tasks:
        plan = plans.get(task.task_id)
        for model_id in sorted(model_ids):
            items.append((task, model_id, ORIGINAL_REF, task.prompt))
            if plan is not None:
                for rec in plan.records:
                    items.append((task, model_id, rec.key, rec.mutated_prompt))
    return items


def generate_campaign(
    corpus: Corpus,
    plans: dict[str, MutationPlan],
    models: dict[str, str],
    temperature: float,
    n_samples: int,
    completions_path: str | Path,
    max_new_tokens: int = 1024,
    request_seed: int | None = None,
    timeout_s: float = 60.0,
) -> int:
    """Fill the completions ledger; returns the number of new records."""
    clients = {mid: CompletionClient(endpoint, timeout_s) for mid, endpoint in models.items()}
    new = 0
    try:
        with JsonlLedger(completions_path, CompletionRecord) as ledger:
            for task, model_id, prompt_ref, prompt_text in work_items(corpus, plans, list(models)):
                missing = [
                    i for i in range(n_samples) if not ledger.has((task.task_id, model_id, prompt_ref, i))
                ]
                if not missing:
                    continue
                req = GenerationRequest(
                    model_id=model_id,
                    prompt=prompt_text,
                    temperature=temperature,
                    n_samples=n_samples,
                    max_new_tokens=max_new_tokens,
                    request_seed=request_seed,
                )
                try:
                    results = clients[model_id].complete(req)
                except (ContextOverflow, GenerationError):
                    # the failed cell is recorded, the campaign continues
                    results = [
                        GenerationResult(completion_text="", finish_reason="error", latency_ms=0.0, sample_index=i)
                        for i in range(n_samples)
                    ]
                for r in results:
                    if r.sample_index not in missing:
                        continue
                    ledger.append(
                        CompletionRecord(
                            task_id=task.task_id,
                            model_id=model_id,
                            prompt_ref=prompt_ref,
                            sample_index=r.sample_index,
                            completion=r.completion_text,
                            finish_reason=r.finish_reason,
                        )
                    )
                    new += 1
    finally:
        for c in clients.values():
            c.close()
    return new


def evaluate_campaign(
    corpus: Corpus,
    completions_path: str | Path,
    outcomes_path: str | Path,
    policy: SandboxPolicy | None = None,
    logs_dir: str | Path | None = None,
    workers: int = 1,
) -> int:
    """Run both oracles per completion record; returns the number of new records.

    With workers > 1 the sandboxed oracle processes run concurrently, but
    results are appended in completion-ledger order, so the outcomes file
    is byte-identical to a sequential run.
    """
    policy = policy or SandboxPolicy()
    completions = JsonlLedger(completions_path, CompletionRecord)
    completions.close()
    new = 0
    with JsonlLedger(outcomes_path, OutcomeRecord) as outcomes:
        pending = [crec for crec in completions.records if not outcomes.has(crec.key)]
        if workers > 1:
            executor = ThreadPoolExecutor(max_workers=workers)
            results = executor.map(
                lambda crec: run_oracles(corpus.by_id[crec.task_id], crec.completion, policy), pending
            )
        else:
            executor = None
            results = (run_oracles(corpus.by_id[crec.task_id], crec.completion, policy) for crec in pending)
        for crec, result in zip(pending, results):
            log_refs = None
            if result.logs and logs_dir is not None:
                log_refs = {}
                key_hash = sha256_text("|".join(map(str, crec.key)))[:24]
                for name, text in result.logs.items():
                    rel = f"{key_hash}.{name}.log"
                    target = Path(logs_dir) / rel
                    target.parent.mkdir(parents=True, exist_ok=True)
                    target.write_text(text, encoding="utf-8")
                    log_refs[name] = rel
            outcomes.append(
                OutcomeRecord.from_bits(
                    task_id=crec.task_id,
                    model_id=crec.model_id,
                    prompt_ref=crec.prompt_ref,
                    sample_index=crec.sample_index,
                    functional=result.functional,
                    secure=result.secure,
                    functional_timeout=result.functional_timeout,
                    security_timeout=result.security_timeout,
                    oracle_logs=log_refs,
                )
            )
            new += 1
        if executor is not None:
            executor.shutdown()
    return new


def count_stability_anomalies(outcomes: list[OutcomeRecord]) -> int:
    """Groups of samples for one prompt whose oracle bits disagree across samples."""
    groups: dict[tuple, set] = {}
    for rec in outcomes:
        groups.setdefault((rec.task_id, rec.model_id, rec.prompt_ref), set()).add(
            (rec.functional, rec.secure)
        )
    return sum(1 for bits in groups.values() if len(bits) > 1)
