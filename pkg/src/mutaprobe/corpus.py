"""Benchmark task set: loading, validation, and addressing.

A corpus is a line-delimited JSON file, one task per line. Every task
carries its own oracle command templates; the harness never embeds test
logic. Tasks are immutable after load and safe to share across threads.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .errors import DuplicateTaskId, MalformedRecord, MissingField, MissingTokenization

LANGUAGES = ("c", "cpp", "go", "js", "py")

_REQUIRED_FIELDS = ("task_id", "language", "cwe", "prompt", "functional_oracle", "security_oracle")


@dataclass(frozen=True)
class TaskSpec:
    """One benchmark task.

    Oracle commands are shell templates with {completion_file} and {workdir}
    placeholders. ``scaffold``, when present, is wrapped around the completion
    before oracle execution; its {completion} placeholder marks the insertion
    point.
    """

    task_id: str
    language: str
    cwe: str
    prompt: str
    functional_oracle: str
    security_oracle: str
    scaffold: str | None = None

    def __post_init__(self):
        if self.language not in LANGUAGES:
            raise MalformedRecord(detail=f"unknown language {self.language!r}")
        if not self.prompt:
            raise MalformedRecord(detail="empty prompt")
        if not self.task_id:
            raise MalformedRecord(detail="empty task_id")


@dataclass(frozen=True)
class Corpus:
    tasks: tuple[TaskSpec, ...]
    by_id: dict[str, TaskSpec] = field(repr=False, default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "by_id", {t.task_id: t for t in self.tasks})

    def cwe_counts(self) -> dict[str, int]:
        """Distinct CWE count per language."""
        seen: dict[str, set[str]] = {}
        for t in self.tasks:
            seen.setdefault(t.language, set()).add(t.cwe)
        return {lang: len(cwes) for lang, cwes in sorted(seen.items())}


def _task_from_obj(obj: dict, line_number: int) -> TaskSpec:
    for name in _REQUIRED_FIELDS:
        if name not in obj:
            raise MissingField(field=name, line_number=line_number)
    try:
        return TaskSpec(
            task_id=obj["task_id"],
            language=obj["language"],
            cwe=obj["cwe"],
            prompt=obj["prompt"],
            functional_oracle=obj["functional_oracle"],
            security_oracle=obj["security_oracle"],
            scaffold=obj.get("scaffold"),
        )
    except MalformedRecord as e:
        raise MalformedRecord(line_number=line_number, detail=e.detail) from None


def load_corpus(path: str | Path) -> Corpus:
    """Load tasks in file order; duplicate task_id is rejected."""
    path = Path(path)
    tasks: list[TaskSpec] = []
    seen: dict[str, int] = {}
    with path.open(encoding="utf-8") as fh:
        for line_number, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise MalformedRecord(line_number=line_number, detail=str(e)) from None
            if not isinstance(obj, dict):
                raise MalformedRecord(line_number=line_number, detail="record is not an object")
            task = _task_from_obj(obj, line_number)
            if task.task_id in seen:
                raise DuplicateTaskId(task_id=task.task_id, line_number=line_number)
            seen[task.task_id] = line_number
            tasks.append(task)
    return Corpus(tasks=tuple(tasks))


def write_corpus(corpus: Corpus, path: str | Path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for t in corpus.tasks:
            fh.write(
                json.dumps(
                    {
                        "task_id": t.task_id,
                        "language": t.language,
                        "cwe": t.cwe,
                        "prompt": t.prompt,
                        "functional_oracle": t.functional_oracle,
                        "security_oracle": t.security_oracle,
                        "scaffold": t.scaffold,
                    },
                    ensure_ascii=False,
                    sort_keys=True,
                )
                + "\n"
            )


def round_half_up(x: float) -> int:
    return math.floor(x + 0.5)


def corpus_stats(corpus: Corpus, token_counts: dict[str, int]) -> dict[str, dict]:
    """Per-language mean token count.

    token_counts maps task_id to its token count under one fixed tokenizer.
    Raw means are retained; display values use round-half-up.
    """
    per_lang: dict[str, list[int]] = {}
    for t in corpus.tasks:
        if t.task_id not in token_counts:
            raise MissingTokenization(task_id=t.task_id)
        per_lang.setdefault(t.language, []).append(token_counts[t.task_id])
    out = {}
    for lang, counts in sorted(per_lang.items()):
        raw = sum(counts) / len(counts)
        out[lang] = {"mean_tokens_raw": raw, "mean_tokens_display": round_half_up(raw), "n_tasks": len(counts)}
    return out
