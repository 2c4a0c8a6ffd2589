"""Append-only jsonl ledgers for completions and oracle outcomes.

Every record serializes as one canonical JSON line (sorted keys, compact
separators, no timestamps), so a rerun over identical inputs produces a
byte-identical file and an interrupted run resumes to the same bytes. On
open, a truncated final line (a crash artifact, never a complete record)
is trimmed; a malformed interior line is an error.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import IO

from .errors import MalformedRecord

ORIGINAL_REF = "original"


def prompt_key(task_id: str, prompt_ref: str) -> str:
    """Stable key naming one prompt text: 'task|original' or 'task|kind:ti:vi'."""
    return f"{task_id}|{prompt_ref}"


def canonical_json(obj: dict) -> str:
    return json.dumps(obj, ensure_ascii=False, sort_keys=True, separators=(",", ":"))


@dataclass(frozen=True)
class CompletionRecord:
    task_id: str
    model_id: str
    prompt_ref: str
    sample_index: int
    completion: str
    finish_reason: str

    @property
    def key(self) -> tuple:
        return (self.task_id, self.model_id, self.prompt_ref, self.sample_index)


@dataclass(frozen=True)
class OutcomeRecord:
    task_id: str
    model_id: str
    prompt_ref: str
    sample_index: int
    functional: bool
    secure: bool
    label_func: bool
    label_func_sec: bool
    functional_timeout: bool = False
    security_timeout: bool = False
    oracle_logs: dict | None = None

    def __post_init__(self):
        if self.label_func != self.functional or self.label_func_sec != (self.functional and self.secure):
            raise MalformedRecord(detail=f"labels inconsistent with oracle bits for {self.key}")

    @property
    def key(self) -> tuple:
        return (self.task_id, self.model_id, self.prompt_ref, self.sample_index)

    @classmethod
    def from_bits(
        cls,
        task_id: str,
        model_id: str,
        prompt_ref: str,
        sample_index: int,
        functional: bool,
        secure: bool,
        functional_timeout: bool = False,
        security_timeout: bool = False,
        oracle_logs: dict | None = None,
    ) -> "OutcomeRecord":
        return cls(
            task_id=task_id,
            model_id=model_id,
            prompt_ref=prompt_ref,
            sample_index=sample_index,
            functional=functional,
            secure=secure,
            label_func=functional,
            label_func_sec=functional and secure,
            functional_timeout=functional_timeout,
            security_timeout=security_timeout,
            oracle_logs=oracle_logs,
        )


class JsonlLedger:
    """Resumable append-only store of one record type."""

    def __init__(self, path: str | Path, record_cls):
        self.path = Path(path)
        self.record_cls = record_cls
        self.records: list = []
        self._keys: set = set()
        self._fh: IO | None = None
        if self.path.exists():
            self._load()

    def _load(self) -> None:
        data = self.path.read_bytes()
        lines = data.split(b"\n")
        trailing = lines.pop()  # empty for a well-terminated file
        good_bytes = len(data) - len(trailing)
        for n, line in enumerate(lines, start=1):
            if not line.strip():
                continue
            try:
                rec = self.record_cls(**json.loads(line.decode("utf-8")))
            except (json.JSONDecodeError, UnicodeDecodeError, TypeError) as e:
                raise MalformedRecord(line_number=n, detail=str(e)) from None
            self.records.append(rec)
            self._keys.add(rec.key)
        if trailing:
            # crash artifact: drop the unterminated partial line
            with self.path.open("r+b") as fh:
                fh.truncate(good_bytes)

    def has(self, key: tuple) -> bool:
        return key in self._keys

    def append(self, rec) -> None:
        if rec.key in self._keys:
            raise MalformedRecord(detail=f"duplicate ledger key {rec.key}")
        if self._fh is None:
            self._fh = self.path.open("a", encoding="utf-8", newline="\n")
        self._fh.write(canonical_json(asdict(rec)) + "\n")
        self._fh.flush()
        self.records.append(rec)
        self._keys.add(rec.key)

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def __len__(self) -> int:
        return len(self.records)


def load_outcomes(path: str | Path) -> list[OutcomeRecord]:
    ledger = JsonlLedger(path, OutcomeRecord)
    ledger.close()
    return ledger.records


def load_completions(path: str | Path) -> list[CompletionRecord]:
    ledger = JsonlLedger(path, CompletionRecord)
    ledger.close()
    return ledger.records
