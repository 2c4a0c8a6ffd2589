"""Tokenization views over prompts.

A view pairs a prompt with its token sequence: ids, byte spans over the
UTF-8 encoding of the prompt, and surface strings. Views are exported by
the activation/embedding extraction tooling in a line-delimited JSON
format; a whitespace tokenizer ships here so the whole pipeline can run
without any model artifact.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .errors import MalformedRecord


@dataclass(frozen=True)
class Token:
    token_id: int
    start: int  # byte offset, inclusive
    end: int  # byte offset, exclusive
    surface: str


@dataclass(frozen=True)
class TokenizationView:
    prompt_text: str
    tokens: tuple[Token, ...]

    def __post_init__(self):
        data = self.prompt_text.encode("utf-8")
        prev_end = 0
        for i, tok in enumerate(self.tokens):
            if tok.start < prev_end or tok.end < tok.start or tok.end > len(data):
                raise MalformedRecord(detail=f"token {i} span [{tok.start},{tok.end}) out of order")
            if data[tok.start : tok.end] != tok.surface.encode("utf-8"):
                raise MalformedRecord(detail=f"token {i} surface does not match its span")
            prev_end = tok.end

    def __len__(self) -> int:
        return len(self.tokens)


def whitespace_tokenize(prompt_text: str, vocab: dict[str, int] | None = None) -> TokenizationView:
    """Split on whitespace; ids come from ``vocab`` or enumerate first-seen surfaces."""
    data = prompt_text.encode("utf-8")
    tokens: list[Token] = []
    local_vocab: dict[str, int] = {}
    start = None
    for i in range(len(data) + 1):
        at_ws = i == len(data) or bytes([data[i]]).isspace()
        if start is None and not at_ws:
            start = i
        elif start is not None and at_ws:
            surface = data[start:i].decode("utf-8")
            if vocab is not None:
                token_id = vocab.get(surface, -1)
            else:
                token_id = local_vocab.setdefault(surface, len(local_vocab))
            tokens.append(Token(token_id=token_id, start=start, end=i, surface=surface))
            start = None
    return TokenizationView(prompt_text=prompt_text, tokens=tuple(tokens))


def write_tokenizations(views: dict[str, TokenizationView], path: str | Path) -> None:
    """One line per task: {"task_id", "token_ids", "spans", "surfaces"}."""
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for task_id in views:
            v = views[task_id]
            fh.write(
                json.dumps(
                    {
                        "task_id": task_id,
                        "token_ids": [t.token_id for t in v.tokens],
                        "spans": [[t.start, t.end] for t in v.tokens],
                        "surfaces": [t.surface for t in v.tokens],
                    },
                    ensure_ascii=False,
                    sort_keys=True,
                )
                + "\n"
            )


def load_tokenizations(path: str | Path, prompts: dict[str, str]) -> dict[str, TokenizationView]:
    """Read the tokenization file and bind each record to its prompt text.

    prompts maps task_id to prompt; a record for an unknown task or with
    spans that do not reconstruct the prompt is rejected.
    """
    views: dict[str, TokenizationView] = {}
    with Path(path).open(encoding="utf-8") as fh:
        for line_number, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise MalformedRecord(line_number=line_number, detail=str(e)) from None
            task_id = obj.get("task_id")
            if task_id not in prompts:
                raise MalformedRecord(line_number=line_number, detail=f"unknown task_id {task_id!r}")
            ids, spans, surfaces = obj.get("token_ids"), obj.get("spans"), obj.get("surfaces")
            if ids is None or spans is None or surfaces is None:
                raise MalformedRecord(line_number=line_number, detail="missing token arrays")
            if not (len(ids) == len(spans) == len(surfaces)):
                raise MalformedRecord(line_number=line_number, detail="token arrays disagree in length")
            try:
                views[task_id] = TokenizationView(
                    prompt_text=prompts[task_id],
                    tokens=tuple(
                        Token(token_id=i, start=s[0], end=s[1], surface=surf)
                        for i, s, surf in zip(ids, spans, surfaces)
                    ),
                )
            except MalformedRecord as e:
                raise MalformedRecord(line_number=line_number, detail=e.detail) from None
    return views
