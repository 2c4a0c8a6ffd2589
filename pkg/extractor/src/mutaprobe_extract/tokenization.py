"""Export model tokenizations in the harness's tokenization file format.

One JSON line per prompt: {"task_id", "token_ids", "spans", "surfaces"}.
Spans are byte offsets into the UTF-8 prompt; surfaces are the exact byte
slices. Every record is verified to reconstruct the prompt before it is
written.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

from .errors import SpanReconstructionMismatch, TokenizerLoadFailure
from .hf import load_tokenizer


def _byte_spans(prompt: str, char_offsets: list[tuple[int, int]]) -> list[tuple[int, int]]:
    # cumulative byte position of every char boundary
    boundaries = [0]
    for ch in prompt:
        boundaries.append(boundaries[-1] + len(ch.encode("utf-8")))
    return [(boundaries[a], boundaries[b]) for a, b in char_offsets]


def tokenize_prompt(tokenizer, prompt: str) -> dict:
    """Token ids, byte spans, and surfaces for one prompt, span-verified."""
    enc = tokenizer(prompt, return_offsets_mapping=True, add_special_tokens=False)
    ids = list(enc["input_ids"])
    spans = _byte_spans(prompt, list(enc["offset_mapping"]))
    data = prompt.encode("utf-8")
    surfaces = []
    cursor = 0
    rebuilt = bytearray()
    for (start, end), token_id in zip(spans, ids):
        if start < cursor or end < start or end > len(data):
            raise SpanReconstructionMismatch(f"span [{start},{end}) out of order in {prompt!r}")
        rebuilt += data[cursor:start]
        surface = data[start:end]
        rebuilt += surface
        surfaces.append(surface.decode("utf-8"))
        cursor = end
    rebuilt += data[cursor:]
    if bytes(rebuilt) != data:
        raise SpanReconstructionMismatch(f"spans do not reconstruct prompt {prompt!r}")
    return {"token_ids": ids, "spans": [[s, e] for s, e in spans], "surfaces": surfaces}


def export_tokenization(model_ref: str, prompts: dict[str, str], out_path: str | Path) -> int:
    """Write one tokenization record per prompt; returns the record count."""
    tokenizer = load_tokenizer(model_ref)
    if not hasattr(tokenizer, "is_fast") or not tokenizer.is_fast:
        raise TokenizerLoadFailure(f"{model_ref!r} has no fast tokenizer (offset mappings required)")
    out_path = Path(out_path)
    tmp = out_path.with_name(out_path.name + ".tmp")
    with tmp.open("w", encoding="utf-8", newline="\n") as fh:
        for task_id, prompt in prompts.items():
            record = {"task_id": task_id, **tokenize_prompt(tokenizer, prompt)}
            fh.write(json.dumps(record, ensure_ascii=False, sort_keys=True) + "\n")
    os.replace(tmp, out_path)
    return len(prompts)
