"""Per-layer last-token hidden states, one container per prompt.

Each prompt yields a (num_blocks + 1, hidden_dim) f32 matrix: row 0 is the
embedding output, row L the residual stream after transformer block L,
captured with forward hooks so no final model norm leaks in. An index.json
maps prompt keys to container files in the layout the harness's directory
store reads.
"""

from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path

import numpy as np
import torch

from .containers import write_activation_container
from .errors import ExtractError, OutOfMemory
from .hf import load_model, load_tokenizer, transformer_blocks


def _is_oom(err: RuntimeError) -> bool:
    return isinstance(err, torch.cuda.OutOfMemoryError) or "out of memory" in str(err).lower()


def _file_name(key: str) -> str:
    return hashlib.sha256(key.encode("utf-8")).hexdigest()[:16] + ".actv"


def _forward_capture(model, blocks, ids, mask) -> list[torch.Tensor]:
    """Embedding-row plus per-block last-token states for one padded batch."""
    captured: list[torch.Tensor] = [None] * len(blocks)

    def hook(i):
        def fn(_module, _inputs, output):
            captured[i] = (output[0] if isinstance(output, tuple) else output).detach()

        return fn

    handles = [block.register_forward_hook(hook(i)) for i, block in enumerate(blocks)]
    try:
        with torch.no_grad():
            out = model(input_ids=ids, attention_mask=mask, output_hidden_states=True)
    finally:
        for h in handles:
            h.remove()
    if any(c is None for c in captured):
        raise ExtractError("a transformer block produced no output during the forward pass")
    return [out.hidden_states[0].detach(), *captured]


def extract_activations(
    model_ref: str,
    prompts: dict[str, str],
    out_dir: str | Path,
    device: str = "cpu",
    batch_size: int = 8,
) -> dict:
    """Write one activation container per prompt plus index.json; returns the index."""
    tokenizer = load_tokenizer(model_ref)
    model = load_model(model_ref, device)
    blocks = transformer_blocks(model)
    hidden_dim = int(model.config.hidden_size)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    pad_id = tokenizer.pad_token_id
    if pad_id is None:
        pad_id = tokenizer.eos_token_id if tokenizer.eos_token_id is not None else 0

    files: dict[str, str] = {}
    items = list(prompts.items())
    pos = 0
    batch = max(1, batch_size)
    while pos < len(items):
        chunk = items[pos : pos + batch]
        encoded = [tokenizer(text, add_special_tokens=False)["input_ids"] for _, text in chunk]
        if any(not ids for ids in encoded):
            empty = chunk[[not ids for ids in encoded].index(True)][0]
            raise ExtractError(f"prompt {empty!r} produced no tokens")
        width = max(len(ids) for ids in encoded)
        ids = torch.full((len(chunk), width), pad_id, dtype=torch.long, device=device)
        mask = torch.zeros((len(chunk), width), dtype=torch.long, device=device)
        for row, token_ids in enumerate(encoded):
            ids[row, : len(token_ids)] = torch.tensor(token_ids, dtype=torch.long)
            mask[row, : len(token_ids)] = 1
        try:
            layers = _forward_capture(model, blocks, ids, mask)
        except RuntimeError as e:
            if not _is_oom(e):
                raise
            if batch == 1:
                raise OutOfMemory(f"out of memory even at batch size 1: {e}") from e
            batch = max(1, batch // 2)
            continue
        last = mask.sum(dim=1) - 1
        for row, (key, _) in enumerate(chunk):
            matrix = np.stack(
                [layer[row, last[row]].to("cpu").float().numpy() for layer in layers]
            ).astype(np.float32)
            name = _file_name(key)
            write_activation_container(out_dir / name, key, matrix)
            files[key] = name
        pos += len(chunk)

    index = {"layer_count": len(blocks), "hidden_dim": hidden_dim, "files": files}
    index_path = out_dir / "index.json"
    tmp = index_path.with_name(index_path.name + ".tmp")
    tmp.write_text(json.dumps(index, ensure_ascii=False, sort_keys=True, indent=1) + "\n", encoding="utf-8")
    os.replace(tmp, index_path)
    return index
