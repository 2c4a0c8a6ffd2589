"""Command line entry point: tokenize / embed / activations exporters."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .activations import extract_activations
from .embeddings import export_embeddings
from .errors import ExtractError
from .tokenization import export_tokenization


def _read_prompts(path: Path) -> dict[str, str]:
    """prompts.jsonl: one {"task_id"|"key": ..., "prompt": ...} per line."""
    prompts: dict[str, str] = {}
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise ExtractError(f"cannot read {path}: {e}") from e
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as e:
            raise ExtractError(f"{path}:{lineno}: not valid JSON: {e}") from e
        if not isinstance(record, dict) or "prompt" not in record:
            raise ExtractError(f"{path}:{lineno}: expected an object with a 'prompt' field")
        key = record.get("task_id", record.get("key"))
        if not isinstance(key, str) or not key:
            raise ExtractError(f"{path}:{lineno}: expected a 'task_id' or 'key' string")
        if key in prompts:
            raise ExtractError(f"{path}:{lineno}: duplicate prompt key {key!r}")
        if not isinstance(record["prompt"], str):
            raise ExtractError(f"{path}:{lineno}: 'prompt' must be a string")
        prompts[key] = record["prompt"]
    if not prompts:
        raise ExtractError(f"{path}: no prompts found")
    return prompts


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mutaprobe-extract",
        description="Export tokenizations, embedding tables, and per-layer activations.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--model", required=True, help="checkpoint path or hub reference")
        p.add_argument("--in", dest="inputs", required=True, help="prompts.jsonl")
        p.add_argument("--out", required=True, help="output directory")

    tok = sub.add_parser("tokenize", help="token ids, byte spans, and surfaces per prompt")
    common(tok)

    emb = sub.add_parser("embed", help="input embedding matrix plus vocab surfaces")
    emb.add_argument("--model", required=True, help="checkpoint path or hub reference")
    emb.add_argument("--in", dest="inputs", default=None, help="accepted for uniformity; unused")
    emb.add_argument("--out", required=True, help="output directory")

    act = sub.add_parser("activations", help="last-token hidden state per layer per prompt")
    common(act)
    act.add_argument("--device", default="cpu", help="torch device (default: cpu)")
    act.add_argument("--batch-size", type=int, default=8, help="prompts per forward pass")

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        if args.command == "tokenize":
            prompts = _read_prompts(Path(args.inputs))
            count = export_tokenization(args.model, prompts, out_dir / "tokenization.jsonl")
            print(f"wrote {count} tokenizations to {out_dir / 'tokenization.jsonl'}")
        elif args.command == "embed":
            vocab_size, hidden_dim = export_embeddings(
                args.model, out_dir / "embeddings.actv", out_dir / "vocab.json"
            )
            print(f"wrote {vocab_size}x{hidden_dim} embedding table to {out_dir}")
        elif args.command == "activations":
            prompts = _read_prompts(Path(args.inputs))
            index = extract_activations(
                args.model,
                prompts,
                out_dir,
                device=args.device,
                batch_size=args.batch_size,
            )
            print(
                f"wrote {len(index['files'])} activation containers "
                f"({index['layer_count']} blocks, dim {index['hidden_dim']}) to {out_dir}"
            )
        else:  # pragma: no cover - argparse enforces the choices
            raise AssertionError(args.command)
    except ExtractError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
