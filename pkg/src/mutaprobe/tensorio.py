"""Binary container for embedding matrices and per-prompt activations.

Layout: 8-byte magic "ACTV0001", unsigned 32-bit little-endian header
length, UTF-8 JSON header, then row-major little-endian float32 payload.
Activation payloads are layer-major: row L is the last-token hidden state
after transformer block L (row 0 is the embedding output). The reader
rejects any size mismatch, so a truncated or padded file never parses.
"""

from __future__ import annotations

import json
import os
import struct
from pathlib import Path

import numpy as np

from .errors import ContainerFormatError

MAGIC = b"ACTV0001"


def _write_container(path: str | Path, header: dict, matrix: np.ndarray) -> None:
    matrix = np.ascontiguousarray(matrix, dtype="<f4")
    if matrix.ndim != 2:
        raise ContainerFormatError(f"payload must be 2-D, got shape {matrix.shape}")
    header_bytes = json.dumps(header, ensure_ascii=False, sort_keys=True).encode("utf-8")
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with tmp.open("wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(header_bytes)))
        fh.write(header_bytes)
        fh.write(matrix.tobytes())
    os.replace(tmp, path)


def read_container(path: str | Path) -> tuple[dict, np.ndarray]:
    data = Path(path).read_bytes()
    if len(data) < len(MAGIC) + 4 or data[: len(MAGIC)] != MAGIC:
        raise ContainerFormatError(f"{path}: bad magic")
    (header_len,) = struct.unpack_from("<I", data, len(MAGIC))
    header_start = len(MAGIC) + 4
    if header_start + header_len > len(data):
        raise ContainerFormatError(f"{path}: truncated header")
    try:
        header = json.loads(data[header_start : header_start + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ContainerFormatError(f"{path}: unreadable header: {e}") from None
    if header.get("dtype") != "f32":
        raise ContainerFormatError(f"{path}: unsupported dtype {header.get('dtype')!r}")
    kind = header.get("kind")
    if kind == "activations":
        rows, cols = header.get("layer_count"), header.get("hidden_dim")
    elif kind == "embeddings":
        rows, cols = header.get("vocab_size"), header.get("hidden_dim")
    else:
        raise ContainerFormatError(f"{path}: unknown kind {kind!r}")
    if not isinstance(rows, int) or not isinstance(cols, int) or rows < 1 or cols < 1:
        raise ContainerFormatError(f"{path}: bad dimensions {rows!r}x{cols!r}")
    payload = data[header_start + header_len :]
    if len(payload) != rows * cols * 4:
        raise ContainerFormatError(
            f"{path}: payload is {len(payload)} bytes, header implies {rows * cols * 4}"
        )
    matrix = np.frombuffer(payload, dtype="<f4").reshape(rows, cols)
    return header, matrix


def write_activations(path: str | Path, prompt_key: str, matrix: np.ndarray) -> None:
    """matrix rows are layers 0..layer_count-1, columns the hidden dimension."""
    header = {
        "kind": "activations",
        "prompt_key": prompt_key,
        "layer_count": int(matrix.shape[0]),
        "hidden_dim": int(matrix.shape[1]),
        "dtype": "f32",
    }
    _write_container(path, header, matrix)


def read_activations(path: str | Path) -> tuple[str, np.ndarray]:
    header, matrix = read_container(path)
    if header["kind"] != "activations":
        raise ContainerFormatError(f"{path}: expected activations, got {header['kind']!r}")
    return header["prompt_key"], matrix


def write_embeddings(path: str | Path, matrix: np.ndarray) -> None:
    header = {
        "kind": "embeddings",
        "vocab_size": int(matrix.shape[0]),
        "layer_count": 1,
        "hidden_dim": int(matrix.shape[1]),
        "dtype": "f32",
    }
    _write_container(path, header, matrix)


def read_embeddings(path: str | Path) -> np.ndarray:
    header, matrix = read_container(path)
    if header["kind"] != "embeddings":
        raise ContainerFormatError(f"{path}: expected embeddings, got {header['kind']!r}")
    return matrix
