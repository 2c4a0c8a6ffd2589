"""Binary tensor containers in the harness's on-disk format.

Layout: 8-byte magic "ACTV0001", unsigned 32-bit little-endian header
length, UTF-8 JSON header, row-major little-endian float32 payload
(activations layer-major: row 0 is the embedding output, row L the output
of transformer block L). This is an independent writer for that format;
the harness's reader is the compatibility oracle in the test suite. Writes
go through a temp file and an atomic rename.
"""

from __future__ import annotations

import json
import os
import struct
from pathlib import Path

import numpy as np

from .errors import ContainerFormatError

MAGIC = b"ACTV0001"

# Recorded in every activation header: rows are the last-token residual
# stream after each transformer block, before any final model norm.
LAYER_SEMANTICS = "row0=embedding_output; rowL=post_block_L_residual_pre_final_norm"


def _as_matrix(matrix: np.ndarray) -> np.ndarray:
    matrix = np.ascontiguousarray(matrix, dtype="<f4")
    if matrix.ndim != 2:
        raise ContainerFormatError(f"payload must be 2-D, got shape {matrix.shape}")
    return matrix


def write_container(path: str | Path, header: dict, matrix: np.ndarray) -> None:
    matrix = _as_matrix(matrix)
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
    """Reader for self-verification; rejects any size or magic mismatch."""
    data = Path(path).read_bytes()
    if len(data) < len(MAGIC) + 4 or data[: len(MAGIC)] != MAGIC:
        raise ContainerFormatError(f"{path}: bad magic")
    (header_len,) = struct.unpack_from("<I", data, len(MAGIC))
    start = len(MAGIC) + 4
    if start + header_len > len(data):
        raise ContainerFormatError(f"{path}: truncated header")
    try:
        header = json.loads(data[start : start + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ContainerFormatError(f"{path}: unreadable header: {e}") from None
    if header.get("dtype") != "f32":
        raise ContainerFormatError(f"{path}: unsupported dtype {header.get('dtype')!r}")
    if header.get("kind") not in ("activations", "embeddings"):
        raise ContainerFormatError(f"{path}: unknown kind {header.get('kind')!r}")
    rows = header.get("layer_count") if header["kind"] == "activations" else header.get("vocab_size")
    cols = header.get("hidden_dim")
    if not isinstance(rows, int) or not isinstance(cols, int) or rows < 1 or cols < 1:
        raise ContainerFormatError(f"{path}: bad dims {rows!r}x{cols!r}")
    payload = data[start + header_len :]
    if len(payload) != rows * cols * 4:
        raise ContainerFormatError(f"{path}: payload is {len(payload)} bytes, header implies {rows * cols * 4}")
    return header, np.frombuffer(payload, dtype="<f4").reshape(rows, cols)


def write_embedding_container(path: str | Path, matrix: np.ndarray) -> None:
    matrix = _as_matrix(matrix)
    header = {
        "kind": "embeddings",
        "vocab_size": int(matrix.shape[0]),
        "layer_count": 1,
        "hidden_dim": int(matrix.shape[1]),
        "dtype": "f32",
    }
    write_container(path, header, matrix)


def write_activation_container(path: str | Path, prompt_key: str, matrix: np.ndarray) -> None:
    """matrix has layer_count rows: embedding output plus one per block."""
    matrix = _as_matrix(matrix)
    header = {
        "kind": "activations",
        "prompt_key": prompt_key,
        "layer_count": int(matrix.shape[0]),
        "hidden_dim": int(matrix.shape[1]),
        "dtype": "f32",
        "layer_semantics": LAYER_SEMANTICS,
    }
    write_container(path, header, matrix)
