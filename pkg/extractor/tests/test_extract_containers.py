"""Container format: self round trips plus bit-exact reads through the harness."""

import numpy as np
import pytest
from mutaprobe_extract.containers import (
    MAGIC,
    read_container,
    write_activation_container,
    write_embedding_container,
)
from mutaprobe_extract.errors import ExtractError

from mutaprobe import tensorio


def test_activation_container_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    matrix = rng.normal(size=(3, 8)).astype(np.float32)
    path = tmp_path / "a.actv"
    write_activation_container(path, "task-1", matrix)

    header, got = read_container(path)
    assert header["kind"] == "activations"
    assert header["prompt_key"] == "task-1"
    assert header["layer_count"] == 3
    assert header["hidden_dim"] == 8
    assert header["dtype"] == "f32"
    assert "layer_semantics" in header
    assert got.tobytes() == matrix.tobytes()


def test_harness_reader_sees_identical_bytes(tmp_path):
    rng = np.random.default_rng(1)
    matrix = rng.normal(size=(4, 6)).astype(np.float32)
    path = tmp_path / "b.actv"
    write_activation_container(path, "k", matrix)

    theirs_header, theirs = tensorio.read_container(path)
    ours_header, ours = read_container(path)
    assert theirs_header == ours_header
    assert theirs.tobytes() == ours.tobytes() == matrix.tobytes()

    key, again = tensorio.read_activations(path)
    assert key == "k"
    assert again.tobytes() == matrix.tobytes()


def test_embedding_container_toy_dims(tmp_path):
    matrix = np.arange(6, dtype=np.float32).reshape(3, 2)
    path = tmp_path / "e.actv"
    write_embedding_container(path, matrix)

    header, got = read_container(path)
    assert header["kind"] == "embeddings"
    assert header["vocab_size"] == 3
    assert header["hidden_dim"] == 2
    assert header["layer_count"] == 1
    assert got.tobytes() == matrix.tobytes()
    assert tensorio.read_embeddings(path).tobytes() == matrix.tobytes()


def test_payload_cast_to_f32(tmp_path):
    matrix = np.array([[0.1, 0.2], [0.3, 0.4]], dtype=np.float64)
    path = tmp_path / "c.actv"
    write_embedding_container(path, matrix)
    _, got = read_container(path)
    assert got.dtype == np.float32
    assert got.tobytes() == matrix.astype(np.float32).tobytes()


def test_truncated_and_padded_files_rejected(tmp_path):
    matrix = np.ones((2, 2), dtype=np.float32)
    path = tmp_path / "d.actv"
    write_activation_container(path, "k", matrix)
    raw = path.read_bytes()

    short = tmp_path / "short.actv"
    short.write_bytes(raw[:-4])
    long = tmp_path / "long.actv"
    long.write_bytes(raw + b"\x00\x00\x00\x00")
    for bad in (short, long):
        with pytest.raises(ExtractError):
            read_container(bad)
        with pytest.raises(Exception):
            tensorio.read_container(bad)


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "bad.actv"
    path.write_bytes(b"NOTMAGIC" + b"\x00" * 16)
    assert not path.read_bytes().startswith(MAGIC)
    with pytest.raises(ExtractError):
        read_container(path)


def test_non_matrix_payload_rejected(tmp_path):
    with pytest.raises(ExtractError):
        write_activation_container(tmp_path / "x.actv", "k", np.ones(4, dtype=np.float32))


def test_no_temp_files_left_behind(tmp_path):
    write_activation_container(tmp_path / "t.actv", "k", np.ones((1, 1), dtype=np.float32))
    write_embedding_container(tmp_path / "u.actv", np.ones((1, 1), dtype=np.float32))
    assert sorted(p.name for p in tmp_path.iterdir()) == ["t.actv", "u.actv"]
