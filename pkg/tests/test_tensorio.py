"""Binary tensor container format."""

import json
import struct

import numpy as np
import pytest

from mutaprobe.errors import ContainerFormatError
from mutaprobe.tensorio import (
    MAGIC,
    read_activations,
    read_container,
    read_embeddings,
    write_activations,
    write_embeddings,
)


def test_activations_round_trip_bit_exact(tmp_path):
    rng = np.random.Generator(np.random.PCG64(1))
    m = rng.normal(size=(4, 8)).astype("<f4")
    p = tmp_path / "a.actv"
    write_activations(p, "task|original", m)
    key, back = read_activations(p)
    assert key == "task|original"
    assert back.dtype == np.dtype("<f4")
    assert back.tobytes() == m.tobytes()


def test_embeddings_round_trip(tmp_path):
    m = np.arange(6, dtype="<f4").reshape(3, 2)
    p = tmp_path / "e.actv"
    write_embeddings(p, m)
    back = read_embeddings(p)
    assert (back == m).all()
    header, _ = read_container(p)
    assert header["vocab_size"] == 3 and header["hidden_dim"] == 2 and header["layer_count"] == 1


def test_layout_is_as_documented(tmp_path):
    m = np.ones((2, 2), dtype="<f4")
    p = tmp_path / "x.actv"
    write_activations(p, "k", m)
    raw = p.read_bytes()
    assert raw[:8] == MAGIC
    (hlen,) = struct.unpack_from("<I", raw, 8)
    header = json.loads(raw[12 : 12 + hlen])
    assert header == {
        "dtype": "f32",
        "hidden_dim": 2,
        "kind": "activations",
        "layer_count": 2,
        "prompt_key": "k",
    }
    assert raw[12 + hlen :] == m.tobytes()


def test_reader_rejects_payload_size_mismatch(tmp_path):
    p = tmp_path / "bad.actv"
    write_activations(p, "k", np.ones((2, 3), dtype="<f4"))
    p.write_bytes(p.read_bytes() + b"\x00\x00\x00\x00")
    with pytest.raises(ContainerFormatError):
        read_container(p)


def test_reader_rejects_bad_magic(tmp_path):
    p = tmp_path / "bad.actv"
    p.write_bytes(b"NOTMAGIC" + b"\x00" * 16)
    with pytest.raises(ContainerFormatError):
        read_container(p)


def test_reader_rejects_kind_mismatch(tmp_path):
    p = tmp_path / "e.actv"
    write_embeddings(p, np.ones((2, 2), dtype="<f4"))
    with pytest.raises(ContainerFormatError):
        read_activations(p)


def test_no_tmp_file_left_behind(tmp_path):
    p = tmp_path / "a.actv"
    write_activations(p, "k", np.ones((1, 1), dtype="<f4"))
    assert [f.name for f in tmp_path.iterdir()] == ["a.actv"]
