"""Command line surface: the three exporters plus input validation."""

import json

import pytest
from mutaprobe_extract.cli import main

from mutaprobe.embeddings import load_embedding_table
from mutaprobe.probe.cells import DirectoryActivationStore
from mutaprobe.tokenization import load_tokenizations

PROMPTS = {"t1": "ab cd", "t2": "ef w000 w001", "t3": "w002"}


def _write_prompts(path, records):
    path.write_text("".join(json.dumps(r) + "\n" for r in records), encoding="utf-8")
    return str(path)


@pytest.fixture
def prompts_file(tmp_path):
    records = [{"task_id": k, "prompt": v} for k, v in PROMPTS.items()]
    return _write_prompts(tmp_path / "prompts.jsonl", records)


def test_tokenize_command(tiny_checkpoint, prompts_file, tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["tokenize", "--model", tiny_checkpoint, "--in", prompts_file, "--out", str(out)]) == 0
    assert "wrote 3 tokenizations" in capsys.readouterr().out
    views = load_tokenizations(out / "tokenization.jsonl", PROMPTS)
    assert set(views) == set(PROMPTS)


def test_embed_command(tiny_checkpoint, tmp_path):
    out = tmp_path / "out"
    assert main(["embed", "--model", tiny_checkpoint, "--out", str(out)]) == 0
    table = load_embedding_table(out / "embeddings.actv", out / "vocab.json")
    assert len(table) == 154


def test_activations_command(tiny_checkpoint, prompts_file, tmp_path):
    out = tmp_path / "out"
    rc = main(
        ["activations", "--model", tiny_checkpoint, "--in", prompts_file, "--out", str(out),
         "--batch-size", "2"]
    )
    assert rc == 0
    store = DirectoryActivationStore(out)
    for key in PROMPTS:
        assert store.get(key).shape == (3, 8)


def test_key_alias_accepted(tiny_checkpoint, tmp_path):
    prompts = _write_prompts(tmp_path / "p.jsonl", [{"key": "alias", "prompt": "ab"}])
    out = tmp_path / "out"
    assert main(["tokenize", "--model", tiny_checkpoint, "--in", prompts, "--out", str(out)]) == 0
    assert json.loads((out / "tokenization.jsonl").read_text())["task_id"] == "alias"


@pytest.mark.parametrize(
    "records",
    [
        [{"task_id": "a"}],  # no prompt
        [{"prompt": "ab"}],  # no key
        [{"task_id": "a", "prompt": "ab"}, {"task_id": "a", "prompt": "cd"}],  # duplicate
        [{"task_id": "a", "prompt": 7}],  # non-string prompt
        [],  # empty file
    ],
)
def test_bad_prompt_files_fail(tiny_checkpoint, tmp_path, records, capsys):
    prompts = _write_prompts(tmp_path / "p.jsonl", records)
    rc = main(["tokenize", "--model", tiny_checkpoint, "--in", prompts, "--out", str(tmp_path / "o")])
    assert rc == 1
    assert "error:" in capsys.readouterr().err


def test_unparseable_line_fails(tiny_checkpoint, tmp_path, capsys):
    bad = tmp_path / "p.jsonl"
    bad.write_text('{"task_id": "a", "prompt": "ab"\n', encoding="utf-8")
    rc = main(["tokenize", "--model", tiny_checkpoint, "--in", str(bad), "--out", str(tmp_path / "o")])
    assert rc == 1
    assert "not valid JSON" in capsys.readouterr().err


def test_missing_model_fails(tmp_path, prompts_file, capsys):
    rc = main(["tokenize", "--model", str(tmp_path / "nowhere"), "--in", prompts_file,
               "--out", str(tmp_path / "o")])
    assert rc == 1
    assert "error:" in capsys.readouterr().err


def test_version_and_usage():
    with pytest.raises(SystemExit) as exit_info:
        main(["--version"])
    assert exit_info.value.code == 0
    with pytest.raises(SystemExit) as exit_info:
        main([])
    assert exit_info.value.code == 2
