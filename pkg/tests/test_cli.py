import json

import pytest

from gssc.cli import EXIT_CODES, run


@pytest.fixture
def tiny_config(tmp_path):
    cfg = {
        "seed": 2,
        "dataset": {"num_graphs": 10, "n_min": 5, "n_max": 7},
        "spectral": {"source": "adjacency", "d": 7},
        "model": {"m": 6, "depth": 1},
        "train": {"epochs": 2, "batch_size": 4},
        "bench": {"sizes": [100, 200], "d": 4, "m": 4, "repeats": 2, "warmup": 0},
    }
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    return str(path)


def test_pipeline(tmp_path, tiny_config, capsys):
    out = str(tmp_path / "out")
    common = ["--config", tiny_config, "--out", out, "--quiet"]
    assert run(["generate", *common]) == 0
    assert run(["precompute", *common]) == 0
    assert run(["train", *common]) == 0
    assert run(["eval", *common]) == 0
    report = json.loads((tmp_path / "out" / "eval.json").read_text())
    assert set(report) == {"train", "val", "test"}
    manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
    assert manifest["command"] == "eval" and manifest["seed"] == 2


def test_cache_mismatch_exit_code(tmp_path, tiny_config, capsys):
    out = str(tmp_path / "out")
    common = ["--config", tiny_config, "--out", out, "--quiet"]
    run(["generate", *common])
    run(["precompute", *common])
    run(["generate", *common, "--seed", "99"])
    assert run(["train", *common]) == EXIT_CODES["CacheMismatch"]
    assert "error: code=CacheMismatch" in capsys.readouterr().err


def test_missing_input_exit_code(tmp_path, capsys):
    assert run(["train", "--out", str(tmp_path)]) == EXIT_CODES["MissingInput"]
    assert run(["train", "--config", str(tmp_path / "none.json")]) == EXIT_CODES["MissingInput"]


def test_bench_and_probe(tmp_path, tiny_config, capsys):
    out = tmp_path / "o"
    assert run(["bench", "--config", tiny_config, "--out", str(out), "--quiet"]) == 0
    header = (out / "bench.csv").read_text().splitlines()[0]
    assert header == "n,edges,pre_ms,fwd_ms,fwdbwd_ms,peak_bytes"
    assert run(["probe-longrange", "--out", str(out), "--path-len", "6"]) == 0
    assert "spd=" in capsys.readouterr().out
    assert run(["demo-separation", "--out", str(out)]) == 0


def test_verify_quick(tmp_path, capsys):
    assert run(["verify", "--quick", "--out", str(tmp_path)]) == 0
    assert "PASS" in capsys.readouterr().out
