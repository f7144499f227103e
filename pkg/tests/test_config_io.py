import json

import numpy as np
import pytest

from gssc import io as gio
from gssc.config import RunConfig, apply_env, config_from_dict, config_hash, config_to_dict, load_config
from gssc.errors import CacheMismatch, ConfigParse, MissingInput
from gssc.graph import adjacency, build_graph, generate
from gssc.spectral import eig_full


def test_config_roundtrip_and_hash():
    cfg = RunConfig(seed=5)
    again = config_from_dict(json.loads(json.dumps(config_to_dict(cfg))))
    assert again == cfg and config_hash(again) == config_hash(cfg)
    cfg.model.m = 32
    assert config_hash(cfg) != config_hash(again)


def test_unknown_keys_rejected():
    with pytest.raises(ConfigParse):
        config_from_dict({"model": {"width": 3}})
    with pytest.raises(ConfigParse):
        config_from_dict({"dataset": {"generators": []}})


def test_load_config_errors(tmp_path):
    with pytest.raises(MissingInput):
        load_config(tmp_path / "nope.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    with pytest.raises(ConfigParse):
        load_config(bad)


def test_shipped_config_loads():
    from pathlib import Path

    cfg = load_config(Path(__file__).resolve().parents[1] / "configs" / "default.json")
    assert cfg.spectral.source == "adjacency" and cfg.spectral.d == 20


def test_env_overrides():
    cfg = apply_env(RunConfig(), {"GSSC_SEED": "9", "GSSC_THREADS": "2"})
    assert (cfg.seed, cfg.threads) == (9, 2)
    with pytest.raises(ConfigParse):
        apply_env(RunConfig(), {"GSSC_SEED": "x"})


def test_graph_roundtrip(tmp_path):
    g = build_graph(4, [(0, 1), (2, 3)], node_features=np.arange(4.0), edge_features=np.ones((2, 2)))
    h = gio.load_graph(gio.save_graph(tmp_path / "g.json", g))
    assert np.array_equal(h.edges, g.edges)
    assert np.array_equal(h.node_features, g.node_features)
    assert np.array_equal(h.edge_features, g.edge_features)


def test_dataset_roundtrip(tmp_path):
    samples = [(generate("cycle", n=4), np.ones(4)), (generate("path", n=3), np.zeros(3))]
    splits = {"train": np.array([0]), "val": np.array([1]), "test": np.array([], dtype=int)}
    path = gio.save_dataset(tmp_path / "d.jsonl", samples, splits, {"target_std": 1.0})
    back, sp, meta = gio.load_dataset(path)
    assert len(back) == 2 and meta["target_std"] == 1.0
    assert sp["val"].tolist() == [1]


def test_pe_cache_hash_check(tmp_path):
    ds = tmp_path / "d.jsonl"
    ds.write_text("x\n")
    bases = [eig_full(adjacency(generate("cycle", n=5)))]
    path = gio.save_pe_cache(tmp_path / "pe.npz", bases, gio.file_hash(ds), {"d": 5})
    back, header = gio.load_pe_cache(path, gio.file_hash(ds))
    assert np.array_equal(back[0].eigenvectors, bases[0].eigenvectors) and header["d"] == 5
    ds.write_text("y\n")
    with pytest.raises(CacheMismatch):
        gio.load_pe_cache(path, gio.file_hash(ds))


def test_checkpoint_roundtrip(tmp_path):
    arrays = {"a": np.arange(6.0).reshape(2, 3)}
    path = gio.save_checkpoint(tmp_path / "c.json", arrays, {"seed": 1}, {"note": "x"})
    back, cfg, extra = gio.load_checkpoint(path)
    assert np.array_equal(back["a"], arrays["a"]) and cfg == {"seed": 1} and extra == {"note": "x"}


def test_missing_file():
    with pytest.raises(MissingInput):
        gio.file_hash("/nonexistent/file")
