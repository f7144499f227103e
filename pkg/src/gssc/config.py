"""Run configuration: nested dataclasses loaded from JSON with strict key checks."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigParse, MissingInput


@dataclass
class GeneratorSpec:
    kind: str = "erdos_renyi"
    weight: float = 1.0
    params: dict = field(default_factory=lambda: {"p": 0.3})


@dataclass
class DatasetConfig:
    num_graphs: int = 500
    n_min: int = 10
    n_max: int = 20
    generators: list = field(default_factory=lambda: [GeneratorSpec()])
    cycle_length: int = 3


@dataclass
class SpectralConfig:
    source: str = "normalized_laplacian"
    d: int = 16
    solver: str = "full"  # "full" or "topd"
    tol: float = 1e-9


@dataclass
class ModelConfig:
    m: int = 64
    depth: int = 4
    selective: bool = False
    phi_width: int = 16
    phi_shared: bool = True
    norm: str = "layer"


@dataclass
class TrainConfig:
    epochs: int = 200
    batch_size: int = 32
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    lr_floor: float = 0.05  # cosine decay to lr * lr_floor; 1.0 keeps lr constant


@dataclass
class BenchConfig:
    sizes: list = field(default_factory=lambda: [1000, 2000, 4000, 8000, 16000, 32000])
    d: int = 32
    m: int = 64
    repeats: int = 20
    warmup: int = 2
    max_seconds: float = 600.0
    max_bytes: int = 4 * 1024 ** 3
    backward: bool = True


@dataclass
class RunConfig:
    seed: int = 0
    threads: int = 1
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    spectral: SpectralConfig = field(default_factory=SpectralConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    bench: BenchConfig = field(default_factory=BenchConfig)


_NESTED = {
    "dataset": DatasetConfig,
    "spectral": SpectralConfig,
    "model": ModelConfig,
    "train": TrainConfig,
    "bench": BenchConfig,
}


def _build(cls, data, where: str):
    if not isinstance(data, dict):
        raise ConfigParse(f"{where or 'config'} must be an object")
    known = {f.name for f in dataclasses.fields(cls)}
    extra = set(data) - known
    if extra:
        raise ConfigParse(f"unknown keys in {where or 'config'}: {sorted(extra)}")
    kwargs = {}
    for key, value in data.items():
        path = f"{where}.{key}" if where else key
        if cls is RunConfig and key in _NESTED:
            kwargs[key] = _build(_NESTED[key], value, path)
        elif cls is DatasetConfig and key == "generators":
            if not isinstance(value, list) or not value:
                raise ConfigParse(f"{path} must be a non-empty list")
            kwargs[key] = [_build(GeneratorSpec, g, f"{path}[{i}]") for i, g in enumerate(value)]
        else:
            kwargs[key] = value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigParse(f"{where or 'config'}: {exc}") from exc


def config_from_dict(data: dict) -> RunConfig:
    return _build(RunConfig, data, "")


def config_to_dict(cfg: RunConfig) -> dict:
    return dataclasses.asdict(cfg)


def load_config(path: str | os.PathLike | None) -> RunConfig:
    """Read a JSON config; ``None`` gives the defaults."""
    if path is None:
        return RunConfig()
    p = Path(path)
    if not p.is_file():
        raise MissingInput(f"config file not found: {p}")
    try:
        data = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigParse(f"{p}: {exc}") from exc
    return config_from_dict(data)


def apply_env(cfg: RunConfig, environ=None) -> RunConfig:
    """``GSSC_SEED`` and ``GSSC_THREADS`` override the file values."""
    env = os.environ if environ is None else environ
    try:
        if "GSSC_SEED" in env:
            cfg.seed = int(env["GSSC_SEED"])
        if "GSSC_THREADS" in env:
            cfg.threads = int(env["GSSC_THREADS"])
    except ValueError as exc:
        raise ConfigParse(f"bad environment override: {exc}") from exc
    return cfg


def config_hash(cfg: RunConfig) -> str:
    blob = json.dumps(config_to_dict(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]
