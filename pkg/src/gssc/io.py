"""File formats: graphs and datasets as JSON / JSON lines, the positional
encoding cache (npz keyed by dataset hash), JSON checkpoints, CSV tables and
run manifests.  Every writer goes through a temp file and an atomic rename.
"""

from __future__ import annotations

import csv
import hashlib
import io as _io
import json
import os
import platform
import tempfile
import time
from pathlib import Path

import numpy as np

from .errors import CacheMismatch, ConfigParse, IoFailure, MissingInput
from .graph import Graph, build_graph
from .spectral import SpectralBasis

FORMAT_VERSION = 1


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def atomic_write(path: str | os.PathLike, data: bytes | str) -> Path:
    p = Path(path)
    if isinstance(data, str):
        data = data.encode()
    try:
        p.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=p.parent, prefix=f".{p.name}.")
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, p)
    except OSError as exc:
        raise IoFailure(f"cannot write {p}: {exc}") from exc
    return p


def _read_text(path) -> str:
    p = Path(path)
    if not p.is_file():
        raise MissingInput(f"file not found: {p}")
    try:
        return p.read_text()
    except OSError as exc:
        raise IoFailure(f"cannot read {p}: {exc}") from exc


def file_hash(path) -> str:
    p = Path(path)
    if not p.is_file():
        raise MissingInput(f"file not found: {p}")
    return hashlib.sha256(p.read_bytes()).hexdigest()


# ---------------------------------------------------------------- graphs


def graph_to_dict(g: Graph) -> dict:
    out = {"n": int(g.n), "edges": g.edges.tolist()}
    if g.node_features is not None:
        out["node_features"] = np.asarray(g.node_features).tolist()
    if g.edge_features is not None:
        out["edge_features"] = np.asarray(g.edge_features).tolist()
    return out


def graph_from_dict(obj: dict) -> Graph:
    try:
        edges = obj.get("edges", [])
        nf = obj.get("node_features")
        ef = obj.get("edge_features")
        return build_graph(
            int(obj["n"]),
            np.asarray(edges, dtype=np.int64).reshape(-1, 2),
            None if nf is None else np.asarray(nf, dtype=np.float64),
            None if ef is None else np.asarray(ef, dtype=np.float64),
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ValueError) and hasattr(exc, "code"):
            raise
        raise ConfigParse(f"malformed graph record: {exc}") from exc


def save_graph(path, g: Graph) -> Path:
    return atomic_write(path, _dumps(graph_to_dict(g)) + "\n")


def load_graph(path) -> Graph:
    try:
        return graph_from_dict(json.loads(_read_text(path)))
    except json.JSONDecodeError as exc:
        raise ConfigParse(f"{path}: {exc}") from exc


# ---------------------------------------------------------------- datasets


def dataset_lines(samples, splits: dict[str, np.ndarray]) -> str:
    split_of = {}
    for name, idx in splits.items():
        for i in idx:
            split_of[int(i)] = name
    lines = []
    for i, (g, y) in enumerate(samples):
        rec = graph_to_dict(g)
        rec["targets"] = np.asarray(y).tolist()
        rec["split"] = split_of.get(i, "")
        lines.append(_dumps(rec))
    return "\n".join(lines) + ("\n" if lines else "")


def save_dataset(path, samples, splits, meta: dict) -> Path:
    """JSON lines (one sample per line) plus a ``.meta.json`` sidecar."""
    p = atomic_write(path, dataset_lines(samples, splits))
    atomic_write(str(p) + ".meta.json", _dumps(meta) + "\n")
    return p


def load_dataset(path):
    """Returns ``(samples, splits, meta)``."""
    text = _read_text(path)
    meta_path = Path(str(path) + ".meta.json")
    meta = json.loads(meta_path.read_text()) if meta_path.is_file() else {}
    samples, names = [], []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ConfigParse(f"{path}:{lineno}: {exc}") from exc
        samples.append((graph_from_dict(rec), np.asarray(rec.get("targets", []), dtype=np.float64)))
        names.append(rec.get("split", ""))
    names = np.asarray(names)
    splits = {s: np.flatnonzero(names == s) for s in ("train", "val", "test")}
    return samples, splits, meta


# ---------------------------------------------------------------- PE cache


def save_pe_cache(path, bases: list[SpectralBasis], dataset_hash: str, info: dict) -> Path:
    arrays = {}
    for i, b in enumerate(bases):
        arrays[f"vals_{i}"] = b.eigenvalues
        arrays[f"vecs_{i}"] = b.eigenvectors
    header = {
        "version": FORMAT_VERSION,
        "dataset_hash": dataset_hash,
        "count": len(bases),
        "source_kind": bases[0].source_kind if bases else "",
        "full": [bool(b.full) for b in bases],
        "solver": [b.meta for b in bases],
        **info,
    }
    arrays["header"] = np.frombuffer(_dumps(header).encode(), dtype=np.uint8)
    buf = _io.BytesIO()
    np.savez_compressed(buf, **arrays)
    return atomic_write(path, buf.getvalue())


def load_pe_cache(path, expected_hash: str | None = None):
    """Returns ``(bases, header)``; a dataset-hash mismatch is a hard error."""
    p = Path(path)
    if not p.is_file():
        raise MissingInput(f"PE cache not found: {p}")
    try:
        with np.load(p) as data:
            header = json.loads(bytes(data["header"]).decode())
            if expected_hash is not None and header.get("dataset_hash") != expected_hash:
                raise CacheMismatch(
                    f"PE cache {p} was built for dataset {header.get('dataset_hash')}, "
                    f"not {expected_hash}"
                )
            bases = [
                SpectralBasis(
                    data[f"vals_{i}"], data[f"vecs_{i}"], header["source_kind"],
                    header["full"][i], None, header["solver"][i],
                )
                for i in range(header["count"])
            ]
    except (OSError, KeyError, ValueError) as exc:
        if isinstance(exc, CacheMismatch):
            raise
        raise IoFailure(f"cannot read PE cache {p}: {exc}") from exc
    return bases, header


# ---------------------------------------------------------------- checkpoints


def save_checkpoint(path, arrays: dict[str, np.ndarray], config: dict, extra: dict | None = None) -> Path:
    doc = {
        "version": FORMAT_VERSION,
        "config": config,
        "extra": extra or {},
        "params": {k: {"shape": list(v.shape), "data": np.asarray(v).ravel().tolist()} for k, v in arrays.items()},
    }
    return atomic_write(path, json.dumps(doc, sort_keys=True) + "\n")


def load_checkpoint(path):
    """Returns ``(arrays, config, extra)``."""
    try:
        doc = json.loads(_read_text(path))
    except json.JSONDecodeError as exc:
        raise ConfigParse(f"{path}: {exc}") from exc
    if doc.get("version") != FORMAT_VERSION:
        raise ConfigParse(f"{path}: unsupported checkpoint version {doc.get('version')}")
    arrays = {k: np.asarray(v["data"], dtype=np.float64).reshape(v["shape"]) for k, v in doc["params"].items()}
    return arrays, doc["config"], doc.get("extra", {})


# ---------------------------------------------------------------- tables


def write_csv(path, header: list[str], rows) -> Path:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow(row)
    return atomic_write(path, buf.getvalue())


def write_json(path, obj) -> Path:
    return atomic_write(path, json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"not JSON serializable: {type(x).__name__}")


def write_manifest(out_dir, command: str, cfg_hash: str, seed: int, threads: int,
                   artifacts: dict[str, str], started: float) -> Path:
    from importlib import metadata

    from . import kernels

    try:
        version = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        version = "unknown"
    manifest = {
        "command": command,
        "config_hash": cfg_hash,
        "seed": seed,
        "threads": threads,
        "started": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(started)),
        "finished": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "versions": {
            "package": version,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "kernel_backend": kernels.BACKEND,
        },
        "artifacts": {k: {"path": v, "sha256": file_hash(v)} for k, v in artifacts.items()},
    }
    return write_json(Path(out_dir) / "manifest.json", manifest)
