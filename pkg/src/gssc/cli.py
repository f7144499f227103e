"""``gssc`` command line: generate, precompute, train, eval, verify, bench,
demo-separation and probe-longrange.

Data goes to files under ``--out``; progress goes to stderr.  Failures print
one line ``error: code=<Name> exit=<int> message=<text>`` and exit with the
code assigned to that error class.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from pathlib import Path

from . import errors

EXIT_CODES = {
    "ConfigParse": 2,
    "MissingInput": 3,
    "IoFailure": 4,
    "CacheMismatch": 5,
    "NonFiniteLoss": 6,
    "ResourceCapExceeded": 7,
    "VerificationFailed": 8,
    "InvalidParameter": 9,
    "SizeCapExceeded": 10,
    "ConvergenceFailure": 11,
    "ShapeMismatch": 12,
    "PartialBasis": 13,
    "SelectionNotConfigured": 14,
    "ZeroStd": 15,
    "IndexOutOfRange": 16,
    "DuplicateEdge": 17,
    "SelfLoop": 18,
    "FeatureShapeMismatch": 19,
    "NotABijection": 20,
    "TapeConsumed": 21,
    "NotScalar": 22,
    "GsscError": 30,
}

log = logging.getLogger("gssc")


class VerificationFailed(errors.GsscError):
    code = "VerificationFailed"


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration (defaults built in)")
    common.add_argument("--out", default="out", help="output directory (default: ./out)")
    common.add_argument("--seed", type=int, help="override the configured seed")
    common.add_argument("--threads", type=int, help="BLAS/OpenMP thread count (recorded in manifests)")
    common.add_argument("--quiet", action="store_true", help="no progress output on success")

    p = argparse.ArgumentParser(prog="gssc", description="Graph state space convolution toolkit")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("generate", parents=[common], help="build the counting dataset")
    pre = sub.add_parser("precompute", parents=[common], help="cache spectral bases for a dataset")
    pre.add_argument("--dataset", help="dataset JSONL (default: OUT/dataset.jsonl)")
    pre.add_argument("--solver", choices=["full", "topd"], help="override the configured solver")
    pre.add_argument("--d", type=int, help="override the number of eigenpairs")
    tr = sub.add_parser("train", parents=[common], help="train on a dataset with cached bases")
    tr.add_argument("--dataset")
    tr.add_argument("--pe", help="PE cache (default: OUT/pe_cache.npz)")
    tr.add_argument("--epochs", type=int)
    ev = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint")
    ev.add_argument("--dataset")
    ev.add_argument("--pe")
    ev.add_argument("--checkpoint", help="default: OUT/checkpoint.json")
    ve = sub.add_parser("verify", parents=[common], help="oracle and property suite")
    ve.add_argument("--quick", action="store_true", help="smaller corpora")
    be = sub.add_parser("bench", parents=[common], help="scaling benchmark")
    be.add_argument("--sizes", help="comma separated node counts (overrides config)")
    be.add_argument("--repeats", type=int)
    be.add_argument("--plot", action="store_true", help="also write bench.png (needs matplotlib)")
    sub.add_parser("demo-separation", parents=[common], help="two triangles vs hexagon")
    lr = sub.add_parser("probe-longrange", parents=[common], help="gradient vs walk counts on a path")
    lr.add_argument("--path-len", type=int, default=20)
    lr.add_argument("--max-k", type=int)
    return p


def _set_threads(n: int | None) -> int:
    if n is None:
        n = int(os.environ.get("GSSC_THREADS", "1"))
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, str(n))
    return n


def _path(arg, out: Path, default: str) -> Path:
    return Path(arg) if arg else out / default


def _load(args):
    from .config import apply_env, load_config

    cfg = apply_env(load_config(args.config))
    if args.seed is not None:
        cfg.seed = args.seed
    cfg.threads = args.threads_resolved
    return cfg


def _dataset_and_bases(args, cfg, out):
    from . import io as gio
    from .experiments import load_counting_dataset

    ds_path = _path(args.dataset, out, "dataset.jsonl")
    pe_path = _path(args.pe, out, "pe_cache.npz")
    ds = load_counting_dataset(ds_path)
    bases, header = gio.load_pe_cache(pe_path, gio.file_hash(ds_path))
    if header.get("d") != cfg.spectral.d or header.get("source_kind") != cfg.spectral.source:
        raise errors.CacheMismatch(
            f"PE cache holds d={header.get('d')} {header.get('source_kind')}, config wants "
            f"d={cfg.spectral.d} {cfg.spectral.source}"
        )
    return ds, bases, ds_path, pe_path


def cmd_generate(args, cfg, out):
    from .experiments import make_counting_dataset, save_counting_dataset

    ds = make_counting_dataset(cfg.dataset, cfg.seed)
    path = save_counting_dataset(out / "dataset.jsonl", ds)
    log.info("wrote %d graphs to %s (target std %.4f)", len(ds.samples), path, ds.meta["target_std"])
    return {"dataset": str(path), "dataset_meta": str(path) + ".meta.json"}


def cmd_precompute(args, cfg, out):
    from . import io as gio
    from .experiments import compute_bases, load_counting_dataset

    if args.solver:
        cfg.spectral.solver = args.solver
    if args.d:
        cfg.spectral.d = args.d
    ds_path = _path(args.dataset, out, "dataset.jsonl")
    ds = load_counting_dataset(ds_path)
    bases = compute_bases(ds.graphs, cfg.spectral, cfg.seed)
    path = gio.save_pe_cache(out / "pe_cache.npz", bases, gio.file_hash(ds_path),
                             {"d": cfg.spectral.d, "solver_kind": cfg.spectral.solver})
    log.info("cached %d bases (d=%d, %s) in %s", len(bases), cfg.spectral.d, cfg.spectral.source, path)
    return {"pe_cache": str(path)}


def cmd_train(args, cfg, out):
    from .experiments import train

    if args.epochs is not None:
        cfg.train.epochs = args.epochs
    ds, bases, _, _ = _dataset_and_bases(args, cfg, out)
    result = train(cfg, ds, bases, out_dir=out, log=log.info)
    log.info("best val normalized MAE %.4f at epoch %d", result.best_val, result.best_epoch)
    return {"metrics": str(out / "metrics.csv"), "checkpoint": str(out / "checkpoint.json")}


def cmd_eval(args, cfg, out):
    from . import io as gio
    from .experiments import evaluate, stack_from_checkpoint

    stack, ck_cfg = stack_from_checkpoint(_path(args.checkpoint, out, "checkpoint.json"))
    ds, bases, _, _ = _dataset_and_bases(args, ck_cfg, out)
    report = {}
    for split in ("train", "val", "test"):
        mse, nmae = evaluate(stack, ds, bases, split, ck_cfg.spectral.d)
        report[split] = {"loss": mse, "normalized_mae": nmae}
        log.info("%-5s mse %.5f normalized_mae %.5f", split, mse, nmae)
    path = gio.write_json(out / "eval.json", report)
    return {"eval": str(path)}


def cmd_verify(args, cfg, out):
    from . import io as gio
    from .experiments import verify_suite

    results = verify_suite(cfg.seed, quick=args.quick)
    path = gio.write_json(out / "verify.json", results)
    if not args.quiet:
        width = max(len(r["name"]) for r in results)
        for r in results:
            print(f"{r['name']:<{width}}  {'PASS' if r['pass'] else 'FAIL'}  max_deviation={r['max_deviation']:.3e}")
    failed = [r["name"] for r in results if not r["pass"]]
    artifacts = {"verify": str(path)}
    if failed:
        raise VerificationFailed(f"failed properties: {', '.join(failed)}", ) from None
    return artifacts


def cmd_bench(args, cfg, out):
    from . import io as gio
    from .experiments import loglog_slope, scaling_bench

    bc = cfg.bench
    if args.sizes:
        bc.sizes = [int(s) for s in args.sizes.split(",") if s]
    if args.repeats:
        bc.repeats = args.repeats
    rows = scaling_bench(bc, cfg.seed, log=log.info)
    path = gio.write_csv(out / "bench.csv", ["n", "edges", "pre_ms", "fwd_ms", "fwdbwd_ms", "peak_bytes"], rows)
    summary = {"threads": cfg.threads, "rows": len(rows)}
    if len(rows) >= 2:
        summary["fwd_slope"] = loglog_slope([r[0] for r in rows], [r[3] for r in rows])
        summary["fwdbwd_slope"] = loglog_slope([r[0] for r in rows], [r[4] for r in rows])
    artifacts = {"bench": str(path), "summary": str(gio.write_json(out / "bench.json", summary))}
    if args.plot and rows:
        artifacts["plot"] = str(_plot(rows, out / "bench.png"))
    return artifacts


def _plot(rows, path: Path) -> Path:
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError as exc:
        raise errors.MissingInput("--plot needs matplotlib (pip install 'artifact[plot]')") from exc
    ns = [r[0] for r in rows]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for col, label in ((2, "preprocess"), (3, "forward"), (4, "forward+backward")):
        ax.loglog(ns, [r[col] for r in rows], marker="o", label=label)
    ax.set_xlabel("nodes")
    ax.set_ylabel("ms")
    ax.legend()
    fig.tight_layout()
    try:
        fig.savefig(path, dpi=120)
    except OSError as exc:
        raise errors.IoFailure(f"cannot write {path}: {exc}") from exc
    finally:
        plt.close(fig)
    return path


def cmd_demo(args, cfg, out):
    from . import io as gio
    from .experiments import separation_demo

    report = separation_demo(cfg.seed)
    if not args.quiet:
        print(f"1-WL equivalent: {report['wl1_equivalent']}")
        print(f"embedding distance: {report['embedding_distance']:.6f}")
        print(f"relabel distance: {report['relabel_distance']:.2e}")
    return {"separation": str(gio.write_json(out / "separation.json", report))}


def cmd_probe(args, cfg, out):
    from . import io as gio
    from .experiments import long_range_probe

    rows = long_range_probe(args.path_len, args.max_k)
    path = gio.write_csv(out / "longrange.csv", ["v", "spd", "gradient", "walk_sum"],
                         [(r["v"], r["spd"], repr(r["gradient"]), r["walk_sum"]) for r in rows])
    if not args.quiet:
        for r in rows:
            print(f"spd={r['spd']:3d} gradient={r['gradient']:.6f} walks={r['walk_sum']}")
    return {"longrange": str(path)}


COMMANDS = {
    "generate": cmd_generate,
    "precompute": cmd_precompute,
    "train": cmd_train,
    "eval": cmd_eval,
    "verify": cmd_verify,
    "bench": cmd_bench,
    "demo-separation": cmd_demo,
    "probe-longrange": cmd_probe,
}


def run(argv=None) -> int:
    args = _parser().parse_args(argv)
    args.threads_resolved = _set_threads(args.threads)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(message)s", stream=sys.stderr, force=True)
    started = time.time()
    try:
        from . import io as gio
        from .config import config_hash

        cfg = _load(args)
        out = Path(args.out)
        artifacts = COMMANDS[args.command](args, cfg, out)
        gio.write_manifest(out, args.command, config_hash(cfg), cfg.seed, cfg.threads, artifacts, started)
    except errors.GsscError as exc:
        code = EXIT_CODES.get(exc.code, EXIT_CODES["GsscError"])
        msg = str(exc).replace("\n", " ")
        print(f"error: code={exc.code} exit={code} message={msg}", file=sys.stderr)
        return code
    return 0


def main() -> None:
    sys.exit(run())
