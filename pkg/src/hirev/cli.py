"""Command-line entry point: dataset generation, training, evaluation,
ablation, gradient verification, and report pretty-printing.

Exit codes: 0 success, 2 configuration/usage error, 3 data error,
4 verification failure. Diagnostics go to stderr; one run at a time per
output directory (guarded by a lock file).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path

from filelock import FileLock

from .checks import TOLERANCE, run_grad_suite
from .config import (
    RunConfig,
    config_to_dict,
    desk_config,
    load_config,
    paper_scale_config,
    save_config,
)
from .data import augment_dataset, generate_synthetic, load_dataset, save_dataset, split_dataset
from .errors import (
    CorruptManifest,
    DatasetIOError,
    EmptyDataset,
    HirevError,
    InvalidConfig,
    InvalidCounts,
    LabelOutOfRange,
    TooFewSamples,
    UnknownKind,
)
from .hierarchy import (
    evaluate_flat,
    evaluate_hierarchical,
    hierarchical_report,
    init_flat,
    init_hierarchical,
)
from .metrics import emit_report, parse_report
from .params import named_tensors, replace_tensors
from .serialize import load_checkpoint, save_checkpoint
from .train import TrainConfig, fit

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_CHECK = 4

_CONFIG_ERRORS = (InvalidConfig, UnknownKind)
_DATA_ERRORS = (DatasetIOError, CorruptManifest, InvalidCounts, TooFewSamples,
                EmptyDataset, LabelOutOfRange)


def _fail(message: str, code: int) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def _lock(path: Path) -> FileLock:
    path.parent.mkdir(parents=True, exist_ok=True)
    return FileLock(str(path) + ".lock")


def _write_trace(result, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["epoch", "split", "loss", "accuracy"])
        for row in result.trace:
            writer.writerow([row.epoch, row.split, f"{row.loss:.6f}",
                             f"{row.accuracy:.4f}"])


def _train_config(cfg: RunConfig, mode: str) -> TrainConfig:
    return replace(cfg.train, mode=mode, seed=cfg.seed)


def _save_record(record, directory: Path, cfg: RunConfig) -> None:
    save_checkpoint(directory, named_tensors(record), config_to_dict(cfg), cfg.seed)


def _load_record(template, directory: Path):
    tensors, _header = load_checkpoint(directory)
    return replace_tensors(template, tensors)


def cmd_gen_config(args) -> int:
    cfg = paper_scale_config() if args.paper_scale else desk_config()
    if args.out:
        save_config(cfg, args.out)
        print(f"wrote {args.out}")
    else:
        print(json.dumps(config_to_dict(cfg), indent=2, sort_keys=True))
    return EXIT_OK


def cmd_gen_data(args) -> int:
    cfg = load_config(args.config)
    out = Path(args.out) if args.out else Path(cfg.output_dir) / "pack"
    with _lock(out):
        ds = generate_synthetic(cfg.dataset.n_classes, cfg.dataset.per_score,
                                cfg.dataset.image_size, cfg.dataset.seed,
                                cfg.dataset.channels)
        if cfg.dataset.augment_per_raw > 0:
            ds = augment_dataset(ds, cfg.dataset.augment_per_raw)
        save_dataset(ds, out)
    raw = sum(1 for s in ds.samples if s.origin == "raw")
    print(f"wrote {out}: {raw} raw + {len(ds) - raw} augmented = {len(ds)} samples")
    return EXIT_OK


def _build_hierarchical(cfg: RunConfig, n_classes: int):
    return init_hierarchical(cfg.model, n_classes, cfg.dataset.image_size,
                             cfg.dataset.channels, cfg.seed)


def _build_flat(cfg: RunConfig):
    return init_flat(cfg.model, cfg.dataset.image_size, cfg.dataset.channels, cfg.seed)


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    dataset = load_dataset(args.data)
    ckpt = Path(args.out) if args.out else Path(cfg.output_dir) / "ckpt"
    train_set, _val = split_dataset(dataset, seed=cfg.seed)
    target = args.target
    with _lock(ckpt):
        if target == "flat":
            flat = _build_flat(cfg)
            result = fit(flat, train_set, _train_config(cfg, "flat"))
            _save_record(flat.fx, ckpt / "flat_fx", cfg)
            _save_record(flat.lower, ckpt / "flat", cfg)
            _write_trace(result, ckpt / "flat" / "trace.csv")
        else:
            model = _build_hierarchical(cfg, dataset.config.n_classes)
            if target.startswith("lower:") and (ckpt / "fx" / "header.json").exists():
                # continue fine-tuning the shared extractor across invocations
                model.shared_fx = _load_record(model.shared_fx, ckpt / "fx")
            result = fit(model, train_set, _train_config(cfg, target))
            if target == "higher":
                _save_record(model.higher, ckpt / "higher", cfg)
                _write_trace(result, ckpt / "higher" / "trace.csv")
            else:
                i = int(target.split(":", 1)[1])
                _save_record(model.lowers[i], ckpt / f"lower_{i:02d}", cfg)
                _save_record(model.shared_fx, ckpt / "fx", cfg)
                _write_trace(result, ckpt / f"lower_{i:02d}" / "trace.csv")
    final = result.trace[-1]
    print(f"trained {target}: {len(result.trace)} epochs, "
          f"loss {final.loss:.4f}, accuracy {final.accuracy:.4f} -> {ckpt}")
    return EXIT_OK


def _load_hierarchical(cfg: RunConfig, n_classes: int, ckpt: Path):
    model = _build_hierarchical(cfg, n_classes)
    model.higher = _load_record(model.higher, ckpt / "higher")
    model.shared_fx = _load_record(model.shared_fx, ckpt / "fx")
    for i in range(n_classes):
        model.lowers[i] = _load_record(model.lowers[i], ckpt / f"lower_{i:02d}")
    return model


def cmd_eval(args) -> int:
    cfg = load_config(args.config)
    dataset = load_dataset(args.data)
    ckpt = Path(args.ckpt_dir)
    out = Path(args.out) if args.out else Path(cfg.output_dir) / "report"
    _train, val = split_dataset(dataset, seed=cfg.seed)
    model = _load_hierarchical(cfg, dataset.config.n_classes, ckpt)
    records = evaluate_hierarchical(model, val)

    flat_records = None
    if (ckpt / "flat" / "header.json").exists():
        flat = _build_flat(cfg)
        flat.fx = _load_record(flat.fx, ckpt / "flat_fx")
        flat.lower = _load_record(flat.lower, ckpt / "flat")
        flat_records = evaluate_flat(flat, val)

    report = hierarchical_report(records, cfg.metrics.gamma, flat_records)
    with _lock(out):
        emit_report(report, out, "json")
        emit_report(report, out, "csv")
    print(f"evaluated {len(val)} samples -> {out}")
    print(f"  top1 {report.top1:.4f}  mean score acc {report.mean_accuracy:.4f}  "
          f"overall {report.overall_empirical:.4f}")
    return EXIT_OK


def cmd_ablate(args) -> int:
    cfg = load_config(args.config)
    dataset = load_dataset(args.data)
    out = Path(args.out) if args.out else Path(cfg.output_dir) / "ablation"
    train_set, val = split_dataset(dataset, seed=cfg.seed)
    n = dataset.config.n_classes

    with _lock(out):
        model = _build_hierarchical(cfg, n)
        traces = {"higher": fit(model, train_set, _train_config(cfg, "higher"))}
        for i in range(n):
            traces[f"lower:{i}"] = fit(model, train_set, _train_config(cfg, f"lower:{i}"))
        flat = _build_flat(cfg)
        traces["flat"] = fit(flat, train_set, _train_config(cfg, "flat"))

        records = evaluate_hierarchical(model, val)
        flat_records = evaluate_flat(flat, val)
        report = hierarchical_report(records, cfg.metrics.gamma, flat_records)
        emit_report(report, out, "json")
        emit_report(report, out, "csv")
        for name, result in traces.items():
            _write_trace(result, out / "traces" / (name.replace(":", "_") + ".csv"))

    print("ablation on %d validation samples:" % len(val))
    print(f"  hierarchical end-to-end accuracy: {report.overall_empirical:.4f}")
    print(f"  flat single-level accuracy:       {report.flat_accuracy:.4f}")
    if report.improvement_vs_flat is not None:
        print(f"  improvement ratio:                {report.improvement_vs_flat:.4f}")
    return EXIT_OK


def cmd_grad_check(args) -> int:
    results = run_grad_suite(range(args.seeds))
    failures = [r for r in results if not r.passed]
    for r in results:
        status = "ok" if r.passed else "FAIL"
        print(f"{status:4s} seed={r.seed} {r.name:28s} max_rel_err={r.error:.3e}")
    print(f"{len(results) - len(failures)}/{len(results)} checks passed "
          f"(tolerance {TOLERANCE:g})")
    return EXIT_OK if not failures else EXIT_CHECK


def cmd_report(args) -> int:
    doc = parse_report(args.inp)
    width = max(len(k) for k in doc) if doc else 0
    for key in sorted(doc):
        value = doc[key]
        if key == "per_class" and isinstance(value, list):
            print("per_class:")
            print(f"  {'class':>5s} {'count':>5s} {'acc':>8s} {'relaxed':>8s}")
            for row in value:
                acc = "-" if row["accuracy"] is None else f"{row['accuracy']:.4f}"
                rel = "-" if row["relaxed_accuracy"] is None else f"{row['relaxed_accuracy']:.4f}"
                print(f"  {row['class']:>5d} {row['count']:>5d} {acc:>8s} {rel:>8s}")
        else:
            print(f"{key:<{width}s} : {value}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hirev",
        description="Hierarchical visual review scoring: generate data, train, "
                    "evaluate, ablate, verify gradients.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-config", help="emit a full-default run config")
    p.add_argument("--out", help="write here instead of stdout")
    p.add_argument("--paper-scale", action="store_true",
                   help="published operating point instead of desk scale")
    p.set_defaults(func=cmd_gen_config)

    p = sub.add_parser("gen-data", help="generate a dataset pack")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="pack directory (default <output_dir>/pack)")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train one target on a pack")
    p.add_argument("--config", required=True)
    p.add_argument("--data", required=True, help="dataset pack directory")
    p.add_argument("--target", required=True,
                   help="higher | lower:<i> | flat")
    p.add_argument("--out", help="checkpoint directory (default <output_dir>/ckpt)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate checkpoints on the validation split")
    p.add_argument("--config", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--ckpt-dir", required=True)
    p.add_argument("--out", help="report directory (default <output_dir>/report)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="train and compare hierarchical vs flat")
    p.add_argument("--config", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", help="report directory (default <output_dir>/ablation)")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("grad-check", help="run the finite-difference suite")
    p.add_argument("--seeds", type=int, default=5, help="number of seeds")
    p.set_defaults(func=cmd_grad_check)

    p = sub.add_parser("report", help="pretty-print an emitted report")
    p.add_argument("--in", dest="inp", required=True, help="report directory")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors, 0 on --help
        return int(exc.code) if exc.code else EXIT_OK
    try:
        return args.func(args)
    except _CONFIG_ERRORS as exc:
        return _fail(str(exc), EXIT_CONFIG)
    except _DATA_ERRORS as exc:
        return _fail(str(exc), EXIT_DATA)
    except HirevError as exc:
        return _fail(str(exc), EXIT_CONFIG)


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
