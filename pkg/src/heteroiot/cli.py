"""Command-line entry point.

Subcommands: ingest, train, evaluate, ablate, gradcheck. Every run writes a
resolved-config echo (all defaults materialized) into its output directory
before doing any work, so a run is reproducible from that file alone.

Exit codes: 0 success, 2 configuration/validation/parse error, 3 training
aborted on non-finite loss, 4 gradient check failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import data as D
from .iowa import build_iowa_asos
from .model import ModelConfig, build_model, load_model_config, save_model_config
from .snapshot import load_weights
from .train import (
    ABLATION_ORDER,
    TrainConfig,
    TrainingDiverged,
    ablation_table,
    evaluate,
    run_ablation,
    stratified_split,
    train,
    write_ablation_csv,
    write_history,
)
from .verify import LAYER_KINDS, check_tiny_model, run_all_checks

ENV_OUT_ROOT = "HETEROIOT_RUNS_ROOT"


class CliError(Exception):
    """User-facing configuration error (exit code 2)."""


def _resolve_out(args, subcommand: str) -> Path:
    if args.out:
        return Path(args.out)
    root = os.environ.get(ENV_OUT_ROOT)
    if root:
        return Path(root) / subcommand
    raise CliError(f"--out is required (or set ${ENV_OUT_ROOT})")


def _echo_config(out_dir: Path, payload: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "resolved_config.json").write_text(json.dumps(payload, indent=2, sort_keys=True))


def _load_dataset(path: str) -> D.Dataset:
    p = Path(path)
    if p.is_dir():
        return D.load_dataset(p)
    return D.load_csv(p)


# ---------------------------------------------------------------------------
# ingest
# ---------------------------------------------------------------------------


def cmd_ingest(args) -> int:
    out_dir = _resolve_out(args, "ingest")
    sources = [bool(args.synth), bool(args.csv), bool(args.iowa)]
    if sum(sources) != 1:
        raise CliError("ingest: choose exactly one of --synth, --csv FILE, --iowa")
    resolved = {
        "subcommand": "ingest",
        "synth": args.synth, "classes": args.classes, "per_class": args.per_class,
        "len": args.len, "seed": args.seed,
        "csv": args.csv, "iowa": args.iowa, "raw": args.raw,
        "window": args.window, "min_coverage": args.min_coverage,
        "impute": args.impute, "out": str(out_dir),
    }
    _echo_config(out_dir, resolved)

    if args.synth:
        ds = D.synth_benchmark(classes=args.classes, n_per_class=args.per_class,
                               t=args.len, seed=args.seed)
    elif args.csv:
        ds = D.load_csv(args.csv)
    else:
        if not args.raw:
            raise CliError("ingest --iowa requires --raw DIR")
        ds = build_iowa_asos(args.raw, window=args.window, min_coverage=args.min_coverage)

    if args.impute == "global":
        if ds.has_missing():
            ds = D.impute_mean(ds)
    elif ds.has_missing():
        print(f"note: dataset keeps {int(np.isnan(ds.sequences).sum())} missing cells",
              file=sys.stderr)

    D.save_dataset(out_dir, ds)
    manifest = json.loads((out_dir / "manifest.json").read_text())
    print(f"wrote {ds.n} samples x {ds.seq_len} steps, {ds.num_classes} classes -> {out_dir}")
    print(f"content hash: {manifest['content_hash']}")
    return 0


# ---------------------------------------------------------------------------
# train / evaluate
# ---------------------------------------------------------------------------


def _train_config(args) -> TrainConfig:
    cfg = TrainConfig(
        epochs=args.epochs, lr=args.lr, batch_size=args.batch_size,
        val_fraction=args.val_fraction, validate_on_test=args.validate_on_test,
        seed=args.seed, augment=args.augment, bsmote=args.bsmote,
    )
    if args.swiss_preset:
        cfg = replace(cfg, augment=True, bsmote=True)
    return cfg


def _prepare_splits(ds, args):
    """Imputation (global or leak-free) followed by the 70/30 split."""
    if args.impute == "global" and ds.has_missing():
        ds = D.impute_mean(ds)
    if args.normalize:
        ds = D.zscore_per_sequence(ds)
    train_part, test_part = stratified_split(ds, D.SplitSpec(seed=args.seed))
    if args.impute == "train-only" and (train_part.has_missing() or test_part.has_missing()):
        stats = D.fit_impute_stats(train_part)
        train_part = D.apply_impute(train_part, stats)
        test_part = D.apply_impute(test_part, stats)
    if train_part.has_missing() or test_part.has_missing():
        raise CliError("dataset still has missing values after imputation step")
    return train_part, test_part


def cmd_train(args) -> int:
    out_dir = _resolve_out(args, "train")
    ds = _load_dataset(args.dataset)
    train_cfg = _train_config(args)
    model_cfg = ModelConfig(
        variant=args.variant, seq_len=ds.seq_len, num_classes=ds.num_classes,
        seed=args.model_seed if args.model_seed is not None else args.seed,
    )
    if args.scale_widths > 1:
        model_cfg = model_cfg.scaled(args.scale_widths)
    resolved = {
        "subcommand": "train", "dataset": str(args.dataset),
        "impute": args.impute, "normalize": args.normalize,
        "train": asdict(train_cfg), "model": asdict(model_cfg),
        "out": str(out_dir),
    }
    _echo_config(out_dir, resolved)

    train_part, test_part = _prepare_splits(ds, args)
    model = build_model(model_cfg)
    print(f"training variant={model_cfg.variant} on {train_part.n} samples "
          f"({model.param_count()} parameters)")
    checkpoint, history = train(model, train_part, train_cfg, test_ds=test_part)
    report = evaluate(model, test_part)

    save_model_config(model_cfg, out_dir / "model_config.json")
    model.save(out_dir / "model.weights")
    write_history(out_dir / "history.csv", history)
    (out_dir / "eval_report.txt").write_text(report.to_text() + "\n")
    (out_dir / "eval_report.json").write_text(json.dumps(report.to_dict(), indent=2))
    print(f"best epoch {checkpoint.epoch} (val acc {checkpoint.val_acc:.4f})")
    print(f"test accuracy {report.accuracy:.4f}, weighted F1 {report.weighted_f1:.4f}, "
          f"macro F1 {report.macro_f1:.4f}")
    print(f"artifacts -> {out_dir}")
    return 0


def cmd_evaluate(args) -> int:
    out_dir = _resolve_out(args, "evaluate")
    run_dir = Path(args.run)
    resolved = {
        "subcommand": "evaluate", "dataset": str(args.dataset), "run": str(run_dir),
        "split": args.split, "seed": args.seed, "impute": args.impute,
        "normalize": args.normalize, "out": str(out_dir),
    }
    _echo_config(out_dir, resolved)

    ds = _load_dataset(args.dataset)
    model_cfg = load_model_config(run_dir / "model_config.json")
    model = build_model(model_cfg)
    model.load_state(load_weights(run_dir / "model.weights"))

    if args.split == "all":
        if args.impute == "global" and ds.has_missing():
            ds = D.impute_mean(ds)
        if args.normalize:
            ds = D.zscore_per_sequence(ds)
        part = ds
    else:
        train_part, test_part = _prepare_splits(ds, args)
        part = train_part if args.split == "train" else test_part

    report = evaluate(model, part)
    (out_dir / "eval_report.txt").write_text(report.to_text() + "\n")
    (out_dir / "eval_report.json").write_text(json.dumps(report.to_dict(), indent=2))
    print(report.to_text())
    return 0


# ---------------------------------------------------------------------------
# ablate
# ---------------------------------------------------------------------------


def cmd_ablate(args) -> int:
    out_dir = _resolve_out(args, "ablate")
    ds = _load_dataset(args.dataset)
    train_cfg = _train_config(args)
    base_model = ModelConfig(
        variant="full", seq_len=ds.seq_len, num_classes=ds.num_classes,
        seed=args.model_seed if args.model_seed is not None else args.seed,
    )
    if args.scale_widths > 1:
        base_model = base_model.scaled(args.scale_widths)
    resolved = {
        "subcommand": "ablate", "dataset": str(args.dataset),
        "impute": args.impute, "normalize": args.normalize,
        "train": asdict(train_cfg), "model": asdict(base_model),
        "variants": list(ABLATION_ORDER), "out": str(out_dir),
    }
    _echo_config(out_dir, resolved)

    if args.impute == "global" and ds.has_missing():
        ds = D.impute_mean(ds)
    if args.normalize:
        ds = D.zscore_per_sequence(ds)
    if ds.has_missing():
        raise CliError("ablate: dataset has missing values; use --impute global")

    rows = run_ablation(ds, base_model, train_cfg)
    table = ablation_table(rows)
    (out_dir / "ablation.txt").write_text(table + "\n")
    write_ablation_csv(out_dir / "ablation.csv", rows)
    for row in rows:
        write_history(out_dir / f"history_{row.variant}.csv", row.history)
        (out_dir / f"eval_{row.variant}.json").write_text(
            json.dumps(row.report.to_dict(), indent=2)
        )
    print(table)
    return 0


# ---------------------------------------------------------------------------
# gradcheck
# ---------------------------------------------------------------------------


def cmd_gradcheck(args) -> int:
    out_dir = _resolve_out(args, "gradcheck")
    kinds = [args.layer] if args.layer else None
    if args.layer and args.layer not in LAYER_KINDS:
        raise CliError(f"unknown layer {args.layer!r}; choose from {', '.join(LAYER_KINDS)}")
    resolved = {
        "subcommand": "gradcheck", "tol": args.tol, "instances": args.instances,
        "layer": args.layer, "skip_model": args.skip_model, "seed": args.seed,
        "out": str(out_dir),
    }
    _echo_config(out_dir, resolved)

    reports = run_all_checks(tol=args.tol, instances=args.instances, seed=args.seed,
                             kinds=kinds, include_model=not args.skip_model and not args.layer)
    lines = [r.summary() for r in reports]
    text = "\n".join(lines)
    print(text)
    (out_dir / "gradcheck.txt").write_text(text + "\n")
    failed = [r.name for r in reports if not r.ok]
    if failed:
        print(f"gradient check FAILED for: {', '.join(failed)}", file=sys.stderr)
        return 4
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _add_common_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dataset", required=True, help="dataset directory (or bare CSV)")
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--val-fraction", type=float, default=0.15)
    p.add_argument("--validate-on-test", action="store_true",
                   help="validate on the test split (weaker protocol)")
    p.add_argument("--seed", type=int, default=100, help="split/shuffle seed")
    p.add_argument("--model-seed", type=int, default=None,
                   help="weight init seed (defaults to --seed)")
    p.add_argument("--augment", action="store_true", help="jitter+scale augmentation")
    p.add_argument("--bsmote", action="store_true", help="borderline-SMOTE oversampling")
    p.add_argument("--swiss-preset", action="store_true",
                   help="enable augmentation plus B-SMOTE")
    p.add_argument("--normalize", action="store_true", help="per-sequence z-score")
    p.add_argument("--impute", choices=("global", "train-only"), default="global",
                   help="imputation timing: whole dataset (default) or train-stats only")
    p.add_argument("--scale-widths", type=int, default=1,
                   help="divide all learned widths by this factor (quick runs)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="heteroiot",
        description="Train and evaluate the combined CNN / bidirectional-GRU "
                    "classifier for heterogeneous IoT sensor sequences.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("ingest", help="build a dataset (synthetic, CSV, or ASOS archive)")
    p.add_argument("--synth", action="store_true", help="generate the synthetic benchmark")
    p.add_argument("--classes", type=int, default=8)
    p.add_argument("--per-class", type=int, default=125)
    p.add_argument("--len", type=int, default=168)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--csv", help="ingest an existing id,label,v0.. CSV file")
    p.add_argument("--iowa", action="store_true", help="build from raw ASOS archive files")
    p.add_argument("--raw", help="directory of raw per-station archive CSVs")
    p.add_argument("--window", type=int, default=168)
    p.add_argument("--min-coverage", type=float, default=0.5)
    p.add_argument("--impute", choices=("global", "none"), default="global")
    p.add_argument("--out", help="output dataset directory")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("train", help="train one variant and evaluate on the test split")
    _add_common_train_flags(p)
    p.add_argument("--variant", choices=("full", "global-only", "local-only", "mlp-only"),
                   default="full")
    p.add_argument("--out", help="run output directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="evaluate a finished run on a dataset split")
    p.add_argument("--dataset", required=True)
    p.add_argument("--run", required=True, help="directory produced by 'train'")
    p.add_argument("--split", choices=("test", "train", "all"), default="test")
    p.add_argument("--seed", type=int, default=100)
    p.add_argument("--impute", choices=("global", "train-only"), default="global")
    p.add_argument("--normalize", action="store_true")
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ablate", help="train all four variants on the identical split")
    _add_common_train_flags(p)
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("gradcheck", help="finite-difference checks for every layer kind")
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--instances", type=int, default=20)
    p.add_argument("--layer", help=f"check one kind only ({', '.join(LAYER_KINDS)})")
    p.add_argument("--skip-model", action="store_true", help="skip the tiny full-model check")
    p.add_argument("--seed", type=int, default=2024)
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except TrainingDiverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (CliError, D.DatasetFormatError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
