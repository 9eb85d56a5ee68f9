"""``lobcast`` command line: synth, label, train, walkforward, sweep, report.

Exit codes: 0 success, 2 invalid input or configuration, 1 internal error.
Every command writes one ``<command>_manifest.json`` into ``--out-dir``.
"""
from __future__ import annotations

import argparse
import contextlib
import hashlib
import json
import logging
import os
import sys
from dataclasses import replace

import numpy as np

from lobcast import __version__
from lobcast.errors import ConfigError, InputError
from lobcast.labeling import (
    DEFAULT_ALPHA,
    DEFAULT_K,
    DEFAULT_KEEP_FRACTION,
    LabelParams,
    build_labeled_dataset,
    class_histogram,
    save_labeled_dataset,
    stable_keep_mask,
)
from lobcast.lob_data.io import read_snapshot_csv, write_snapshot_csv
from lobcast.lob_data.synthetic import SyntheticConfig, generate_synthetic
from lobcast.tcn.checkpoint import save_checkpoint
from lobcast.training import fit
from lobcast.walkforward.metrics import ClassificationReport, ConfusionMatrix, format_table
from lobcast.walkforward.schema import validate_report
from lobcast.walkforward.study import (
    SWEEP_AXES,
    WalkForwardConfig,
    labeled_dataset_for,
    prepare_training_sets,
    run_walkforward,
    split_seeds,
    sweep,
)

logger = logging.getLogger("lobcast")


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _load_json(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return doc


def _walkforward_config(args) -> WalkForwardConfig:
    cfg = WalkForwardConfig.from_dict(_load_json(args.config)) if args.config else WalkForwardConfig()
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg


def _read_series(path, allow_empty: bool = False):
    try:
        return read_snapshot_csv(path, allow_empty=allow_empty)
    except FileNotFoundError:
        raise InputError(f"{path}: no such file") from None


class Manifest:
    """Collects what one command read and wrote; digests are content hashes."""

    def __init__(self, command: str, args, config: dict | None = None):
        self.command = command
        self.args = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
        self.config = config
        self.seed = getattr(args, "seed", None)
        self.inputs: dict[str, str] = {}
        self.artifacts: dict[str, str] = {}

    def add_input(self, path) -> None:
        if path:
            self.inputs[os.fspath(path)] = sha256_file(path)

    def add_artifact(self, path) -> None:
        self.artifacts[os.fspath(path)] = sha256_file(path)

    def write(self, out_dir) -> str:
        path = os.path.join(out_dir, f"{self.command}_manifest.json")
        doc = {"command": self.command, "arguments": self.args, "config": self.config,
               "seed": self.seed, "inputs": self.inputs, "artifacts": self.artifacts,
               "tool_version": __version__}
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return path


# -- commands ----------------------------------------------------------------------

def cmd_synth(args) -> int:
    cfg = SyntheticConfig.from_dict(_load_json(args.config)) if args.config else SyntheticConfig()
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    out = args.out or os.path.join(args.out_dir, "synthetic.csv")
    series = generate_synthetic(cfg)
    write_snapshot_csv(series, out)
    m = Manifest("synth", args, cfg.to_dict())
    m.add_input(args.config)
    m.add_artifact(out)
    m.write(args.out_dir)
    print(f"wrote {len(series)} snapshots ({cfg.days} days, depth {cfg.depth}) to {out}")
    return 0


def _print_histogram(title: str, hist: dict) -> None:
    total = sum(hist.values())
    print(f"{title}: total {total}")
    for name, count in hist.items():
        share = 100.0 * count / total if total else 0.0
        print(f"  {name:<7}{count:>10}  {share:5.1f}%")


def cmd_label(args) -> int:
    series = _read_series(args.data)
    params = LabelParams(args.k, args.alpha)
    depth = args.depth if args.depth is not None else series.depth
    ds = build_labeled_dataset(series, depth, args.window, params)
    seed = args.seed if args.seed is not None else 0
    keep = stable_keep_mask(ds.labels, args.keep_fraction, seed)
    kept = ds.subset(keep)
    prefix = args.out or os.path.join(args.out_dir, "labeled")
    paths = save_labeled_dataset(kept, prefix)
    _print_histogram("before downsampling", class_histogram(ds.labels))
    _print_histogram("after downsampling", kept.histogram())
    m = Manifest("label", args, {"k": args.k, "alpha": args.alpha, "depth": depth,
                                 "window": args.window, "keep_fraction": args.keep_fraction})
    m.add_input(args.data)
    for p in paths:
        m.add_artifact(p)
    m.write(args.out_dir)
    return 0


def cmd_train(args) -> int:
    cfg = _walkforward_config(args)
    series = _read_series(args.data)
    data = labeled_dataset_for(series, cfg)
    days = data.unique_days()
    if args.days:
        missing = sorted(set(args.days) - set(days))
        if missing:
            raise InputError(f"days {missing} have no usable samples (available: {days})")
        days = sorted(args.days)
    if not days:
        raise InputError("insufficient days: no usable day in the data")
    ds_seed, train_seed = split_seeds(cfg.seed, 0)
    train, val = prepare_training_sets(data, days, cfg.keep_fraction,
                                       cfg.train.validation_fraction, ds_seed)
    tcn_config = cfg.tcn_config()
    os.makedirs(args.out_dir, exist_ok=True)
    log_path = os.path.join(args.out_dir, "training_log.jsonl")
    with open(log_path, "w", encoding="utf-8") as log:
        result = fit(train, val, replace(cfg.train, seed=train_seed), tcn_config,
                     on_epoch=lambda s: log.write(json.dumps(s.to_dict(), sort_keys=True) + "\n"))
    ckpt = os.path.join(args.out_dir, "checkpoint.bin")
    save_checkpoint(ckpt, result.params, tcn_config)
    best = result.history[result.best_epoch - 1]
    print(f"trained on days {days}: {len(result.history)} epochs ({result.stop_reason}), "
          f"best epoch {result.best_epoch} val_loss {best.val_loss:.4f} "
          f"val_accuracy {best.val_accuracy:.4f}")
    m = Manifest("train", args, cfg.to_dict())
    m.add_input(args.data)
    m.add_input(args.config)
    for p in (log_path, ckpt, ckpt + ".json"):
        m.add_artifact(p)
    m.write(args.out_dir)
    return 0


def cmd_walkforward(args) -> int:
    cfg = _walkforward_config(args)
    series = _read_series(args.data, allow_empty=True)
    report = run_walkforward(series, cfg, args.out_dir)
    print(format_table(report.pooled_report))
    m = Manifest("walkforward", args, cfg.to_dict())
    m.add_input(args.data)
    m.add_input(args.config)
    m.add_artifact(os.path.join(args.out_dir, "report.json"))
    for res in report.splits:
        m.add_artifact(os.path.join(args.out_dir, f"split_{res.split.index:02d}", "checkpoint.bin"))
    m.write(args.out_dir)
    return 0


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def cmd_sweep(args) -> int:
    cfg = _walkforward_config(args)
    series = _read_series(args.data, allow_empty=True)
    os.makedirs(args.out_dir, exist_ok=True)
    out = args.out or os.path.join(args.out_dir, f"sweep_{args.axis}.csv")
    result = sweep(series, args.axis, args.values, cfg, out)
    for row in result.rows:
        print(f"{args.axis}={row['axis_value']}: pooled accuracy {row['pooled_accuracy']:.4f} "
              f"over {row['splits']} splits")
    m = Manifest("sweep", args, cfg.to_dict())
    m.add_input(args.data)
    m.add_input(args.config)
    m.add_artifact(out)
    m.write(args.out_dir)
    return 0


def cmd_report(args) -> int:
    try:
        doc = _load_json(args.report)
    except FileNotFoundError:
        raise InputError(f"{args.report}: no such file") from None
    import jsonschema

    try:
        validate_report(doc)
    except jsonschema.ValidationError as exc:
        raise InputError(f"{args.report}: not a valid report: {exc.message}") from None
    for split in doc["splits"] if args.splits else []:
        cm = ConfusionMatrix(np.array(split["confusion_matrix"]))
        print(f"split {split['index']}: train days {split['train_days']} -> test day "
              f"{split['test_day']}")
        print(format_table(ClassificationReport.from_confusion(cm)))
        print()
    pooled = ConfusionMatrix(np.array(doc["pooled"]["confusion_matrix"]))
    print(format_table(ClassificationReport.from_confusion(pooled)))
    m = Manifest("report", args)
    m.add_input(args.report)
    m.write(args.out_dir)
    return 0


# -- parser --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="override the configured seed")
    common.add_argument("--config", default=None, help="JSON config file")
    common.add_argument("--out-dir", default=".", help="directory for artifacts and the manifest")
    common.add_argument("--threads", type=int, default=None, help="BLAS thread limit")

    parser = argparse.ArgumentParser(prog="lobcast", description="Limit order book midprice "
                                     "movement classification with a temporal convolutional network.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic snapshot CSV")
    p.add_argument("--out", default=None, help="CSV path (default <out-dir>/synthetic.csv)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("label", parents=[common], help="label and downsample a snapshot CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--k", type=int, default=DEFAULT_K)
    p.add_argument("--alpha", type=float, default=DEFAULT_ALPHA)
    p.add_argument("--keep-fraction", type=float, default=DEFAULT_KEEP_FRACTION)
    p.add_argument("--depth", type=int, default=None, help="levels per side (default: all)")
    p.add_argument("--window", type=int, default=100)
    p.add_argument("--out", default=None, help="output prefix (default <out-dir>/labeled)")
    p.set_defaults(func=cmd_label)

    p = sub.add_parser("train", parents=[common], help="train one model on the given days")
    p.add_argument("--data", required=True)
    p.add_argument("--days", type=_int_list, default=None,
                   help="comma-separated day ids (default: every usable day)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("walkforward", parents=[common], help="run the walk-forward study")
    p.add_argument("--data", required=True)
    p.set_defaults(func=cmd_walkforward)

    p = sub.add_parser("sweep", parents=[common], help="walk-forward accuracy per axis value")
    p.add_argument("--axis", required=True, choices=SWEEP_AXES)
    p.add_argument("--values", required=True, type=_int_list)
    p.add_argument("--data", required=True)
    p.add_argument("--out", default=None, help="CSV path (default <out-dir>/sweep_<axis>.csv)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", parents=[common], help="validate and print a report JSON")
    p.add_argument("--report", required=True)
    p.add_argument("--splits", action="store_true", help="also print every split")
    p.set_defaults(func=cmd_report)
    return parser


def _thread_limit(n: int | None):
    if n is None:
        return contextlib.nullcontext()
    if n < 1:
        raise ConfigError("--threads must be >= 1")
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("LOBCAST_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    args = build_parser().parse_args(argv)
    try:
        os.makedirs(args.out_dir, exist_ok=True)
        with _thread_limit(args.threads):
            return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        logger.debug("internal error", exc_info=True)
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
