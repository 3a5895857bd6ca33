"""Command-line entry point: synth, validate, train, predict, evaluate, sweep.

Exit codes: 0 success, 1 usage/config error, 2 data/schema error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import _backend
from .dataset import read_dataset, validate_dataset, write_dataset
from .errors import ConfigError, DataError, ScoutError
from .evaluate import binarize, parse_grid, sweep, write_report, write_sweep_csv
from .labeling import class_distribution, label_dataset
from .pipeline import (
    SplitConfig,
    evaluate_model,
    fit_stacked,
    load_stacked,
    pipeline_config_from_json,
    predict_many,
    save_stacked,
    split_dataset,
)
from .synth import SynthConfig, generate

log = logging.getLogger("scoutstack")

DEFAULT_GRID = "0:0.4:0.005"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------- config


def default_config() -> dict:
    return {
        "synth": SynthConfig().to_json(),
        "split": {"train_fraction": 0.9, "seed": 0, "stratified": True},
        "pipeline": pipeline_config_from_json({}).to_json(),
        "alpha_grid": DEFAULT_GRID,
        "keep_predictions": False,
    }


def _merge(base: dict, over: dict, where: str = "config") -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if k not in out:
            raise ConfigError(f"unknown key {where}.{k}")
        if isinstance(out[k], dict) and isinstance(v, dict) and k not in ("class_weights",):
            out[k] = _merge(out[k], v, f"{where}.{k}")
        else:
            out[k] = v
    return out


def resolve_config(path, args) -> dict:
    """Built-in defaults, then the config file, then command-line flags."""
    cfg = default_config()
    if path:
        try:
            with open(path, encoding="utf-8") as fh:
                cfg = _merge(cfg, json.load(fh))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    flags = vars(args)
    if flags.get("seed") is not None:
        cfg["synth"]["seed"] = cfg["split"]["seed"] = cfg["pipeline"]["seed"] = flags["seed"]
    pipe, syn = cfg["pipeline"], cfg["synth"]
    for flag, key in (("feature_mode", "feature_mode"), ("folds", "folds"), ("meta_scope", "meta_scope"),
                      ("min_minutes", "min_minutes"), ("min_position_records", "min_position_records")):
        if flags.get(flag) is not None:
            pipe[key] = flags[flag]
    if flags.get("epochs") is not None:
        pipe["base_train"]["epochs"] = pipe["meta_train"]["epochs"] = flags["epochs"]
    if flags.get("train_fraction") is not None:
        cfg["split"]["train_fraction"] = flags["train_fraction"]
    if flags.get("grid") is not None:
        cfg["alpha_grid"] = flags["grid"]
    if flags.get("keep_predictions"):
        cfg["keep_predictions"] = True
    for flag in ("n_records", "signal_strength"):
        if flags.get(flag) is not None:
            syn[flag] = flags[flag]
    if flags.get("no_complementary"):
        syn["complementary_errors"] = False
    for key in ("base_train", "meta_train"):
        pipe[key]["loss"]["class_weights"] = None
    return cfg


def _pipeline_cfg(cfg: dict, jobs: int = 1):
    pipe = copy.deepcopy(cfg["pipeline"])
    for key in ("base_train", "meta_train"):
        pipe[key]["loss"].pop("kind", None)
        pipe[key]["loss"].pop("class_weights", None)
    return pipeline_config_from_json({**pipe, "jobs": jobs})


def _split_cfg(cfg: dict) -> SplitConfig:
    try:
        return SplitConfig(**cfg["split"])
    except TypeError as exc:
        raise ConfigError(f"bad split config: {exc}") from None


def _need(path, what):
    if not Path(path).exists():
        raise ConfigError(f"{what} {path} does not exist")


def _load_labeled(path):
    _need(path, "data file")
    return label_dataset(read_dataset(path))


def _check_feature_mode(model, args, cfg=None):
    wanted = getattr(args, "feature_mode", None)
    if wanted is None and cfg is not None and getattr(args, "config", None):
        wanted = cfg["pipeline"]["feature_mode"]
    if wanted is not None and wanted != model.feature_mode:
        raise DataError(f"feature-mode mismatch: model was trained with {model.feature_mode!r}, "
                        f"run requested {wanted!r}")


# ---------------------------------------------------------------- commands


def cmd_synth(args) -> int:
    cfg = resolve_config(args.config, args)
    try:
        scfg = SynthConfig(**cfg["synth"])
    except TypeError as exc:
        raise ConfigError(f"bad synth config: {exc}") from None
    d = generate(scfg)
    write_dataset(d, args.out)
    dist = class_distribution(d)
    print(f"wrote {len(d)} records to {args.out}")
    print("class counts: " + ", ".join(f"{k:g}={v}" for k, v in dist.counts.items()))
    return 0


def cmd_validate(args) -> int:
    _need(args.data, "data file")
    d = read_dataset(args.data, validate=False)
    violations = validate_dataset(d)
    for v in violations:
        print(v)
    print(f"{len(d)} records, {len(violations)} violation(s)")
    return 0 if not violations else 2


def cmd_train(args) -> int:
    cfg = resolve_config(args.config, args)
    data = _load_labeled(args.data)
    train, test = split_dataset(data, _split_cfg(cfg))
    pcfg = _pipeline_cfg(cfg, args.jobs)
    print(f"backend={_backend.BACKEND} train={len(train)} test={len(test)}")
    model = fit_stacked(train, pcfg)
    model.config = {"run": cfg, "data": str(args.data)}
    save_stacked(model, args.out)
    rows = [("global", model.global_model)]
    rows += [(f"position:{p.value}", m) for p, m in model.by_position.items()]
    rows += [(f"meta:{k}", m) for k, m in model.meta.items()]
    for name, m in rows:
        tc = m.train_config
        print(f"{name:<22} records={tc['records']:<6} final_loss={tc['final_loss']:.6f}")
    for s in model.skipped:
        print(f"skipped {s['position']} ({s['records']} records)")
    print(f"wrote {args.out}")
    return 0


def cmd_predict(args) -> int:
    _need(args.model, "model file")
    _need(args.data, "data file")
    model = load_stacked(args.model)
    _check_feature_mode(model, args)
    d = read_dataset(args.data)
    from .features import eligible_mask

    mask = eligible_mask(d.records, model.min_minutes)
    if not mask.all():
        log.warning("skipping %d record(s) below %g minutes", int((~mask).sum()), model.min_minutes)
    records = [r for r, ok in zip(d.records, mask) if ok]
    scores = predict_many(model, records)
    order = sorted(range(len(records)), key=lambda i: (-scores[i], records[i].player_id))
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["player_id", "position", "score"])
        for i in order:
            w.writerow([records[i].player_id, records[i].position.value, repr(float(scores[i]))])
    print(f"scored {len(records)} records -> {args.out}")
    return 0


def _sweep_path(out, given):
    if given:
        return Path(given)
    out = Path(out)
    return out.with_name(out.stem + ".sweep.csv")


def cmd_evaluate(args) -> int:
    _need(args.model, "model file")
    model = load_stacked(args.model)
    cfg = resolve_config(args.config, args) if args.config else None
    _check_feature_mode(model, args, cfg)
    data = _load_labeled(args.data)
    grid_text = args.grid or (cfg or model.config.get("run", {})).get("alpha_grid", DEFAULT_GRID)
    grid = parse_grid(grid_text)
    if args.subset == "test":
        run = model.config.get("run") or default_config()
        _, data = split_dataset(data, SplitConfig(**run["split"]))
    keep = args.keep_predictions or bool(cfg and cfg.get("keep_predictions"))
    report = evaluate_model(model, data, grid, keep_predictions=keep,
                            metadata={"model": str(args.model), "data": str(args.data),
                                      "subset": args.subset, "alpha_grid_spec": grid_text})
    write_report(report, args.out)
    sweep_out = _sweep_path(args.out, args.sweep_out)
    write_sweep_csv(report.sweep, sweep_out)
    print(report.confusion.to_text())
    print(report.class_means.to_text())
    for name, sec in report.components.items():
        auc = sec["pr_auc"]
        print(f"pr_auc {name:<11} {'n/a' if auc is None else f'{auc:.4f}'}")
    print(f"wrote {args.out} and {sweep_out}")
    return 0


def cmd_sweep(args) -> int:
    _need(args.predictions, "predictions file")
    data = _load_labeled(args.data)
    by_id = {}
    for r in data.records:
        if r.player_id in by_id:
            raise DataError(f"player_id {r.player_id!r} appears more than once; cannot join predictions")
        by_id[r.player_id] = r.label
    preds, labels = [], []
    with open(args.predictions, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if not reader.fieldnames or not {"player_id", "score"} <= set(reader.fieldnames):
            raise DataError("predictions file needs player_id and score columns")
        for i, row in enumerate(reader):
            if row["player_id"] not in by_id:
                raise DataError(f"prediction row {i}: unknown player_id {row['player_id']!r}")
            try:
                preds.append(float(row["score"]))
            except ValueError:
                raise DataError(f"prediction row {i}: score is not numeric") from None
            labels.append(by_id[row["player_id"]])
    points = sweep(np.array(preds), binarize(labels), parse_grid(args.grid))
    write_sweep_csv(points, args.out)
    print(f"{len(points)} sweep points -> {args.out}")
    return 0


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="scoutstack", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    fmt = argparse.ArgumentDefaultsHelpFormatter

    s = sub.add_parser("synth", help="generate a synthetic labeled dataset", formatter_class=fmt)
    s.add_argument("--config", help="JSON run config (section 'synth')")
    s.add_argument("--out", required=True, help="output dataset (.csv or .json)")
    s.add_argument("--seed", type=int, help="seed for synth, split and training (overrides config)")
    s.add_argument("--n-records", type=int, help="number of players (config default 4000)")
    s.add_argument("--signal-strength", type=float, help="class separation of latent quality (default 2.5)")
    s.add_argument("--no-complementary", action="store_true",
                   help="make the same stats informative for every position")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("validate", help="list schema and invariant violations", formatter_class=fmt)
    s.add_argument("--data", required=True, help="dataset file (.csv or .json)")
    s.set_defaults(func=cmd_validate)

    s = sub.add_parser("train", help="train the stacked model", formatter_class=fmt)
    s.add_argument("--data", required=True, help="labeled dataset")
    s.add_argument("--config", help="JSON run config")
    s.add_argument("--out", required=True, help="output model file (JSON)")
    s.add_argument("--seed", type=int, help="seed for split and training (overrides config)")
    s.add_argument("--epochs", type=int, help="epochs for base and meta networks (config default 200)")
    s.add_argument("--folds", type=int, help="out-of-fold splits for meta training (config default 5)")
    s.add_argument("--feature-mode", choices=["raw", "per90", "both"], help="input features (default both)")
    s.add_argument("--meta-scope", choices=["position", "global"], help="meta-network per position or shared")
    s.add_argument("--min-minutes", type=float, help="minutes needed to be scored (default 90)")
    s.add_argument("--min-position-records", type=int, help="records needed for a positional model (default 50)")
    s.add_argument("--train-fraction", type=float, help="train share of the split (default 0.9)")
    s.add_argument("--jobs", type=int, default=1, help="parallel fold trainings")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("predict", help="score players, best first", formatter_class=fmt)
    s.add_argument("--model", required=True)
    s.add_argument("--data", required=True, help="dataset to score (labels not needed)")
    s.add_argument("--out", required=True, help="CSV player_id,position,score")
    s.add_argument("--feature-mode", choices=["raw", "per90", "both"], help="fail unless the model uses this mode")
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("evaluate", help="confusion matrix, class means and alpha sweep", formatter_class=fmt)
    s.add_argument("--model", required=True)
    s.add_argument("--data", required=True, help="labeled dataset")
    s.add_argument("--out", required=True, help="report JSON")
    s.add_argument("--config", help="JSON run config (alpha_grid, feature_mode, keep_predictions)")
    s.add_argument("--subset", choices=["test", "all"], default="test",
                   help="'test' re-derives the training run's held-out split")
    s.add_argument("--grid", help=f"alpha grid start:stop:step (default {DEFAULT_GRID})")
    s.add_argument("--sweep-out", help="sweep CSV (default <out>.sweep.csv)")
    s.add_argument("--keep-predictions", action="store_true", help="store per-player scores in the report")
    s.add_argument("--feature-mode", choices=["raw", "per90", "both"], help="fail unless the model uses this mode")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("sweep", help="alpha sweep from a predictions CSV", formatter_class=fmt)
    s.add_argument("--predictions", required=True, help="CSV with player_id and score")
    s.add_argument("--data", required=True, help="labeled dataset with the same player_ids")
    s.add_argument("--grid", default=DEFAULT_GRID, help="alpha grid start:stop:step")
    s.add_argument("--out", required=True, help="sweep CSV")
    s.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ScoutError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
