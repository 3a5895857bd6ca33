"""Global and per-position base networks stacked under a small meta-network.

The meta-network sees two numbers per player: the global model's output and
the output of the model for the player's own position. Its training inputs
are out-of-fold: each training record is scored by base models fitted
without that record's fold.
"""

from __future__ import annotations

import json
import logging
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np

from . import netcore
from .dataset import Dataset, PositionGroup
from .errors import ConfigError, DataError, IneligibleRecordError, SchemaError
from .evaluate import EvaluationReport, alpha_grid, binarize, class_means, confusion, pr_auc, sweep
from .features import (
    DEFAULT_MIN_MINUTES,
    Normalizer,
    apply_normalizer,
    eligible_mask,
    feature_length,
    fit_normalizer,
    raw_features,
)
from .labeling import LABELS, class_index
from .netcore import ClassWeights, LossConfig, MlpParams, MlpSpec, TrainConfig

log = logging.getLogger(__name__)

STACK_SCHEMA_VERSION = "1"
ALL_POSITIONS = "all"


@dataclass(frozen=True)
class SplitConfig:
    train_fraction: float = 0.9
    seed: int = 0
    stratified: bool = True

    def __post_init__(self):
        if not 0 < self.train_fraction < 1:
            raise ConfigError(f"train_fraction must be in (0, 1), got {self.train_fraction}")


@dataclass(frozen=True)
class PipelineConfig:
    feature_mode: str = "both"
    min_minutes: float = DEFAULT_MIN_MINUTES
    base_hidden: tuple[int, ...] = (32, 16)
    meta_hidden: tuple[int, ...] = (8,)
    base_train: TrainConfig = field(default_factory=TrainConfig)
    meta_train: TrainConfig = field(default_factory=TrainConfig)
    folds: int = 5
    min_position_records: int = 50
    meta_scope: str = "position"
    seed: int = 0
    jobs: int = 1

    def __post_init__(self):
        feature_length(self.feature_mode)
        if self.meta_scope not in ("position", "global"):
            raise ConfigError(f"meta_scope must be 'position' or 'global', got {self.meta_scope!r}")
        if self.folds < 2:
            raise ConfigError(f"folds must be >= 2, got {self.folds}")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")

    def to_json(self) -> dict:
        d = asdict(self)
        d["base_train"] = self.base_train.to_json()
        d["meta_train"] = self.meta_train.to_json()
        d["base_hidden"] = list(self.base_hidden)
        d["meta_hidden"] = list(self.meta_hidden)
        d.pop("jobs")
        return d


def derive_seed(seed: int, *tags) -> int:
    """Stable sub-seed for a named stage, independent of execution order."""
    return zlib.crc32(":".join(map(str, (seed, *tags))).encode()) & 0x7FFFFFFF


# ---------------------------------------------------------------- splitting


def _stratified_counts(sizes: np.ndarray, fraction: float) -> np.ndarray:
    """Per-class train counts: floor or ceil of fraction * size, summing to round(fraction * n)."""
    raw = sizes * fraction
    counts = np.floor(raw).astype(int)
    target = int(np.floor(sizes.sum() * fraction + 0.5))
    extra = min(max(target - counts.sum(), 0), int(np.sum(raw > counts)))
    order = np.argsort(-(raw - counts), kind="stable")
    counts[order[:extra]] += 1
    return counts


def split_indices(labels, cfg: SplitConfig) -> tuple[np.ndarray, np.ndarray]:
    labels = np.asarray(labels, dtype=float)
    n = labels.size
    rng = np.random.default_rng(cfg.seed)
    if not cfg.stratified:
        perm = rng.permutation(n)
        n_train = int(np.floor(n * cfg.train_fraction + 0.5))
        return np.sort(perm[:n_train]), np.sort(perm[n_train:])
    cls = np.array([class_index(float(y)) for y in labels], dtype=int)
    present = [c for c in range(4) if np.any(cls == c)]
    sizes = np.array([np.sum(cls == c) for c in present])
    for c, s in zip(present, sizes):
        if s < 2:
            raise DataError(f"class {LABELS[c]:g} has {s} record(s); stratified split needs at least 2")
    n_train = _stratified_counts(sizes, cfg.train_fraction)
    train = []
    for c, k in zip(present, n_train):
        members = np.flatnonzero(cls == c)
        train.append(rng.permutation(members)[:k])
    train_idx = np.sort(np.concatenate(train)) if train else np.zeros(0, dtype=int)
    test_idx = np.setdiff1d(np.arange(n), train_idx)
    return train_idx, test_idx


def split_dataset(d: Dataset, cfg: SplitConfig = SplitConfig()) -> tuple[Dataset, Dataset]:
    """Disjoint, exhaustive train/test split; both parts keep file order."""
    if any(r.label is None for r in d.records):
        raise DataError("split_dataset needs a labeled dataset")
    tr, te = split_indices(d.labels, cfg)
    return d.subset(tr), d.subset(te)


def fold_assignment(labels, folds: int, seed: int) -> np.ndarray:
    """Stratified k-fold ids: each class is shuffled then dealt round-robin."""
    cls = np.array([class_index(float(y)) for y in labels], dtype=int)
    present = [c for c in range(4) if np.any(cls == c)]
    smallest = min((int(np.sum(cls == c)) for c in present), default=0)
    if folds < 2:
        raise ConfigError(f"folds must be >= 2, got {folds}")
    if folds > smallest:
        raise DataError(f"{folds} folds exceed the smallest class count ({smallest})")
    rng = np.random.default_rng(seed)
    out = np.empty(cls.size, dtype=int)
    for c in present:
        members = rng.permutation(np.flatnonzero(cls == c))
        out[members] = np.arange(members.size) % folds
    return out


# ---------------------------------------------------------------- base models


def eligible(d: Dataset, min_minutes: float) -> Dataset:
    mask = eligible_mask(d.records, min_minutes)
    dropped = int((~mask).sum())
    if dropped:
        log.info("dropping %d record(s) below %g minutes", dropped, min_minutes)
    return d.subset(np.flatnonzero(mask))


def _fit_base(records, cfg: PipelineConfig, seed: int, weighted: bool = True) -> MlpParams:
    if not records:
        raise DataError("no eligible training records")
    raw = raw_features(records, cfg.feature_mode, cfg.min_minutes)
    norm = fit_normalizer(raw)
    X = apply_normalizer(norm, raw)
    y = np.array([r.label for r in records], dtype=float)
    weights = ClassWeights.from_labels(y) if weighted else None
    tcfg = replace(cfg.base_train, loss=replace(cfg.base_train.loss, class_weights=weights),
                   shuffle_seed=derive_seed(seed, "shuffle"))
    spec = MlpSpec((X.shape[1], *cfg.base_hidden, 1), seed=derive_seed(seed, "init"),
                   feature_mode=cfg.feature_mode)
    res = netcore.train(spec, X, y, tcfg, normalizer=norm)
    res.params.train_config["records"] = len(records)
    res.params.train_config["final_loss"] = res.history[-1]
    return res.params


def train_global(train: Dataset, cfg: PipelineConfig = PipelineConfig(), tag="global") -> MlpParams:
    """One class-weighted network over every position."""
    records = eligible(train, cfg.min_minutes).records
    return _fit_base(records, cfg, derive_seed(cfg.seed, tag))


def train_positional(train: Dataset, cfg: PipelineConfig = PipelineConfig(), tag="positional",
                     skipped: Optional[list] = None) -> dict[PositionGroup, MlpParams]:
    """One class-weighted network per position group with enough records.

    Under-populated groups are left out with a warning and appended to ``skipped``.
    """
    records = eligible(train, cfg.min_minutes).records
    out = {}
    for pos in PositionGroup:
        group = [r for r in records if r.position is pos]
        if not group:
            continue
        if len(group) < cfg.min_position_records:
            log.warning("%s: %d records < %d, no positional model", pos.value, len(group),
                        cfg.min_position_records)
            if skipped is not None:
                skipped.append({"position": pos.value, "records": len(group), "stage": tag})
            continue
        out[pos] = _fit_base(group, cfg, derive_seed(cfg.seed, tag, pos.value))
    return out


def _score(model: MlpParams, records, cfg_mode: str, min_minutes: float) -> np.ndarray:
    raw = raw_features(records, cfg_mode, min_minutes)
    return np.asarray(netcore.predict_raw(model, raw)) if raw.shape[0] else np.zeros(0)


def base_outputs(global_model: MlpParams, by_position: dict, records, feature_mode: str,
                 min_minutes: float) -> tuple[np.ndarray, np.ndarray]:
    """(global output, own-position output) per record; global stands in for missing positions."""
    g = _score(global_model, records, feature_mode, min_minutes)
    p = g.copy()
    for pos, model in by_position.items():
        idx = [i for i, r in enumerate(records) if r.position is pos]
        if idx:
            p[idx] = _score(model, [records[i] for i in idx], feature_mode, min_minutes)
    return g, p


@dataclass
class OutOfFold:
    global_out: np.ndarray
    positional_out: np.ndarray
    fold_of: np.ndarray
    trained_on: list[frozenset]


def out_of_fold_base_outputs(train: Dataset, folds: int = 5,
                             cfg: PipelineConfig = PipelineConfig()) -> OutOfFold:
    """Base-model outputs for every eligible training record, each from models that never saw it.

    ``train`` should already be filtered to eligible records; indices in the
    result refer to its record order.
    """
    records = train.records
    if any(not m for m in eligible_mask(records, cfg.min_minutes)):
        raise IneligibleRecordError("out-of-fold scoring needs eligible records only")
    labels = np.array([r.label for r in records], dtype=float)
    fold_of = fold_assignment(labels, folds, derive_seed(cfg.seed, "folds"))
    n = len(records)

    def run(f):
        tr = np.flatnonzero(fold_of != f)
        te = np.flatnonzero(fold_of == f)
        part = train.subset(tr)
        g = train_global(part, cfg, tag=f"fold{f}:global")
        by_pos = train_positional(part, cfg, tag=f"fold{f}:positional")
        go, po = base_outputs(g, by_pos, [records[i] for i in te], cfg.feature_mode, cfg.min_minutes)
        return f, tr, te, go, po

    if cfg.jobs > 1:
        with ThreadPoolExecutor(cfg.jobs) as pool:
            results = list(pool.map(run, range(folds)))
    else:
        results = [run(f) for f in range(folds)]

    global_out = np.full(n, np.nan)
    positional_out = np.full(n, np.nan)
    trained_on = [frozenset()] * folds
    for f, tr, te, go, po in results:
        global_out[te] = go
        positional_out[te] = po
        trained_on[f] = frozenset(int(i) for i in tr)
    return OutOfFold(global_out, positional_out, fold_of, trained_on)


# ---------------------------------------------------------------- meta model


def _fit_meta(inputs: np.ndarray, labels: np.ndarray, cfg: PipelineConfig, tag: str) -> MlpParams:
    spec = MlpSpec((inputs.shape[1], *cfg.meta_hidden, 1), seed=derive_seed(cfg.seed, tag, "init"),
                   feature_mode="meta")
    if spec.layer_sizes[0] != 2:
        raise ConfigError(f"meta-network input size must be 2, got {spec.layer_sizes[0]}")
    # no class weights: the meta-network is trained on the plain Huber loss
    tcfg = replace(cfg.meta_train, loss=replace(cfg.meta_train.loss, class_weights=None),
                   shuffle_seed=derive_seed(cfg.seed, tag, "shuffle"))
    res = netcore.train(spec, inputs, labels, tcfg, normalizer=Normalizer.identity(2))
    res.params.train_config["records"] = int(labels.size)
    res.params.train_config["final_loss"] = res.history[-1]
    return res.params


def train_meta(oof: OutOfFold, labels, positions, cfg: PipelineConfig = PipelineConfig()) -> dict[str, MlpParams]:
    """Meta-networks over (global, positional) out-of-fold outputs.

    Always fits an all-positions network (key ``"all"``); with position scope
    also one per position group present.
    """
    inputs = np.column_stack([oof.global_out, oof.positional_out])
    if not np.all(np.isfinite(inputs)):
        raise DataError("out-of-fold outputs are incomplete")
    labels = np.asarray(labels, dtype=float)
    out = {ALL_POSITIONS: _fit_meta(inputs, labels, cfg, "meta:all")}
    if cfg.meta_scope == "position":
        for pos in PositionGroup:
            idx = [i for i, p in enumerate(positions) if p is pos]
            if idx:
                out[pos.value] = _fit_meta(inputs[idx], labels[idx], cfg, f"meta:{pos.value}")
    return out


# ---------------------------------------------------------------- stacked model


@dataclass
class StackedModel:
    global_model: MlpParams
    by_position: dict[PositionGroup, MlpParams]
    meta: dict[str, MlpParams]
    folds: int
    feature_mode: str = "both"
    min_minutes: float = DEFAULT_MIN_MINUTES
    config: dict = field(default_factory=dict)
    skipped: list = field(default_factory=list)

    def meta_for(self, pos: PositionGroup) -> MlpParams:
        return self.meta.get(pos.value, self.meta[ALL_POSITIONS])

    def to_json(self) -> dict:
        return {
            "schema_version": STACK_SCHEMA_VERSION,
            "folds": self.folds,
            "feature_mode": self.feature_mode,
            "min_minutes": self.min_minutes,
            "config": self.config,
            "skipped": self.skipped,
            "global": self.global_model.to_json(),
            "by_position": {p.value: m.to_json() for p, m in self.by_position.items()},
            "meta": {k: m.to_json() for k, m in self.meta.items()},
        }

    @classmethod
    def from_json(cls, doc: dict) -> "StackedModel":
        if str(doc.get("schema_version")) != STACK_SCHEMA_VERSION:
            raise SchemaError(f"unsupported model schema_version {doc.get('schema_version')!r}")
        try:
            return cls(
                global_model=MlpParams.from_json(doc["global"]),
                by_position={PositionGroup(k): MlpParams.from_json(v) for k, v in doc["by_position"].items()},
                meta={k: MlpParams.from_json(v) for k, v in doc["meta"].items()},
                folds=int(doc["folds"]),
                feature_mode=doc.get("feature_mode", "both"),
                min_minutes=float(doc.get("min_minutes", DEFAULT_MIN_MINUTES)),
                config=doc.get("config", {}),
                skipped=doc.get("skipped", []),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"malformed model file: {exc}") from None


def save_stacked(model: StackedModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model.to_json(), fh)
        fh.write("\n")


def load_stacked(path) -> StackedModel:
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"model file is not valid JSON: {exc}") from None
    return StackedModel.from_json(doc)


def fit_stacked(train: Dataset, cfg: PipelineConfig = PipelineConfig()) -> StackedModel:
    """Base models on the whole training split, meta-networks on out-of-fold outputs."""
    train = eligible(train, cfg.min_minutes)
    if len(train) == 0:
        raise DataError("no eligible training records")
    skipped: list = []
    global_model = train_global(train, cfg)
    by_position = train_positional(train, cfg, skipped=skipped)
    oof = out_of_fold_base_outputs(train, cfg.folds, cfg)
    meta = train_meta(oof, train.labels, [r.position for r in train.records], cfg)
    return StackedModel(global_model, by_position, meta, cfg.folds, cfg.feature_mode, cfg.min_minutes,
                        config=cfg.to_json(), skipped=skipped)


def predict_many(model: StackedModel, records) -> np.ndarray:
    records = list(records)
    if not records:
        return np.zeros(0)
    g, p = base_outputs(model.global_model, model.by_position, records, model.feature_mode,
                        model.min_minutes)
    inputs = np.column_stack([g, p])
    out = np.empty(len(records))
    keys = [model.meta_for(r.position) for r in records]
    for meta in {id(k): k for k in keys}.values():
        idx = [i for i, k in enumerate(keys) if k is meta]
        out[idx] = netcore.forward(meta, inputs[idx])
    return out


def predict(model: StackedModel, record) -> float:
    """Stacked score in (0, 1); raises IneligibleRecordError below the minutes threshold."""
    return float(predict_many(model, [record])[0])


def _section(preds, labels, positives) -> dict:
    section = {
        "confusion": confusion(preds, labels).to_json(),
        "class_means": class_means(preds, labels).to_json(),
    }
    section["pr_auc"] = pr_auc(preds, positives) if positives.any() else None
    return section


def evaluate_model(model: StackedModel, test: Dataset, grid=None, keep_predictions: bool = False,
                   metadata: Optional[dict] = None) -> EvaluationReport:
    """Stacked-model report on ``test`` plus confusion, class means and PR area for each base view."""
    test_ok = eligible(test, model.min_minutes)
    records = test_ok.records
    labels = test_ok.labels
    grid = alpha_grid() if grid is None else np.asarray(grid, dtype=float)
    stacked = predict_many(model, records)
    g, p = base_outputs(model.global_model, model.by_position, records, model.feature_mode,
                        model.min_minutes)
    positives = binarize(labels)
    components = {
        "stacked": _section(stacked, labels, positives),
        "global": _section(g, labels, positives),
        "positional": _section(p, labels, positives),
    }
    meta = {"records": len(test), "scored": len(records), "excluded_below_minutes": len(test) - len(records),
            "alpha_grid": [float(grid[0]), float(grid[-1]), len(grid)]}
    meta.update(metadata or {})
    preds_out = None
    if keep_predictions:
        preds_out = [{"player_id": r.player_id, "label": r.label, "score": float(s)}
                     for r, s in zip(records, stacked)]
    return EvaluationReport(
        confusion=confusion(stacked, labels),
        class_means=class_means(stacked, labels),
        sweep=sweep(stacked, positives, grid) if positives.any() else [],
        metadata=meta,
        components=components,
        predictions=preds_out,
    )


def pipeline_config_from_json(obj: dict) -> PipelineConfig:
    """Build a PipelineConfig from a (possibly partial) JSON mapping."""
    obj = dict(obj)
    known = {f for f in PipelineConfig.__dataclass_fields__}
    unknown = set(obj) - known
    if unknown:
        raise ConfigError(f"unknown pipeline config keys: {sorted(unknown)}")
    for key in ("base_train", "meta_train"):
        if key in obj and isinstance(obj[key], dict):
            obj[key] = train_config_from_json(obj[key])
    for key in ("base_hidden", "meta_hidden"):
        if key in obj:
            obj[key] = tuple(int(x) for x in obj[key])
    return PipelineConfig(**obj)


def train_config_from_json(obj: dict) -> TrainConfig:
    obj = dict(obj)
    loss = obj.pop("loss", None)
    unknown = set(obj) - set(TrainConfig.__dataclass_fields__)
    if unknown:
        raise ConfigError(f"unknown train config keys: {sorted(unknown)}")
    if loss is not None:
        if loss.get("class_weights"):
            raise ConfigError("class weights are derived from the training split, not configured")
        obj["loss"] = LossConfig(delta=float(loss.get("delta", 1.0)))
    return TrainConfig(**obj)
