"""Small feed-forward regressors trained with class-weighted Huber loss and AdamW.

Hidden layers are rectified-linear and the single output unit is logistic, so
every prediction lies in (0, 1). All parameters of a network live in one flat
float64 vector (W0, b0, W1, b1, ...; each W row-major out x in); ``MlpParams``
exposes per-layer views into it. The inner training loop runs in the kernel
module chosen by ``scoutstack._backend``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from . import _backend
from .errors import ConfigError, LabelError, NumericalError
from .features import FEATURE_MODES, Normalizer, apply_normalizer

MODEL_SCHEMA_VERSION = "1"


@dataclass(frozen=True)
class MlpSpec:
    layer_sizes: tuple[int, ...]
    seed: int = 0
    feature_mode: str = "both"

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        object.__setattr__(self, "layer_sizes", sizes)
        if len(sizes) < 3:
            raise ConfigError("an MLP needs an input size, at least one hidden layer, and an output")
        if any(s < 1 for s in sizes):
            raise ConfigError(f"layer sizes must be positive: {sizes}")
        if sizes[-1] != 1:
            raise ConfigError(f"output layer must have one unit, got {sizes[-1]}")
        if self.feature_mode not in FEATURE_MODES + ("meta",):
            raise ConfigError(f"unknown feature mode {self.feature_mode!r}")

    @property
    def n_params(self) -> int:
        s = self.layer_sizes
        return sum(a * b + b for a, b in zip(s[:-1], s[1:]))


@dataclass
class MlpParams:
    spec: MlpSpec
    flat: np.ndarray
    normalizer: Optional[Normalizer] = None
    train_config: Optional[dict] = None

    def __post_init__(self):
        self.flat = np.ascontiguousarray(self.flat, dtype=np.float64)
        if self.flat.shape != (self.spec.n_params,):
            raise ValueError(f"expected {self.spec.n_params} parameters, got {self.flat.shape}")
        if self.normalizer is not None and self.normalizer.size != self.spec.layer_sizes[0]:
            raise ValueError("normalizer length does not match the input layer")

    @property
    def layers(self) -> list[tuple[np.ndarray, np.ndarray]]:
        return _views(self.flat, self.spec.layer_sizes)

    @property
    def sizes(self) -> np.ndarray:
        return np.asarray(self.spec.layer_sizes, dtype=np.int64)

    def copy(self) -> "MlpParams":
        return MlpParams(self.spec, self.flat.copy(), self.normalizer, self.train_config)

    def to_json(self) -> dict:
        return {
            "schema_version": MODEL_SCHEMA_VERSION,
            "spec": {
                "layer_sizes": list(self.spec.layer_sizes),
                "seed": self.spec.seed,
                "feature_mode": self.spec.feature_mode,
            },
            "normalizer": self.normalizer.to_json() if self.normalizer else None,
            "layers": [{"weights": w.ravel().tolist(), "bias": b.tolist()} for w, b in self.layers],
            "train_config": self.train_config,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "MlpParams":
        if str(obj.get("schema_version")) != MODEL_SCHEMA_VERSION:
            raise ConfigError(f"unsupported model schema_version {obj.get('schema_version')!r}")
        s = obj["spec"]
        spec = MlpSpec(tuple(s["layer_sizes"]), int(s["seed"]), s.get("feature_mode", "both"))
        parts = []
        for layer in obj["layers"]:
            parts.append(np.asarray(layer["weights"], dtype=float))
            parts.append(np.asarray(layer["bias"], dtype=float))
        norm = Normalizer.from_json(obj["normalizer"]) if obj.get("normalizer") else None
        return cls(spec, np.concatenate(parts), norm, obj.get("train_config"))


def _views(flat: np.ndarray, sizes: Sequence[int]):
    out = []
    off = 0
    for n_in, n_out in zip(sizes[:-1], sizes[1:]):
        w = flat[off : off + n_in * n_out].reshape(n_out, n_in)
        off += n_in * n_out
        out.append((w, flat[off : off + n_out]))
        off += n_out
    return out


def decay_mask(spec: MlpSpec) -> np.ndarray:
    """1.0 on weights, 0.0 on biases (biases are not decayed)."""
    mask = np.zeros(spec.n_params)
    for w, _ in _views(mask, spec.layer_sizes):
        w[...] = 1.0
    return mask


def init_params(spec: MlpSpec, normalizer: Optional[Normalizer] = None) -> MlpParams:
    """Uniform in +-sqrt(6 / (fan_in + fan_out)) per weight matrix; zero biases."""
    rng = np.random.default_rng(spec.seed)
    flat = np.zeros(spec.n_params)
    for w, _ in _views(flat, spec.layer_sizes):
        bound = math.sqrt(6.0 / (w.shape[0] + w.shape[1]))
        w[...] = rng.uniform(-bound, bound, size=w.shape)
    return MlpParams(spec, flat, normalizer)


def forward(m: MlpParams, x) -> np.ndarray | float:
    """Network output for one normalized feature vector or a matrix of them."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    if X.shape[1] != m.spec.layer_sizes[0]:
        raise ValueError(f"input length {X.shape[1]} does not match layer size {m.spec.layer_sizes[0]}")
    out = _backend.kernels.forward_batch(m.flat, m.sizes, np.ascontiguousarray(X))
    return float(out[0]) if single else out


def predict_raw(m: MlpParams, rows) -> np.ndarray:
    """Normalize unscaled feature rows with the model's own normalizer, then forward."""
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    x = apply_normalizer(m.normalizer, rows) if m.normalizer is not None else rows
    return forward(m, x)


def huber(pred, target, delta: float = 1.0):
    r = np.asarray(pred, dtype=float) - np.asarray(target, dtype=float)
    a = np.abs(r)
    out = np.where(a <= delta, 0.5 * r * r, delta * (a - 0.5 * delta))
    return float(out) if out.ndim == 0 else out


def huber_grad(pred, target, delta: float = 1.0):
    """d huber / d pred."""
    r = np.asarray(pred, dtype=float) - np.asarray(target, dtype=float)
    out = np.where(np.abs(r) <= delta, r, delta * np.sign(r))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class ClassWeights:
    """Empirical class frequencies P(k); each sample's loss is divided by its P(k)."""

    p: Mapping[float, float]

    def __post_init__(self):
        if any(not 0 < v <= 1 for v in self.p.values()):
            raise ValueError("class frequencies must lie in (0, 1]")

    @classmethod
    def from_labels(cls, labels) -> "ClassWeights":
        labels = np.asarray(labels, dtype=float)
        if labels.size == 0:
            raise ValueError("no labels to estimate class frequencies from")
        values, counts = np.unique(labels, return_counts=True)
        return cls({float(v): c / labels.size for v, c in zip(values, counts)})

    def sample_weights(self, labels) -> np.ndarray:
        out = np.empty(len(labels))
        for i, y in enumerate(labels):
            try:
                out[i] = 1.0 / self.p[float(y)]
            except KeyError:
                raise LabelError(f"no class weight for label {y!r}") from None
        return out

    def to_json(self) -> dict:
        return {f"{k:g}": v for k, v in sorted(self.p.items())}

    @classmethod
    def from_json(cls, obj: dict) -> "ClassWeights":
        return cls({float(k): float(v) for k, v in obj.items()})


def weighted_batch_loss(preds, targets, w: ClassWeights, delta: float = 1.0) -> float:
    """Sum over the batch of huber(pred, target) / P(class of target)."""
    preds = np.asarray(preds, dtype=float)
    targets = np.asarray(targets, dtype=float)
    if preds.shape != targets.shape:
        raise ValueError("preds and targets differ in length")
    return float(np.sum(np.asarray(huber(preds, targets, delta)) * w.sample_weights(targets)))


@dataclass(frozen=True)
class LossConfig:
    delta: float = 1.0
    class_weights: Optional[ClassWeights] = None

    def __post_init__(self):
        if not self.delta > 0:
            raise ConfigError(f"huber delta must be positive, got {self.delta}")

    def sample_weights(self, targets) -> np.ndarray:
        if self.class_weights is None:
            return np.ones(len(targets))
        return self.class_weights.sample_weights(targets)

    def to_json(self) -> dict:
        return {
            "kind": "huber",
            "delta": self.delta,
            "class_weights": self.class_weights.to_json() if self.class_weights else None,
        }


def backward(m: MlpParams, X, y, loss: LossConfig = LossConfig()) -> list[tuple[np.ndarray, np.ndarray]]:
    """Exact gradients of the (optionally class-weighted) batch loss sum.

    Returns one (dW, db) pair per layer, shaped like ``m.layers``.
    """
    flat = backward_flat(m, X, y, loss)[1]
    return _views(flat, m.spec.layer_sizes)


def backward_flat(m: MlpParams, X, y, loss: LossConfig = LossConfig()) -> tuple[float, np.ndarray]:
    X = np.ascontiguousarray(np.atleast_2d(X), dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    if X.shape[0] == 0:
        raise ValueError("empty batch")
    if X.shape[1] != m.spec.layer_sizes[0] or y.shape != (X.shape[0],):
        raise ValueError("batch shape does not match the network")
    grad = np.zeros(m.spec.n_params)
    value = _backend.kernels.loss_grad(m.flat, m.sizes, X, y, loss.sample_weights(y), loss.delta, grad)
    return value, grad


@dataclass
class OptimizerState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01
    t: int = 0
    m: Optional[np.ndarray] = None
    v: Optional[np.ndarray] = None

    @classmethod
    def zeros(cls, n: int, **hyper) -> "OptimizerState":
        return cls(m=np.zeros(n), v=np.zeros(n), **hyper)


def optimizer_step(params, grads, state: OptimizerState):
    """One AdamW step; returns (new params, new state) and leaves inputs untouched.

    ``params`` is an ``MlpParams`` (biases exempt from decay) or a plain array
    (every entry decayed). ``grads`` is flat or a list of (dW, db) pairs.
    """
    if isinstance(params, MlpParams):
        theta = params.flat.copy()
        mask = decay_mask(params.spec)
    else:
        theta = np.array(params, dtype=np.float64).ravel()
        mask = np.ones_like(theta)
    if isinstance(grads, (list, tuple)):
        g = np.concatenate([np.concatenate([dw.ravel(), db.ravel()]) for dw, db in grads])
    else:
        g = np.asarray(grads, dtype=np.float64).ravel()
    if g.shape != theta.shape:
        raise ValueError("gradient shape does not match parameters")
    m = np.zeros_like(theta) if state.m is None else state.m.copy()
    v = np.zeros_like(theta) if state.v is None else state.v.copy()
    t = state.t + 1
    _backend.kernels.adamw_update(theta, np.ascontiguousarray(g), m, v, mask, t, state.lr,
                                  state.beta1, state.beta2, state.eps, state.weight_decay)
    new_state = OptimizerState(state.lr, state.beta1, state.beta2, state.eps, state.weight_decay, t, m, v)
    if isinstance(params, MlpParams):
        return MlpParams(params.spec, theta, params.normalizer, params.train_config), new_state
    return theta.reshape(np.shape(params)), new_state


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    batch_size: int = 32
    shuffle_seed: int = 0
    loss: LossConfig = field(default_factory=LossConfig)
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")

    def to_json(self) -> dict:
        d = asdict(self)
        d["loss"] = self.loss.to_json()
        return d


@dataclass
class TrainResult:
    params: MlpParams
    history: list[float]


def train(spec: MlpSpec, X, y, cfg: TrainConfig = TrainConfig(),
          normalizer: Optional[Normalizer] = None, init: Optional[MlpParams] = None) -> TrainResult:
    """Fit a network on normalized features ``X`` and targets ``y``.

    ``history`` holds each epoch's loss sum divided by the number of samples.
    Deterministic in (spec.seed, cfg.shuffle_seed).
    """
    X = np.ascontiguousarray(np.atleast_2d(X), dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    n = X.shape[0]
    if n == 0:
        raise ValueError("no training data")
    if X.shape[1] != spec.layer_sizes[0]:
        raise ValueError(f"feature length {X.shape[1]} does not match input layer {spec.layer_sizes[0]}")
    if y.shape != (n,):
        raise ValueError("targets must be a vector matching X")
    params = init.copy() if init is not None else init_params(spec, normalizer)
    sw = np.ascontiguousarray(cfg.loss.sample_weights(y))
    mask = decay_mask(spec)
    m = np.zeros(spec.n_params)
    v = np.zeros(spec.n_params)
    t = 0
    rng = np.random.default_rng(cfg.shuffle_seed)
    history = []
    k = _backend.kernels
    for epoch in range(cfg.epochs):
        order = rng.permutation(n).astype(np.int64)
        total, t, bad = k.train_epoch(params.flat, params.sizes, X, y, sw, order, cfg.batch_size,
                                      cfg.loss.delta, m, v, mask, t, cfg.lr, cfg.beta1, cfg.beta2,
                                      cfg.eps, cfg.weight_decay)
        if bad >= 0:
            raise NumericalError(f"non-finite loss or gradient at epoch {epoch}, batch {bad}")
        if not np.all(np.isfinite(params.flat)):
            raise NumericalError(f"non-finite parameters after epoch {epoch}")
        history.append(total / n)
    params.train_config = cfg.to_json()
    return TrainResult(params, history)


def save_model(m: MlpParams, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(m.to_json(), fh)
        fh.write("\n")


def load_model(path) -> MlpParams:
    with open(path, encoding="utf-8") as fh:
        return MlpParams.from_json(json.load(fh))
