"""Model inputs: min-max normalized raw stats and per-90 rates."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import STAT_NAMES, stat_matrix
from .errors import ConfigError, IneligibleRecordError

DEFAULT_MIN_MINUTES = 90.0
FEATURE_MODES = ("raw", "per90", "both")
PER90_NAMES = tuple(f"{n}_per90" for n in STAT_NAMES if n != "minutes")

_MINUTES = STAT_NAMES.index("minutes")


def feature_names(mode: str = "both") -> tuple[str, ...]:
    if mode == "raw":
        return STAT_NAMES
    if mode == "per90":
        return PER90_NAMES
    if mode == "both":
        return STAT_NAMES + PER90_NAMES
    raise ConfigError(f"unknown feature mode {mode!r} (expected one of {FEATURE_MODES})")


def feature_length(mode: str = "both") -> int:
    return len(feature_names(mode))


def per90_block(stats, min_minutes: float = DEFAULT_MIN_MINUTES) -> np.ndarray:
    """Non-minutes stats rescaled to a 90-minute basis (length 15)."""
    raw = stats.as_array() if hasattr(stats, "as_array") else np.asarray(stats, dtype=float)
    minutes = raw[_MINUTES]
    if not minutes >= min_minutes or minutes <= 0:
        raise IneligibleRecordError(f"minutes={minutes:g} is below the {min_minutes:g}-minute threshold")
    return np.delete(raw, _MINUTES) * 90.0 / minutes


def eligible_mask(records, min_minutes: float = DEFAULT_MIN_MINUTES) -> np.ndarray:
    m = stat_matrix(records)[:, _MINUTES]
    return (m >= min_minutes) & (m > 0)


def raw_features(records, mode: str = "both", min_minutes: float = DEFAULT_MIN_MINUTES) -> np.ndarray:
    """Unnormalized feature rows for ``records``; every record must be eligible."""
    n_feat = feature_length(mode)
    raw = stat_matrix(records)
    if raw.shape[0] == 0:
        return np.zeros((0, n_feat))
    minutes = raw[:, _MINUTES]
    bad = np.flatnonzero(~((minutes >= min_minutes) & (minutes > 0)))
    if bad.size:
        r = records[int(bad[0])]
        raise IneligibleRecordError(
            f"record {r.player_id!r} has minutes={minutes[bad[0]]:g} "
            f"below the {min_minutes:g}-minute threshold"
        )
    if mode == "raw":
        return raw
    per90 = np.delete(raw, _MINUTES, axis=1) * (90.0 / minutes)[:, None]
    if mode == "per90":
        return per90
    return np.hstack([raw, per90])


@dataclass(frozen=True)
class Normalizer:
    min: np.ndarray
    max: np.ndarray
    fitted_on: int

    def __post_init__(self):
        if self.min.shape != self.max.shape or np.any(self.min > self.max):
            raise ValueError("normalizer needs min <= max elementwise")
        if self.fitted_on < 1:
            raise ValueError("normalizer fitted on no records")

    @property
    def size(self) -> int:
        return self.min.shape[0]

    def to_json(self) -> dict:
        return {"min": self.min.tolist(), "max": self.max.tolist(), "fitted_on": self.fitted_on}

    @classmethod
    def from_json(cls, obj: dict) -> "Normalizer":
        lo = np.array(obj["min"], dtype=float)
        return cls(lo, np.array(obj["max"], dtype=float), int(obj.get("fitted_on", 1)))

    @classmethod
    def identity(cls, size: int) -> "Normalizer":
        return cls(np.zeros(size), np.ones(size), 1)


def fit_normalizer(rows) -> Normalizer:
    x = np.asarray(rows, dtype=float)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("cannot fit a normalizer on zero records")
    return Normalizer(x.min(axis=0), x.max(axis=0), x.shape[0])


def apply_normalizer(n: Normalizer, v) -> np.ndarray:
    """Map rows (or one row) into [0, 1]; constant training features map to 0."""
    x = np.asarray(v, dtype=float)
    if x.shape[-1] != n.size:
        raise ValueError(f"feature length {x.shape[-1]} does not match normalizer length {n.size}")
    span = n.max - n.min
    safe = np.where(span > 0, span, 1.0)
    with np.errstate(over="ignore"):
        out = np.clip((x - n.min) / safe, 0.0, 1.0)
    return np.where(span > 0, out, 0.0)
