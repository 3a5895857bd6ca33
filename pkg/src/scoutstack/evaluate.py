"""Confusion matrices, per-class mean outputs and alpha threshold sweeps."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import ConfigError, DataError, SchemaError
from .labeling import LABELS, class_index

REPORT_SCHEMA_VERSION = "1"
POSITIVE_LABELS = (0.66, 1.0)

# decision boundaries between neighbouring classes; a value on a boundary goes to the lower class
_BOUNDARIES = np.array([0.165, 0.495, 0.83])


def quantize_output(y: float) -> float:
    return LABELS[int(np.searchsorted(_BOUNDARIES, y, side="left"))]


def quantize_many(preds) -> np.ndarray:
    return np.searchsorted(_BOUNDARIES, np.asarray(preds, dtype=float), side="left")


def _class_indices(labels) -> np.ndarray:
    return np.array([class_index(float(y)) for y in labels], dtype=int)


@dataclass(frozen=True)
class ConfusionMatrix4:
    """Rows are true classes, columns predicted classes, both in ``LABELS`` order."""

    counts: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def to_json(self) -> dict:
        return {"labels": list(LABELS), "counts": self.counts.tolist()}

    @classmethod
    def from_json(cls, obj) -> "ConfusionMatrix4":
        return cls(np.array(obj["counts"], dtype=np.int64).reshape(4, 4))

    def __eq__(self, other):
        return isinstance(other, ConfusionMatrix4) and np.array_equal(self.counts, other.counts)

    def to_text(self) -> str:
        head = "true\\pred " + "".join(f"{lab:>8g}" for lab in LABELS)
        rows = [head]
        for lab, row in zip(LABELS, self.counts):
            rows.append(f"{lab:>9g} " + "".join(f"{c:>8d}" for c in row))
        return "\n".join(rows)


def confusion(preds, labels) -> ConfusionMatrix4:
    preds = np.asarray(preds, dtype=float)
    if preds.shape[0] != len(labels):
        raise ValueError("preds and labels differ in length")
    counts = np.zeros((4, 4), dtype=np.int64)
    if preds.size:
        np.add.at(counts, (_class_indices(labels), quantize_many(preds)), 1)
    return ConfusionMatrix4(counts)


@dataclass(frozen=True)
class ClassMeans:
    """Mean raw output per true class; ``None`` marks a class with no members."""

    means: Mapping[float, Optional[float]]
    counts: Mapping[float, int] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "means": {f"{k:g}": v for k, v in self.means.items()},
            "counts": {f"{k:g}": v for k, v in self.counts.items()},
        }

    @classmethod
    def from_json(cls, obj) -> "ClassMeans":
        return cls(
            {float(k): v for k, v in obj["means"].items()},
            {float(k): int(v) for k, v in obj.get("counts", {}).items()},
        )

    def to_text(self) -> str:
        parts = []
        for k, v in self.means.items():
            shown = "absent" if v is None else f"{v:.4f}"
            parts.append(f"class {k:g}: {shown} (n={self.counts.get(k, 0)})")
        return "\n".join(parts)


def class_means(preds, labels) -> ClassMeans:
    preds = np.asarray(preds, dtype=float)
    idx = _class_indices(labels) if len(labels) else np.zeros(0, dtype=int)
    means, counts = {}, {}
    for i, lab in enumerate(LABELS):
        sel = preds[idx == i]
        counts[lab] = int(sel.size)
        means[lab] = float(sel.mean()) if sel.size else None
    return ClassMeans(means, counts)


def binarize(labels) -> np.ndarray:
    """True for the classes of interest (0.66 and 1.0)."""
    idx = _class_indices(labels) if len(labels) else np.zeros(0, dtype=int)
    return idx >= 2


@dataclass(frozen=True)
class SweepPoint:
    alpha: float
    flagged: int
    precision: Optional[float]
    recall: float

    def to_json(self) -> dict:
        return {"alpha": self.alpha, "flagged": self.flagged, "precision": self.precision,
                "recall": self.recall}


def alpha_grid(start: float = 0.0, stop: float = 0.4, step: float = 0.005) -> np.ndarray:
    """Inclusive, strictly increasing grid; values rounded to kill float drift."""
    if step <= 0 or stop < start:
        raise ConfigError(f"bad alpha grid {start}:{stop}:{step}")
    n = int(np.floor((stop - start) / step + 1e-9)) + 1
    return np.round(start + step * np.arange(n), 12)


def parse_grid(text: str) -> np.ndarray:
    try:
        start, stop, step = (float(p) for p in text.split(":"))
    except ValueError:
        raise ConfigError(f"grid must look like start:stop:step, got {text!r}") from None
    return alpha_grid(start, stop, step)


def sweep(preds, positives, grid=None) -> list[SweepPoint]:
    """Precision and recall of flagging ``pred > alpha`` for every alpha in ``grid``."""
    preds = np.asarray(preds, dtype=float)
    positives = np.asarray(positives, dtype=bool)
    if preds.shape != positives.shape:
        raise ValueError("preds and labels differ in length")
    n_pos = int(positives.sum())
    if n_pos == 0:
        raise DataError("no positive labels: recall is undefined")
    grid = alpha_grid() if grid is None else np.asarray(grid, dtype=float)
    if grid.size > 1 and np.any(np.diff(grid) <= 0):
        raise ConfigError("alpha grid must be strictly increasing")
    all_sorted = np.sort(preds)
    pos_sorted = np.sort(preds[positives])
    flagged = preds.size - np.searchsorted(all_sorted, grid, side="right")
    tp = n_pos - np.searchsorted(pos_sorted, grid, side="right")
    out = []
    for a, f, t in zip(grid, flagged, tp):
        out.append(SweepPoint(float(a), int(f), int(t) / int(f) if f else None, int(t) / n_pos))
    return out


def pr_auc(preds, positives) -> float:
    """Area under the precision-recall tradeoff, sweeping alpha over every distinct output.

    Step-wise (average precision): each drop in recall is weighted by the
    precision at the threshold that still included those positives.
    """
    preds = np.asarray(preds, dtype=float)
    grid = np.concatenate([[-np.inf], np.unique(preds)])
    points = sweep(preds, positives, grid)
    area = 0.0
    for cur, nxt in zip(points, points[1:] + [None]):
        drop = cur.recall - (nxt.recall if nxt else 0.0)
        if drop > 0:
            area += drop * cur.precision
    return area


def best_operating_point(points: Sequence[SweepPoint], min_precision: float) -> Optional[SweepPoint]:
    """Highest-recall point whose precision reaches ``min_precision``."""
    ok = [p for p in points if p.precision is not None and p.precision >= min_precision]
    return max(ok, key=lambda p: (p.recall, -p.alpha)) if ok else None


@dataclass
class EvaluationReport:
    confusion: ConfusionMatrix4
    class_means: ClassMeans
    sweep: list[SweepPoint]
    metadata: dict = field(default_factory=dict)
    components: dict = field(default_factory=dict)
    predictions: Optional[list] = None

    def __post_init__(self):
        alphas = [p.alpha for p in self.sweep]
        if any(b <= a for a, b in zip(alphas, alphas[1:])):
            raise ValueError("sweep alphas must be strictly increasing")

    def to_json(self) -> dict:
        doc = {
            "schema_version": REPORT_SCHEMA_VERSION,
            "metadata": self.metadata,
            "confusion": self.confusion.to_json(),
            "class_means": self.class_means.to_json(),
            "sweep": [p.to_json() for p in self.sweep],
            "components": self.components,
        }
        if self.predictions is not None:
            doc["predictions"] = self.predictions
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "EvaluationReport":
        if str(doc.get("schema_version")) != REPORT_SCHEMA_VERSION:
            raise SchemaError(f"unsupported report schema_version {doc.get('schema_version')!r}")
        try:
            return cls(
                confusion=ConfusionMatrix4.from_json(doc["confusion"]),
                class_means=ClassMeans.from_json(doc["class_means"]),
                sweep=[SweepPoint(float(p["alpha"]), int(p["flagged"]), p["precision"], float(p["recall"]))
                       for p in doc["sweep"]],
                metadata=doc.get("metadata", {}),
                components=doc.get("components", {}),
                predictions=doc.get("predictions"),
            )
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"malformed report: {exc}") from None


def write_report(report: EvaluationReport, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.to_json(), fh, indent=1)
        fh.write("\n")


def read_report(path) -> EvaluationReport:
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"report is not valid JSON: {exc}") from None
    return EvaluationReport.from_json(doc)


def sweep_csv(points: Sequence[SweepPoint]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["alpha", "flagged", "precision", "recall"])
    for p in points:
        w.writerow([repr(p.alpha), p.flagged, "" if p.precision is None else repr(p.precision), repr(p.recall)])
    return buf.getvalue()


def write_sweep_csv(points: Sequence[SweepPoint], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(sweep_csv(points))


def read_sweep_csv(path) -> list[SweepPoint]:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [
        SweepPoint(float(r["alpha"]), int(r["flagged"]),
                   None if r["precision"] == "" else float(r["precision"]), float(r["recall"]))
        for r in rows
    ]
