"""Potential labels from the league tier a player reached two seasons later."""

from __future__ import annotations

import dataclasses
import enum
from dataclasses import dataclass
from typing import Mapping

from .errors import LabelError

LABELS = (0.0, 0.33, 0.66, 1.0)


class LeagueTier(enum.Enum):
    TOP5 = "top5"
    TOP5_10_EUROPE = "top5_10_europe"
    OTHER_FIRST_DIVISION = "other_first_division"
    SECOND_DIVISION_OR_NONE = "second_division_or_none"

    @classmethod
    def parse(cls, text: str) -> "LeagueTier":
        try:
            return cls(text.strip())
        except ValueError:
            allowed = ", ".join(t.value for t in cls)
            raise ValueError(f"unknown destination_tier {text!r} (expected one of {allowed})") from None


_TIER_LABEL = {
    LeagueTier.TOP5: 1.0,
    LeagueTier.TOP5_10_EUROPE: 0.66,
    LeagueTier.OTHER_FIRST_DIVISION: 0.33,
    LeagueTier.SECOND_DIVISION_OR_NONE: 0.0,
}


def label_for_tier(tier: LeagueTier) -> float:
    return _TIER_LABEL[tier]


def class_index(label: float) -> int:
    """Position of a label in ``LABELS``; raises for anything else."""
    try:
        return LABELS.index(label)
    except ValueError:
        raise LabelError(f"{label!r} is not a potential label {LABELS}") from None


def label_dataset(dataset):
    """Return a copy of ``dataset`` whose records carry their potential label.

    Every record must have a destination tier.
    """
    missing = [r.player_id for r in dataset.records if r.destination_tier is None]
    if missing:
        shown = ", ".join(missing[:10])
        more = "" if len(missing) <= 10 else f" and {len(missing) - 10} more"
        raise LabelError(f"records without destination_tier: {shown}{more}")
    records = tuple(
        dataclasses.replace(r, label=label_for_tier(r.destination_tier)) for r in dataset.records
    )
    return dataclasses.replace(dataset, records=records)


@dataclass(frozen=True)
class ClassDistribution:
    counts: Mapping[float, int]
    total: int

    def as_dict(self) -> dict:
        return {"counts": {f"{k:g}": v for k, v in self.counts.items()}, "total": self.total}


def class_distribution(dataset) -> ClassDistribution:
    counts = {label: 0 for label in LABELS}
    for r in dataset.records:
        if r.label is None:
            raise LabelError(f"record {r.player_id!r} is not labeled")
        counts[LABELS[class_index(r.label)]] += 1
    return ClassDistribution(counts=counts, total=sum(counts.values()))
