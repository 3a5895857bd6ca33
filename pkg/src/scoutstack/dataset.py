"""Player-season data model and CSV/JSON ingestion."""

from __future__ import annotations

import csv
import enum
import io
import json
import logging
import math
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from .errors import DuplicateRecordError, ParseError, SchemaError, ValidationError
from .labeling import LeagueTier

log = logging.getLogger(__name__)

SCHEMA_VERSION = "1"

STAT_NAMES = (
    "minutes",
    "goals",
    "assists",
    "passes",
    "key_passes",
    "tackles",
    "blocks",
    "interceptions",
    "won_duels",
    "successful_dribbles",
    "fouls_won",
    "duels_ratio",
    "dribbles_ratio",
    "fouls_committed",
    "yellow_cards",
    "red_cards",
)
RATIO_STATS = frozenset({"duels_ratio", "dribbles_ratio"})
IDENTITY_COLUMNS = ("player_id", "position", "season")
COLUMNS = IDENTITY_COLUMNS + STAT_NAMES + ("destination_tier",)


class PositionGroup(enum.Enum):
    GOALKEEPER = "Goalkeeper"
    DEFENDER = "Defender"
    MIDFIELDER = "Midfielder"
    ATTACKER = "Attacker"

    @classmethod
    def parse(cls, text: str) -> "PositionGroup":
        key = text.strip().lower()
        for p in cls:
            if p.value.lower() == key:
                return p
        raise ValueError(f"unknown position {text!r}")


@dataclass(frozen=True)
class StatVector:
    minutes: float = 0.0
    goals: float = 0.0
    assists: float = 0.0
    passes: float = 0.0
    key_passes: float = 0.0
    tackles: float = 0.0
    blocks: float = 0.0
    interceptions: float = 0.0
    won_duels: float = 0.0
    successful_dribbles: float = 0.0
    fouls_won: float = 0.0
    duels_ratio: float = 0.0
    dribbles_ratio: float = 0.0
    fouls_committed: float = 0.0
    yellow_cards: float = 0.0
    red_cards: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in STAT_NAMES], dtype=float)

    @classmethod
    def from_array(cls, values) -> "StatVector":
        return cls(**{n: float(v) for n, v in zip(STAT_NAMES, values, strict=True)})


@dataclass(frozen=True)
class PlayerSeasonRecord:
    player_id: str
    position: PositionGroup
    season: str
    stats: StatVector
    destination_tier: Optional[LeagueTier] = None
    label: Optional[float] = None


@dataclass(frozen=True)
class Dataset:
    records: tuple[PlayerSeasonRecord, ...]
    source: str = "<memory>"
    schema_version: str = SCHEMA_VERSION

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def subset(self, indices: Iterable[int]) -> "Dataset":
        return Dataset(tuple(self.records[i] for i in indices), self.source, self.schema_version)

    @property
    def labels(self) -> np.ndarray:
        return np.array([r.label for r in self.records], dtype=float)


@dataclass(frozen=True)
class Violation:
    index: int
    field: str
    rule: str

    def __str__(self) -> str:
        return f"record {self.index}: {self.field} {self.rule}"


def validate_dataset(d: Dataset) -> list[Violation]:
    out = []
    seen: dict[tuple[str, str], int] = {}
    for i, r in enumerate(d.records):
        if not r.player_id:
            out.append(Violation(i, "player_id", "nonempty"))
        for name in STAT_NAMES:
            v = getattr(r.stats, name)
            if not math.isfinite(v):
                out.append(Violation(i, name, "finite"))
            elif v < 0:
                out.append(Violation(i, name, "non-negative"))
            elif name in RATIO_STATS and v > 1:
                out.append(Violation(i, name, "ratio in [0,1]"))
        key = (r.player_id, r.season)
        if key in seen:
            out.append(Violation(i, "player_id,season", f"unique (duplicates record {seen[key]})"))
        else:
            seen[key] = i
    return out


def _number(raw, row: int, name: str) -> float:
    if raw is None or (isinstance(raw, str) and raw.strip() == ""):
        log.warning("row %d: missing %s, defaulting to 0", row, name)
        return 0.0
    if isinstance(raw, bool):
        raise ParseError(f"row {row}: {name} is not numeric: {raw!r}", row=row, field=name)
    try:
        return float(raw)
    except (TypeError, ValueError):
        raise ParseError(f"row {row}: {name} is not numeric: {raw!r}", row=row, field=name) from None


def _record(obj: dict, row: int) -> PlayerSeasonRecord:
    for name in IDENTITY_COLUMNS:
        val = obj.get(name)
        if val is None or str(val).strip() == "":
            raise SchemaError(f"row {row}: missing required field {name!r}", field=name)
    try:
        position = PositionGroup.parse(str(obj["position"]))
    except ValueError as exc:
        raise ParseError(f"row {row}: {exc}", row=row, field="position") from None
    tier_raw = obj.get("destination_tier")
    tier = None
    if tier_raw is not None and str(tier_raw).strip() != "":
        try:
            tier = LeagueTier.parse(str(tier_raw))
        except ValueError as exc:
            raise ParseError(f"row {row}: {exc}", row=row, field="destination_tier") from None
    stats = StatVector(**{n: _number(obj.get(n), row, n) for n in STAT_NAMES})
    return PlayerSeasonRecord(
        player_id=str(obj["player_id"]),
        position=position,
        season=str(obj["season"]),
        stats=stats,
        destination_tier=tier,
    )


def _check(records: list[PlayerSeasonRecord], source: str) -> Dataset:
    d = Dataset(tuple(records), source=source)
    violations = validate_dataset(d)
    dups = [v for v in violations if v.field == "player_id,season"]
    if dups:
        r = d.records[dups[0].index]
        raise DuplicateRecordError(
            f"duplicate (player_id, season) = ({r.player_id!r}, {r.season!r}) at record {dups[0].index}"
        )
    if violations:
        raise ValidationError(violations)
    return d


def parse_dataset(source, fmt: str = "csv", name: str = "<stream>", validate: bool = True) -> Dataset:
    """Parse a dataset from bytes, text, or a binary/text stream.

    Raises SchemaError, ParseError, DuplicateRecordError or ValidationError;
    with ``validate=False`` only structural problems raise and the caller is
    expected to run ``validate_dataset`` itself.
    """
    if hasattr(source, "read"):
        source = source.read()
    if isinstance(source, bytes):
        source = source.decode("utf-8-sig")
    if fmt == "csv":
        reader = csv.DictReader(io.StringIO(source))
        header = reader.fieldnames or []
        for col in IDENTITY_COLUMNS + STAT_NAMES:
            if col not in header:
                raise SchemaError(f"missing required column {col!r}", field=col)
        records = [_record(row, i) for i, row in enumerate(reader)]
    elif fmt == "json":
        try:
            doc = json.loads(source)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc}") from None
        if isinstance(doc, dict):
            version = str(doc.get("schema_version", SCHEMA_VERSION))
            if version != SCHEMA_VERSION:
                raise SchemaError(f"unsupported schema_version {version!r}", field="schema_version")
            if "records" not in doc:
                raise SchemaError("missing key 'records'", field="records")
            doc = doc["records"]
        if not isinstance(doc, list):
            raise SchemaError("expected an array of record objects")
        records = []
        for i, obj in enumerate(doc):
            if not isinstance(obj, dict):
                raise SchemaError(f"row {i}: expected an object")
            for key in IDENTITY_COLUMNS + STAT_NAMES:
                if key not in obj:
                    raise SchemaError(f"row {i}: missing required key {key!r}", field=key)
            records.append(_record(obj, i))
    else:
        raise ValueError(f"unknown dataset format {fmt!r}")
    if not validate:
        return Dataset(tuple(records), source=name)
    return _check(records, name)


def _fmt(x: float) -> str:
    return str(int(x)) if x.is_integer() and abs(x) < 1e15 else repr(x)


def serialize_dataset(d: Dataset, fmt: str = "csv") -> bytes:
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in d.records:
            w.writerow(
                [r.player_id, r.position.value, r.season]
                + [_fmt(getattr(r.stats, n)) for n in STAT_NAMES]
                + [r.destination_tier.value if r.destination_tier else ""]
            )
        return buf.getvalue().encode("utf-8")
    if fmt == "json":
        rows = []
        for r in d.records:
            obj = {"player_id": r.player_id, "position": r.position.value, "season": r.season}
            obj.update({n: getattr(r.stats, n) for n in STAT_NAMES})
            obj["destination_tier"] = r.destination_tier.value if r.destination_tier else None
            rows.append(obj)
        doc = {"schema_version": SCHEMA_VERSION, "records": rows}
        return (json.dumps(doc, indent=1) + "\n").encode("utf-8")
    raise ValueError(f"unknown dataset format {fmt!r}")


def format_for_path(path) -> str:
    return "json" if str(path).lower().endswith(".json") else "csv"


def read_dataset(path, validate: bool = True) -> Dataset:
    with open(path, "rb") as fh:
        return parse_dataset(fh, format_for_path(path), name=str(path), validate=validate)


def write_dataset(d: Dataset, path) -> None:
    with open(path, "wb") as fh:
        fh.write(serialize_dataset(d, format_for_path(path)))


def stat_matrix(records) -> np.ndarray:
    """Stack raw stats into an (n, 16) array in schema order."""
    if not records:
        return np.zeros((0, len(STAT_NAMES)))
    return np.array([[getattr(r.stats, n) for n in STAT_NAMES] for r in records], dtype=float)


__all__ = [
    "COLUMNS",
    "Dataset",
    "PlayerSeasonRecord",
    "PositionGroup",
    "STAT_NAMES",
    "StatVector",
    "Violation",
    "parse_dataset",
    "read_dataset",
    "serialize_dataset",
    "stat_matrix",
    "validate_dataset",
    "write_dataset",
]
