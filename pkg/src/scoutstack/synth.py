"""Seeded synthetic player datasets with a planted potential signal.

Each record gets a class, a position and a latent quality that grows with the
class. Counting stats are Poisson draws whose per-90 rate scales with
``exp(gain * quality)`` for the stats that are informative for the record's
position and is independent of quality otherwise. With complementary errors
on, every position group has its own informative stats, so a single global
view blurs the signal while a positional view sees less data.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .dataset import STAT_NAMES, Dataset, PlayerSeasonRecord, PositionGroup, StatVector
from .errors import ConfigError
from .labeling import LABELS, LeagueTier

POSITIONS = tuple(PositionGroup)
TIERS_BY_CLASS = (
    LeagueTier.SECOND_DIVISION_OR_NONE,
    LeagueTier.OTHER_FIRST_DIVISION,
    LeagueTier.TOP5_10_EUROPE,
    LeagueTier.TOP5,
)

COUNT_STATS = (
    "goals", "assists", "passes", "key_passes", "tackles", "blocks", "interceptions",
    "won_duels", "successful_dribbles", "fouls_won", "fouls_committed", "yellow_cards", "red_cards",
)

# per-90 base rates: Goalkeeper, Defender, Midfielder, Attacker
BASE_RATES = {
    "goals": (0.002, 0.05, 0.12, 0.40),
    "assists": (0.005, 0.06, 0.15, 0.20),
    "passes": (25.0, 45.0, 50.0, 22.0),
    "key_passes": (0.05, 0.5, 1.4, 1.2),
    "tackles": (0.05, 2.2, 1.8, 0.8),
    "blocks": (0.3, 1.0, 0.4, 0.15),
    "interceptions": (0.2, 1.8, 1.1, 0.4),
    "won_duels": (0.8, 5.0, 5.5, 5.0),
    "successful_dribbles": (0.02, 0.4, 1.0, 1.8),
    "fouls_won": (0.2, 0.8, 1.2, 1.6),
    "fouls_committed": (0.1, 1.2, 1.3, 1.4),
    "yellow_cards": (0.05, 0.2, 0.2, 0.15),
    "red_cards": (0.003, 0.01, 0.008, 0.006),
}

INFORMATIVE = {
    PositionGroup.GOALKEEPER: ("passes", "blocks", "won_duels"),
    PositionGroup.DEFENDER: ("tackles", "interceptions"),
    PositionGroup.MIDFIELDER: ("passes", "key_passes"),
    PositionGroup.ATTACKER: ("goals", "successful_dribbles"),
}
SHARED_INFORMATIVE = ("won_duels", "fouls_won")

GAIN = 0.6
SHARED_GAIN = 0.15
RATE_NOISE = 0.25
MIN_MINUTES, MAX_MINUTES = 90, 3420


@dataclass(frozen=True)
class SynthConfig:
    n_records: int = 4000
    class_mix: tuple[float, float, float, float] = (0.55, 0.20, 0.15, 0.10)
    position_mix: tuple[float, float, float, float] = (0.10, 0.35, 0.35, 0.20)
    signal_strength: float = 2.5
    complementary_errors: bool = True
    seed: int = 0
    season: str = "2020-2021"

    def __post_init__(self):
        object.__setattr__(self, "class_mix", tuple(float(x) for x in self.class_mix))
        object.__setattr__(self, "position_mix", tuple(float(x) for x in self.position_mix))
        for name in ("class_mix", "position_mix"):
            mix = getattr(self, name)
            if len(mix) != 4 or any(not 0 <= x <= 1 for x in mix) or abs(sum(mix) - 1) > 1e-9:
                raise ConfigError(f"{name} must be four proportions in [0,1] summing to 1, got {mix}")
        if self.n_records < 8:
            raise ConfigError(f"n_records must be >= 8, got {self.n_records}")
        if self.signal_strength < 0:
            raise ConfigError("signal_strength must be >= 0")

    def to_json(self) -> dict:
        return asdict(self)


def informative_stats(position: PositionGroup, complementary: bool = True) -> tuple[str, ...]:
    if not complementary:
        return tuple(sorted({s for v in INFORMATIVE.values() for s in v}, key=STAT_NAMES.index))
    return INFORMATIVE[position]


def _exact_counts(n: int, mix) -> np.ndarray:
    """Largest-remainder allocation of ``n`` items to proportions ``mix``."""
    raw = np.asarray(mix) * n
    counts = np.floor(raw).astype(int)
    short = n - counts.sum()
    order = np.argsort(-(raw - counts), kind="stable")
    counts[order[:short]] += 1
    return counts


def generate(cfg: SynthConfig = SynthConfig()) -> Dataset:
    rng = np.random.default_rng(cfg.seed)
    n = cfg.n_records
    classes = np.repeat(np.arange(4), _exact_counts(n, cfg.class_mix))
    rng.shuffle(classes)
    pos_idx = rng.choice(4, size=n, p=np.asarray(cfg.position_mix))
    quality = cfg.signal_strength * classes + rng.normal(size=n)
    minutes = rng.integers(MIN_MINUTES, MAX_MINUTES + 1, size=n).astype(float)

    gains = np.zeros((4, len(COUNT_STATS)))
    for p, pos in enumerate(POSITIONS):
        for s in informative_stats(pos, cfg.complementary_errors):
            gains[p, COUNT_STATS.index(s)] = GAIN
        if cfg.complementary_errors:
            for s in SHARED_INFORMATIVE:
                gains[p, COUNT_STATS.index(s)] = max(gains[p, COUNT_STATS.index(s)], SHARED_GAIN)
    base = np.array([BASE_RATES[s] for s in COUNT_STATS]).T  # (position, stat)

    g = gains[pos_idx]
    centre = cfg.signal_strength * 1.5
    log_rate = np.log(base[pos_idx]) + g * (quality - centre)[:, None]
    log_rate += RATE_NOISE * rng.normal(size=log_rate.shape)
    counts = rng.poisson(np.exp(log_rate) * (minutes / 90.0)[:, None]).astype(float)

    won = counts[:, COUNT_STATS.index("won_duels")]
    lost = rng.poisson(won * 0.9 + 0.5).astype(float)
    drib = counts[:, COUNT_STATS.index("successful_dribbles")]
    failed = rng.poisson(drib * 0.8 + 0.5).astype(float)
    duels_ratio = np.where(won + lost > 0, won / np.maximum(won + lost, 1), 0.0)
    dribbles_ratio = np.where(drib + failed > 0, drib / np.maximum(drib + failed, 1), 0.0)

    width = len(str(n))
    records = []
    for i in range(n):
        values = dict(zip(COUNT_STATS, counts[i]))
        values.update(minutes=minutes[i], duels_ratio=round(float(duels_ratio[i]), 4),
                      dribbles_ratio=round(float(dribbles_ratio[i]), 4))
        stats = StatVector(**{k: float(values[k]) for k in STAT_NAMES})
        records.append(PlayerSeasonRecord(
            player_id=f"p{i:0{width}d}",
            position=POSITIONS[pos_idx[i]],
            season=cfg.season,
            stats=stats,
            destination_tier=TIERS_BY_CLASS[classes[i]],
            label=LABELS[classes[i]],
        ))
    return Dataset(tuple(records), source=f"synth(seed={cfg.seed})")
