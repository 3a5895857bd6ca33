"""Stacked feed-forward networks for shortlisting high-potential football players."""

from ._backend import BACKEND
from .dataset import Dataset, PlayerSeasonRecord, PositionGroup, StatVector, parse_dataset, validate_dataset
from .labeling import LeagueTier, class_distribution, label_dataset, label_for_tier
from .pipeline import PipelineConfig, SplitConfig, StackedModel, fit_stacked, predict, split_dataset

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "Dataset",
    "LeagueTier",
    "PipelineConfig",
    "PlayerSeasonRecord",
    "PositionGroup",
    "SplitConfig",
    "StackedModel",
    "StatVector",
    "class_distribution",
    "fit_stacked",
    "label_dataset",
    "label_for_tier",
    "parse_dataset",
    "predict",
    "split_dataset",
    "validate_dataset",
]
