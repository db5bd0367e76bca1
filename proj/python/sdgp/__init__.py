"""Structured data gradient pruning: n:m pruning, training and the speedup model."""

from ._core import (
    ConfigError,
    DimensionError,
    FormatError,
    InputError,
    StateError,
    estimate_speedup,
    estimate_speedup_for_ratio,
    estimate_tta,
    keep_set,
    load_config,
    prune,
    read_metrics,
    train,
)

__all__ = [
    "ConfigError",
    "DimensionError",
    "FormatError",
    "InputError",
    "StateError",
    "estimate_speedup",
    "estimate_speedup_for_ratio",
    "estimate_tta",
    "keep_set",
    "load_config",
    "prune",
    "read_metrics",
    "train",
]
