"""Ranked salient-object ground truth synthesis and saliency-ranking evaluation."""

from .core import (
    PRESETS,
    FixationDensity,
    FixationPoints,
    GenConfig,
    InputError,
    InstanceMap,
    NestedStack,
    ObserverMaskSet,
    RankedGroundTruth,
    RankScores,
    RawDensity,
    SaliencyMap,
    SalRankError,
    Setting,
)

__version__ = "0.1.0"

__all__ = [
    "PRESETS",
    "FixationDensity",
    "FixationPoints",
    "GenConfig",
    "InputError",
    "InstanceMap",
    "NestedStack",
    "ObserverMaskSet",
    "RankedGroundTruth",
    "RankScores",
    "RawDensity",
    "SaliencyMap",
    "SalRankError",
    "Setting",
]
