"""Python face of the lithology routing core.

The heavy lifting lives in the compiled `_core` extension; this package just
re-exports it under stable names.
"""

from ._core import (
    ChannelTrend,
    ClassMetrics,
    ConfusionStats,
    CoverageCurve,
    CoveragePoint,
    DepthWindow,
    MetricsReport,
    Neighbor,
    ReferenceSet,
    RoutingDecision,
    ThresholdCalibration,
    TrendSummary,
    WellLogSequence,
    analyze_trend,
    calibrate_threshold,
    coverage_curve,
    decide,
    default_threshold_grid,
    flying_point_ratio,
    make_windows,
    refine_deterministic,
    retrieve_neighbors,
    weighted_metrics,
)

__all__ = [
    "ChannelTrend",
    "ClassMetrics",
    "ConfusionStats",
    "CoverageCurve",
    "CoveragePoint",
    "DepthWindow",
    "MetricsReport",
    "Neighbor",
    "ReferenceSet",
    "RoutingDecision",
    "ThresholdCalibration",
    "TrendSummary",
    "WellLogSequence",
    "analyze_trend",
    "calibrate_threshold",
    "coverage_curve",
    "decide",
    "default_threshold_grid",
    "flying_point_ratio",
    "make_windows",
    "refine_deterministic",
    "retrieve_neighbors",
    "weighted_metrics",
]
