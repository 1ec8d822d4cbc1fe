"""RSSI prediction from 3-axis motion data with a linear MMSE model."""

from .estimator import (
    Coefficients,
    CorrelationSystem,
    GdConfig,
    GdReport,
    build_system,
    evaluate,
    predict,
    solve_exact,
    solve_gd,
)
from .trace import AlignedSeries, ImuSample, RssiSample

__all__ = [
    "AlignedSeries",
    "Coefficients",
    "CorrelationSystem",
    "GdConfig",
    "GdReport",
    "ImuSample",
    "RssiSample",
    "build_system",
    "evaluate",
    "predict",
    "solve_exact",
    "solve_gd",
]
