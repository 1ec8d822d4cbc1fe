"""Scalar Kalman filter baseline: predicts RSSI from its own history only.

The state is the RSSI level, modelled as a random walk. Noise variances are
calibrated from a prefix of the series with a centered moving average: the
residual around it stands for measurement noise and the increments of the
average stand for process noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InputError, SeriesTooShort
from .estimator import ErrorStats, Evaluation
from .trace import AlignedSeries

VARIANCE_FLOOR = 1e-8
MA_WINDOW = 5
MIN_CALIB_SAMPLES = 10


@dataclass(frozen=True)
class KalmanParams:
    q: float  # process-noise variance
    r_meas: float  # measurement-noise variance

    def __post_init__(self):
        if not (self.q >= 0 and math.isfinite(self.q)):
            raise InputError(f"q must be finite and >= 0, got {self.q}")
        if not (self.r_meas > 0 and math.isfinite(self.r_meas)):
            raise InputError(f"r_meas must be finite and > 0, got {self.r_meas}")

    def to_dict(self) -> dict:
        return {"q": self.q, "r_meas": self.r_meas}

    @classmethod
    def from_dict(cls, doc: dict) -> "KalmanParams":
        return cls(float(doc["q"]), float(doc["r_meas"]))


@dataclass(frozen=True)
class KalmanState:
    estimate: float
    variance: float


def calibrate(series: AlignedSeries, calib_fraction: float = 0.2) -> KalmanParams:
    """Estimate (q, r_meas) from the first ``calib_fraction`` of the series.

    The residual of a centered 5-point moving average keeps 4/5 of a white
    measurement noise's variance, so its variance is scaled by 5/4. ``q`` is
    the mean squared increment of the moving average, so a steady drift counts
    as process noise.
    """
    if not 0 < calib_fraction <= 0.5:
        raise InputError(f"calib_fraction must be in (0, 0.5], got {calib_fraction}")
    n = int(len(series) * calib_fraction)
    if n < MIN_CALIB_SAMPLES:
        raise SeriesTooShort(f"calibration prefix has {n} samples, need {MIN_CALIB_SAMPLES}")
    x = series.r[:n]
    ma = np.convolve(x, np.full(MA_WINDOW, 1.0 / MA_WINDOW), mode="valid")
    half = MA_WINDOW // 2
    resid = x[half : n - half] - ma
    r_meas = float(np.var(resid)) * MA_WINDOW / (MA_WINDOW - 1)
    q = float(np.mean(np.diff(ma) ** 2))
    return KalmanParams(q=max(q, VARIANCE_FLOOR), r_meas=max(r_meas, VARIANCE_FLOOR))


def step(state: KalmanState, params: KalmanParams, measurement: float) -> tuple[KalmanState, float]:
    """One predict/update cycle; returns the new state and the prior estimate."""
    prediction = state.estimate
    prior_var = state.variance + params.q
    gain = prior_var / (prior_var + params.r_meas)
    estimate = prediction + gain * (measurement - prediction)
    return KalmanState(estimate, prior_var * (1.0 - gain)), prediction


def steady_state_variance(params: KalmanParams) -> float:
    """Positive root of ``v^2 + q v - q r_meas = 0`` (posterior variance)."""
    q, r = params.q, params.r_meas
    # 2 q r / (q + sqrt(q^2 + 4 q r)) avoids cancellation for small q
    disc = math.sqrt(q * q + 4.0 * q * r)
    return 0.0 if q == 0.0 else 2.0 * q * r / (q + disc)


def filter_series(series: AlignedSeries, params: KalmanParams) -> Evaluation:
    """One-step-ahead Kalman predictions for samples 1..N-1.

    The filter starts at ``(r[0], r_meas)``. ``mse_P`` in the returned stats is
    the empirical mean squared residual.
    """
    if len(series) < 2:
        raise SeriesTooShort(f"filtering needs N >= 2, got {len(series)}")
    r = series.r
    state = KalmanState(float(r[0]), params.r_meas)
    pred = np.empty(len(r) - 1)
    for k in range(1, len(r)):
        state, pred[k - 1] = step(state, params, float(r[k]))
    actual = r[1:]
    resid = actual - pred
    mse = float(np.mean(resid**2))
    rmse = math.sqrt(mse)
    stats = ErrorStats(float(resid.mean()), mse, rmse, 100.0 * (1.0 - rmse))
    return Evaluation(stats=stats, t_ms=series.t_ms[1:], actual=actual, predicted=pred)
