import numpy as np
import pytest

from rssimotion.trace import AlignedSeries, NormalizationParams

UNIT = NormalizationParams(
    {"rssi": 0.0, "ax": 0.0, "ay": 0.0, "az": 0.0},
    {"rssi": 1.0, "ax": 1.0, "ay": 1.0, "az": 1.0},
)


def normalized_series(r, accel, period_ms=100.0):
    """Wrap raw arrays as an already-normalized series (identity params)."""
    r = np.asarray(r, dtype=float)
    return AlignedSeries(
        t_ms=np.arange(len(r)) * int(period_ms),
        r=r,
        accel=np.asarray(accel, dtype=float).reshape(-1, 3),
        period_ms=period_ms,
        normalization=UNIT,
    )


def random_series(rng, n=200):
    return normalized_series(rng.random(n), rng.random((n, 3)))


def well_conditioned_spd(rng, m=4):
    M = rng.standard_normal((m, m))
    E = M.T @ M / m + np.eye(m)
    return (E + E.T) / 2


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
