"""Deterministic synthetic traces with known ground truth.

Wave-like 3-axis acceleration is a sum of sinusoids plus Gaussian noise.
RSSI is produced either by running the linear predictor forward with known
coefficients (``linear`` mode, an exact oracle for the estimator) or from
the log-distance path-loss model driven by the integrated motion
(``pathloss`` mode, where the linear model is only an approximation).

Normalized values map to physical units through fixed affine ranges: RSSI
``[0, 1] -> [-100, -30] dBm`` and acceleration ``[0, 1] -> [-accel_range,
+accel_range] m/s^2``. Ingesting the emitted CSVs with :func:`normalization_params`
therefore reproduces the generator's normalized series.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import InvalidConfig, NonPositiveDistance, TruncatedTraceWarning
from .estimator import Coefficients
from .radio import PathLossParams, received_power
from .trace import (
    ACCEL_CHANNELS,
    RSSI_MAX_DBM,
    RSSI_MIN_DBM,
    AlignedSeries,
    ImuSample,
    NormalizationParams,
    RssiSample,
)

RSSI_DBM_LOW = -100.0
RSSI_DBM_HIGH = -30.0
RSSI_DBM_SPAN = RSSI_DBM_HIGH - RSSI_DBM_LOW
R0 = 0.5


@dataclass(frozen=True)
class WaveComponent:
    amplitude: tuple[float, float, float]  # m/s^2 per axis
    frequency: float  # Hz
    phase: float = 0.0  # rad

    def to_dict(self) -> dict:
        return {"amplitude": list(self.amplitude), "frequency": self.frequency, "phase": self.phase}


@dataclass(frozen=True)
class PathLossConfig:
    params: PathLossParams
    p_tx: float = 0.0  # dBm
    base_distance: float = 50.0  # m
    drift_velocity: float = 0.0  # m/s, positive moves away
    range_axis: int = 0  # acceleration axis pointing along the link

    def to_dict(self) -> dict:
        return {
            "k_db": self.params.k_db,
            "exponent": self.params.exponent,
            "p_tx": self.p_tx,
            "base_distance": self.base_distance,
            "drift_velocity": self.drift_velocity,
            "range_axis": self.range_axis,
        }


@dataclass(frozen=True)
class SynthConfig:
    duration: float = 60.0  # s
    imu_rate: float = 10.0  # Hz
    rssi_rate: float = 10.0  # Hz
    waves: tuple[WaveComponent, ...] = ()
    accel_noise_sigma: float = 0.0  # m/s^2
    true_coefficients: Coefficients = field(default_factory=lambda: Coefficients(0.5, (0.3, 0.2, 0.1)))
    rssi_noise_sigma: float = 0.05  # normalized units; x70 dB in pathloss mode
    mode: str = "linear"
    pathloss: PathLossConfig | None = None
    accel_range: float = 2.0  # m/s^2 mapped to normalized 0 and 1
    seed: int = 0

    def validate(self) -> None:
        if not self.duration > 0:
            raise InvalidConfig(f"duration must be positive, got {self.duration}")
        for name in ("imu_rate", "rssi_rate"):
            rate = getattr(self, name)
            if not 0 < rate <= 1000:
                raise InvalidConfig(f"{name} must be in (0, 1000] Hz, got {rate}")
        for name in ("accel_noise_sigma", "rssi_noise_sigma"):
            if not getattr(self, name) >= 0:
                raise InvalidConfig(f"{name} must be >= 0")
        if not self.accel_range > 0:
            raise InvalidConfig("accel_range must be positive")
        if self.mode not in ("linear", "pathloss"):
            raise InvalidConfig(f"mode must be 'linear' or 'pathloss', got {self.mode!r}")
        if self.mode == "pathloss":
            if self.pathloss is None:
                raise InvalidConfig("pathloss mode needs a pathloss section")
            if self.pathloss.range_axis not in (0, 1, 2):
                raise InvalidConfig("range_axis must be 0, 1 or 2")
        for w in self.waves:
            if len(w.amplitude) != 3 or not w.frequency >= 0:
                raise InvalidConfig(f"bad wave component {w}")

    def to_dict(self) -> dict:
        return {
            "duration": self.duration,
            "imu_rate": self.imu_rate,
            "rssi_rate": self.rssi_rate,
            "waves": [w.to_dict() for w in self.waves],
            "accel_noise_sigma": self.accel_noise_sigma,
            "true_coefficients": self.true_coefficients.to_dict(),
            "rssi_noise_sigma": self.rssi_noise_sigma,
            "mode": self.mode,
            "pathloss": None if self.pathloss is None else self.pathloss.to_dict(),
            "accel_range": self.accel_range,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "SynthConfig":
        doc = dict(doc)
        try:
            if "preset" in doc:
                base = preset(doc.pop("preset"))
                return replace(base, **_fields_from_dict(doc)) if doc else base
            return cls(**_fields_from_dict(doc))
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, InvalidConfig):
                raise
            raise InvalidConfig(f"invalid synth config: {exc}") from exc


def _fields_from_dict(doc: dict) -> dict:
    out = dict(doc)
    if "waves" in out:
        out["waves"] = tuple(
            WaveComponent(tuple(float(a) for a in w["amplitude"]), float(w["frequency"]), float(w.get("phase", 0.0)))
            for w in out["waves"]
        )
    if "true_coefficients" in out:
        out["true_coefficients"] = Coefficients.from_dict(out["true_coefficients"])
    if out.get("pathloss") is not None:
        pl = dict(out["pathloss"])
        params = PathLossParams(float(pl.pop("k_db")), float(pl.pop("exponent", 2.0)))
        out["pathloss"] = PathLossConfig(params=params, **pl)
    unknown = set(out) - set(SynthConfig.__dataclass_fields__)
    if unknown:
        raise InvalidConfig(f"unknown synth config fields: {sorted(unknown)}")
    return out


def _preset_waves(a: float, f: float) -> tuple[WaveComponent, ...]:
    # dominant swell plus two weaker cross components so the axes are not collinear
    return (
        WaveComponent((a, 0.5 * a, 0.8 * a), f, 0.0),
        WaveComponent((0.3 * a, 0.6 * a, 0.1 * a), 1.7 * f, 1.1),
        WaveComponent((0.1 * a, 0.25 * a, 0.4 * a), 2.9 * f, 2.3),
    )


PRESETS = {
    # bigger, longer waves
    "southbeach": dict(waves=_preset_waves(0.8, 0.2), accel_noise_sigma=0.05),
    # shorter, faster waves
    "crandon": dict(waves=_preset_waves(0.4, 0.6), accel_noise_sigma=0.05),
}


def preset(name: str, **overrides) -> SynthConfig:
    try:
        base = PRESETS[name]
    except KeyError:
        raise InvalidConfig(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    return SynthConfig(**{**base, **overrides})


def _streams(seed: int) -> tuple[np.random.Generator, np.random.Generator]:
    motion_ss, rssi_ss = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(motion_ss), np.random.default_rng(rssi_ss)


def _sample_times(duration: float, rate: float) -> tuple[np.ndarray, np.ndarray]:
    n = int(math.floor(duration * rate + 1e-9))
    k = np.arange(n)
    t_s = k / rate
    t_ms = np.rint(1000.0 * t_s).astype(np.int64)  # half-even, like round()
    return t_s, t_ms


def _motion_array(config: SynthConfig) -> tuple[np.ndarray, np.ndarray]:
    t_s, t_ms = _sample_times(config.duration, config.imu_rate)
    accel = np.zeros((len(t_s), 3))
    for w in config.waves:
        accel += np.outer(np.sin(2.0 * np.pi * w.frequency * t_s + w.phase), w.amplitude)
    if config.accel_noise_sigma > 0:
        rng, _ = _streams(config.seed)
        accel += rng.normal(0.0, config.accel_noise_sigma, size=accel.shape)
    return t_ms, accel


def generate_motion(config: SynthConfig) -> list[ImuSample]:
    """Sum-of-sinusoids acceleration sampled at ``imu_rate``."""
    config.validate()
    t_ms, accel = _motion_array(config)
    return [ImuSample(int(t), tuple(a)) for t, a in zip(t_ms.tolist(), accel.tolist())]


def _motion_at_rssi_times(config: SynthConfig, motion: Sequence[ImuSample]):
    if not motion:
        raise InvalidConfig("motion trace is empty")
    t_imu = np.array([s.timestamp for s in motion], dtype=np.int64)
    accel = np.array([s.accel for s in motion], dtype=float)
    _, t_ms = _sample_times(config.duration, config.rssi_rate)
    t_ms = t_ms[t_ms >= t_imu[0]]
    idx = np.searchsorted(t_imu, t_ms, side="right") - 1  # latest IMU sample at or before
    return t_ms, idx, accel


def normalize_accel(accel: np.ndarray, accel_range: float) -> np.ndarray:
    return (np.asarray(accel, dtype=float) + accel_range) / (2.0 * accel_range)


def rssi_to_dbm(r: np.ndarray) -> np.ndarray:
    return RSSI_DBM_LOW + RSSI_DBM_SPAN * np.asarray(r, dtype=float)


def normalization_params(config: SynthConfig) -> NormalizationParams:
    """The fixed affine maps the generator uses, as normalization parameters."""
    lo = {"rssi": RSSI_DBM_LOW, **{ch: -config.accel_range for ch in ACCEL_CHANNELS}}
    hi = {"rssi": RSSI_DBM_HIGH, **{ch: config.accel_range for ch in ACCEL_CHANNELS}}
    return NormalizationParams(lo, hi)


def linear_ground_truth(config: SynthConfig, motion: Sequence[ImuSample]) -> AlignedSeries:
    """Normalized series produced by the generating linear model.

    ``r[0] = 0.5``, then ``r[k] = rho r[k-1] + alpha . a[k] + noise`` with
    ``a[k]`` the normalized IMU sample at or before the k-th RSSI time.
    """
    config.validate()
    t_ms, idx, accel = _motion_at_rssi_times(config, motion)
    if len(t_ms) < 2:
        raise InvalidConfig("trace too short: fewer than 2 RSSI samples")
    a = normalize_accel(accel[idx], config.accel_range)
    _, rng = _streams(config.seed)
    noise = rng.normal(0.0, config.rssi_noise_sigma, size=len(t_ms)) if config.rssi_noise_sigma > 0 else np.zeros(len(t_ms))
    drive = a @ np.asarray(config.true_coefficients.alpha) + noise
    rho = config.true_coefficients.rho
    r = np.empty(len(t_ms))
    r[0] = R0
    for k in range(1, len(r)):
        r[k] = rho * r[k - 1] + drive[k]
    return AlignedSeries(
        t_ms=t_ms,
        r=r,
        accel=a,
        period_ms=1000.0 / config.rssi_rate,
        normalization=normalization_params(config),
    )


def _check_dbm(dbm: np.ndarray) -> None:
    if np.any(dbm < RSSI_MIN_DBM) or np.any(dbm > RSSI_MAX_DBM):
        raise InvalidConfig(
            f"generated RSSI leaves [{RSSI_MIN_DBM}, {RSSI_MAX_DBM}] dBm; reduce coefficients or noise"
        )


def generate_rssi_linear(config: SynthConfig, motion: Sequence[ImuSample]) -> list[RssiSample]:
    """RSSI from the forward linear model, mapped to dBm."""
    if config.mode != "linear":
        raise InvalidConfig("generate_rssi_linear needs mode='linear'")
    truth = linear_ground_truth(config, motion)
    dbm = rssi_to_dbm(truth.r)
    _check_dbm(dbm)
    return [RssiSample(int(t), float(v), k) for k, (t, v) in enumerate(zip(truth.t_ms.tolist(), dbm.tolist()))]


def displacement(accel_range_axis: np.ndarray, dt: float) -> np.ndarray:
    """Trapezoidal double integration from rest."""
    a = np.asarray(accel_range_axis, dtype=float)
    v = np.concatenate([[0.0], np.cumsum((a[1:] + a[:-1]) * (dt / 2.0))])
    return np.concatenate([[0.0], np.cumsum((v[1:] + v[:-1]) * (dt / 2.0))])


def generate_rssi_pathloss(config: SynthConfig, motion: Sequence[ImuSample]) -> list[RssiSample]:
    """RSSI from the path-loss model at a distance perturbed by the motion.

    ``d(t) = base_distance + drift_velocity t + x(t)`` where ``x`` integrates
    the acceleration along ``range_axis`` twice. The trace is cut (with a
    warning) where the distance would become non-positive.
    """
    if config.mode != "pathloss":
        raise InvalidConfig("generate_rssi_pathloss needs mode='pathloss'")
    config.validate()
    pl = config.pathloss
    t_ms, idx, accel = _motion_at_rssi_times(config, motion)
    x = displacement(accel[:, pl.range_axis], 1.0 / config.imu_rate)
    dist = pl.base_distance + pl.drift_velocity * (t_ms / 1000.0) + x[idx]
    bad = np.flatnonzero(dist <= 0)
    if bad.size:
        if bad[0] == 0:
            raise NonPositiveDistance("distance is non-positive at the start of the trace")
        warnings.warn(
            f"distance reaches zero at t={t_ms[bad[0]]} ms; truncating the trace", TruncatedTraceWarning
        )
        t_ms, dist = t_ms[: bad[0]], dist[: bad[0]]
    _, rng = _streams(config.seed)
    noise_db = config.rssi_noise_sigma * RSSI_DBM_SPAN
    noise = rng.normal(0.0, noise_db, size=len(t_ms)) if noise_db > 0 else np.zeros(len(t_ms))
    dbm = np.array([received_power(pl.params, pl.p_tx, d) for d in dist]) + noise
    _check_dbm(dbm)
    return [
        RssiSample(int(t), float(v), k, pl.p_tx) for k, (t, v) in enumerate(zip(t_ms.tolist(), dbm.tolist()))
    ]


def generate(config: SynthConfig) -> tuple[list[ImuSample], list[RssiSample]]:
    """Motion and RSSI for either mode."""
    config.validate()
    motion = generate_motion(config)
    if config.mode == "linear":
        return motion, generate_rssi_linear(config, motion)
    return motion, generate_rssi_pathloss(config, motion)
