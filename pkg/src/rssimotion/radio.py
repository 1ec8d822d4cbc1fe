"""Link-budget arithmetic and transmit-power selection.

Received power follows the log-distance model
``P_rx[dBm] = K[dB] + P_tx[dBm] - 10 n log10(d)`` with ``n = 2`` for free space.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

from .errors import InputError, NonPositiveDistance, ThresholdBelowSensitivity

DEFAULT_EXPONENT = 2.0
DEFAULT_MARGIN_DB = 3.0
DEFAULT_TX_STEP_DB = 0.5


@dataclass(frozen=True)
class RadioProfile:
    name: str
    sensitivity: float  # dBm
    tx_min: float  # dBm
    tx_max: float  # dBm
    band: str
    sustainable_rate: float  # packets/s

    def __post_init__(self):
        if self.tx_min > self.tx_max:
            raise InputError(f"{self.name}: tx_min {self.tx_min} > tx_max {self.tx_max}")
        if not self.sensitivity < self.tx_min:
            raise InputError(f"{self.name}: sensitivity must lie below tx_min")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "sensitivity_dbm": self.sensitivity,
            "tx_min_dbm": self.tx_min,
            "tx_max_dbm": self.tx_max,
            "band": self.band,
            "rate_pps": self.sustainable_rate,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "RadioProfile":
        try:
            return cls(
                name=str(doc["name"]),
                sensitivity=float(doc["sensitivity_dbm"]),
                tx_min=float(doc["tx_min_dbm"]),
                tx_max=float(doc["tx_max_dbm"]),
                band=str(doc["band"]),
                sustainable_rate=float(doc["rate_pps"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"invalid radio profile: {exc}") from exc


# tx_min values are configuration defaults, not datasheet limits
CC1200 = RadioProfile("cc1200", sensitivity=-123.0, tx_min=-16.0, tx_max=16.0, band="868 MHz", sustainable_rate=2.0)
CC2538 = RadioProfile("cc2538", sensitivity=-97.0, tx_min=-24.0, tx_max=7.0, band="2.4 GHz", sustainable_rate=10.0)
PROFILES = {p.name: p for p in (CC1200, CC2538)}


def load_profile(name_or_path: str | Path) -> RadioProfile:
    """Return a built-in profile by name, or load one from a JSON file."""
    key = str(name_or_path).lower()
    if key in PROFILES:
        return PROFILES[key]
    path = Path(name_or_path)
    if not path.is_file():
        raise InputError(f"unknown radio profile {name_or_path!r} (built-ins: {', '.join(PROFILES)})")
    with path.open(encoding="utf-8") as fh:
        return RadioProfile.from_dict(json.load(fh))


@dataclass(frozen=True)
class PathLossParams:
    k_db: float
    exponent: float = DEFAULT_EXPONENT

    def __post_init__(self):
        if not self.exponent > 0:
            raise InputError(f"path-loss exponent must be positive, got {self.exponent}")

    @property
    def k_linear(self) -> float:
        return 10.0 ** (self.k_db / 10.0)

    def to_dict(self) -> dict:
        return asdict(self)


def _check_distance(distance: float) -> None:
    if not distance > 0:
        raise NonPositiveDistance(f"distance must be positive, got {distance}")


def calibrate_k(
    p_tx: float, distance: float, p_rx_observed: float, exponent: float = DEFAULT_EXPONENT
) -> PathLossParams:
    """Solve the link budget for K from one (P_tx, d, P_rx) observation."""
    _check_distance(distance)
    return PathLossParams(p_rx_observed - p_tx + 10.0 * exponent * math.log10(distance), exponent)


def received_power(params: PathLossParams, p_tx: float, distance: float) -> float:
    """Received power in dBm."""
    _check_distance(distance)
    return params.k_db + p_tx - 10.0 * params.exponent * math.log10(distance)


def received_power_linear(params: PathLossParams, p_tx: float, distance: float) -> float:
    """Same quantity computed on the linear (mW) scale, ``P_rx = K P_tx / d^n``."""
    _check_distance(distance)
    p_rx_mw = params.k_linear * 10.0 ** (p_tx / 10.0) / distance**params.exponent
    return 10.0 * math.log10(p_rx_mw)


@dataclass(frozen=True)
class TxDecision:
    tx: float
    feasible: bool


def select_tx_power(
    predicted_rx: float,
    current_tx: float,
    threshold: float,
    profile: RadioProfile,
    margin: float = DEFAULT_MARGIN_DB,
    step: float = DEFAULT_TX_STEP_DB,
) -> TxDecision:
    """Pick the transmit power that lifts the predicted RSSI to threshold + margin.

    ``predicted_rx`` is the RSSI expected if ``current_tx`` were kept. The
    requested level is rounded up to a multiple of ``step`` and clamped to the
    radio's range; it is infeasible when the request exceeds ``tx_max``.
    """
    if threshold < profile.sensitivity:
        raise ThresholdBelowSensitivity(
            f"threshold {threshold} dBm is below {profile.name} sensitivity {profile.sensitivity} dBm"
        )
    if not step > 0:
        raise InputError(f"tx step must be positive, got {step}")
    requested = current_tx + (threshold + margin) - predicted_rx
    quantized = math.ceil(requested / step - 1e-9) * step
    tx = min(max(quantized, profile.tx_min), profile.tx_max)
    return TxDecision(tx=tx, feasible=requested <= profile.tx_max + 1e-9)


def packet_received(p_rx: float, profile: RadioProfile, soft_threshold: float | None = None) -> bool:
    """True when ``p_rx`` reaches the sensitivity and any soft threshold (inclusive)."""
    floor = profile.sensitivity if soft_threshold is None else max(profile.sensitivity, soft_threshold)
    return p_rx >= floor
