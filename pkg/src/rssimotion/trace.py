"""Ingestion and preprocessing of IMU and RSSI traces.

Raw CSV streams are parsed into immutable samples, the IMU stream is
downsampled with overlapping windows, every RSSI sample is paired with the
nearest IMU sample, and the paired channels are min/max normalized into the
form the estimator consumes.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field, replace
from decimal import ROUND_HALF_EVEN, Decimal, InvalidOperation
from typing import BinaryIO, Iterable, Sequence, TextIO

import numpy as np

from .errors import (
    DegenerateChannel,
    DegenerateChannelWarning,
    EmptyInput,
    InputError,
    InvalidWindow,
    MalformedRow,
    NonMonotonicSequence,
    NonMonotonicTimestamp,
    NoOverlap,
    SeriesTooShort,
    UnknownChannel,
)

CHANNELS = ("rssi", "ax", "ay", "az")
ACCEL_CHANNELS = CHANNELS[1:]

RSSI_MIN_DBM = -150.0
RSSI_MAX_DBM = 30.0

DEFAULT_WINDOW = 10
DEFAULT_OVERLAP = 0.5
DEFAULT_TOLERANCE_MS = 60


@dataclass(frozen=True)
class ImuSample:
    timestamp: int  # ms since trace start
    accel: tuple[float, float, float]  # m/s^2
    gyro: tuple[float, float, float] | None = None  # deg/s, parsed but unused


@dataclass(frozen=True)
class RssiSample:
    timestamp: int  # ms
    rssi: float  # dBm
    seq: int
    tx_power: float | None = None  # dBm


@dataclass(frozen=True)
class NormalizationParams:
    """Per-channel extrema used by the min/max map.

    ``dropped`` lists acceleration axes that were constant over the series;
    those axes are zeroed in the normalized output.
    """

    channel_min: dict[str, float]
    channel_max: dict[str, float]
    dropped: tuple[str, ...] = ()

    def __post_init__(self):
        for ch in CHANNELS:
            if ch not in self.channel_min or ch not in self.channel_max:
                raise InputError(f"normalization params missing channel {ch!r}")
            lo, hi = self.channel_min[ch], self.channel_max[ch]
            if not (math.isfinite(lo) and math.isfinite(hi)):
                raise InputError(f"non-finite extrema for channel {ch!r}")
            if ch not in self.dropped and not hi > lo:
                raise DegenerateChannel(ch)

    def span(self, channel: str) -> float:
        return self.channel_max[channel] - self.channel_min[channel]

    def to_dict(self) -> dict:
        return {
            "channel_min": {ch: self.channel_min[ch] for ch in CHANNELS},
            "channel_max": {ch: self.channel_max[ch] for ch in CHANNELS},
            "dropped_channels": list(self.dropped),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "NormalizationParams":
        try:
            lo = {ch: float(doc["channel_min"][ch]) for ch in CHANNELS}
            hi = {ch: float(doc["channel_max"][ch]) for ch in CHANNELS}
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"invalid normalization document: {exc}") from exc
        return cls(lo, hi, tuple(doc.get("dropped_channels", ())))


def _frozen(a: np.ndarray, dtype) -> np.ndarray:
    out = np.array(a, dtype=dtype)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class AlignedSeries:
    """Paired (RSSI, acceleration) records at a common timeline.

    ``r`` has shape (N,), ``accel`` shape (N, 3). When ``normalization`` is
    set the values are in normalized units, otherwise dBm and m/s^2.
    """

    t_ms: np.ndarray
    r: np.ndarray
    accel: np.ndarray
    period_ms: float
    normalization: NormalizationParams | None = None
    differenced: bool = False
    dropped: int = 0
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        t = _frozen(self.t_ms, np.int64)
        r = _frozen(self.r, float)
        a = _frozen(self.accel, float).reshape(-1, 3)
        if not (t.shape == r.shape == a.shape[:1]) or r.ndim != 1:
            raise InputError("timestamp, rssi and accel lengths differ")
        if not (np.all(np.isfinite(r)) and np.all(np.isfinite(a))):
            raise InputError("aligned series contains non-finite values")
        object.__setattr__(self, "t_ms", t)
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "accel", a)

    def __len__(self) -> int:
        return len(self.r)

    @property
    def normalized(self) -> bool:
        return self.normalization is not None

    def to_dict(self) -> dict:
        return {
            "n": len(self),
            "period_ms": self.period_ms,
            "differenced": self.differenced,
            "dropped": self.dropped,
            "normalization": None if self.normalization is None else self.normalization.to_dict(),
            "t_ms": self.t_ms.tolist(),
            "r": self.r.tolist(),
            "accel": self.accel.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "AlignedSeries":
        try:
            norm = doc.get("normalization")
            return cls(
                t_ms=np.asarray(doc["t_ms"], dtype=np.int64),
                r=np.asarray(doc["r"], dtype=float),
                accel=np.asarray(doc["accel"], dtype=float).reshape(-1, 3),
                period_ms=float(doc["period_ms"]),
                normalization=None if norm is None else NormalizationParams.from_dict(norm),
                differenced=bool(doc.get("differenced", False)),
                dropped=int(doc.get("dropped", 0)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, InputError):
                raise
            raise InputError(f"invalid aligned-series document: {exc}") from exc


# --------------------------------------------------------------------------
# CSV parsing


def _read_rows(source: bytes | BinaryIO) -> list[tuple[int, list[str]]]:
    raw = source if isinstance(source, (bytes, bytearray)) else source.read()
    try:
        text = bytes(raw).decode("utf-8-sig")
    except UnicodeDecodeError as exc:
        raise MalformedRow(1, f"not UTF-8: {exc}") from exc
    rows = []
    for lineno, row in enumerate(csv.reader(io.StringIO(text, newline="")), start=1):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        rows.append((lineno, [c.strip() for c in row]))
    return rows


def _finite(text: str, what: str, lineno: int) -> float:
    try:
        v = float(text)
    except ValueError:
        raise MalformedRow(lineno, f"{what}: cannot parse {text!r}") from None
    if not math.isfinite(v):
        raise MalformedRow(lineno, f"{what}: non-finite value {text!r}")
    return v


def _integer(text: str, what: str, lineno: int) -> int:
    try:
        return int(text)
    except ValueError:
        raise MalformedRow(lineno, f"{what}: not an integer {text!r}") from None


def seconds_to_ms(text: str) -> int:
    """Convert a decimal seconds string to integer ms, rounding half to even."""
    try:
        d = Decimal(text)
    except InvalidOperation:
        raise ValueError(text) from None
    if not d.is_finite():
        raise ValueError(text)
    return int((d * 1000).quantize(Decimal(1), rounding=ROUND_HALF_EVEN))


def _timestamp(unit: str, text: str, lineno: int) -> int:
    if unit == "t_ms":
        return _integer(text, "t_ms", lineno)
    try:
        return seconds_to_ms(text)
    except ValueError:
        raise MalformedRow(lineno, f"t_s: cannot parse {text!r}") from None


def _check_header(rows, required: Sequence[str], optional: Sequence[str]) -> tuple[str, int]:
    if not rows:
        raise MalformedRow(1, "missing header")
    lineno, header = rows[0]
    head = [h.lower() for h in header]
    if head[:1] not in (["t_ms"], ["t_s"]):
        raise MalformedRow(lineno, f"header must start with t_ms or t_s, got {header[:1]}")
    expect = [head[0], *required]
    if head != expect and head != expect + list(optional):
        raise MalformedRow(
            lineno, f"expected header {','.join(expect)}[,{','.join(optional)}], got {','.join(header)}"
        )
    return head[0], len(head)


def parse_imu_csv(source: bytes | BinaryIO) -> list[ImuSample]:
    """Parse an IMU CSV (``t_ms,ax,ay,az[,gx,gy,gz]``).

    A ``t_s`` first column is accepted and converted to integer milliseconds.
    """
    rows = _read_rows(source)
    unit, width = _check_header(rows, ("ax", "ay", "az"), ("gx", "gy", "gz"))
    out: list[ImuSample] = []
    for lineno, row in rows[1:]:
        if len(row) != width:
            raise MalformedRow(lineno, f"expected {width} fields, got {len(row)}")
        t = _timestamp(unit, row[0], lineno)
        accel = tuple(_finite(v, name, lineno) for v, name in zip(row[1:4], ACCEL_CHANNELS))
        gyro = None
        if width == 7:
            gyro = tuple(_finite(v, name, lineno) for v, name in zip(row[4:7], ("gx", "gy", "gz")))
        if out and t <= out[-1].timestamp:
            raise NonMonotonicTimestamp(lineno, out[-1].timestamp, t)
        out.append(ImuSample(t, accel, gyro))
    return out


def parse_rssi_csv(source: bytes | BinaryIO) -> list[RssiSample]:
    """Parse an RSSI CSV (``t_ms,rssi_dbm,seq[,tx_dbm]``)."""
    rows = _read_rows(source)
    unit, width = _check_header(rows, ("rssi_dbm", "seq"), ("tx_dbm",))
    out: list[RssiSample] = []
    for lineno, row in rows[1:]:
        if len(row) != width:
            raise MalformedRow(lineno, f"expected {width} fields, got {len(row)}")
        t = _timestamp(unit, row[0], lineno)
        rssi = _finite(row[1], "rssi_dbm", lineno)
        if not RSSI_MIN_DBM <= rssi <= RSSI_MAX_DBM:
            raise MalformedRow(lineno, f"rssi_dbm {rssi} outside [{RSSI_MIN_DBM}, {RSSI_MAX_DBM}]")
        seq = _integer(row[2], "seq", lineno)
        tx = _finite(row[3], "tx_dbm", lineno) if width == 4 else None
        if out and t <= out[-1].timestamp:
            raise NonMonotonicTimestamp(lineno, out[-1].timestamp, t)
        if out and seq < out[-1].seq:
            raise NonMonotonicSequence(lineno, out[-1].seq, seq)
        out.append(RssiSample(t, rssi, seq, tx))
    return out


def write_imu_csv(samples: Iterable[ImuSample], stream: TextIO) -> None:
    samples = list(samples)
    with_gyro = bool(samples) and all(s.gyro is not None for s in samples)
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(["t_ms", "ax", "ay", "az"] + (["gx", "gy", "gz"] if with_gyro else []))
    for s in samples:
        w.writerow([s.timestamp, *map(repr, s.accel)] + (list(map(repr, s.gyro)) if with_gyro else []))


def write_rssi_csv(samples: Iterable[RssiSample], stream: TextIO) -> None:
    samples = list(samples)
    with_tx = bool(samples) and all(s.tx_power is not None for s in samples)
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(["t_ms", "rssi_dbm", "seq"] + (["tx_dbm"] if with_tx else []))
    for s in samples:
        w.writerow([s.timestamp, repr(s.rssi), s.seq] + ([repr(s.tx_power)] if with_tx else []))


# --------------------------------------------------------------------------
# Preprocessing


def hop_length(window: int, overlap: float) -> int:
    if window < 1 or not 0 <= overlap < 1:
        raise InvalidWindow(f"need window >= 1 and 0 <= overlap < 1, got {window}, {overlap}")
    hop = round(window * (1 - overlap))
    if hop < 1:
        raise InvalidWindow(f"window {window} with overlap {overlap} gives a zero hop")
    return hop


def downsample_imu(
    samples: Sequence[ImuSample], window: int = DEFAULT_WINDOW, overlap: float = DEFAULT_OVERLAP
) -> list[ImuSample]:
    """Average overlapping windows of ``window`` samples.

    Windows start every ``round(window * (1 - overlap))`` samples; a partial
    trailing window is discarded. Output timestamps are the window mean,
    rounded half to even.
    """
    hop = hop_length(window, overlap)
    if not samples:
        raise EmptyInput("no IMU samples to downsample")
    n = len(samples)
    if n < window:
        return []
    t = np.array([s.timestamp for s in samples], dtype=np.int64)
    a = np.array([s.accel for s in samples], dtype=float)
    g = None
    if all(s.gyro is not None for s in samples):
        g = np.array([s.gyro for s in samples], dtype=float)
    out = []
    for start in range(0, n - window + 1, hop):
        sl = slice(start, start + window)
        ts = int(np.round(t[sl].sum() / window))  # np.round is half-even
        gyro = None if g is None else tuple(g[sl].mean(axis=0).tolist())
        out.append(ImuSample(ts, tuple(a[sl].mean(axis=0).tolist()), gyro))
    return out


def align(
    rssi: Sequence[RssiSample], imu: Sequence[ImuSample], tolerance: int = DEFAULT_TOLERANCE_MS
) -> AlignedSeries:
    """Pair each RSSI sample with its nearest IMU sample within ``tolerance`` ms.

    An IMU sample is used at most once: the RSSI sample with the smallest
    gap wins it (earlier RSSI on ties) and the others are dropped. Returns an
    unnormalized series stamped with the RSSI timestamps; ``dropped`` counts
    the RSSI samples left without a partner.
    """
    if not rssi or not imu:
        raise EmptyInput("align needs nonempty RSSI and IMU sequences")
    if tolerance < 0:
        raise InputError(f"tolerance must be non-negative, got {tolerance}")
    t_imu = np.array([s.timestamp for s in imu], dtype=np.int64)
    t_rssi = np.array([s.timestamp for s in rssi], dtype=np.int64)

    right = np.searchsorted(t_imu, t_rssi, side="left")
    left = np.clip(right - 1, 0, len(t_imu) - 1)
    right = np.clip(right, 0, len(t_imu) - 1)
    gap_l = np.abs(t_rssi - t_imu[left])
    gap_r = np.abs(t_imu[right] - t_rssi)
    use_right = gap_r < gap_l  # equal gaps go to the earlier IMU sample
    nearest = np.where(use_right, right, left)
    gap = np.where(use_right, gap_r, gap_l)

    winner: dict[int, int] = {}
    for i in np.flatnonzero(gap <= tolerance):
        j = int(nearest[i])
        prev = winner.get(j)
        if prev is None or gap[i] < gap[prev]:
            winner[j] = int(i)
    if not winner:
        raise NoOverlap(f"no RSSI sample lies within {tolerance} ms of an IMU sample")

    pairs = sorted((i, j) for j, i in winner.items())
    idx_r = [i for i, _ in pairs]
    idx_a = [j for _, j in pairs]
    t = t_rssi[idx_r]
    return AlignedSeries(
        t_ms=t,
        r=[rssi[i].rssi for i in idx_r],
        accel=[imu[j].accel for j in idx_a],
        period_ms=float(np.median(np.diff(t))) if len(t) > 1 else 0.0,
        dropped=len(rssi) - len(pairs),
    )


def difference(series: AlignedSeries) -> AlignedSeries:
    """Replace every channel by its first difference (length N - 1)."""
    if series.normalized:
        raise InputError("difference must be applied before normalization")
    if len(series) < 2:
        raise SeriesTooShort("differencing needs at least 2 samples")
    return replace(
        series,
        t_ms=series.t_ms[1:],
        r=np.diff(series.r),
        accel=np.diff(series.accel, axis=0),
        differenced=True,
    )


def normalize(
    series: AlignedSeries, params: NormalizationParams | None = None
) -> tuple[AlignedSeries, NormalizationParams]:
    """Min/max normalize each channel to [0, 1].

    If ``params`` is given it is applied as-is instead of being estimated, so
    values can fall outside [0, 1]. A constant RSSI channel is an error; a
    constant acceleration axis is dropped (zeroed) with a warning.
    """
    if series.normalized:
        raise InputError("series is already normalized")
    if len(series) < 2:
        raise SeriesTooShort(f"normalization needs at least 2 samples, got {len(series)}")
    cols = np.column_stack([series.r, series.accel])
    if params is None:
        lo, hi = cols.min(axis=0), cols.max(axis=0)
        dropped = []
        for k, ch in enumerate(CHANNELS):
            if hi[k] > lo[k]:
                continue
            if ch == "rssi":
                raise DegenerateChannel(ch)
            warnings.warn(f"acceleration axis {ch} is constant; dropping it", DegenerateChannelWarning)
            dropped.append(ch)
        params = NormalizationParams(
            {ch: float(v) for ch, v in zip(CHANNELS, lo)},
            {ch: float(v) for ch, v in zip(CHANNELS, hi)},
            tuple(dropped),
        )
    out = np.empty_like(cols)
    for k, ch in enumerate(CHANNELS):
        if ch in params.dropped:
            out[:, k] = 0.0
        else:
            out[:, k] = (cols[:, k] - params.channel_min[ch]) / params.span(ch)
    return replace(series, r=out[:, 0], accel=out[:, 1:], normalization=params), params


def denormalize(value: float, channel: str, params: NormalizationParams) -> float:
    """Map a normalized value back to original units."""
    if channel not in CHANNELS:
        raise UnknownChannel(f"unknown channel {channel!r}; expected one of {CHANNELS}")
    return params.channel_min[channel] + value * params.span(channel)


def preprocessing_document(
    params: NormalizationParams,
    window: int,
    overlap: float,
    tolerance_ms: int,
    differenced: bool = False,
) -> dict:
    """JSON-ready record of the alignment and normalization settings."""
    return {
        "window": window,
        "overlap": overlap,
        "tolerance_ms": tolerance_ms,
        "differenced": differenced,
        **params.to_dict(),
    }
