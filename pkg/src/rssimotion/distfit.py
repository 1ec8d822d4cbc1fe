"""Empirical distributions and quantile matching.

If two variables are related by an increasing map, matching their empirical
quantiles level by level traces that map out; a straight line through the
matched pairs with r^2 close to 1 supports a linear model between them.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Sequence, TextIO

import numpy as np

from .errors import EmptyInput, EmptyLevels, InputError, TooFewPoints

DEFAULT_LEVELS = tuple(round(0.01 * k, 2) for k in range(1, 100))


@dataclass(frozen=True)
class Histogram:
    edges: np.ndarray
    counts: np.ndarray
    total: int

    def write_csv(self, stream: TextIO) -> None:
        """Write ``edge,count`` rows; the last edge closes the final bin and has no count."""
        w = csv.writer(stream, lineterminator="\n")
        w.writerow(["edge", "count"])
        for e, c in zip(self.edges[:-1], self.counts):
            w.writerow([repr(float(e)), int(c)])
        w.writerow([repr(float(self.edges[-1])), ""])


def histogram(values: Sequence[float], bins: int) -> Histogram:
    """Equal-width histogram over [min, max].

    Bins are half-open ``[e_k, e_k+1)`` except the last, which is closed so
    the maximum is counted. A constant input gets a unit-width range around
    the value so that all mass lands in a single bin.
    """
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        raise EmptyInput("histogram of an empty sequence")
    if bins < 1:
        raise InputError(f"bins must be >= 1, got {bins}")
    lo, hi = float(v.min()), float(v.max())
    if hi == lo:
        edges = lo + np.arange(bins + 1, dtype=float)
    else:
        edges = np.linspace(lo, hi, bins + 1)
    idx = np.searchsorted(edges, v, side="right") - 1
    idx = np.clip(idx, 0, bins - 1)
    counts = np.bincount(idx, minlength=bins)
    return Histogram(edges=edges, counts=counts, total=int(v.size))


@dataclass(frozen=True)
class Ecdf:
    values: np.ndarray  # sorted ascending

    @property
    def n(self) -> int:
        return len(self.values)

    def __call__(self, x):
        """F(x) = #(samples <= x) / N; accepts scalars or arrays."""
        res = np.searchsorted(self.values, x, side="right") / self.n
        return float(res) if np.ndim(res) == 0 else res

    def quantile(self, p):
        """Inverse CDF: smallest sample v with F(v) >= p."""
        p = np.asarray(p, dtype=float)
        k = np.ceil(p * self.n - 1e-9).astype(int) - 1
        res = self.values[np.clip(k, 0, self.n - 1)]
        return float(res) if res.ndim == 0 else res


def ecdf(values: Sequence[float]) -> Ecdf:
    v = np.sort(np.asarray(values, dtype=float).ravel())
    if v.size == 0:
        raise EmptyInput("ECDF of an empty sequence")
    v.setflags(write=False)
    return Ecdf(v)


@dataclass(frozen=True)
class QuantileMap:
    levels: np.ndarray
    qx: np.ndarray
    qy: np.ndarray

    def write_csv(self, stream: TextIO) -> None:
        w = csv.writer(stream, lineterminator="\n")
        w.writerow(["level", "qx", "qy"])
        for p, a, b in zip(self.levels, self.qx, self.qy):
            w.writerow([repr(float(p)), repr(float(a)), repr(float(b))])


def quantile_map(x: Ecdf, y: Ecdf, levels: Sequence[float] = DEFAULT_LEVELS) -> QuantileMap:
    """Pair the empirical quantiles of ``x`` and ``y`` at each level."""
    lv = np.asarray(levels, dtype=float)
    if lv.size == 0:
        raise EmptyLevels("quantile_map needs at least one level")
    if np.any((lv <= 0) | (lv >= 1)) or np.any(np.diff(lv) <= 0):
        raise InputError("levels must be strictly ascending within (0, 1)")
    return QuantileMap(levels=lv, qx=np.atleast_1d(x.quantile(lv)), qy=np.atleast_1d(y.quantile(lv)))


@dataclass(frozen=True)
class LinearFit:
    slope: float
    intercept: float
    r_squared: float


def linearity_score(qmap: QuantileMap) -> LinearFit:
    """Ordinary least-squares line through the quantile pairs."""
    x, y = qmap.qx, qmap.qy
    if len(x) < 3:
        raise TooFewPoints(f"need at least 3 points, got {len(x)}")
    xm, ym = x.mean(), y.mean()
    sxx = float(np.sum((x - xm) ** 2))
    syy = float(np.sum((y - ym) ** 2))
    sxy = float(np.sum((x - xm) * (y - ym)))
    if sxx == 0.0:
        # vertical stack of points: no slope is defined
        return LinearFit(float("nan"), float("nan"), 0.0)
    slope = sxy / sxx
    intercept = float(ym - slope * xm)
    r2 = 1.0 if syy == 0.0 else min(1.0, max(0.0, sxy * sxy / (sxx * syy)))
    return LinearFit(slope, intercept, r2)
