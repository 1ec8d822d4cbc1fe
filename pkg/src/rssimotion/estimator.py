"""Linear MMSE prediction of RSSI from its lag-1 value and 3-axis acceleration.

The predictor is ``r_hat[k] = rho * r[k-1] + alpha . a[k]``. Its optimal
coefficients solve the normal equations ``R = E A`` where ``E`` holds the
regressor correlations and ``R`` the correlations of ``r[k]`` with each
regressor. Two solvers are provided: pivoted Gaussian elimination, and
steepest descent with exact line search on ``1/2 |E A - R|^2`` which needs
only matrix-vector products.

Both solvers work on plain Python lists: at the small sizes involved the
arithmetic, not array-call overhead, then dominates their cost.
"""

from __future__ import annotations

import enum
import itertools
import math
import operator
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import (
    IllConditionedWarning,
    InputError,
    NonPositiveVariance,
    SeriesTooShort,
    SingularSystem,
    ZeroCurvatureWarning,
)
from .trace import AlignedSeries

PIVOT_RTOL = 1e-12
COND_WARN = 1e8
CURVATURE_FLOOR = 1e-300
P_CLAMP_TOL = 1e-10


@dataclass(frozen=True)
class Coefficients:
    rho: float
    alpha: tuple[float, float, float]

    def __post_init__(self):
        alpha = tuple(float(a) for a in self.alpha)
        if len(alpha) != 3:
            raise InputError("alpha must have three components")
        if not all(math.isfinite(v) for v in (self.rho, *alpha)):
            raise InputError("coefficients must be finite")
        object.__setattr__(self, "rho", float(self.rho))
        object.__setattr__(self, "alpha", alpha)

    @classmethod
    def from_vector(cls, v: Sequence[float]) -> "Coefficients":
        if len(v) != 4:
            raise InputError(f"expected 4 coefficients, got {len(v)}")
        return cls(v[0], tuple(v[1:]))

    def as_vector(self) -> np.ndarray:
        return np.array([self.rho, *self.alpha])

    def to_dict(self) -> dict:
        ax, ay, az = self.alpha
        return {"rho": self.rho, "alpha_x": ax, "alpha_y": ay, "alpha_z": az}

    @classmethod
    def from_dict(cls, doc: dict) -> "Coefficients":
        try:
            return cls(doc["rho"], (doc["alpha_x"], doc["alpha_y"], doc["alpha_z"]))
        except (KeyError, TypeError) as exc:
            raise InputError(f"invalid coefficients document: {exc}") from exc


@dataclass(frozen=True)
class CorrelationSystem:
    """Normal equations ``R = E A``.

    ``r_sq_mean`` is the sample mean of ``r[k]^2`` over the same pairs; it is
    needed for the optimal error but is not part of ``E``.
    """

    R: np.ndarray
    E: np.ndarray
    count: int
    r_sq_mean: float = float("nan")

    def __post_init__(self):
        R = np.array(self.R, dtype=float)
        E = np.array(self.E, dtype=float)
        if R.ndim != 1 or E.shape != (R.size, R.size):
            raise InputError(f"incompatible shapes R{R.shape}, E{E.shape}")
        if not (np.all(np.isfinite(R)) and np.all(np.isfinite(E))):
            raise InputError("correlation system contains non-finite values")
        R.setflags(write=False)
        E.setflags(write=False)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "E", E)

    @property
    def size(self) -> int:
        return self.R.size


@dataclass(frozen=True)
class LagMeans:
    """Sample means over the lag-1 pairs: E[r(t)], E[r(t-1)], E[a(t)]."""

    r: float
    r_prev: float
    accel: tuple[float, float, float]


class Init(str, enum.Enum):
    ZERO = "zero"
    RANDOM = "random"  # uniform on [0, 1)


class StopReason(str, enum.Enum):
    MAX_ITERS = "MaxIters"
    GRAD_TOL = "GradTol"
    ZERO_CURVATURE = "ZeroCurvature"


@dataclass(frozen=True)
class GdConfig:
    max_iters: int = 100
    grad_tol: float = 1e-10
    init: Init = Init.ZERO
    rng_seed: int = 42
    record_objective: bool = True  # off: objective_trace stays empty

    def __post_init__(self):
        object.__setattr__(self, "init", Init(self.init))
        if self.max_iters < 1:
            raise InputError(f"max_iters must be >= 1, got {self.max_iters}")
        if not self.grad_tol >= 0:
            raise InputError(f"grad_tol must be >= 0, got {self.grad_tol}")


@dataclass(frozen=True)
class GdReport:
    """Outcome of a gradient-descent run.

    ``objective_trace[k]`` and ``gradient_norms[k]`` belong to the k-th iterate,
    starting with the initial point, so both have ``iterations + 1`` entries
    (the objective trace is empty when recording was switched off).
    """

    solution: tuple[float, ...]
    iterations: int
    objective_trace: tuple[float, ...]
    gradient_norms: tuple[float, ...]
    stop_reason: StopReason

    @property
    def coefficients(self) -> Coefficients:
        return Coefficients.from_vector(self.solution)

    def to_dict(self) -> dict:
        doc = self.coefficients.to_dict() if len(self.solution) == 4 else {"solution": list(self.solution)}
        doc.update(
            iterations=self.iterations,
            stop_reason=self.stop_reason.value,
            objective_trace=list(self.objective_trace),
            gradient_norms=list(self.gradient_norms),
        )
        return doc


@dataclass(frozen=True)
class ErrorStats:
    mean_error: float
    mse_P: float
    rmse: float
    accuracy_pct: float  # 100 * (1 - rmse), rmse on the normalized scale

    def to_dict(self) -> dict:
        return {
            "mean_error": self.mean_error,
            "mse_P": self.mse_P,
            "rmse": self.rmse,
            "accuracy_pct": self.accuracy_pct,
        }


@dataclass(frozen=True)
class Evaluation:
    """One-step-ahead predictions for samples 1..N-1 of a series."""

    stats: ErrorStats
    t_ms: np.ndarray
    actual: np.ndarray
    predicted: np.ndarray


# --------------------------------------------------------------------------
# Correlation system


def _lag_pairs(series: AlignedSeries) -> tuple[np.ndarray, np.ndarray]:
    if len(series) < 2:
        raise SeriesTooShort(f"lag-1 pairing needs N >= 2, got {len(series)}")
    X = np.column_stack([series.r[:-1], series.accel[1:]])
    return X, series.r[1:]


def _system_from_pairs(X: np.ndarray, y: np.ndarray) -> CorrelationSystem:
    n = len(y)
    E = X.T @ X / n
    E = (E + E.T) / 2  # exact symmetry: fp addition commutes
    return CorrelationSystem(R=X.T @ y / n, E=E, count=n, r_sq_mean=float(y @ y / n))


def build_system(series: AlignedSeries) -> CorrelationSystem:
    """Estimate ``R`` and ``E`` as sample means over the N-1 lag-1 pairs."""
    if not series.normalized:
        raise InputError("build_system expects a normalized series")
    return _system_from_pairs(*_lag_pairs(series))


def build_pooled_system(series: Sequence[AlignedSeries]) -> CorrelationSystem:
    """Pool the lag-1 pairs of several series into one system.

    Pairs never straddle two series.
    """
    if not series:
        raise InputError("no series to pool")
    for s in series:
        if not s.normalized:
            raise InputError("build_pooled_system expects normalized series")
    parts = [_lag_pairs(s) for s in series]
    return _system_from_pairs(np.vstack([p[0] for p in parts]), np.concatenate([p[1] for p in parts]))


def lag_means(series: AlignedSeries) -> LagMeans:
    X, y = _lag_pairs(series)
    m = X.mean(axis=0)
    return LagMeans(r=float(y.mean()), r_prev=float(m[0]), accel=tuple(m[1:].tolist()))


# --------------------------------------------------------------------------
# Dense helpers on lists


def _dot(u: Sequence[float], v: Sequence[float]) -> float:
    return sum(map(operator.mul, u, v))


def _symv(S: Sequence[Sequence[float]], v: Sequence[float]) -> list[float]:
    """``S v`` for symmetric ``S``, accumulated column by column."""
    idx = range(len(v))
    out = [0.0] * len(v)
    for j in idx:
        vj = v[j]
        col = S[j]  # row j == column j
        for i in idx:
            out[i] += col[i] * vj
    return out


def _exact_ints(xs: Sequence[float]) -> tuple[list[int], int]:
    """Integers ``X`` and a shift ``k`` with ``xs[i] == X[i] * 2**-k`` exactly."""
    nums, dens = zip(*map(float.as_integer_ratio, xs))
    d = max(dens)  # denominators are powers of two
    return [n * (d // q) for n, q in zip(nums, dens)], d.bit_length() - 1


class _ExactQuadratic:
    """``f(A) = 1/2 A'HA - A'b`` evaluated exactly, then rounded once.

    Correct rounding is monotone, so the recorded values decrease whenever
    the true objective of the iterates does. A float evaluation instead
    jitters by a few ulp once per-step progress falls below the ulp of f.
    """

    def __init__(self, H: Sequence[Sequence[float]], b: Sequence[float]):
        m = len(b)
        # upper triangle row by row, off-diagonal terms doubled (exact in binary)
        upper = [H[i][j] * (1.0 if i == j else 2.0) for i in range(m) for j in range(i, m)]
        self.H, self.kh = _exact_ints(upper)
        self.b, self.kb = _exact_ints(b)

    def __call__(self, A: Sequence[float]) -> float:
        X, ka = _exact_ints(A)
        pairs = itertools.starmap(operator.mul, itertools.combinations_with_replacement(X, 2))
        quad = sum(map(operator.mul, self.H, pairs))
        lin = sum(map(operator.mul, X, self.b))
        s_quad, s_lin = 2 * ka + self.kh + 1, ka + self.kb
        shift = max(s_quad, s_lin)
        # int / int is correctly rounded
        return ((quad << (shift - s_quad)) - (lin << (shift - s_lin))) / (1 << shift)


class _LU:
    """LU factorization with partial pivoting, ``P A = L U``."""

    def __init__(self, A: Sequence[Sequence[float]], pivot_floor: float):
        n = len(A)
        a = [list(map(float, row)) for row in A]
        perm = list(range(n))
        for k in range(n):
            p = max(range(k, n), key=lambda i: abs(a[i][k]))
            if abs(a[p][k]) < pivot_floor or a[p][k] == 0.0:
                raise SingularSystem(
                    f"pivot {abs(a[p][k]):.3e} at column {k} is below {pivot_floor:.3e}"
                )
            if p != k:
                a[k], a[p] = a[p], a[k]
                perm[k], perm[p] = perm[p], perm[k]
            pivot_row = a[k]
            inv = 1.0 / pivot_row[k]
            for i in range(k + 1, n):
                row = a[i]
                f = row[k] * inv
                if f != 0.0:
                    for j in range(k + 1, n):
                        row[j] -= f * pivot_row[j]
                row[k] = f
        self.a = a
        self.perm = perm
        self.n = n

    def solve(self, b: Sequence[float]) -> list[float]:
        a, n = self.a, self.n
        y = [float(b[p]) for p in self.perm]
        for i in range(n):
            row = a[i]
            s = y[i]
            for j in range(i):
                s -= row[j] * y[j]
            y[i] = s
        for i in range(n - 1, -1, -1):
            row = a[i]
            s = y[i]
            for j in range(i + 1, n):
                s -= row[j] * y[j]
            y[i] = s / row[i]
        return y

    def solve_transpose(self, b: Sequence[float]) -> list[float]:
        # A^T x = b  <=>  U^T L^T (P x) = b
        a, n = self.a, self.n
        z = [float(v) for v in b]
        for i in range(n):
            s = z[i]
            for j in range(i):
                s -= a[j][i] * z[j]
            z[i] = s / a[i][i]
        for i in range(n - 1, -1, -1):
            s = z[i]
            for j in range(i + 1, n):
                s -= a[j][i] * z[j]
            z[i] = s
        x = [0.0] * n
        for k, p in enumerate(self.perm):
            x[p] = z[k]
        return x


def _inverse_norm1_estimate(lu: _LU) -> float:
    """Hager's estimate of ``|A^-1|_1`` from an LU factorization."""
    n = lu.n
    x = [1.0 / n] * n
    est = 0.0
    for _ in range(5):
        y = lu.solve(x)
        est = sum(abs(v) for v in y)
        z = lu.solve_transpose([1.0 if v >= 0 else -1.0 for v in y])
        j = max(range(n), key=lambda i: abs(z[i]))
        if abs(z[j]) <= _dot(z, x):
            break
        x = [0.0] * n
        x[j] = 1.0
    return est


def solve_linear(
    E: Sequence[Sequence[float]], R: Sequence[float], check_condition: bool = True
) -> list[float]:
    """Solve ``E x = R`` by Gaussian elimination with partial pivoting.

    Raises SingularSystem when a pivot falls below ``1e-12 * |E|_inf``. With
    ``check_condition`` it also warns (IllConditionedWarning) when the
    estimated 1-norm condition number exceeds 1e8.
    """
    rows = [list(map(float, row)) for row in E]
    norm_inf = max((sum(abs(v) for v in row) for row in rows), default=0.0)
    if norm_inf == 0.0:
        raise SingularSystem("E is the zero matrix")
    lu = _LU(rows, PIVOT_RTOL * norm_inf)
    x = lu.solve(R)
    if not check_condition:
        return x
    norm_1 = max(sum(abs(row[j]) for row in rows) for j in range(len(rows)))
    cond = norm_1 * _inverse_norm1_estimate(lu)
    if cond > COND_WARN:
        warnings.warn(f"E is ill-conditioned (cond_1 ~ {cond:.2e})", IllConditionedWarning, stacklevel=2)
    return x


def _active_indices(system: CorrelationSystem) -> list[int]:
    # A regressor that was zeroed (dropped axis) leaves an all-zero row/column.
    E, R = system.E, system.R
    return [i for i in range(system.size) if E[i].any() or E[:, i].any() or R[i] != 0.0]


def solve_exact(system: CorrelationSystem) -> Coefficients:
    """Optimal coefficients ``A = E^-1 R``.

    Regressors whose row and column of ``E`` are identically zero carry no
    information; their coefficient is fixed at 0 and the rest is solved.
    """
    x = solve_vector(system)
    return Coefficients.from_vector(x)


def solve_vector(system: CorrelationSystem) -> list[float]:
    """Like :func:`solve_exact` for a system of any size; returns the raw vector."""
    active = _active_indices(system)
    if not active:
        raise SingularSystem("E and R are identically zero")
    E = system.E[np.ix_(active, active)].tolist()
    sub = solve_linear(E, system.R[active].tolist())
    x = [0.0] * system.size
    for i, v in zip(active, sub):
        x[i] = v
    return x


def solve_gd(system: CorrelationSystem, config: GdConfig = GdConfig()) -> GdReport:
    """Steepest descent with exact line search on ``f(A) = 1/2 A'E'EA - A'E'R``.

    With ``r_k = E'R - E'E A_k`` the update is ``A_k+1 = A_k + s_k r_k`` where
    ``s_k = |r_k|^2 / (r_k' E'E r_k)``. ``E'E`` and ``E'R`` are formed once, so
    each iteration costs two matrix-vector products plus an exact evaluation
    of the objective for the trace (optional), all O(m^2). Stops after
    ``max_iters`` updates or once ``|r_k| < grad_tol``.
    """
    m = system.size
    E = system.E
    H = E.T @ E
    H = ((H + H.T) / 2).tolist()
    b = (E.T @ system.R).tolist()
    objective_at = _ExactQuadratic(H, b) if config.record_objective else None
    if config.init is Init.ZERO:
        A = [0.0] * m
    else:
        A = np.random.default_rng(config.rng_seed).random(m).tolist()

    objective: list[float] = []
    grad_norms: list[float] = []
    reason = StopReason.MAX_ITERS
    k = 0
    while True:
        HA = _symv(H, A)
        r = [bi - hi for bi, hi in zip(b, HA)]
        rr = _dot(r, r)
        gn = math.sqrt(rr)
        if objective_at is not None:
            objective.append(objective_at(A))
        grad_norms.append(gn)
        if gn < config.grad_tol:
            reason = StopReason.GRAD_TOL
            break
        if k == config.max_iters:
            reason = StopReason.MAX_ITERS
            break
        Hr = _symv(H, r)
        curvature = _dot(r, Hr)
        if curvature <= CURVATURE_FLOOR:
            if rr == 0.0:
                reason = StopReason.GRAD_TOL  # exactly stationary with grad_tol == 0
            else:
                reason = StopReason.ZERO_CURVATURE
                warnings.warn(
                    f"zero curvature along the gradient at iteration {k}; E is degenerate",
                    ZeroCurvatureWarning,
                    stacklevel=2,
                )
            break
        step = rr / curvature
        A = [a + step * ri for a, ri in zip(A, r)]
        k += 1
    return GdReport(
        solution=tuple(A),
        iterations=k,
        objective_trace=tuple(objective),
        gradient_norms=tuple(grad_norms),
        stop_reason=reason,
    )


# --------------------------------------------------------------------------
# Prediction and error statistics


def predict(coeffs: Coefficients, r_prev: float, accel: Sequence[float]) -> float:
    """Raw model output ``rho * r_prev + alpha . accel`` (not clamped)."""
    ax, ay, az = coeffs.alpha
    return coeffs.rho * r_prev + ax * accel[0] + ay * accel[1] + az * accel[2]


def _clamp_p(p: float) -> float:
    return 0.0 if -P_CLAMP_TOL <= p < 0.0 else p


def error_stats_theoretical(
    system: CorrelationSystem, coeffs: Coefficients, means: LagMeans
) -> ErrorStats:
    """Mean and mean-square error implied by the correlations.

    ``P = E[r^2] - rho R_r - alpha . (R_x, R_y, R_z)`` is the mean-square
    error when the coefficients are optimal (the error is then orthogonal to
    every regressor); for other coefficients it is not an MSE.
    """
    alpha = np.asarray(coeffs.alpha)
    mean_error = means.r - coeffs.rho * means.r_prev - float(alpha @ np.asarray(means.accel))
    P = _clamp_p(system.r_sq_mean - coeffs.rho * system.R[0] - float(alpha @ system.R[1:4]))
    rmse = math.sqrt(P) if P >= 0 else float("nan")
    return ErrorStats(mean_error, P, rmse, 100.0 * (1.0 - rmse))


def evaluate(coeffs: Coefficients, series: AlignedSeries) -> Evaluation:
    """One-step-ahead predictions fed with the observed previous RSSI."""
    X, y = _lag_pairs(series)
    pred = X @ coeffs.as_vector()
    resid = y - pred
    rmse = float(np.sqrt(np.mean(resid**2)))
    system = _system_from_pairs(X, y)
    alpha = np.asarray(coeffs.alpha)
    P = _clamp_p(system.r_sq_mean - coeffs.rho * system.R[0] - float(alpha @ system.R[1:4]))
    stats = ErrorStats(
        mean_error=float(resid.mean()),
        mse_P=P,
        rmse=rmse,
        accuracy_pct=100.0 * (1.0 - rmse),
    )
    return Evaluation(stats=stats, t_ms=series.t_ms[1:], actual=y, predicted=pred)


@dataclass(frozen=True)
class GaussianDensity:
    """Normalized Gaussian density of ``r`` given the regressors."""

    mean: float
    variance: float
    _norm: float = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "_norm", 1.0 / math.sqrt(2.0 * math.pi * self.variance))

    def __call__(self, r):
        z = np.asarray(r, dtype=float) - self.mean
        out = self._norm * np.exp(-(z * z) / (2.0 * self.variance))
        return float(out) if out.ndim == 0 else out


def conditional_density(
    coeffs: Coefficients, P: float, r_prev: float, accel: Sequence[float]
) -> Callable:
    """Density of ``r(t)`` given ``r(t-1)`` and ``a(t)``: N(prediction, P)."""
    if not P > 0:
        raise NonPositiveVariance(f"variance must be positive, got {P}")
    return GaussianDensity(predict(coeffs, r_prev, accel), float(P))
