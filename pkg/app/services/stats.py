"""Streaming moments, batch-means uncertainty, exponent fits and KS comparison."""

import math
from collections.abc import Callable, Sequence

import numpy as np
from scipy.stats import ks_2samp, kstwobign

from app.config import settings
from app.models import ExponentFit


class ContractError(ValueError):
    """Raised when an operation's preconditions on its inputs are violated."""

    pass


class DegenerateDataError(ValueError):
    """Raised when a statistic is undefined because a variance vanishes."""

    pass


class DomainError(ValueError):
    """Raised for nonpositive coordinates in a log-log fit."""

    pass


# ============== Moment Accumulator ==============


class MomentAccumulator:
    """Mergeable means and centred co-moment sums, with per-batch sub-accumulators."""

    def __init__(self, dim: int, batches: int | None = None):
        if dim < 1:
            raise ContractError(f"dim must be >= 1, got {dim}")
        self.dim = dim
        self.count = 0
        self.means = np.zeros(dim)
        self.comoments = np.zeros((dim, dim))
        n_batches = settings.batch_count if batches is None else batches
        self.batches = [MomentAccumulator(dim, batches=0) for _ in range(n_batches)]

    def push(self, observation: Sequence[float] | np.ndarray, index: int | None = None) -> "MomentAccumulator":
        """Welford update; the observation also goes to batch (index mod B), index defaulting to count."""
        x = np.asarray(observation, dtype=np.float64)
        if x.shape != (self.dim,):
            raise ContractError(f"Observation of shape {x.shape} does not match dim {self.dim}")
        slot = self.count if index is None else index
        self._update(x)
        if self.batches:
            self.batches[slot % len(self.batches)]._update(x)
        return self

    def _update(self, x: np.ndarray) -> None:
        self.count += 1
        delta = x - self.means
        self.means += delta / self.count
        self.comoments += np.outer(delta, delta) * ((self.count - 1) / self.count)

    def merge(self, other: "MomentAccumulator") -> "MomentAccumulator":
        """Combined accumulator (Chan et al. pairwise update); inputs are left untouched."""
        if other.dim != self.dim or len(other.batches) != len(self.batches):
            raise ContractError("Cannot merge accumulators of different shape")
        out = MomentAccumulator(self.dim, batches=0)
        out._combine(self, other)
        out.batches = [a.merge(b) for a, b in zip(self.batches, other.batches, strict=True)]
        return out

    def _combine(self, a: "MomentAccumulator", b: "MomentAccumulator") -> None:
        self.count = a.count + b.count
        if a.count == 0 or b.count == 0:
            src = b if a.count == 0 else a
            self.means = src.means.copy()
            self.comoments = src.comoments.copy()
            return
        delta = b.means - a.means
        self.means = a.means + delta * (b.count / self.count)
        self.comoments = a.comoments + b.comoments + np.outer(delta, delta) * (a.count * b.count / self.count)

    def mean(self, i: int) -> float:
        return float(self.means[i])

    def covariance(self, i: int, j: int) -> float:
        if self.count < 2:
            raise ContractError("Covariance needs at least two observations")
        return float(self.comoments[i, j] / (self.count - 1))

    def variance(self, i: int) -> float:
        return self.covariance(i, i)


# ============== Estimators ==============


def pearson(acc: MomentAccumulator, i: int, j: int) -> float:
    cii, cjj = acc.comoments[i, i], acc.comoments[j, j]
    if cii <= 0 or cjj <= 0:
        raise DegenerateDataError(f"Zero variance in column {i if cii <= 0 else j}")
    return float(np.clip(acc.comoments[i, j] / math.sqrt(cii * cjj), -1.0, 1.0))


def one_minus_correlation(acc: MomentAccumulator, i: int, j: int, diff: int) -> float:
    """1 − ρ(i, j) as (Var D − (σ_i − σ_j)²) / (2 σ_i σ_j), D = column i − column j held in `diff`."""
    si, sj = math.sqrt(acc.variance(i)), math.sqrt(acc.variance(j))
    if si == 0 or sj == 0:
        raise DegenerateDataError("Zero variance in 1 - rho estimate")
    return (acc.variance(diff) - (si - sj) ** 2) / (2 * si * sj)


def batch_stderr(acc: MomentAccumulator, estimator: Callable[[MomentAccumulator], float]) -> float:
    """Standard deviation of per-batch estimates over √B."""
    values = [estimator(batch) for batch in acc.batches]
    return float(np.std(values, ddof=1) / math.sqrt(len(values)))


def correlation(acc: MomentAccumulator, i: int, j: int) -> tuple[float, float]:
    """Pooled Pearson estimate and its batch-means standard error."""
    n_batches = len(acc.batches)
    if n_batches < 2 or acc.count < 2 * n_batches:
        raise ContractError(f"Correlation needs at least 2B={2 * n_batches} observations, got {acc.count}")
    return pearson(acc, i, j), batch_stderr(acc, lambda b: pearson(b, i, j))


def residual_identity(acc: MomentAccumulator, i: int, j: int) -> tuple[float, float]:
    """min_λ Var(U − λV) in closed form versus (1 − ρ̂²) Var U, U and V columns i and j."""
    if acc.count < 2:
        raise ContractError("Residual identity needs at least two observations")
    var_u, var_v, cov = acc.variance(i), acc.variance(j), acc.covariance(i, j)
    if var_u <= 0:
        raise DegenerateDataError(f"Zero variance in column {i}")
    if var_v <= 0:
        return var_u, var_u
    rho = cov / math.sqrt(var_u * var_v)
    return var_u - cov * cov / var_v, (1 - rho * rho) * var_u


def relative_gap(lhs: float, rhs: float) -> float:
    scale = max(abs(lhs), abs(rhs))
    return 0.0 if scale == 0 else abs(lhs - rhs) / scale


def batch_estimate(
    values: np.ndarray,
    sample_index: np.ndarray,
    batches: int,
    estimator: Callable[[np.ndarray], float],
) -> tuple[float, float]:
    """Estimator on all values plus its batch-means standard error (batch = index mod B)."""
    values = np.asarray(values, dtype=np.float64)
    slots = np.asarray(sample_index) % batches
    per_batch = [estimator(values[slots == b]) for b in range(batches)]
    return float(estimator(values)), float(np.std(per_batch, ddof=1) / math.sqrt(batches))


def proportion(hits: np.ndarray) -> tuple[float, float]:
    """Empirical frequency and its binomial standard error."""
    m = len(hits)
    p = float(np.mean(hits)) if m else 0.0
    return p, math.sqrt(p * (1 - p) / m) if m else 0.0


# ============== Exponent Fits ==============


def loglog_points(xs: Sequence[float], ys: Sequence[float], stderrs: Sequence[float] | None = None) -> list[tuple]:
    """Fit points with inverse squared relative stderr weights; unweighted when any stderr is unusable."""
    if stderrs is None or any(not (s and s > 0 and math.isfinite(s)) for s in stderrs):
        return [(x, y) for x, y in zip(xs, ys, strict=True)]
    return [(x, y, (y / s) ** 2) for x, y, s in zip(xs, ys, stderrs, strict=True)]


def fit_loglog(points: Sequence[tuple]) -> ExponentFit:
    """Weighted OLS of ln y on ln x.

    Points are (x, y) or (x, y, weight). Supplied weights are treated as inverse
    variances of ln y, so the slope error comes from them directly; unweighted
    fits scale it by the residual variance instead.
    """
    if len(points) < 3:
        raise ContractError(f"Need at least 3 points, got {len(points)}")
    weighted = all(len(p) == 3 for p in points)
    x = np.array([p[0] for p in points], dtype=np.float64)
    y = np.array([p[1] for p in points], dtype=np.float64)
    w = np.array([p[2] for p in points], dtype=np.float64) if weighted else np.ones(len(points))
    if np.any(x <= 0) or np.any(y <= 0):
        raise DomainError("Log-log fit needs strictly positive coordinates")
    if np.any(w <= 0):
        raise DomainError("Fit weights must be positive")

    lx, ly = np.log(x), np.log(y)
    design = np.column_stack([np.ones_like(lx), lx])
    normal = design.T @ (design * w[:, None])
    intercept, slope = np.linalg.solve(normal, design.T @ (w * ly))
    resid = ly - (intercept + slope * lx)
    cov = np.linalg.inv(normal)
    if not weighted:
        cov = cov * (float(np.sum(w * resid**2)) / (len(points) - 2))

    ly_bar = np.sum(w * ly) / np.sum(w)
    total = float(np.sum(w * (ly - ly_bar) ** 2))
    r_squared = 1.0 - float(np.sum(w * resid**2)) / total if total > 0 else 1.0

    return ExponentFit(
        slope=float(slope),
        intercept=float(intercept),
        slope_stderr=math.sqrt(max(float(cov[1, 1]), 0.0)),
        r_squared=r_squared,
        points=[(float(a), float(b), float(c)) for a, b, c in zip(lx, ly, w, strict=True)],
    )


# ============== Distribution Comparison ==============


def ks_two_sample(a: Sequence[float], b: Sequence[float]) -> tuple[float, float]:
    """Two-sample KS statistic and the asymptotic 1% critical value."""
    if len(a) == 0 or len(b) == 0:
        raise ContractError("KS comparison needs two non-empty samples")
    statistic = float(ks_2samp(a, b).statistic)
    m, n = len(a), len(b)
    critical = float(kstwobign.isf(0.01)) * math.sqrt((m + n) / (m * n))
    return statistic, critical
