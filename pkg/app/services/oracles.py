"""Brute-force and synthetic oracles behind `lpp-lab selftest`."""

import logging
import math
from dataclasses import dataclass

import numpy as np

from app.models import ORIGIN, LatticePoint, diagonal
from app.services.field import VertexWeights, sample_field
from app.services.geodesic import trace_geodesic
from app.services.passage import (
    StripRegion,
    backward_surface,
    passage_constrained,
    passage_full,
)
from app.services.stats import MomentAccumulator, fit_loglog

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class OracleResult:
    name: str
    passed: bool
    detail: str


def brute_force_passage(
    weights: VertexWeights,
    u: LatticePoint,
    v: LatticePoint,
    region: StripRegion | None = None,
) -> float:
    """Max path weight by visiting every up-right path from u to v, pruned to the strip when one is given."""
    xs, ys = np.meshgrid(np.arange(u.x, v.x + 1), np.arange(u.y, v.y + 1), indexing="ij")
    box = weights.weights(xs.ravel(), ys.ravel()).reshape(xs.shape).tolist()
    width, top = (region.width_w, 2 * region.r) if region is not None else (math.inf, math.inf)
    width_i, height_j = v.x - u.x, v.y - u.y
    best = -math.inf

    def walk(i: int, j: int, total: float) -> None:
        nonlocal best
        x, y = u.x + i, u.y + j
        if abs(x - y) > width or x + y > top:
            return
        total += box[i][j]
        if i == width_i and j == height_j:
            best = max(best, total)
            return
        if i < width_i:
            walk(i + 1, j, total)
        if j < height_j:
            walk(i, j + 1, total)

    walk(0, 0, 0.0)
    return best


def path_enumeration(fields: int = 1000, size: int = 4, seed: int = 20240601) -> OracleResult:
    """DP, backward DP, geodesic weight and vacuous strip constraint against enumeration on small boxes."""
    corner = diagonal(size - 1)
    wide = StripRegion(size, float(size))
    mismatches = 0
    for i in range(fields):
        weights = sample_field(seed, i, size - 1)
        expected = brute_force_passage(weights, ORIGIN, corner)
        surface = passage_full(weights, ORIGIN, corner)
        got = [
            surface.value(corner),
            backward_surface(weights, corner, ORIGIN).value(ORIGIN),
            trace_geodesic(surface, corner).total_weight,
            passage_constrained(weights, wide, ORIGIN, corner),
        ]
        mismatches += any(value != expected for value in got)
    return OracleResult("path_enumeration", mismatches == 0, f"{fields} fields of {size}x{size}, {mismatches} mismatches")


def strip_enumeration(fields: int = 200, r: int = 8, theta: float = 0.5, seed: int = 20240602) -> OracleResult:
    """Banded DP against enumeration of in-strip paths."""
    region = StripRegion(r, theta)
    mismatches = 0
    for i in range(fields):
        weights = sample_field(seed, i, r)
        expected = brute_force_passage(weights, ORIGIN, diagonal(r), region)
        mismatches += passage_constrained(weights, region, ORIGIN, diagonal(r)) != expected
    return OracleResult(
        "strip_enumeration",
        mismatches == 0,
        f"{fields} fields, r={r}, theta={theta} (w={region.width_w}), {mismatches} mismatches",
    )


def two_pass_moments(count: int = 10_000, dim: int = 3, chunk: int = 64, seed: int = 7) -> OracleResult:
    """Chunked streaming moments against numpy's two-pass covariance."""
    rng = np.random.default_rng(seed)
    mixing = rng.normal(size=(dim, dim))
    data = rng.exponential(size=(count, dim)) @ mixing + 1e3
    total = MomentAccumulator(dim, batches=10)
    for start in range(0, count, chunk):
        part = MomentAccumulator(dim, batches=10)
        for k in range(start, min(start + chunk, count)):
            part.push(data[k], index=k)
        total = total.merge(part)
    reference = np.cov(data, rowvar=False)
    streamed = np.array([[total.covariance(i, j) for j in range(dim)] for i in range(dim)])
    scale = np.sqrt(np.outer(np.diag(reference), np.diag(reference)))
    error = float(np.max(np.abs(streamed - reference) / scale))
    mean_error = float(np.max(np.abs(total.means - data.mean(axis=0)) / np.abs(data.mean(axis=0))))
    worst = max(error, mean_error)
    return OracleResult("two_pass_moments", worst < 1e-10, f"max relative error {worst:.2e}")


def slope_recovery(
    trials: int = 500,
    points: int = 8,
    slope: float = 2 / 3,
    noise: float = 0.05,
    seed: int = 11,
) -> OracleResult:
    """Known power laws with lognormal noise: the reported slope stderr should cover the truth."""
    rng = np.random.default_rng(seed)
    xs = np.geomspace(16, 2048, points)
    # weights are 1 / Var(ln y)
    weight = 1 / noise**2
    covered = 0
    for _ in range(trials):
        ys = 3.0 * xs**slope * np.exp(rng.normal(scale=noise, size=points))
        fit = fit_loglog([(float(x), float(y), weight) for x, y in zip(xs, ys, strict=True)])
        covered += abs(fit.slope - slope) <= 2 * fit.slope_stderr
    fraction = covered / trials
    return OracleResult("slope_recovery", fraction >= 0.90, f"{fraction:.1%} of {trials} fits within 2 stderr")


def run_all() -> list[OracleResult]:
    results = [path_enumeration(), strip_enumeration(), two_pass_moments(), slope_recovery()]
    for result in results:
        log = logger.info if result.passed else logger.error
        log(f"Oracle {result.name}: {'ok' if result.passed else 'FAILED'} ({result.detail})")
    return results
