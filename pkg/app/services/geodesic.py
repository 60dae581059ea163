"""Geodesic extraction and geometry."""

from collections.abc import Callable
from dataclasses import dataclass

import numpy as np

from app.models import ORIGIN, DecompositionSample, LatticePoint, diagonal
from app.services.field import MAX_COORD, VertexWeights
from app.services.passage import (
    Orientation,
    PassageSurface,
    Storage,
    backward_surface,
    constrained_diag,
    forward_surface,
    point_to_segment,
)


class GeodesicRangeError(ValueError):
    """Raised for endpoints or levels outside a surface or path."""

    pass


@dataclass(frozen=True)
class Geodesic:
    """Vertices ordered by increasing level, with their field weights."""

    xs: np.ndarray
    ys: np.ndarray
    weights: np.ndarray

    @property
    def total_weight(self) -> float:
        return float(self.weights.sum())

    @property
    def source(self) -> LatticePoint:
        return LatticePoint(int(self.xs[0]), int(self.ys[0]))

    @property
    def endpoint(self) -> LatticePoint:
        return LatticePoint(int(self.xs[-1]), int(self.ys[-1]))

    @property
    def vertices(self) -> list[LatticePoint]:
        return [LatticePoint(int(x), int(y)) for x, y in zip(self.xs, self.ys, strict=True)]

    def __len__(self) -> int:
        return len(self.xs)

    def _index(self, level: int) -> int:
        start = self.source.level
        if not start <= level <= self.endpoint.level:
            raise GeodesicRangeError(f"Level {level} outside [{start}, {self.endpoint.level}]")
        return level - start

    def weight_between(self, lo_level: int, hi_level: int) -> float:
        """Weight of the sub-path between two levels, both ends included."""
        return float(self.weights[self._index(lo_level) : self._index(hi_level) + 1].sum())

    def up_to_level(self, level: int) -> "Geodesic":
        stop = self._index(level) + 1
        return Geodesic(self.xs[:stop], self.ys[:stop], self.weights[:stop])

    def steps_valid(self) -> bool:
        dx, dy = np.diff(self.xs), np.diff(self.ys)
        return bool(np.all(dx + dy == 1) and np.all((dx == 0) | (dx == 1)))


def _walk(value: Callable[[int, int], float], i: int, j: int, stop_level: int, path: list[tuple[int, int]]) -> tuple[int, int]:
    """Backtrack by argmax predecessor down to stop_level; ties step along x."""
    while i + j > stop_level:
        if i == 0:
            j -= 1
        elif j == 0:
            i -= 1
        elif value(i - 1, j) >= value(i, j - 1):
            i -= 1
        else:
            j -= 1
        path.append((i, j))
    return i, j


def trace_geodesic(surface: PassageSurface, endpoint: LatticePoint) -> Geodesic:
    """Geodesic between the surface origin and endpoint."""
    if not surface.contains(endpoint):
        raise GeodesicRangeError(f"{endpoint} outside surface scope")
    i, j = surface.frame.to_offset(endpoint)
    path = [(i, j)]
    if surface.storage is Storage.FULL:
        grid = surface.grid
        if not np.isfinite(grid[i, j]):
            raise GeodesicRangeError(f"{endpoint} is not reachable on this surface")
        _walk(lambda a, b: grid[a, b], i, j, 0, path)
    elif surface.storage is Storage.CHECKPOINTED:
        while i + j > 0:
            c = ((i + j - 1) // surface.interval) * surface.interval
            buffers = surface.recompute(c, i + j)
            i, j = _walk(lambda a, b, bufs=buffers, c=c: bufs[a + b - c][a + 1], i, j, c, path)
    else:
        raise GeodesicRangeError("Single-wavefront surfaces keep no history to trace")

    offsets = np.array(path[::-1], dtype=np.int64)
    xs, ys = surface.frame.to_absolute(offsets[:, 0], offsets[:, 1])
    if surface.orientation is Orientation.BACKWARD:
        # backward offsets run from the sink downward
        xs, ys = xs[::-1], ys[::-1]
    xs, ys = np.ascontiguousarray(xs), np.ascontiguousarray(ys)
    return Geodesic(xs, ys, surface.weights.weights(xs, ys))


def transversal_fluctuation(g: Geodesic) -> int:
    return int(np.abs(g.xs - g.ys).max())


def cross_antidiagonal(g: Geodesic, level: int) -> LatticePoint:
    k = g._index(level)
    return LatticePoint(int(g.xs[k]), int(g.ys[k]))


def overlap(g1: Geodesic, g2: Geodesic) -> int:
    """Number of common vertices."""
    stride = MAX_COORD + 1
    return int(np.intersect1d(g1.xs * stride + g1.ys, g2.xs * stride + g2.ys).size)


def decompose(weights: VertexWeights, r: int, n: int, theta: float) -> DecompositionSample:
    """X, Y, Z, W split of Γ_n at the line x+y=2r, plus X*, X_θ and X_*."""
    if not 0 < r < n:
        raise GeodesicRangeError(f"Need 0 < r < n, got r={r}, n={n}")
    # X* reads the whole line x+y=2r, out to (2r, 0) and (0, 2r)
    reach = max(n, 2 * r)
    if min(weights.extent) < reach:
        raise GeodesicRangeError(f"Field extent {weights.extent} does not cover [0, {reach}]^2 for r={r}, n={n}")
    surface = forward_surface(weights, ORIGIN, diagonal(n))
    gamma_n = trace_geodesic(surface, diagonal(n))
    gamma_r = trace_geodesic(surface, diagonal(r))
    v = cross_antidiagonal(gamma_n, 2 * r)

    y = backward_surface(weights, diagonal(n), diagonal(r), storage=Storage.WAVEFRONT).value(diagonal(r))
    x_star, v_star = point_to_segment(weights, r, -r, r)
    x_theta, x_star2 = constrained_diag(weights, r, theta)

    return DecompositionSample(
        r=r,
        n=n,
        X=gamma_r.total_weight,
        Y=y,
        Z=gamma_n.weight_between(0, 2 * r),
        W=gamma_n.weight_between(2 * r, 2 * n),
        X_star=x_star,
        X_theta=x_theta,
        X_star2=x_star2,
        T_n=gamma_n.total_weight,
        v=v,
        v_star=v_star,
        weight_v=float(gamma_n.weights[2 * r]),
        weight_r=float(gamma_r.weights[-1]),
        overlap_count=overlap(gamma_r, gamma_n.up_to_level(2 * r)),
    )
