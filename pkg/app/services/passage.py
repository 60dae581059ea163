"""Last passage times by antidiagonal wavefront dynamic programming.

Every sweep works in offset coordinates (i, j) relative to its origin: i grows
along x and j along y for forward sweeps, both shrink for backward sweeps. A
level k holds the offsets with i + j = k and is stored as a buffer of length
width + 2 where buffer[i + 1] is T at (i, k - i) and every other slot is -inf.
"""

import logging
from collections.abc import Iterator
from dataclasses import dataclass, field

try:
    from enum import StrEnum
except ImportError:  # Python < 3.11
    from enum import Enum

    class StrEnum(str, Enum):
        __str__ = str.__str__
        __format__ = str.__format__

import numpy as np

from app.config import settings
from app.models import ORIGIN, LatticePoint, diagonal, strip_width
from app.services.field import VertexWeights

logger = logging.getLogger(__name__)


class PassageError(ValueError):
    """Base class for passage-time errors."""

    pass


class CapacityError(PassageError):
    """Raised when a full-grid surface would exceed the memory budget."""

    pass


class OrderError(PassageError):
    """Raised when endpoints are not ordered u ⪯ v."""

    pass


class AdmissibilityError(PassageError):
    """Raised when constrained endpoints are unordered or leave the region."""

    pass


class ProfileRangeError(PassageError):
    """Raised for empty or out-of-range profile and segment requests."""

    pass


class Orientation(StrEnum):
    FORWARD = "forward"
    BACKWARD = "backward"


class Storage(StrEnum):
    FULL = "full-grid"
    CHECKPOINTED = "checkpointed"
    WAVEFRONT = "single-wavefront"


# ============== Regions ==============


@dataclass(frozen=True)
class StripRegion:
    """0 ≤ x+y ≤ 2r and |x−y| ≤ floor(θ r^{2/3})."""

    r: int
    theta: float

    def __post_init__(self) -> None:
        if self.r < 1 or self.theta <= 0:
            raise ValueError(f"StripRegion needs r >= 1 and theta > 0, got r={self.r}, theta={self.theta}")

    @property
    def width_w(self) -> int:
        return strip_width(self.r, self.theta)

    def contains(self, p: LatticePoint) -> bool:
        return 0 <= p.x + p.y <= 2 * self.r and abs(p.x - p.y) <= self.width_w


@dataclass(frozen=True)
class Frame:
    origin: LatticePoint
    orientation: Orientation
    width: int
    height: int
    # Optional |x − y| bound in absolute coordinates
    band: int | None = None

    @property
    def last_level(self) -> int:
        return self.width + self.height

    @property
    def _sigma(self) -> int:
        delta = self.origin.x - self.origin.y
        return delta if self.orientation is Orientation.FORWARD else -delta

    def level_range(self, k: int) -> tuple[int, int]:
        lo, hi = max(0, k - self.height), min(k, self.width)
        if self.band is not None:
            a = k - self._sigma
            lo = max(lo, -((self.band - a) // 2))
            hi = min(hi, (a + self.band) // 2)
        return lo, hi

    def to_absolute(self, i: np.ndarray, j: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        if self.orientation is Orientation.FORWARD:
            return self.origin.x + i, self.origin.y + j
        return self.origin.x - i, self.origin.y - j

    def to_offset(self, p: LatticePoint) -> tuple[int, int]:
        if self.orientation is Orientation.FORWARD:
            return p.x - self.origin.x, p.y - self.origin.y
        return self.origin.x - p.x, self.origin.y - p.y

    def contains(self, p: LatticePoint) -> bool:
        i, j = self.to_offset(p)
        return 0 <= i <= self.width and 0 <= j <= self.height


def sweep(
    weights: VertexWeights,
    frame: Frame,
    start: tuple[int, np.ndarray] | None = None,
    last: int | None = None,
) -> Iterator[tuple[int, np.ndarray]]:
    """Yield (level, buffer) for each antidiagonal, resuming after `start` when given."""
    last = frame.last_level if last is None else last
    if start is None:
        first, prev = 0, np.full(frame.width + 2, -np.inf)
    else:
        first, prev = start[0] + 1, start[1]
    for k in range(first, last + 1):
        cur = np.full(frame.width + 2, -np.inf)
        lo, hi = frame.level_range(k)
        if lo <= hi:
            i = np.arange(lo, hi + 1)
            xs, ys = frame.to_absolute(i, k - i)
            w = weights.weights(xs, ys)
            if k == 0:
                cur[1] = w[0]
            else:
                cur[lo + 1 : hi + 2] = w + np.maximum(prev[lo + 1 : hi + 2], prev[lo : hi + 1])
        yield k, cur
        prev = cur


# ============== Surfaces ==============


@dataclass
class PassageSurface:
    source: LatticePoint
    orientation: Orientation
    storage: Storage
    frame: Frame
    weights: VertexWeights
    grid: np.ndarray | None = None
    checkpoints: dict[int, np.ndarray] = field(default_factory=dict)
    final: tuple[int, np.ndarray] | None = None
    interval: int = 0

    def contains(self, p: LatticePoint) -> bool:
        return self.frame.contains(p)

    def value(self, p: LatticePoint) -> float:
        """T between the surface origin and p (−inf outside a band constraint)."""
        if not self.contains(p):
            raise ProfileRangeError(f"{p} outside surface scope")
        i, j = self.frame.to_offset(p)
        if self.grid is not None:
            return float(self.grid[i, j])
        return float(self.level_buffer(i + j)[i + 1])

    def level_buffer(self, k: int) -> np.ndarray:
        if self.grid is not None:
            lo, hi = self.frame.level_range(k)
            buf = np.full(self.frame.width + 2, -np.inf)
            if lo <= hi:
                i = np.arange(lo, hi + 1)
                buf[lo + 1 : hi + 2] = self.grid[i, k - i]
            return buf
        if self.final is not None and self.final[0] == k:
            return self.final[1]
        if self.storage is Storage.CHECKPOINTED:
            return self.recompute((k // self.interval) * self.interval, k)[-1]
        raise PassageError(f"Level {k} not retained by a {self.storage} surface")

    def recompute(self, checkpoint: int, stop: int) -> list[np.ndarray]:
        """Buffers for levels checkpoint..stop rebuilt from a stored checkpoint."""
        buffers = [self.checkpoints[checkpoint]]
        for _, buf in sweep(self.weights, self.frame, start=(checkpoint, buffers[0]), last=stop):
            buffers.append(buf)
        return buffers


def _build_surface(
    weights: VertexWeights,
    frame: Frame,
    storage: Storage,
    max_cells: int | None = None,
    interval: int | None = None,
) -> PassageSurface:
    surface = PassageSurface(
        source=frame.origin,
        orientation=frame.orientation,
        storage=storage,
        frame=frame,
        weights=weights,
    )
    if storage is Storage.FULL:
        budget = settings.full_grid_max_cells if max_cells is None else max_cells
        cells = (frame.width + 1) * (frame.height + 1)
        if cells > budget:
            raise CapacityError(
                f"Full grid of {cells} cells exceeds budget {budget}; use checkpointed or wavefront storage"
            )
        surface.grid = np.full((frame.width + 1, frame.height + 1), -np.inf)
    elif storage is Storage.CHECKPOINTED:
        surface.interval = settings.checkpoint_interval if interval is None else interval
        if surface.interval < 1:
            raise ValueError("checkpoint interval must be positive")

    for k, buf in sweep(weights, frame):
        if surface.grid is not None:
            lo, hi = frame.level_range(k)
            if lo <= hi:
                i = np.arange(lo, hi + 1)
                surface.grid[i, k - i] = buf[lo + 1 : hi + 2]
        elif storage is Storage.CHECKPOINTED and k % surface.interval == 0:
            surface.checkpoints[k] = buf
        if k == frame.last_level:
            surface.final = (k, buf)
    return surface


def _box_frame(source: LatticePoint, corner: LatticePoint, band: int | None = None) -> Frame:
    if not source.precedes(corner):
        raise OrderError(f"{source} does not precede {corner}")
    return Frame(source, Orientation.FORWARD, corner.x - source.x, corner.y - source.y, band)


def passage_full(
    weights: VertexWeights,
    source: LatticePoint,
    corner: LatticePoint,
    max_cells: int | None = None,
) -> PassageSurface:
    """Full-grid forward surface on the box [source, corner]."""
    return _build_surface(weights, _box_frame(source, corner), Storage.FULL, max_cells=max_cells)


def forward_surface(
    weights: VertexWeights,
    source: LatticePoint,
    corner: LatticePoint,
    storage: Storage | None = None,
    max_cells: int | None = None,
    interval: int | None = None,
) -> PassageSurface:
    """Forward surface, full grid when it fits the budget and checkpointed otherwise."""
    frame = _box_frame(source, corner)
    if storage is None:
        budget = settings.full_grid_max_cells if max_cells is None else max_cells
        storage = Storage.FULL if (frame.width + 1) * (frame.height + 1) <= budget else Storage.CHECKPOINTED
        if storage is Storage.CHECKPOINTED:
            logger.debug(f"Box {source}-{corner} exceeds full-grid budget; checkpointing")
    return _build_surface(weights, frame, storage, max_cells=max_cells, interval=interval)


def backward_surface(
    weights: VertexWeights,
    sink: LatticePoint,
    scope: LatticePoint,
    storage: Storage = Storage.FULL,
    max_cells: int | None = None,
    interval: int | None = None,
) -> PassageSurface:
    """Surface of T_{w,sink} for w in the box [scope, sink]."""
    if not scope.precedes(sink):
        raise OrderError(f"{scope} does not precede {sink}")
    frame = Frame(sink, Orientation.BACKWARD, sink.x - scope.x, sink.y - scope.y)
    return _build_surface(weights, frame, storage, max_cells=max_cells, interval=interval)


# ============== Profiles ==============


@dataclass(frozen=True)
class Profile:
    """L[s] = T_{0,(n+s,n−s)} for |s| ≤ s_max."""

    n: int
    s_max: int
    values: np.ndarray

    def __getitem__(self, s: int) -> float:
        if abs(s) > self.s_max:
            raise ProfileRangeError(f"s={s} outside [-{self.s_max}, {self.s_max}]")
        return float(self.values[s + self.s_max])

    def sup_increments(self) -> np.ndarray:
        """M(s) = sup_{|s'|<s} (L[s'] − L[0]) for s = 1..s_max+1 (entry s-1)."""
        d = self.values - self.values[self.s_max]
        k = np.arange(self.s_max + 1)
        both_sides = np.maximum(d[self.s_max + k], d[self.s_max - k])
        return np.maximum.accumulate(both_sides)


def diagonal_profile(weights: VertexWeights, n: int) -> np.ndarray:
    """T_{0,(k,k)} for k = 0..n from one wavefront sweep."""
    if n < 0:
        raise ProfileRangeError(f"n must be >= 0, got {n}")
    out = np.empty(n + 1)
    frame = _box_frame(ORIGIN, diagonal(n))
    for k, buf in sweep(weights, frame):
        if k % 2 == 0:
            out[k // 2] = buf[k // 2 + 1]
    return out


def _final_level(weights: VertexWeights, frame: Frame, last: int) -> np.ndarray:
    buf = None
    for _, buf in sweep(weights, frame, last=last):
        pass
    return buf


def passage_time(weights: VertexWeights, u: LatticePoint, v: LatticePoint) -> float:
    """T_{u,v} from a single wavefront sweep, keeping one level at a time."""
    frame = _box_frame(u, v)
    return float(_final_level(weights, frame, frame.last_level)[frame.width + 1])


def antidiagonal_profile(weights: VertexWeights, n: int, s_max: int) -> Profile:
    if not 0 <= s_max < n:
        raise ProfileRangeError(f"Need 0 <= s_max < n, got s_max={s_max}, n={n}")
    frame = _box_frame(ORIGIN, diagonal(n + s_max))
    buf = _final_level(weights, frame, 2 * n)
    return Profile(n=n, s_max=s_max, values=buf[n - s_max + 1 : n + s_max + 2].copy())


def line_values(weights: VertexWeights, r: int, s_lo: int, s_hi: int) -> np.ndarray:
    """T_{0,(r+s,r−s)} for s = s_lo..s_hi."""
    if not -r <= s_lo <= s_hi <= r:
        raise ProfileRangeError(f"Need -r <= s_lo <= s_hi <= r, got [{s_lo}, {s_hi}] with r={r}")
    frame = _box_frame(ORIGIN, LatticePoint(r + s_hi, r - s_lo))
    buf = _final_level(weights, frame, 2 * r)
    return buf[r + s_lo + 1 : r + s_hi + 2].copy()


def point_to_segment(weights: VertexWeights, r: int, s_lo: int, s_hi: int) -> tuple[float, LatticePoint]:
    """Best passage time from 0 to the segment {(r+s, r−s): s_lo ≤ s ≤ s_hi} and its endpoint."""
    values = line_values(weights, r, s_lo, s_hi)
    best = values.max()
    s = np.arange(s_lo, s_hi + 1)[values == best]
    # Ties go to the smaller |s|, then to positive s
    s_star = int(min(s, key=lambda v: (abs(v), -v)))
    return float(best), LatticePoint(r + s_star, r - s_star)


# ============== Constrained Passage ==============


def passage_constrained(weights: VertexWeights, region: StripRegion, u: LatticePoint, v: LatticePoint) -> float:
    """Best path weight from u to v among monotone paths that stay inside the strip."""
    if not u.precedes(v):
        raise AdmissibilityError(f"{u} does not precede {v}")
    if not (region.contains(u) and region.contains(v)):
        raise AdmissibilityError(f"Endpoints {u}, {v} must lie inside the strip (w={region.width_w})")
    frame = Frame(u, Orientation.FORWARD, v.x - u.x, v.y - u.y, band=region.width_w)
    buf = _final_level(weights, frame, frame.last_level)
    value = float(buf[frame.width + 1])
    if not np.isfinite(value):
        raise AdmissibilityError(f"No in-strip path from {u} to {v}")
    return value


def constrained_surface(weights: VertexWeights, region: StripRegion, u: LatticePoint, corner: LatticePoint) -> PassageSurface:
    """Full-grid in-strip surface from u over the box [u, corner]; −inf outside the strip."""
    if not region.contains(u):
        raise AdmissibilityError(f"Source {u} outside the strip")
    frame = _box_frame(u, corner, band=region.width_w)
    return _build_surface(weights, frame, Storage.FULL)


def constrained_diag(weights: VertexWeights, r: int, theta: float) -> tuple[float, float]:
    """(X_θ, X_*): diagonal passage times confined to R_θ and R_{2θ}."""
    x_theta = passage_constrained(weights, StripRegion(r, theta), ORIGIN, diagonal(r))
    x_star2 = passage_constrained(weights, StripRegion(r, 2 * theta), ORIGIN, diagonal(r))
    return x_theta, x_star2
