"""Counter-based i.i.d. Exp(1) vertex-weight environments."""

from dataclasses import dataclass, replace
from typing import Protocol

import numpy as np

from app.models import LatticePoint

# Largest coordinate a field may expose; keeps every path sum below 2^22 so sums are exact
MAX_COORD = 50_000

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_SAMPLE_SALT = np.uint64(0xD1B54A32D192ED03)

# Weights are snapped to the midpoint of their 2^-30 bin (odd multiples of 2^-31)
_QUANT = float(2**30)


class FieldRangeError(IndexError):
    """Raised when a vertex outside the field extent is queried."""

    pass


class VertexWeights(Protocol):
    extent: tuple[int, int]

    def weights(self, xs: np.ndarray, ys: np.ndarray) -> np.ndarray: ...


def _mix64(z: np.ndarray) -> np.ndarray:
    """SplitMix64 finalizer; arrays of uint64 wrap modulo 2^64."""
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


def exponential_from_bits(bits: np.ndarray) -> np.ndarray:
    """Map 64 random bits to an Exp(1) draw via −ln(1−u), u a 53-bit uniform in [0, 1)."""
    u = (bits >> np.uint64(11)).astype(np.float64) * 2.0**-53
    e = -np.log1p(-u)
    return (np.floor(e * _QUANT) + 0.5) / _QUANT


@dataclass(frozen=True)
class WeightField:
    master_seed: int
    sample_index: int
    extent: tuple[int, int]

    def __post_init__(self) -> None:
        if not 0 <= self.master_seed < 2**64:
            raise ValueError(f"master_seed must be a 64-bit unsigned integer, got {self.master_seed}")
        if self.sample_index < 0:
            raise ValueError(f"sample_index must be >= 0, got {self.sample_index}")
        max_x, max_y = self.extent
        if not (0 <= max_x <= MAX_COORD and 0 <= max_y <= MAX_COORD):
            raise ValueError(f"extent {self.extent} outside [0, {MAX_COORD}]^2")

    @property
    def _key(self) -> np.ndarray:
        seed = np.array([self.master_seed], dtype=np.uint64)
        index = np.array([self.sample_index], dtype=np.uint64)
        return _mix64(seed ^ _mix64(index * _SAMPLE_SALT + _GOLDEN))

    def weights(self, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
        """Vectorised weight lookup for coordinate arrays."""
        xs = np.asarray(xs, dtype=np.int64)
        ys = np.asarray(ys, dtype=np.int64)
        _check_extent(self.extent, xs, ys)
        counter = (xs.astype(np.uint64) << np.uint64(32)) | ys.astype(np.uint64)
        key = self._key
        return exponential_from_bits(_mix64(_mix64(counter + key) ^ (key * _GOLDEN)))

    def weight(self, p: LatticePoint) -> float:
        return float(self.weights(np.array([p[0]]), np.array([p[1]]))[0])

    def fork_sample(self, new_index: int) -> "WeightField":
        """Same seed and extent, independent environment."""
        if new_index < 0:
            raise ValueError(f"sample index must be >= 0, got {new_index}")
        return replace(self, sample_index=new_index)

    def with_extent(self, max_x: int, max_y: int) -> "WeightField":
        return replace(self, extent=(max_x, max_y))


class ArrayField:
    """Explicit weights, indexed as values[x, y]."""

    def __init__(self, values: np.ndarray):
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != 2:
            raise ValueError("ArrayField needs a 2-D array")
        self.values = values
        self.extent = (values.shape[0] - 1, values.shape[1] - 1)

    def weights(self, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
        xs = np.asarray(xs, dtype=np.int64)
        ys = np.asarray(ys, dtype=np.int64)
        _check_extent(self.extent, xs, ys)
        return self.values[xs, ys]

    def weight(self, p: LatticePoint) -> float:
        return float(self.weights(np.array([p[0]]), np.array([p[1]]))[0])


def _check_extent(extent: tuple[int, int], xs: np.ndarray, ys: np.ndarray) -> None:
    if xs.size == 0:
        return
    max_x, max_y = extent
    if xs.min() < 0 or ys.min() < 0 or xs.max() > max_x or ys.max() > max_y:
        raise FieldRangeError(f"Vertex outside field extent {extent}")


def sample_field(master_seed: int, sample_index: int, max_x: int, max_y: int | None = None) -> WeightField:
    """Field for one Monte Carlo sample covering [0, max_x] x [0, max_y]."""
    return WeightField(master_seed, sample_index, (max_x, max_x if max_y is None else max_y))
