import hashlib
import math
from datetime import datetime
from pathlib import Path
from typing import Literal, NamedTuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.config import settings

# ============== Lattice Models ==============


class LatticePoint(NamedTuple):
    x: int
    y: int

    @property
    def level(self) -> int:
        """Anti-diagonal level d(u) = x + y."""
        return self.x + self.y

    def precedes(self, other: "LatticePoint") -> bool:
        """Partial order u ⪯ v."""
        return self.x <= other.x and self.y <= other.y


ORIGIN = LatticePoint(0, 0)


def diagonal(k: int) -> LatticePoint:
    return LatticePoint(k, k)


# ============== Estimate Models ==============


class ExponentFit(BaseModel):
    slope: float
    intercept: float
    slope_stderr: float
    r_squared: float
    # (log x, log y, weight)
    points: list[tuple[float, float, float]] = Field(default_factory=list)


class DecompositionSample(BaseModel):
    """One environment's X, Y, Z, W split of the polymer at the line x+y=2r."""

    r: int
    n: int
    X: float
    Y: float
    Z: float
    W: float
    X_star: float
    X_theta: float
    X_star2: float
    T_n: float
    v: LatticePoint
    v_star: LatticePoint
    weight_v: float
    weight_r: float
    overlap_count: int

    def junction_holds(self) -> bool:
        return self.Z + self.W - self.weight_v == self.T_n

    def sandwich_holds(self) -> bool:
        """Z ≤ X* and Y − W ≤ Z − X with the line vertices left out."""
        return self.Z <= self.X_star and self.Y - self.W <= (self.Z - self.weight_v) - (self.X - self.weight_r)


class GridEstimate(BaseModel):
    quantity: str
    x: float
    value: float
    stderr: float | None = None


# ============== Experiment Models ==============


ExperimentName = Literal[
    "corr_decay",
    "corr_close",
    "profile_fluct",
    "constrained_variance",
    "decomposition",
    "geodesic_localization",
    "moddev",
    "transversal",
    "rectangle_pairs",
]

# Independent environments per sample: stream j of sample i reads field index i * FIELD_STREAMS + j
FIELD_STREAMS = 16

GRID_FIELDS = ("r_grid", "gap_grid", "n_grid", "s_grid", "t_grid", "theta_grid", "h_grid", "k_grid")


def strip_width(r: int, theta: float) -> int:
    """floor(θ · r^{2/3}), guarded against cube-root round-off."""
    return math.floor(theta * math.cbrt(r * r) + 1e-9)


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    experiment: ExperimentName
    n: int = Field(..., ge=1)
    r: int | None = Field(None, ge=1)

    r_grid: list[int] = Field(default_factory=list)
    gap_grid: list[int] = Field(default_factory=list)
    n_grid: list[int] = Field(default_factory=list)
    s_grid: list[int] = Field(default_factory=list)
    t_grid: list[float] = Field(default_factory=list)
    theta_grid: list[float] = Field(default_factory=list)
    h_grid: list[float] = Field(default_factory=list)
    k_grid: list[float] = Field(default_factory=list)

    # Strip parameter for X_theta in the decomposition
    theta: float = Field(1.0, gt=0)
    # Source points per sample in rectangle_pairs
    sources: int = Field(16, ge=1)

    samples: int = Field(..., ge=0)
    master_seed: int = Field(0, ge=0, lt=2**64)
    workers: int = Field(default_factory=lambda: settings.threads, ge=1)
    chunk_size: int = Field(default_factory=lambda: settings.chunk_size, ge=1)
    batches: int = Field(default_factory=lambda: settings.batch_count, ge=2)
    tolerances: dict[str, float] = Field(default_factory=dict)
    out_path: Path | None = None

    @field_validator(*GRID_FIELDS)
    @classmethod
    def validate_grid(cls, v: list[float]) -> list[float]:
        if any(x <= 0 for x in v):
            raise ValueError("grid values must be strictly positive")
        if any(b <= a for a, b in zip(v, v[1:], strict=False)):
            raise ValueError("grid values must be sorted ascending without repeats")
        return v

    @model_validator(mode="after")
    def validate_regime(self) -> "ExperimentConfig":
        check = _REGIME_CHECKS.get(self.experiment)
        if check is not None:
            check(self)
        if self.samples < 2 * self.batches:
            raise ValueError(f"samples={self.samples} must be at least 2*batches={2 * self.batches}")
        return self

    def config_hash(self) -> str:
        """Hash of every field that can influence a sample."""
        payload = self.model_dump_json(exclude={"workers", "out_path"})
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()

    def decomposition_pairs(self) -> list[tuple[int, int]]:
        if self.n_grid:
            return list(zip(self.r_grid, self.n_grid, strict=True))
        return [(r, self.n) for r in self.r_grid]


def _require(config: ExperimentConfig, *names: str) -> None:
    for name in names:
        if not getattr(config, name):
            raise ValueError(f"{config.experiment} requires a non-empty {name}")


def _check_corr_decay(config: ExperimentConfig) -> None:
    _require(config, "r_grid")
    if max(config.r_grid) * 4 > config.n:
        raise ValueError(f"regime violation: max(r_grid)={max(config.r_grid)} exceeds n/4={config.n / 4:g}")


def _check_corr_close(config: ExperimentConfig) -> None:
    _require(config, "gap_grid")
    if max(config.gap_grid) * 4 > config.n:
        raise ValueError(f"regime violation: max(gap_grid)={max(config.gap_grid)} exceeds n/4={config.n / 4:g}")


def _check_profile_fluct(config: ExperimentConfig) -> None:
    _require(config, "s_grid")
    bound = 0.3 * math.cbrt(config.n * config.n)
    if max(config.s_grid) > bound + 1e-9:
        raise ValueError(f"regime violation: max(s_grid)={max(config.s_grid)} exceeds 0.3*n^(2/3)={bound:.3f}")


def _check_localization(config: ExperimentConfig) -> None:
    _require(config, "s_grid", "t_grid")
    s = max(config.s_grid)
    if s**1.5 * max(config.t_grid) > config.n:
        raise ValueError(f"regime violation: s^(3/2)*max(t_grid)={s**1.5 * max(config.t_grid):g} exceeds n={config.n}")
    if s >= config.n:
        raise ValueError(f"regime violation: s={s} must be below n={config.n}")


def _check_constrained_variance(config: ExperimentConfig) -> None:
    _require(config, "r", "theta_grid")
    if max(config.theta_grid) > 4:
        raise ValueError(f"theta_grid must lie in (0, 4], got max {max(config.theta_grid)}")
    width = strip_width(config.r, min(config.theta_grid))
    if width < 2:
        raise ValueError(f"strip degenerate: width {width} < 2 at theta={min(config.theta_grid)}")


def _check_decomposition(config: ExperimentConfig) -> None:
    _require(config, "r_grid")
    if config.n_grid and len(config.n_grid) != len(config.r_grid):
        raise ValueError("decomposition pairs r_grid with n_grid; lengths differ")
    if len(config.r_grid) > FIELD_STREAMS:
        raise ValueError(f"decomposition supports at most {FIELD_STREAMS} (r, n) pairs")
    for r, n in config.decomposition_pairs():
        if 2 * r >= n:
            raise ValueError(f"regime violation: r={r} must be below n/2={n / 2:g}")


def _check_moddev(config: ExperimentConfig) -> None:
    _require(config, "h_grid", "n_grid")
    if min(config.h_grid) < 0.5 or max(config.h_grid) > 2:
        raise ValueError("h_grid must lie in [1/2, 2]")
    if len(config.n_grid) < 3:
        raise ValueError("moddev needs at least three n_grid values for the variance slope")
    if len(config.n_grid) >= FIELD_STREAMS:
        raise ValueError(f"moddev supports at most {FIELD_STREAMS - 1} n_grid values")


def _check_transversal(config: ExperimentConfig) -> None:
    _require(config, "r_grid", "k_grid")


def _check_rectangle_pairs(config: ExperimentConfig) -> None:
    _require(config, "r_grid")
    if max(config.r_grid) > 512:
        raise ValueError(f"regime violation: rectangle_pairs needs r <= 512, got {max(config.r_grid)}")
    if config.sources > 64:
        raise ValueError(f"rectangle_pairs needs at most 64 sources, got {config.sources}")
    if len(config.r_grid) > FIELD_STREAMS:
        raise ValueError(f"rectangle_pairs supports at most {FIELD_STREAMS} r values")


_REGIME_CHECKS = {
    "corr_decay": _check_corr_decay,
    "corr_close": _check_corr_close,
    "profile_fluct": _check_profile_fluct,
    "geodesic_localization": _check_localization,
    "constrained_variance": _check_constrained_variance,
    "decomposition": _check_decomposition,
    "moddev": _check_moddev,
    "transversal": _check_transversal,
    "rectangle_pairs": _check_rectangle_pairs,
}


# ============== Report Models ==============


class ExperimentReport(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    experiment: str
    config: ExperimentConfig
    config_hash: str
    estimates: list[GridEstimate]
    fits: dict[str, ExponentFit] = Field(default_factory=dict)
    checks: dict[str, bool] = Field(default_factory=dict)
    passed: bool = Field(..., alias="pass")
    wall_time: float = 0.0
    library_version: str
    raw_path: str | None = None
    manifest_path: str | None = None

    def estimate(self, quantity: str, x: float) -> GridEstimate:
        for est in self.estimates:
            if est.quantity == quantity and est.x == x:
                return est
        raise KeyError(f"No estimate {quantity} at {x}")

    def series(self, quantity: str) -> list[GridEstimate]:
        return [est for est in self.estimates if est.quantity == quantity]


# ============== Run Manifest Models ==============


class ChunkStatus(BaseModel):
    index: int
    start: int
    stop: int
    completed: bool = False


class RunManifest(BaseModel):
    config_hash: str
    master_seed: int
    sample_start: int = 0
    sample_stop: int
    chunk_size: int
    raw_path: str
    report_path: str
    started_at: datetime
    finished_at: datetime | None = None
    chunks: list[ChunkStatus]
    config: ExperimentConfig

    @property
    def complete(self) -> bool:
        return all(chunk.completed for chunk in self.chunks)
