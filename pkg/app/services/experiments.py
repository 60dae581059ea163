"""Named Monte Carlo experiments.

Each experiment is an `ExperimentDefinition`: the columns one sample produces,
a function drawing sample i from its own environment, and a summary that turns
the sample table into estimates, exponent fits and pass/fail checks. Summaries
read nothing but the table and the config, so `report` on a raw file gives the
same report as the run that wrote it.
"""

import logging
import math
from collections.abc import Callable, Sequence
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from app.models import (
    FIELD_STREAMS,
    ORIGIN,
    ExperimentConfig,
    ExperimentReport,
    ExponentFit,
    LatticePoint,
    diagonal,
)
from app.services import runner
from app.services.field import WeightField
from app.services.geodesic import cross_antidiagonal, decompose, trace_geodesic, transversal_fluctuation
from app.services.passage import (
    StripRegion,
    antidiagonal_profile,
    constrained_surface,
    diagonal_profile,
    forward_surface,
    passage_constrained,
    passage_full,
    passage_time,
)
from app.services.runner import ExperimentDefinition, SampleTable, Summary
from app.services.stats import (
    ContractError,
    DomainError,
    MomentAccumulator,
    batch_estimate,
    batch_stderr,
    correlation,
    fit_loglog,
    ks_two_sample,
    loglog_points,
    one_minus_correlation,
    proportion,
    relative_gap,
    residual_identity,
)
from app.storage import RunStore, read_raw

logger = logging.getLogger(__name__)

# Relative agreement required of the two residual-variance formulas
RESIDUAL_TOLERANCE = 1e-9


class ConfigError(ValueError):
    """Raised for unknown experiments and configs that fail validation."""

    pass


# ============== Shared Helpers ==============


def experiment_field(config: ExperimentConfig, index: int, stream: int, max_x: int, max_y: int | None = None) -> WeightField:
    """Environment `stream` of sample `index`; distinct (index, stream) pairs are independent."""
    if not 0 <= stream < FIELD_STREAMS:
        raise ConfigError(f"stream {stream} outside [0, {FIELD_STREAMS})")
    return WeightField(config.master_seed, index * FIELD_STREAMS + stream, (max_x, max_x if max_y is None else max_y))


def accumulate(table: SampleTable, observations: np.ndarray, config: ExperimentConfig) -> MomentAccumulator:
    """Moments of per-sample observation vectors, one accumulator per chunk merged in chunk order."""
    dim = observations.shape[1]
    total = MomentAccumulator(dim, config.batches)
    for start in range(0, len(table), config.chunk_size):
        part = MomentAccumulator(dim, config.batches)
        stop = start + config.chunk_size
        for index, obs in zip(table.index[start:stop], observations[start:stop], strict=True):
            part.push(obs, index=int(index))
        total = total.merge(part)
    return total


def _tolerance(config: ExperimentConfig, key: str) -> float:
    return config.tolerances.get(key, get_definition(config.experiment).tolerances[key])


def _fit(xs: Sequence[float], ys: Sequence[float], stderrs: Sequence[float] | None = None) -> ExponentFit | None:
    """Log-log fit over the points with positive ordinate, None when fewer than three remain."""
    keep = [i for i, y in enumerate(ys) if y > 0]
    points = loglog_points(
        [xs[i] for i in keep],
        [ys[i] for i in keep],
        None if stderrs is None else [stderrs[i] for i in keep],
    )
    try:
        return fit_loglog(points)
    except (ContractError, DomainError) as e:
        logger.warning(f"Exponent fit skipped: {e}")
        return None


def _slope_check(summary: Summary, name: str, fit: ExponentFit | None, target: float, tolerance: float) -> None:
    if fit is not None:
        summary.fits[name] = fit
    summary.checks[name] = fit is not None and abs(fit.slope - target) <= tolerance


def _quantile(q: float) -> Callable[[np.ndarray], float]:
    return lambda v: float(np.quantile(v, q))


def _stable(first: float, last: float, tolerance: float) -> bool:
    return first > 0 and abs(last / first - 1) <= tolerance


def _exact_check(summary: Summary, name: str, failed: np.ndarray) -> None:
    """Emits the number of samples failing an exact property; the check needs zero."""
    count = int(np.count_nonzero(np.any(failed, axis=1) if failed.ndim > 1 else failed))
    summary.add(f"{name}_violations", 0, float(count))
    summary.checks[name] = count == 0


def _add_quantiles(summary: Summary, config: ExperimentConfig, table: SampleTable, name: str, x: float, values: np.ndarray, qs: Sequence[float]) -> dict[float, float]:
    out = {}
    for q in qs:
        value, err = batch_estimate(values, table.index, config.batches, _quantile(q))
        summary.add(f"{name}_q{round(q * 100)}", x, value, err)
        out[q] = value
    return out


# ============== Correlation Decay ==============


def _corr_decay_columns(config: ExperimentConfig) -> list[str]:
    return [f"T_{r}" for r in config.r_grid] + [f"T_{config.n}"]


def _corr_decay_sample(config: ExperimentConfig, index: int) -> list[float]:
    profile = diagonal_profile(experiment_field(config, index, 0, config.n), config.n)
    return [*profile[config.r_grid], profile[config.n]]


def _residual_rows(summary: Summary, acc: MomentAccumulator, last: int, i: int, x: float) -> bool:
    """Adds both residual-variance formulas for T_n against column i; True when they agree."""
    lhs, rhs = residual_identity(acc, last, i)
    summary.add("residual_lhs", x, lhs)
    summary.add("residual_rhs", x, rhs)
    return relative_gap(lhs, rhs) <= RESIDUAL_TOLERANCE


def _corr_decay_summary(config: ExperimentConfig, table: SampleTable) -> Summary:
    summary = Summary()
    acc = accumulate(table, table.values, config)
    last = len(config.r_grid)
    residual_ok, fkg_ok = True, True
    rhos, rho_errs, covs, cov_errs = [], [], [], []
    for i, r in enumerate(config.r_grid):
        rho, err = correlation(acc, i, last)
        summary.add("rho", r, rho, err)
        rhos.append(rho)
        rho_errs.append(err)
        fkg_ok &= rho >= -3 * err
        residual_ok &= _residual_rows(summary, acc, last, i, r)
        cov = acc.covariance(i, last)
        cov_err = batch_stderr(acc, lambda b, i=i: b.covariance(i, last))
        summary.add("cov", r, cov, cov_err)
        covs.append(cov)
        cov_errs.append(cov_err)

    fit = _fit([r / config.n for r in config.r_grid], rhos, rho_errs)
    _slope_check(summary, "rho_slope", fit, 1 / 3, _tolerance(config, "slope"))
    cov_fit = _fit(config.r_grid, covs, cov_errs)
    if cov_fit is not None:
        summary.fits["cov_slope"] = cov_fit
    summary.checks["fkg"] = fkg_ok
    summary.checks["residual_identity"] = residual_ok
    return summary


# ============== Correlation Approach ==============


def _corr_close_radii(config: ExperimentConfig) -> list[int]:
    return [config.n - gap for gap in config.gap_grid]


def _corr_close_columns(config: ExperimentConfig) -> list[str]:
    return [f"T_{r}" for r in _corr_close_radii(config)] + [f"T_{config.n}"]


def _corr_close_sample(config: ExperimentConfig, index: int) -> list[float]:
    profile = diagonal_profile(experiment_field(config, index, 0, config.n), config.n)
    return [*profile[_corr_close_radii(config)], profile[config.n]]


def _corr_close_summary(config: ExperimentConfig, table: SampleTable) -> Summary:
    summary = Summary()
    last = len(config.gap_grid)
    # Differences T_n − T_r ride along as extra columns so 1 − ρ avoids cancellation
    diffs = table.values[:, [last]] - table.values[:, :last]
    acc = accumulate(table, np.hstack([table.values, diffs]), config)

    residual_ok = True
    values, errs, var_diffs, var_errs = [], [], [], []
    for i, gap in enumerate(config.gap_grid):
        d = last + 1 + i
        value = one_minus_correlation(acc, last, i, d)
        err = batch_stderr(acc, lambda b, i=i, d=d: one_minus_correlation(b, last, i, d))
        summary.add("one_minus_rho", gap, value, err)
        values.append(value)
        errs.append(err)
        var_diffs.append(acc.variance(d))
        var_errs.append(batch_stderr(acc, lambda b, d=d: b.variance(d)))
        summary.add("var_increment", gap, var_diffs[-1], var_errs[-1])
        residual_ok &= _residual_rows(summary, acc, last, i, gap)

    # Smaller gaps sit closer to n; 1 − ρ should not exceed its value at the next larger gap
    violations = sum(
        values[i] > values[i + 1] + 3 * math.hypot(errs[i], errs[i + 1]) for i in range(len(values) - 1)
    )
    summary.add("monotone_violations", 0, float(violations))

    fit = _fit([g / config.n for g in config.gap_grid], values, errs)
    _slope_check(summary, "one_minus_rho_slope", fit, 2 / 3, _tolerance(config, "slope"))
    var_fit = _fit(config.gap_grid, var_diffs, var_errs)
    if var_fit is not None:
        summary.fits["var_increment_slope"] = var_fit
    summary.checks["residual_identity"] = residual_ok
    return summary


# ============== Profile Fluctuation ==============


def _profile_fluct_columns(config: ExperimentConfig) -> list[str]:
    return [f"M_{s}" for s in config.s_grid]


def _profile_fluct_sample(config: ExperimentConfig, index: int) -> list[float]:
    s_max = max(config.s_grid)
    weights = experiment_field(config, index, 0, config.n + s_max)
    sup = antidiagonal_profile(weights, config.n, s_max).sup_increments()
    return [sup[s - 1] for s in config.s_grid]


def _profile_fluct_summary(config: ExperimentConfig, table: SampleTable) -> Summary:
    summary = Summary()
    medians, errs = [], []
    for i, s in enumerate(config.s_grid):
        m = table.values[:, i]
        median, err = batch_estimate(m, table.index, config.batches, np.median)
        summary.add("median_M", s, median, err)
        medians.append(median)
        errs.append(err)
        scaled = m / math.sqrt(s)
        _add_quantiles(summary, config, table, "M_scaled", s, scaled, (0.5, 0.95))

    fit = _fit(config.s_grid, medians, errs)
    _slope_check(summary, "median_slope", fit, 1 / 2, _tolerance(config, "slope"))
    _exact_check(summary, "nonnegative", table.values < 0)
    _exact_check(summary, "nested", np.diff(table.values, axis=1) < 0)
    return summary


# ============== Constrained Variance ==============


def _constrained_variance_columns(config: ExperimentConfig) -> list[str]:
    return [f"X_theta_{theta:g}" for theta in config.theta_grid] + [f"T_{config.r}"]


def _constrained_variance_sample(config: ExperimentConfig, index: int) -> list[float]:
    r = config.r
    weights = experiment_field(config, index, 0, r)
    row = [passage_constrained(weights, StripRegion(r, theta), ORIGIN, diagonal(r)) for theta in config.theta_grid]
    return [*row, passage_time(weights, ORIGIN, diagonal(r))]


def _constrained_variance_summary(config: ExperimentConfig, table: SampleTable) -> Summary:
    summary = Summary()
    r = config.r
    scale = math.cbrt(r)
    acc = accumulate(table, table.values, config)
    variances, var_errs, deficits, deficit_errs = [], [], [], []
    for i, theta in enumerate(config.theta_grid):
        variances.append(acc.variance(i))
        var_errs.append(batch_stderr(acc, lambda b, i=i: b.variance(i)))
        summary.add("var_X_theta", theta, variances[-1], var_errs[-1])
        deficits.append((4 * r - acc.mean(i)) / scale)
        deficit_errs.append(batch_stderr(acc, lambda b, i=i: (4 * r - b.mean(i)) / scale))
        summary.add("mean_deficit", theta, deficits[-1], deficit_errs[-1])
    last = len(config.theta_grid)
    summary.add("var_T", r, acc.variance(last), batch_stderr(acc, lambda b: b.variance(last)))

    # The deficit should shrink as the strip widens
    violations = sum(
        deficits[i + 1] > deficits[i] + 3 * math.hypot(deficit_errs[i], deficit_errs[i + 1])
        for i in range(len(deficits) - 1)
    )
    summary.add("deficit_monotone_violations", 0, float(violations))

    fit = _fit(config.theta_grid, variances, var_errs)
    _slope_check(summary, "var_slope", fit, -1 / 2, _tolerance(config, "slope"))
    x_theta, t_r = table.values[:, :last], table.values[:, [last]]
    _exact_check(summary, "ordering", np.hstack([x_theta > t_r, np.diff(x_theta, axis=1) < 0]))
    return summary


# ============== Decomposition ==============

DECOMPOSITION_FIELDS = (
    "X",
    "Y",
    "Z",
    "W",
    "X_star",
    "X_theta",
    "X_star2",
    "T_n",
    "v1",
    "v_star1",
    "weight_v",
    "weight_r",
    "overlap",
)


def _decomposition_columns(config: ExperimentConfig) -> list[str]:
    return [f"{name}_{r}_{n}" for r, n in config.decomposition_pairs() for name in DECOMPOSITION_FIELDS]


def _decomposition_sample(config: ExperimentConfig, index: int) -> list[float]:
    row = []
    for stream, (r, n) in enumerate(config.decomposition_pairs()):
        d = decompose(experiment_field(config, index, stream, n), r, n, config.theta)
        row += [
            d.X,
            d.Y,
            d.Z,
            d.W,
            d.X_star,
            d.X_theta,
            d.X_star2,
            d.T_n,
            d.v.x,
            d.v_star.x,
            d.weight_v,
            d.weight_r,
            d.overlap_count,
        ]
    return row


def _decomposition_summary(config: ExperimentConfig, table: SampleTable) -> Summary:
    summary = Summary()
    violations = dict.fromkeys(("junction", "sandwich", "nested_strips"), 0)
    wy_q95, xx_q95, crossing_q95 = [], [], []
    for r, n in config.decomposition_pairs():
        col = {name: table.column(f"{name}_{r}_{n}") for name in DECOMPOSITION_FIELDS}
        c1, c2 = math.cbrt(r), math.cbrt(r * r)
        X, Y, Z, W = col["X"], col["Y"], col["Z"], col["W"]

        failed = {
            "junction": Z + W - col["weight_v"] != col["T_n"],
            "sandwich": (Z > col["X_star"]) | (Y - W > (Z - col["weight_v"]) - (X - col["weight_r"])),
            "nested_strips": (col["X_theta"] > col["X_star2"]) | (col["X_star2"] > X) | (X > col["X_star"]),
        }
        for name, mask in failed.items():
            count = int(np.count_nonzero(mask))
            summary.add(f"{name}_violations", r, float(count))
            violations[name] += count

        wy_q95.append(_add_quantiles(summary, config, table, "W_minus_Y", r, (W - Y) / c1, (0.5, 0.95))[0.95])
        xx = (col["X_star"] - X) / c1
        xx_q95.append(_add_quantiles(summary, config, table, "X_star_minus_X", r, xx, (0.5, 0.95))[0.95])
        _add_quantiles(summary, config, table, "Z_minus_X", r, (Z - X) / c1, (0.5, 0.95))
        crossing = np.abs(col["v1"] - r) / c2
        crossing_q95.append(_add_quantiles(summary, config, table, "crossing_offset", r, crossing, (0.5, 0.95))[0.95])
        _add_quantiles(summary, config, table, "line_endpoint_offset", r, np.abs(col["v_star1"] - r) / c2, (0.5, 0.95))
        mean, err = batch_estimate((col["v1"] - r) / c2, table.index, config.batches, np.mean)
        summary.add("crossing_offset_mean", r, mean, err)
        mean, err = batch_estimate(col["overlap"] / (2 * r + 1), table.index, config.batches, np.mean)
        summary.add("overlap_fraction", r, mean, err)

        # X against the pieces of the polymer, in units of r^{2/3}
        acc = accumulate(table, np.column_stack([X, col["T_n"], Z, W - Y, Y]), config)
        for name, j in (("cov_X_T_n", 1), ("cov_X_Z", 2), ("cov_X_W_minus_Y", 3), ("cov_X_Y", 4)):
            summary.add(name, r, acc.covariance(0, j) / c2, batch_stderr(acc, lambda b, j=j: b.covariance(0, j) / c2))
        summary.add("var_Z", r, acc.variance(2) / c2, batch_stderr(acc, lambda b: b.variance(2) / c2))
        for name, values in (("mean_sq_X_minus_Z", (X - Z) ** 2), ("mean_sq_W_minus_Y", (W - Y) ** 2)):
            mean, err = batch_estimate(values / c2, table.index, config.batches, np.mean)
            summary.add(name, r, mean, err)

    for name, count in violations.items():
        summary.checks[name] = count == 0
    if len(wy_q95) >= 2:
        tolerance = _tolerance(config, "stability")
        summary.checks["W_minus_Y_stability"] = _stable(wy_q95[0], wy_q95[-1], tolerance)
        summary.checks["X_star_minus_X_stability"] = _stable(xx_q95[0], xx_q95[-1], tolerance)
        summary.checks["crossing_stability"] = _stable(crossing_q95[0], crossing_q95[-1], tolerance)
    return summary


# ============== Geodesic Localization ==============


def crossing_level(n: int, s: int, t: float) -> int:
    """m = floor(n − t* s^{3/2}) with t* = min(t, n / s^{3/2})."""
    t_star = min(t, n / s**1.5)
    return math.floor(n - t_star * s**1.5 + 1e-9)


def crossing_deviation(geodesic, m: int) -> int:
    """|v_1 − m| where v is the geodesic's vertex on the line x + y = 2m."""
    return abs(cross_antidiagonal(geodesic, 2 * m).x - m)


def _localization_columns(config: ExperimentConfig) -> list[str]:
    return [f"dev_{s}_{t:g}" for s in config.s_grid for t in config.t_grid]


def _localization_sample(config: ExperimentConfig, index: int) -> list[float]:
    n, s_max = config.n, max(config.s_grid)
    weights = experiment_field(config, index, 0, n + s_max)
    surface = forward_surface(weights, ORIGIN, diagonal(n + s_max))
    row = []
    for s in config.s_grid:
        # Polymer ordering: the two extreme endpoints bound every s' in between
        extremes = [
            trace_geodesic(surface, LatticePoint(n + s, n - s)),
            trace_geodesic(surface, LatticePoint(n - s, n + s)),
        ]
        for t in config.t_grid:
            m = crossing_level(n, s, t)
            worst = max(crossing_deviation(g, m) for g in extremes)
            row.append(worst / (t ** (2 / 3) * s))
    return row


def _localization_summary(config: ExperimentConfig, table: SampleTable) -> Summary:
    summary = Summary()
    bound = _tolerance(config, "q99_bound")
    within = True
    for s in config.s_grid:
        for t in config.t_grid:
            q = _add_quantiles(summary, config, table, f"deviation_s{s}", t, table.column(f"dev_{s}_{t:g}"), (0.5, 0.95, 0.99))
            within &= q[0.99] <= bound
    summary.checks["q99_bound"] = within
    return summary


# ============== Moderate Deviations ==============


def _moddev_heights(config: ExperimentConfig) -> list[int]:
    return [math.floor(h * config.n + 0.5) for h in config.h_grid]


def _moddev_columns(config: ExperimentConfig) -> list[str]:
    return [f"T_h{h:g}" for h in config.h_grid] + [f"T_{m}" for m in config.n_grid]


def _moddev_sample(config: ExperimentConfig, index: int) -> list[float]:
    n, heights = config.n, _moddev_heights(config)
    weights = experiment_field(config, index, 0, n, max(heights))
    row = [passage_time(weights, ORIGIN, LatticePoint(n, y)) for y in heights]
    for stream, m in enumerate(config.n_grid, start=1):
        row.append(passage_time(experiment_field(config, index, stream, m), ORIGIN, diagonal(m)))
    return row


def scaled_passage(values: np.ndarray, n: int) -> np.ndarray:
    """(T_n − 4n) / n^{1/3}."""
    return (values - 4 * n) / math.cbrt(n)


def _moddev_summary(config: ExperimentConfig, table: SampleTable) -> Summary:
    summary = Summary()
    n = config.n
    mean_ok = True
    for h, y in zip(config.h_grid, _moddev_heights(config), strict=True):
        target = (1 + math.sqrt(y / n)) ** 2
        mean, err = batch_estimate(table.column(f"T_h{h:g}") / n, table.index, config.batches, np.mean)
        summary.add("mean_over_n", h, mean, err)
        summary.add("mean_target", h, target)
        mean_ok &= abs(mean - target) < _tolerance(config, "mean") * target
    summary.checks["mean_growth"] = mean_ok

    variances, errs = [], []
    for m in config.n_grid:
        values = table.column(f"T_{m}")
        var, err = batch_estimate(values, table.index, config.batches, lambda v: float(np.var(v, ddof=1)))
        summary.add("var_T", m, var, err)
        variances.append(var)
        errs.append(err)
        mean, err = batch_estimate(scaled_passage(values, m), table.index, config.batches, np.mean)
        summary.add("scaled_mean", m, mean, err)
    fit = _fit(config.n_grid, variances, errs)
    _slope_check(summary, "var_slope", fit, 2 / 3, _tolerance(config, "slope"))

    a, b = config.n_grid[-2], config.n_grid[-1]
    statistic, critical = ks_two_sample(
        scaled_passage(table.column(f"T_{a}"), a), scaled_passage(table.column(f"T_{b}"), b)
    )
    summary.add("ks_statistic", b, statistic)
    summary.add("ks_critical", b, critical)
    summary.checks["ks_stability"] = statistic < critical
    return summary


# ============== Transversal Fluctuation ==============


def _transversal_columns(config: ExperimentConfig) -> list[str]:
    return [f"TF_{r}" for r in config.r_grid]


def _transversal_sample(config: ExperimentConfig, index: int) -> list[float]:
    r_max = max(config.r_grid)
    surface = forward_surface(experiment_field(config, index, 0, r_max), ORIGIN, diagonal(r_max))
    return [transversal_fluctuation(trace_geodesic(surface, diagonal(r))) for r in config.r_grid]


def _transversal_summary(config: ExperimentConfig, table: SampleTable) -> Summary:
    summary = Summary()
    k_check = _tolerance(config, "tail_k")
    tail_ok = True
    medians, median_errs, scaled_medians = [], [], []
    for r in config.r_grid:
        tf = table.column(f"TF_{r}")
        scale = math.cbrt(r * r)
        for k in config.k_grid:
            p, err = proportion(tf > k * scale)
            summary.add(f"tail_k{k:g}", r, p, err)
        p, err = proportion(tf > k_check * scale)
        summary.add("tail_check", r, p, err)
        tail_ok &= p < _tolerance(config, "tail_prob")

        median, err = batch_estimate(tf, table.index, config.batches, np.median)
        summary.add("median_TF", r, median, err)
        medians.append(median)
        median_errs.append(err)
        median, err = batch_estimate(tf / scale, table.index, config.batches, np.median)
        summary.add("median_TF_scaled", r, median, err)
        scaled_medians.append(median)

    summary.checks["tail"] = tail_ok
    _exact_check(summary, "leaves_diagonal", table.values < 1)
    if len(scaled_medians) >= 2:
        ratio = scaled_medians[-1] / scaled_medians[0] if scaled_medians[0] > 0 else math.inf
        summary.add("median_ratio", config.r_grid[-1], ratio)
        lo, hi = _tolerance(config, "ratio_low"), _tolerance(config, "ratio_high")
        summary.checks["median_stability"] = lo <= ratio <= hi
    fit = _fit(config.r_grid, medians, median_errs)
    if fit is not None:
        summary.fits["median_TF_slope"] = fit
    return summary


# ============== Rectangle Pairs ==============


def strip_points(r: int, width: int, lo_level: int, hi_level: int) -> list[LatticePoint]:
    """Points of the strip |x − y| ≤ width with lo_level ≤ x + y ≤ hi_level, by level then x."""
    points = []
    for d in range(max(lo_level, 0), min(hi_level, 2 * r) + 1):
        x_lo, x_hi = max(0, math.ceil((d - width) / 2)), min(d, (d + width) // 2)
        points += [LatticePoint(x, d - x) for x in range(x_lo, x_hi + 1)]
    return points


def slope_admissible(u: LatticePoint, v: LatticePoint) -> bool:
    """Slope of the segment u→v lies in [1/2, 2]."""
    dx, dy = v.x - u.x, v.y - u.y
    return dx > 0 and dy > 0 and dx <= 2 * dy and dy <= 2 * dx


def pair_statistics(weights, r: int, sources: Sequence[LatticePoint], targets: Sequence[LatticePoint]) -> dict[str, float]:
    """sup/inf over admissible pairs of (T_{u,v} − 2|d(u) − d(v)|)/r^{1/3}, free and confined to U."""
    region = StripRegion(r, 1.0)
    scale = math.cbrt(r)
    free, boxed = [], []
    for u in sources:
        reachable = [v for v in targets if slope_admissible(u, v)]
        if not reachable:
            continue
        corner = LatticePoint(max(v.x for v in reachable), max(v.y for v in reachable))
        grid = passage_full(weights, u, corner).grid
        box_grid = constrained_surface(weights, region, u, corner).grid
        for v in reachable:
            i, j = v.x - u.x, v.y - u.y
            shift = 2 * abs(u.level - v.level)
            free.append((grid[i, j] - shift) / scale)
            boxed.append((box_grid[i, j] - shift) / scale)
    if not free:
        raise ConfigError(f"No slope-admissible pairs at r={r}")
    free, boxed = np.array(free), np.array(boxed)
    return {
        "sup": float(free.max()),
        "inf": float(free.min()),
        "box_sup": float(boxed.max()),
        "box_inf": float(boxed.min()),
        "nested": float(np.all(boxed <= free)),
    }


PAIR_STATISTICS = ("sup", "inf", "box_sup", "box_inf", "nested")


def rectangle_sources(config: ExperimentConfig, index: int, r: int) -> list[LatticePoint]:
    """The origin plus distinct points drawn uniformly from the lower third of U."""
    width = StripRegion(r, 1.0).width_w
    candidates = strip_points(r, width, 1, (2 * r) // 3)
    rng = np.random.default_rng([config.master_seed, index, r])
    count = min(config.sources - 1, len(candidates))
    picks = np.sort(rng.choice(len(candidates), size=count, replace=False))
    return [ORIGIN] + [candidates[int(i)] for i in picks]


def _rectangle_columns(config: ExperimentConfig) -> list[str]:
    return [f"{name}_{r}" for r in config.r_grid for name in PAIR_STATISTICS]


def _rectangle_sample(config: ExperimentConfig, index: int) -> list[float]:
    row = []
    for stream, r in enumerate(config.r_grid):
        width = StripRegion(r, 1.0).width_w
        weights = experiment_field(config, index, stream, 2 * r)
        targets = strip_points(r, width, -(-4 * r // 3), 2 * r)
        stats = pair_statistics(weights, r, rectangle_sources(config, index, r), targets)
        row += [stats[name] for name in PAIR_STATISTICS]
    return row


def _rectangle_summary(config: ExperimentConfig, table: SampleTable) -> Summary:
    summary = Summary()
    sup_q99 = []
    for r in config.r_grid:
        for name in ("sup", "inf", "box_sup", "box_inf"):
            q = _add_quantiles(summary, config, table, name, r, table.column(f"{name}_{r}"), (0.01, 0.5, 0.99))
            if name == "sup":
                sup_q99.append(q[0.99])
    _exact_check(summary, "nested", table.values[:, 4 :: len(PAIR_STATISTICS)] != 1)
    if len(sup_q99) >= 2:
        summary.checks["sup_stability"] = _stable(abs(sup_q99[0]), abs(sup_q99[-1]), _tolerance(config, "stability"))
    return summary


# ============== Registry ==============


EXPERIMENTS: dict[str, ExperimentDefinition] = {
    d.name: d
    for d in (
        ExperimentDefinition(
            name="corr_decay",
            description="Correlation of T_r and T_n for r << n; slope of ln rho against ln(r/n)",
            columns=_corr_decay_columns,
            sample=_corr_decay_sample,
            summarize=_corr_decay_summary,
            defaults={"n": 2048, "r_grid": [32, 64, 128, 256, 512], "samples": 5000},
            tolerances={"slope": 0.10},
        ),
        ExperimentDefinition(
            name="corr_close",
            description="1 - rho(n, r) for r close to n; slope against ln((n-r)/n)",
            columns=_corr_close_columns,
            sample=_corr_close_sample,
            summarize=_corr_close_summary,
            defaults={"n": 2048, "gap_grid": [32, 64, 128, 256, 512], "samples": 10000},
            tolerances={"slope": 0.12},
        ),
        ExperimentDefinition(
            name="profile_fluct",
            description="Sup-increments of the antidiagonal passage profile; slope of the median in s",
            columns=_profile_fluct_columns,
            sample=_profile_fluct_sample,
            summarize=_profile_fluct_summary,
            defaults={"n": 8000, "s_grid": [15, 30, 60, 120], "samples": 1000},
            tolerances={"slope": 0.12},
        ),
        ExperimentDefinition(
            name="constrained_variance",
            description="Variance of strip-constrained diagonal passage times against theta",
            columns=_constrained_variance_columns,
            sample=_constrained_variance_sample,
            summarize=_constrained_variance_summary,
            defaults={"n": 1000, "r": 1000, "theta_grid": [0.25, 0.5, 1, 2, 4], "samples": 4000},
            tolerances={"slope": 0.15},
        ),
        ExperimentDefinition(
            name="decomposition",
            description="X, Y, Z, W split of the polymer at x+y=2r with junction and sandwich checks",
            columns=_decomposition_columns,
            sample=_decomposition_sample,
            summarize=_decomposition_summary,
            defaults={"n": 4000, "r_grid": [250, 500], "n_grid": [2000, 4000], "samples": 1000},
            tolerances={"stability": 0.30},
        ),
        ExperimentDefinition(
            name="geodesic_localization",
            description="Crossing deviation of extreme-endpoint geodesics below the endpoint line",
            columns=_localization_columns,
            sample=_localization_sample,
            summarize=_localization_summary,
            defaults={"n": 4000, "s_grid": [16], "t_grid": [1, 2, 4, 8], "samples": 1000},
            tolerances={"q99_bound": 6.0},
        ),
        ExperimentDefinition(
            name="moddev",
            description="Mean growth n(1+sqrt(h))^2, variance exponent and KS stability of (T_n-4n)/n^(1/3)",
            columns=_moddev_columns,
            sample=_moddev_sample,
            summarize=_moddev_summary,
            defaults={"n": 2000, "h_grid": [0.5, 1, 2], "n_grid": [250, 500, 1000, 2000], "samples": 5000},
            tolerances={"mean": 0.02, "slope": 0.12},
        ),
        ExperimentDefinition(
            name="transversal",
            description="Transversal fluctuation tails P(TF_r > k r^(2/3)) and median stability",
            columns=_transversal_columns,
            sample=_transversal_sample,
            summarize=_transversal_summary,
            defaults={"n": 2000, "r_grid": [500, 1000, 2000], "k_grid": [1, 2, 3], "samples": 2000},
            tolerances={"tail_k": 3.0, "tail_prob": 0.01, "ratio_low": 0.8, "ratio_high": 1.25},
        ),
        ExperimentDefinition(
            name="rectangle_pairs",
            description="Sup and inf over slope-admissible pairs of T_{u,v} - 2|d(u)-d(v)|, free and inside U",
            columns=_rectangle_columns,
            sample=_rectangle_sample,
            summarize=_rectangle_summary,
            defaults={"n": 512, "r_grid": [128, 512], "sources": 16, "samples": 500},
            tolerances={"stability": 0.40},
        ),
    )
}


def get_definition(name: str) -> ExperimentDefinition:
    try:
        return EXPERIMENTS[name]
    except KeyError:
        raise ConfigError(f"unknown experiment '{name}' (choose from {', '.join(EXPERIMENTS)})") from None


def _describe(error: ValidationError) -> str:
    messages = []
    for err in error.errors():
        cause = err.get("ctx", {}).get("error")
        msg = str(cause) if cause is not None else err["msg"]
        loc = ".".join(str(part) for part in err["loc"])
        messages.append(f"{loc}: {msg}" if loc else msg)
    return "; ".join(messages)


def load_config(name: str, document: dict | None = None, **overrides) -> ExperimentConfig:
    """Validated config from a JSON document (the experiment's defaults when None) plus overrides."""
    definition = get_definition(name)
    doc = dict(definition.defaults if document is None else document)
    if doc.setdefault("experiment", name) != name:
        raise ConfigError(f"config is for experiment '{doc['experiment']}', not '{name}'")
    doc.update({key: value for key, value in overrides.items() if value is not None})
    try:
        return ExperimentConfig.model_validate(doc)
    except ValidationError as e:
        raise ConfigError(_describe(e)) from e


# ============== Runs ==============


def run_experiment(config: ExperimentConfig, store: RunStore | None = None) -> ExperimentReport:
    return runner.execute(get_definition(config.experiment), config, store)


def report_from_raw(raw_path: Path, config: ExperimentConfig) -> ExperimentReport:
    """Rebuild a report from a raw sample file and the config that produced it."""
    columns, rows = read_raw(raw_path)
    return runner.build_report(get_definition(config.experiment), config, SampleTable.from_rows(columns, rows), raw_path=raw_path)


def _run(name: str, config: ExperimentConfig, store: RunStore | None) -> ExperimentReport:
    if config.experiment != name:
        raise ConfigError(f"config is for experiment '{config.experiment}', not '{name}'")
    return run_experiment(config, store)


def run_corr_decay(config: ExperimentConfig, store: RunStore | None = None) -> ExperimentReport:
    return _run("corr_decay", config, store)


def run_corr_close(config: ExperimentConfig, store: RunStore | None = None) -> ExperimentReport:
    return _run("corr_close", config, store)


def run_profile_fluct(config: ExperimentConfig, store: RunStore | None = None) -> ExperimentReport:
    return _run("profile_fluct", config, store)


def run_constrained_variance(config: ExperimentConfig, store: RunStore | None = None) -> ExperimentReport:
    return _run("constrained_variance", config, store)


def run_decomposition(config: ExperimentConfig, store: RunStore | None = None) -> ExperimentReport:
    return _run("decomposition", config, store)


def run_geodesic_localization(config: ExperimentConfig, store: RunStore | None = None) -> ExperimentReport:
    return _run("geodesic_localization", config, store)


def run_moddev(config: ExperimentConfig, store: RunStore | None = None) -> ExperimentReport:
    return _run("moddev", config, store)


def run_transversal(config: ExperimentConfig, store: RunStore | None = None) -> ExperimentReport:
    return _run("transversal", config, store)


def run_rectangle_pairs(config: ExperimentConfig, store: RunStore | None = None) -> ExperimentReport:
    return _run("rectangle_pairs", config, store)
