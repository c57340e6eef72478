"""Bootstrap confidence bands and Monte Carlo coverage evaluation.

Resampling unit: whole records, i.i.d. with replacement (pairs bootstrap).
Intervals are pointwise percentile intervals over the replicates that
report the grid point; points reported by too few replicates are masked.
Every replicate draws from its own counter-based stream keyed by
(seed, replicate index), so results do not depend on worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from ._rng import stream, substream_seed
from .data import DataValidationError, Dataset, resample
from .estimator import EstimationError, fit_curve

__all__ = [
    "BootstrapConfig",
    "ConfidenceBand",
    "CoverageResult",
    "percentile_bounds",
    "bootstrap_band",
    "coverage_study",
]


@dataclass(frozen=True)
class BootstrapConfig:
    draws: int = 200
    seed: int = 0
    level: float = 0.95
    method: str = "percentile"
    report_threshold: float = 0.5  # min fraction of replicates reporting a point
    workers: int = 1

    def __post_init__(self):
        if self.draws < 2:
            raise ValueError("draws must be >= 2")
        if not (0.0 < self.level < 1.0):
            raise ValueError("level must be in (0, 1)")
        if self.method != "percentile":
            raise ValueError(f"unknown interval method {self.method!r}")
        if not (0.0 < self.report_threshold <= 1.0):
            raise ValueError("report_threshold must be in (0, 1]")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


def percentile_bounds(sorted_values: np.ndarray, level: float) -> tuple[float, float]:
    """Percentile interval endpoints: order statistics at ranks
    ceil(alpha/2 * B) and ceil((1 - alpha/2) * B), 1-indexed, B = len(values)."""
    b = sorted_values.size
    if b == 0:
        return math.nan, math.nan
    alpha = 1.0 - level
    # guard the ceilings against float fuzz: 1 - 0.95 is slightly above
    # 0.05, which would otherwise bump an exact-integer rank by one
    lo_rank = max(1, math.ceil(0.5 * alpha * b - 1e-8))
    hi_rank = min(b, math.ceil((1.0 - 0.5 * alpha) * b - 1e-8))
    return float(sorted_values[lo_rank - 1]), float(sorted_values[hi_rank - 1])


@dataclass
class ConfidenceBand:
    """Pointwise percentile band for a per-grid-point contrast.

    lower <= point <= upper wherever all three are defined (the band is
    widened to include the point estimate if the raw percentile interval
    misses it; how often that happened is kept in raw_containment).
    """

    u: np.ndarray
    point: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    valid: np.ndarray
    n_reported: np.ndarray
    draws: int
    level: float
    contrast: tuple
    raw_containment: float = math.nan
    n_failed_replicates: int = 0
    notes: list = field(default_factory=list)

    def __post_init__(self):
        ok = self.valid & np.isfinite(self.point)
        if np.any(self.lower[ok] > self.point[ok]) or np.any(self.upper[ok] < self.point[ok]):
            raise ValueError("band does not contain the point estimate")

    def rows(self):
        """(u, lower, point, upper, n_reported) per grid point, NaN-masked."""
        for m in range(self.u.size):
            if self.valid[m]:
                yield (
                    float(self.u[m]),
                    float(self.lower[m]),
                    float(self.point[m]),
                    float(self.upper[m]),
                    int(self.n_reported[m]),
                )
            else:
                yield (float(self.u[m]), math.nan, float(self.point[m]), math.nan, int(self.n_reported[m]))


def _default_fit_fn(data: Dataset, **fit_kwargs):
    return fit_curve(data, stop_at_frontier=True, **fit_kwargs)


def _map_indexed(fn, n: int, workers: int) -> list:
    if workers <= 1:
        return [fn(i) for i in range(n)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(n)))


def bootstrap_band(
    data: Dataset,
    boot: BootstrapConfig | None = None,
    contrast: tuple[int, int] = (1, 0),
    fit=None,
    fit_fn=None,
    **fit_kwargs,
) -> ConfidenceBand:
    """Pairs-bootstrap percentile band for the quantile contrast
    theta_[contrast[0]] - theta_[contrast[1]] at every grid point.

    ``fit`` may carry a precomputed full-sample fit to reuse as the point
    estimate; ``fit_fn(dataset, **fit_kwargs)`` overrides the replicate
    fitter (the default runs the standard fit, stopping at the frontier).
    Replicates whose resample is degenerate (an estimation or validation
    error) are dropped and counted.
    """
    boot = boot or BootstrapConfig()
    default_fitter = fit_fn is None
    if default_fitter:
        fit_fn = _default_fit_fn
    if fit is None:
        fit = fit_fn(data, **fit_kwargs)
    elif default_fitter:
        # replicates must live on the precomputed fit's grid
        grid = fit_kwargs.get("grid")
        if grid is None:
            fit_kwargs["grid"] = fit.grid
        else:
            pts = np.asarray(getattr(grid, "points", grid), dtype=np.float64)
            if not np.array_equal(pts, fit.grid.points):
                raise ValueError("grid does not match the precomputed fit's grid")
    level_hi, level_lo = contrast
    point = fit.qte(level_hi, level_lo)
    grid_pts = fit.grid.points
    M = grid_pts.size

    def one_replicate(b: int) -> np.ndarray:
        rng = stream(boot.seed, "bootstrap", b)
        try:
            redata = resample(data, rng)
            refit = fit_fn(redata, **fit_kwargs)
            return np.asarray(refit.qte(level_hi, level_lo), dtype=np.float64)
        except (DataValidationError, EstimationError):
            return np.full(M, np.nan)

    rows = _map_indexed(one_replicate, boot.draws, boot.workers)
    vals = np.vstack(rows)
    n_failed = int(np.count_nonzero(np.all(np.isnan(vals), axis=1)))
    if n_failed == boot.draws:
        raise RuntimeError("every bootstrap replicate failed")

    n_reported = np.count_nonzero(np.isfinite(vals), axis=0)
    valid = n_reported / boot.draws >= boot.report_threshold - 1e-12
    lower = np.full(M, np.nan)
    upper = np.full(M, np.nan)
    raw_hits = 0
    raw_total = 0
    for m in range(M):
        col = vals[:, m]
        col = np.sort(col[np.isfinite(col)])
        if col.size == 0 or not valid[m]:
            continue
        lo, hi = percentile_bounds(col, boot.level)
        if np.isfinite(point[m]):
            raw_total += 1
            if lo <= point[m] <= hi:
                raw_hits += 1
            lo = min(lo, float(point[m]))
            hi = max(hi, float(point[m]))
        lower[m], upper[m] = lo, hi
    raw_containment = raw_hits / raw_total if raw_total else math.nan
    notes = []
    if n_failed:
        notes.append(f"{n_failed} of {boot.draws} bootstrap replicates failed and were dropped")
    if raw_total and raw_hits < raw_total:
        notes.append(
            f"raw percentile interval missed the point estimate at {raw_total - raw_hits} "
            f"of {raw_total} points; band widened to include it"
        )
    return ConfidenceBand(
        grid_pts,
        np.asarray(point, dtype=np.float64),
        lower,
        upper,
        valid,
        n_reported.astype(np.int64),
        boot.draws,
        boot.level,
        contrast,
        raw_containment,
        n_failed,
        notes,
    )


@dataclass
class CoverageResult:
    u: np.ndarray
    hits: np.ndarray  # reps whose band contained the truth, per grid point
    n_valid: np.ndarray  # reps whose band was valid at the point
    reps: int

    @property
    def coverage(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.n_valid > 0, self.hits / self.n_valid, np.nan)

    def at(self, u_value: float) -> float:
        m = int(np.argmin(np.abs(self.u - u_value)))
        return float(self.coverage[m])

    def rows(self):
        cov = self.coverage
        for m in range(self.u.size):
            yield (float(self.u[m]), float(cov[m]), int(self.hits[m]), int(self.n_valid[m]))


def coverage_study(
    dgp,
    reps: int,
    boot: BootstrapConfig | None = None,
    truth=None,
    contrast: tuple[int, int] = (1, 0),
    band_fn=None,
    workers: int = 1,
    **fit_kwargs,
) -> CoverageResult:
    """Fraction of fresh-data replications whose band covers the truth.

    ``dgp`` is either a simulation spec (anything with design/n/seed, run
    through the bundled generator) or a callable rep_index -> Dataset.
    ``truth`` maps a quantile level to the true contrast value; it is
    inferred for simulation specs and required otherwise. ``band_fn``
    replaces the band constructor (same signature as bootstrap_band).
    """
    if reps < 1:
        raise ValueError("reps must be >= 1")
    boot = boot or BootstrapConfig()
    if band_fn is None:
        band_fn = bootstrap_band

    if callable(dgp):
        if truth is None:
            raise ValueError("truth callable is required with a custom data generator")
        make_data = dgp
    else:
        from .simulate import DgpSpec, GroundTruth, generate

        spec = dgp if isinstance(dgp, DgpSpec) else DgpSpec(dgp.design, dgp.n, dgp.seed)
        if truth is None:
            truth = GroundTruth(spec.design).qte

        def make_data(r: int) -> Dataset:
            return generate(DgpSpec(spec.design, spec.n, substream_seed(spec.seed, "mcrep", r)))[0]

    def one_rep(r: int):
        data = make_data(r)
        rep_boot = replace(boot, seed=substream_seed(boot.seed, "coverage-rep", r))
        return band_fn(data, boot=rep_boot, contrast=contrast, **fit_kwargs)

    bands = _map_indexed(one_rep, reps, workers)
    u = bands[0].u
    M = u.size
    hits = np.zeros(M)
    n_valid = np.zeros(M)
    tvals = np.array([truth(float(x)) for x in u])
    for band in bands:
        ok = band.valid & np.isfinite(band.lower) & np.isfinite(band.upper)
        n_valid += ok
        inside = ok & (band.lower <= tvals) & (tvals <= band.upper)
        hits += inside
    return CoverageResult(u, hits, n_valid, reps)
