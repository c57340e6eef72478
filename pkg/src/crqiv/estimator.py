"""Instrumental estimation of structural quantile functions.

The estimand is the vector of per-treatment-level quantile functions of
the primary-cause duration, evaluated on a grid of quantile levels u.  At
each u the estimator minimizes a weighted quadratic form of the residual
vector

    r_k(theta) = sum_l S1_hat(theta_l, z_l | w_k) - (1 - u),

over the box prod_l [0, y1_hat_l), where y1_hat_l is the largest follow-up
time observed with a primary-cause event at level l.  Results are reported
only below the estimated identification frontier u_hat: the first grid
point where some coordinate of the solution comes within a cushion
delta_l of its box edge.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .optim import SolverConfig, minimize_box_multistart
from .smoothing import default_bandwidth
from .surface import SmoothedSurvivalSurface, assemble_surface
from .survival import _cell_process, incidence_from

__all__ = [
    "EstimationError",
    "QuantileGrid",
    "WeightingPolicy",
    "FrontierEstimates",
    "QuantileCurveFit",
    "residual_vector",
    "objective",
    "estimate_y1",
    "default_delta",
    "estimate_caps",
    "fit_curve",
    "naive_curve",
]

# relative clamp representing the half-open box [0, y1_hat): the optimizer
# works on the closed box [0, y1_hat * (1 - BOX_CLAMP)]
BOX_CLAMP = 1e-9


class EstimationError(RuntimeError):
    pass


@dataclass(frozen=True)
class QuantileGrid:
    """Strictly increasing quantile levels in (0, 1]."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 1 or pts.size < 2:
            raise ValueError("grid needs at least 2 points")
        if not np.all(np.diff(pts) > 0):
            raise ValueError("grid points must be strictly increasing")
        if pts[0] <= 0 or pts[-1] > 1:
            raise ValueError("grid points must lie in (0, 1]")
        object.__setattr__(self, "points", pts)

    @classmethod
    def default(cls, m: int = 100) -> "QuantileGrid":
        return cls(np.arange(1, m + 1) / m)

    @property
    def size(self) -> int:
        return self.points.size


class WeightingPolicy:
    """Residual weighting V(u): symmetric positive definite K x K.

    ``value`` may be None (identity), a constant matrix, or a callable
    u -> matrix. Constant matrices are checked at configuration time.
    """

    def __init__(self, value=None):
        self._callable = None
        self._matrix = None
        if value is None:
            pass
        elif callable(value):
            self._callable = value
        else:
            self._matrix = self._checked(np.asarray(value, dtype=np.float64))

    @staticmethod
    def _checked(m: np.ndarray) -> np.ndarray:
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("weighting matrix must be square")
        if not np.allclose(m, m.T, atol=1e-10):
            raise ValueError("weighting matrix must be symmetric")
        try:
            np.linalg.cholesky(m)
        except np.linalg.LinAlgError:
            raise ValueError("weighting matrix must be positive definite") from None
        return m

    @property
    def is_identity(self) -> bool:
        return self._callable is None and self._matrix is None

    def matrix(self, u: float, k: int) -> np.ndarray:
        if self._callable is not None:
            return self._checked(np.asarray(self._callable(u), dtype=np.float64))
        if self._matrix is not None:
            if self._matrix.shape[0] != k:
                raise ValueError(f"weighting matrix is {self._matrix.shape[0]}x..., need {k}")
            return self._matrix
        return np.eye(k)


@dataclass(frozen=True)
class FrontierEstimates:
    """Estimated support bounds and identification frontier."""

    y_hat: np.ndarray  # (L,) largest primary-cause event time per level
    delta: np.ndarray  # (L,) frontier cushion per level
    u_hat: float  # estimated frontier quantile (a grid point)
    m_hat: int  # 0-based grid index of u_hat
    u_prev: float  # grid point before u_hat (0.0 when u_hat is the first)
    triggered: bool  # False when no grid point hit the cushion


@dataclass
class QuantileCurveFit:
    grid: QuantileGrid
    theta: np.ndarray  # (M, L) solution vectors
    objective: np.ndarray  # (M,) attained minima
    converged: np.ndarray  # (M,) bool
    reported_mask: np.ndarray  # (M,) bool: u < u_hat and converged
    frontiers: FrontierEstimates
    treatment_levels: list
    instrument_levels: list
    warnings: list = field(default_factory=list)

    def qte(self, level: int = 1, baseline: int = 0, only_reported: bool = True) -> np.ndarray:
        """Quantile treatment effect curve; NaN outside the reported range."""
        out = self.theta[:, level] - self.theta[:, baseline]
        if only_reported:
            out = np.where(self.reported_mask, out, np.nan)
        return out

    def to_dict(self) -> dict:
        fr = self.frontiers
        return {
            "grid": self.grid.points.tolist(),
            "treatment_levels": [str(v) for v in self.treatment_levels],
            "instrument_levels": [str(v) for v in self.instrument_levels],
            "theta": [[_json_float(v) for v in row] for row in self.theta],
            "objective": [_json_float(v) for v in self.objective],
            "converged": self.converged.astype(bool).tolist(),
            "reported": self.reported_mask.astype(bool).tolist(),
            "u_hat": fr.u_hat,
            "m_hat": fr.m_hat,
            "u_prev": fr.u_prev,
            "frontier_triggered": fr.triggered,
            "y1_hat": fr.y_hat.tolist(),
            "delta": fr.delta.tolist(),
            "warnings": list(self.warnings),
        }


def _json_float(v: float):
    v = float(v)
    if np.isnan(v):
        return None
    if np.isinf(v):
        return "inf" if v > 0 else "-inf"
    return v


def residual_vector(theta, u: float, surface: SmoothedSurvivalSurface) -> np.ndarray:
    """Instrument-level residuals of the system of equations at (theta, u)."""
    theta = np.asarray(theta, dtype=np.float64)
    L, K = surface.n_treatment_levels, surface.n_instrument_levels
    if theta.shape != (L,):
        raise ValueError(f"theta must have length {L}")
    out = np.empty(K)
    for k in range(K):
        s = 0.0
        for l in range(L):
            s += float(surface.evaluate(theta[l], l, k))
        out[k] = s - (1.0 - u)
    return out


def objective(theta, u: float, surface, V: WeightingPolicy | None = None) -> float:
    """Weighted squared norm r(theta)' V(u) r(theta); zero iff r = 0."""
    r = residual_vector(theta, u, surface)
    if V is None or V.is_identity:
        return float(r @ r)
    m = V.matrix(u, r.size)
    return float(r @ m @ r)


def estimate_y1(data: Dataset) -> np.ndarray:
    """Largest follow-up time with a primary-cause event, per treatment level."""
    out = np.empty(data.n_treatment_levels)
    for zi in range(data.n_treatment_levels):
        mask = (data.z == zi) & (data.event == 1)
        if not mask.any():
            raise EstimationError(
                f"treatment level {data.treatment_levels[zi]!r} has no primary-cause events; "
                "its quantile support bound cannot be estimated"
            )
        out[zi] = data.y[mask].max()
    return out


def default_delta(data: Dataset, level: int) -> float:
    """Frontier cushion: bandwidth rule on the level's primary-cause event times."""
    mask = (data.z == level) & (data.event == 1)
    return default_bandwidth(data.y[mask])


def estimate_caps(data: Dataset) -> np.ndarray:
    """Upper support estimate per treatment level: max observed y, any event."""
    out = np.empty(data.n_treatment_levels)
    for zi in range(data.n_treatment_levels):
        mask = data.z == zi
        if not mask.any():
            raise EstimationError(f"no records at treatment level {data.treatment_levels[zi]!r}")
        out[zi] = data.y[mask].max()
    return out


def _resolve_delta(delta, data: Dataset, L: int) -> np.ndarray:
    if delta is None:
        return np.array([default_delta(data, l) for l in range(L)])
    arr = np.asarray(delta, dtype=np.float64)
    if arr.ndim == 0:
        arr = np.full(L, float(arr))
    if arr.shape != (L,) or (arr <= 0).any():
        raise ValueError("delta must be a positive scalar or one positive value per level")
    return arr


def _fast_objective_factory(surface, V: WeightingPolicy | None):
    """Build u -> (theta_list -> float) closures over cheap cell evaluators."""
    L, K = surface.n_treatment_levels, surface.n_instrument_levels
    ev_by_k = [[surface.cell_eval(l, k) for l in range(L)] for k in range(K)]
    identity = V is None or V.is_identity
    rng_l = range(L)
    rng_k = range(K)

    def make(u: float):
        target = 1.0 - u
        if identity:
            def obj(theta):
                s = 0.0
                for k in rng_k:
                    evk = ev_by_k[k]
                    r = -target
                    for l in rng_l:
                        r += evk[l](theta[l])
                    s += r * r
                return s
        else:
            vm = V.matrix(u, K).tolist()

            def obj(theta):
                r = [0.0] * K
                for k in rng_k:
                    evk = ev_by_k[k]
                    acc = -target
                    for l in rng_l:
                        acc += evk[l](theta[l])
                    r[k] = acc
                s = 0.0
                for i in rng_k:
                    vi = vm[i]
                    ri = r[i]
                    for j in rng_k:
                        s += ri * vi[j] * r[j]
                return s
        return obj

    return make


def fit_curve(
    data: Dataset,
    grid: QuantileGrid | None = None,
    V: WeightingPolicy | None = None,
    solver: SolverConfig | None = None,
    bandwidth=None,
    delta=None,
    kind: str = "local_linear",
    stop_at_frontier: bool = False,
    surface: SmoothedSurvivalSurface | None = None,
) -> QuantileCurveFit:
    """Sweep the quantile grid and solve the instrumental system at each point.

    Grid points are processed in increasing order; each solve is seeded
    with the previous solution plus a coarse lattice of starts.  With
    ``stop_at_frontier`` the sweep stops once the frontier cushion is hit,
    which is enough for anything that only consumes reported points.
    """
    grid = grid or QuantileGrid.default()
    solver = solver or SolverConfig()
    if surface is None:
        surface = assemble_surface(data, bandwidth=bandwidth, kind=kind)
    L = data.n_treatment_levels
    y_hat = estimate_y1(data)
    deltas = _resolve_delta(delta, data, L)

    M = grid.size
    theta = np.full((M, L), np.nan)
    obj_vals = np.full(M, np.nan)
    converged = np.zeros(M, dtype=bool)
    warnings: list[str] = []

    lower = [0.0] * L
    upper = (y_hat * (1.0 - BOX_CLAMP)).tolist()
    make_obj = _fast_objective_factory(surface, V)

    m_hat = -1
    warm = None
    for m, u in enumerate(grid.points):
        res = minimize_box_multistart(make_obj(float(u)), lower, upper, solver, warm=warm)
        theta[m] = res.x
        obj_vals[m] = res.fun
        converged[m] = res.converged
        if res.converged:
            warm = res.x
        if m_hat < 0 and np.any(theta[m] >= y_hat - deltas):
            m_hat = m
            if stop_at_frontier:
                break

    n_failed = int(np.count_nonzero(~converged[: (m_hat + 1) if (m_hat >= 0 and stop_at_frontier) else M]))
    if n_failed:
        warnings.append(f"solver did not converge at {n_failed} grid point(s); they are not reported")

    if m_hat >= 0:
        u_hat = float(grid.points[m_hat])
        u_prev = float(grid.points[m_hat - 1]) if m_hat > 0 else 0.0
        reported = (np.arange(M) < m_hat) & converged
        triggered = True
    else:
        m_hat = M - 1
        u_hat = float(grid.points[-1])
        u_prev = float(grid.points[-2]) if M > 1 else 0.0
        reported = converged.copy()
        triggered = False
        warnings.append(
            "frontier cushion never reached on the grid; reporting the whole grid "
            "(the identification frontier may exceed the grid range)"
        )

    frontiers = FrontierEstimates(y_hat, deltas, u_hat, m_hat, u_prev, triggered)
    return QuantileCurveFit(
        grid,
        theta,
        obj_vals,
        converged,
        reported,
        frontiers,
        list(data.treatment_levels),
        list(data.instrument_levels),
        warnings,
    )


def naive_curve(data: Dataset, grid: QuantileGrid | None = None) -> np.ndarray:
    """Quantiles of the primary-cause incidence conditional on treatment only.

    Pools over the instrument, ignoring endogeneity: the generalized
    u-quantile inf{t : F_hat(t) >= u} of the cumulative-incidence estimate
    per treatment level. Grid points above the attained incidence get an
    infinity sentinel. Returned as an (M, L) array.
    """
    grid = grid or QuantileGrid.default()
    M, L = grid.size, data.n_treatment_levels
    out = np.full((M, L), np.inf)
    for zi in range(L):
        mask = data.z == zi
        inc = incidence_from(_cell_process(data.y[mask], data.event[mask]), cause=1)
        if inc.jump_times.size == 0:
            continue
        idx = np.searchsorted(inc.values, grid.points, side="left")
        hit = idx < inc.values.size
        out[hit, zi] = inc.jump_times[idx[hit]]
    return out
