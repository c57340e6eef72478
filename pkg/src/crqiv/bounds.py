"""Outer bounds for quantiles beyond the point-identified range.

Above the identification frontier the quantile vector is only set-
identified. A computable outer set is the collection of theta outside
the open box prod_l [0, y1_l) at which every instrument-level residual

    R_k(theta) = sum_l S1(min(theta_l, c_l), z_l | w_k) - (1 - u)

is nonnegative, where c_l caps evaluation at the observed support of
follow-up times. Residuals are nonincreasing in each coordinate and the
survival surface is flat past each support bound, so the set is a finite
union of axis-aligned interval products found by scanning box boundaries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .estimator import QuantileCurveFit, estimate_caps, estimate_y1

__all__ = [
    "IntervalProduct",
    "BoundFrontiers",
    "OuterSet",
    "capped_residual",
    "verify_membership",
    "outer_set_2d",
    "outer_set_recursive",
    "outer_set",
]

BISECT_RTOL = 1e-6


@dataclass(frozen=True)
class IntervalProduct:
    """Axis-aligned product of closed intervals [a_l, b_l], b_l may be inf."""

    lower: tuple
    upper: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lower)
        hi = tuple(float(v) for v in self.upper)
        if len(lo) != len(hi) or not lo:
            raise ValueError("lower and upper must have the same nonzero length")
        for a, b in zip(lo, hi):
            if not (a <= b):
                raise ValueError(f"empty interval [{a}, {b}]")
            if a < 0 or math.isnan(a) or math.isnan(b):
                raise ValueError("interval ends must be nonnegative, not NaN")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dims(self) -> int:
        return len(self.lower)

    def contains(self, theta) -> bool:
        return all(a <= float(t) <= b for a, t, b in zip(self.lower, theta, self.upper))

    def to_dict(self) -> dict:
        enc = lambda v: "inf" if math.isinf(v) else v
        return {"lower": [enc(v) for v in self.lower], "upper": [enc(v) for v in self.upper]}


@dataclass(frozen=True)
class BoundFrontiers:
    """Per-level support bounds used by the outer-set construction.

    y1: largest primary-cause duration per treatment level (box edges).
    caps: evaluation caps, at least y1 (largest observed follow-up works).
    u_y: estimated identification frontier, when known; queries at or
    below it belong to the point estimator and are rejected.
    """

    y1: np.ndarray
    caps: np.ndarray
    u_y: float | None = None

    def __post_init__(self):
        y1 = np.asarray(self.y1, dtype=np.float64)
        caps = np.asarray(self.caps, dtype=np.float64)
        if y1.ndim != 1 or y1.shape != caps.shape or y1.size < 2:
            raise ValueError("y1 and caps must be matching vectors, one entry per level")
        if (y1 <= 0).any() or not np.isfinite(y1).all():
            raise ValueError("support bounds must be positive and finite")
        if (caps < y1).any():
            raise ValueError("caps must not be below the per-level support bounds")
        object.__setattr__(self, "y1", y1)
        object.__setattr__(self, "caps", caps)

    @classmethod
    def from_data(cls, data: Dataset, fit: QuantileCurveFit | None = None) -> "BoundFrontiers":
        u_y = fit.frontiers.u_hat if fit is not None else None
        return cls(estimate_y1(data), estimate_caps(data), u_y)


def capped_residual(theta, u: float, surface, caps) -> np.ndarray:
    """Instrument-level residuals with evaluation capped at the support."""
    caps = np.asarray(caps, dtype=np.float64)
    th = np.minimum(np.asarray(theta, dtype=np.float64), caps)
    L = caps.size
    K = surface.n_instrument_levels
    out = np.empty(K)
    for k in range(K):
        s = 0.0
        for l in range(L):
            s += float(surface.evaluate(th[l], l, k))
        out[k] = s - (1.0 - u)
    return out


def verify_membership(theta, u: float, surface, frontiers: BoundFrontiers) -> bool:
    """Direct evaluation of the two membership conditions (the slow oracle)."""
    theta = np.asarray(theta, dtype=np.float64)
    if not np.any(theta >= frontiers.y1):
        return False
    return bool(np.min(capped_residual(theta, u, surface, frontiers.caps)) >= 0.0)


@dataclass(frozen=True)
class OuterSet:
    """Finite union of interval products covering the identified set at u."""

    pieces: tuple
    u: float
    case: str  # "i".."iv"/"empty" in 2 dimensions, "recursive" above
    frontiers: BoundFrontiers
    note: str = ""

    def __post_init__(self):
        pieces = tuple(self.pieces)
        y1 = self.frontiers.y1
        for p in pieces:
            if p.dims != y1.size:
                raise ValueError("piece dimension mismatch")
            if not any(p.lower[l] >= y1[l] for l in range(p.dims)):
                raise ValueError("piece overlaps the open point-identified box")
        object.__setattr__(self, "pieces", pieces)

    @property
    def is_empty(self) -> bool:
        return not self.pieces

    def contains(self, theta) -> bool:
        return any(p.contains(theta) for p in self.pieces)

    def to_dict(self) -> dict:
        return {
            "u": self.u,
            "case": self.case,
            "y1": self.frontiers.y1.tolist(),
            "caps": self.frontiers.caps.tolist(),
            "pieces": [p.to_dict() for p in self.pieces],
            "note": self.note,
        }


def _check_u(u: float, frontiers: BoundFrontiers) -> None:
    if not (0.0 < u <= 1.0):
        raise ValueError(f"u must be in (0, 1], got {u}")
    if frontiers.u_y is not None and u <= frontiers.u_y:
        raise ValueError(
            f"u = {u} is not above the identification frontier {frontiers.u_y}; "
            "the quantile vector is point-identified there, use the point estimator"
        )


def _bisect_extent(g, lo: float, hi: float, tol: float) -> float:
    """Largest x with g(x) >= 0 for nonincreasing g, given g(lo) >= 0 > g(hi).

    Returns the certified-nonnegative end of the final bracket.
    """
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if g(mid) >= 0.0:
            lo = mid
        else:
            hi = mid
    return lo


def outer_set_2d(u: float, surface, frontiers: BoundFrontiers) -> OuterSet:
    """Boundary-scan outer set for two treatment levels.

    The residual minimum is nonincreasing along the top edge
    [0, y1_0] x {y1_1} and the right edge {y1_0} x [0, y1_1] of the
    identified box, so each edge carries an initial nonnegative segment,
    found by bisection, that extends to infinity in the saturated
    coordinate. A nonnegative corner adds the full upper quadrant.
    """
    if frontiers.y1.size != 2:
        raise ValueError("outer_set_2d needs exactly 2 treatment levels")
    _check_u(u, frontiers)
    y0, y1v = float(frontiers.y1[0]), float(frontiers.y1[1])
    caps = frontiers.caps
    inf = math.inf

    def rmin(a, b):
        return float(np.min(capped_residual((a, b), u, surface, caps)))

    if rmin(y0, y1v) >= 0.0:
        pieces = (
            IntervalProduct((0.0, y1v), (y0, inf)),
            IntervalProduct((y0, 0.0), (inf, y1v)),
            IntervalProduct((y0, y1v), (inf, inf)),
        )
        return OuterSet(pieces, u, "i", frontiers)

    pieces = []
    top = rmin(0.0, y1v) >= 0.0
    right = rmin(y0, 0.0) >= 0.0
    if top:
        ext = _bisect_extent(lambda x: rmin(x, y1v), 0.0, y0, BISECT_RTOL * y0)
        pieces.append(IntervalProduct((0.0, y1v), (ext, inf)))
    if right:
        ext = _bisect_extent(lambda x: rmin(y0, x), 0.0, y1v, BISECT_RTOL * y1v)
        pieces.append(IntervalProduct((y0, 0.0), (inf, ext)))
    if top and right:
        case = "ii"
    elif right:
        case = "iii"
    elif top:
        case = "iv"
    else:
        case = "empty"
    note = "" if pieces else (
        "residuals negative along both box edges: no admissible theta at this u "
        "(numerically inconsistent surface/quantile combination)"
    )
    return OuterSet(tuple(pieces), u, case, frontiers, note)


def _level_knots(surface, level: int, cap: float) -> np.ndarray:
    knots = np.asarray(surface.level_knots(level), dtype=np.float64)
    knots = knots[(knots > 0) & (knots <= cap)]
    return np.unique(np.concatenate(([0.0], knots)))


def _nonneg_region(u, surface, caps, template, free, tol_scale):
    """Cover of {theta_free : min_k R >= 0} by interval products (free coords).

    Residuals are nonincreasing per coordinate and flat past the caps.
    One free coordinate is bisected directly. With more, the first free
    coordinate is tiled into strips between consecutive surface knots;
    each strip is resolved at its left edge, which is exact for
    piecewise-constant surfaces and a conservative cover otherwise.
    """
    c = free[0]
    cap_c = float(caps[c])

    def rmin_at(x):
        th = template.copy()
        th[c] = x
        return float(np.min(capped_residual(th, u, surface, caps)))

    if len(free) == 1:
        if rmin_at(0.0) < 0.0:
            return []
        if rmin_at(cap_c) >= 0.0:
            return [{c: (0.0, math.inf)}]
        ext = _bisect_extent(rmin_at, 0.0, cap_c, BISECT_RTOL * tol_scale)
        return [{c: (0.0, ext)}]

    edges = _level_knots(surface, c, cap_c)
    out = []
    for i, left in enumerate(edges):
        hi = np.nextafter(edges[i + 1], -math.inf) if i + 1 < edges.size else math.inf
        sub_template = template.copy()
        sub_template[c] = left
        for sub in _nonneg_region(u, surface, caps, sub_template, free[1:], tol_scale):
            sub[c] = (float(left), float(hi))
            out.append(sub)
    return out


def outer_set_recursive(u: float, surface, frontiers: BoundFrontiers) -> OuterSet:
    """Outer set for three or more treatment levels.

    Union over levels l of the region where coordinate l sits at or above
    its support bound: there the surface is flat in theta_l, so theta_l
    can be pinned to the bound and the remaining coordinates swept for
    nonnegative residuals. Two levels fall back to the boundary scan.
    """
    L = frontiers.y1.size
    if L == 2:
        return outer_set_2d(u, surface, frontiers)
    _check_u(u, frontiers)
    caps = frontiers.caps
    tol_scale = float(np.max(frontiers.y1))
    pieces = []
    for l in range(L):
        template = np.zeros(L)
        template[l] = float(frontiers.y1[l])
        free = [j for j in range(L) if j != l]
        for region in _nonneg_region(u, surface, caps, template, free, tol_scale):
            lo = [0.0] * L
            hi = [math.inf] * L
            lo[l] = float(frontiers.y1[l])
            for j, (a, b) in region.items():
                lo[j], hi[j] = a, b
            pieces.append(IntervalProduct(tuple(lo), tuple(hi)))
    note = "" if pieces else (
        "residuals negative on every boundary stratum: no admissible theta at this u"
    )
    return OuterSet(tuple(pieces), u, "recursive" if pieces else "empty", frontiers, note)


def outer_set(u: float, surface, frontiers: BoundFrontiers) -> OuterSet:
    """Dispatch on the number of treatment levels."""
    return outer_set_2d(u, surface, frontiers) if frontiers.y1.size == 2 else outer_set_recursive(
        u, surface, frontiers
    )
