"""Nonparametric survival estimators per (treatment, instrument) cell.

Counting processes, the product-limit estimator of the overall survival,
and the cause-specific cumulative-incidence estimator (and its survival
complement for the primary cause).  All return right-continuous step
functions.

Ties at a time point are handled with the standard convention that
failures are processed before censorings: the at-risk count at t includes
every record with y >= t, and all failures at t leave together.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import CellIndex, Dataset

__all__ = [
    "StepFunction",
    "CellProcess",
    "CountingProcesses",
    "build_counting_processes",
    "product_limit_survival",
    "incidence_from",
    "aalen_johansen_incidence",
    "aalen_johansen_cause1",
]


@dataclass(frozen=True)
class StepFunction:
    """Right-continuous piecewise-constant function on [0, inf).

    f(t) equals the value attached to the largest jump_time <= t, and
    value_at_zero before the first jump.
    """

    jump_times: np.ndarray
    values: np.ndarray
    value_at_zero: float = 1.0

    def __post_init__(self):
        jt = np.asarray(self.jump_times, dtype=np.float64)
        vals = np.asarray(self.values, dtype=np.float64)
        if jt.shape != vals.shape or jt.ndim != 1:
            raise ValueError("jump_times and values must be 1-d arrays of equal length")
        if jt.size and not np.all(np.diff(jt) > 0):
            raise ValueError("jump_times must be strictly increasing")
        if jt.size and jt[0] < 0:
            raise ValueError("jump_times must be nonnegative")
        object.__setattr__(self, "jump_times", jt)
        object.__setattr__(self, "values", vals)

    def __call__(self, t):
        t = np.asarray(t, dtype=np.float64)
        idx = np.searchsorted(self.jump_times, t, side="right")
        padded = np.concatenate(([self.value_at_zero], self.values))
        out = padded[idx]
        return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class CellProcess:
    """Counting processes for one (z, w) cell.

    times: distinct failure times (any cause), increasing.
    dn1:   number of cause-1 failures at each time.
    dn:    number of failures (either cause) at each time.
    at_risk: number of records with y >= time.
    """

    times: np.ndarray
    dn1: np.ndarray
    dn: np.ndarray
    at_risk: np.ndarray
    size: int  # Y_{z,w}


@dataclass(frozen=True)
class CountingProcesses:
    cells: dict[CellIndex, CellProcess]
    instrument_sizes: dict[int, int]  # Y_w
    n: int

    def cell(self, cell: CellIndex | tuple[int, int]) -> CellProcess:
        return self.cells[CellIndex(*cell)]


def _cell_process(y: np.ndarray, event: np.ndarray) -> CellProcess:
    size = y.shape[0]
    fail = event != 0
    if not fail.any():
        empty = np.empty(0)
        return CellProcess(empty, empty.copy(), empty.copy(), empty.copy(), size)
    yf = y[fail]
    ef = event[fail]
    times, inv = np.unique(yf, return_inverse=True)
    dn = np.bincount(inv, minlength=times.size).astype(np.float64)
    dn1 = np.bincount(inv, weights=(ef == 1).astype(np.float64), minlength=times.size)
    y_sorted = np.sort(y)
    at_risk = size - np.searchsorted(y_sorted, times, side="left")
    return CellProcess(times, dn1, dn, at_risk.astype(np.float64), size)


def build_counting_processes(data: Dataset) -> CountingProcesses:
    cells: dict[CellIndex, CellProcess] = {}
    for cell in data.cells():
        mask = data.cell_mask(cell)
        cells[cell] = _cell_process(data.y[mask], data.event[mask])
    inst_sizes = {
        wi: int(np.count_nonzero(data.w == wi)) for wi in range(data.n_instrument_levels)
    }
    return CountingProcesses(cells, inst_sizes, data.n)


def product_limit_survival(cp: CountingProcesses, cell: CellIndex | tuple[int, int]) -> StepFunction:
    """Product-limit estimate of P(T >= t) in the cell.

    One factor (1 - dN(s)/Y(s)) per distinct failure time s <= t.
    """
    c = cp.cell(cell)
    if c.size == 0:
        raise ValueError(f"cell {tuple(cell)} has no records")
    if c.times.size == 0:
        return StepFunction(np.empty(0), np.empty(0), 1.0)
    surv = np.cumprod(1.0 - c.dn / c.at_risk)
    return StepFunction(c.times, surv, 1.0)


def incidence_from(proc: CellProcess, cause: int) -> StepFunction:
    """Cumulative incidence of the given cause from one counting process.

    F_hat(t) = sum over failure times s <= t of S(s-) dN_cause(s)/Y(s),
    where S(s-) is the product-limit survival just before s (the interior
    product runs over times strictly before s).
    """
    if cause not in (1, 2):
        raise ValueError("cause must be 1 or 2")
    if proc.times.size == 0:
        return StepFunction(np.empty(0), np.empty(0), 0.0)
    surv = np.cumprod(1.0 - proc.dn / proc.at_risk)
    surv_left = np.concatenate(([1.0], surv[:-1]))
    dnj = proc.dn1 if cause == 1 else proc.dn - proc.dn1
    inc = np.cumsum(surv_left * dnj / proc.at_risk)
    keep = dnj > 0
    if not keep.any():
        return StepFunction(np.empty(0), np.empty(0), 0.0)
    return StepFunction(proc.times[keep], inc[keep], 0.0)


def aalen_johansen_incidence(
    cp: CountingProcesses, cell: CellIndex | tuple[int, int], cause: int
) -> StepFunction:
    """Cumulative incidence of the given cause in the cell."""
    c = cp.cell(cell)
    if c.size == 0:
        raise ValueError(f"cell {tuple(cell)} has no records")
    return incidence_from(c, cause)


def aalen_johansen_cause1(cp: CountingProcesses, cell: CellIndex | tuple[int, int]) -> StepFunction:
    """Survival complement 1 - F_hat of the cause-1 cumulative incidence.

    Non-increasing from 1, flat beyond the last cause-1 failure time.
    """
    inc = aalen_johansen_incidence(cp, cell, cause=1)
    return StepFunction(inc.jump_times, 1.0 - inc.values, 1.0)
