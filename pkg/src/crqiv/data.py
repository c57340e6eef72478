"""Observational data schema, validation, and CSV ingestion.

A dataset holds one record per subject: the follow-up time, an event code
(0 = censored, 1 = failure from the primary cause, 2 = failure from the
competing cause), a treatment level, and an instrument level.  Treatment
and instrument levels are kept as ordered label registries; records store
integer indices into those registries.

Cells (z, w) must be nonempty unless explicitly declared structurally
unreachable (one-sided noncompliance: subjects with instrument w can never
end up at treatment z).  Estimators treat declared-empty cells as having
probability zero.
"""

from __future__ import annotations

import csv
import json
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np

__all__ = [
    "DataValidationError",
    "ObservationRecord",
    "CellIndex",
    "Dataset",
    "cell_counts",
    "load_csv",
    "save_csv",
    "resample",
    "swap_causes",
]

CENSORED, CAUSE1, CAUSE2 = 0, 1, 2

DEFAULT_COLUMNS = {"y": "time", "event": "event", "z": "treatment", "w": "instrument"}


class DataValidationError(ValueError):
    """Raised when input data violates the schema."""


class ObservationRecord(NamedTuple):
    y: float
    event: int
    z: int
    w: int


class CellIndex(NamedTuple):
    z: int
    w: int


class Dataset:
    """Validated immutable sample of (y, event, z, w) records.

    Parameters
    ----------
    y, event, z, w : array-like
        Per-record columns. ``z`` and ``w`` are integer indices into the
        level registries.
    treatment_levels, instrument_levels : sequence
        Ordered distinct labels. At least 2 of each.
    structural_zeros : iterable of (z_index, w_index)
        Cells declared unreachable; the only cells allowed to be empty.
    """

    def __init__(
        self,
        y,
        event,
        z,
        w,
        treatment_levels: Sequence,
        instrument_levels: Sequence,
        structural_zeros: Iterable[tuple[int, int]] = (),
        validate: bool = True,
    ):
        self.y = np.ascontiguousarray(y, dtype=np.float64)
        self.event = np.ascontiguousarray(event, dtype=np.int64)
        self.z = np.ascontiguousarray(z, dtype=np.int64)
        self.w = np.ascontiguousarray(w, dtype=np.int64)
        self.treatment_levels = list(treatment_levels)
        self.instrument_levels = list(instrument_levels)
        self.structural_zeros = frozenset((int(a), int(b)) for a, b in structural_zeros)
        if validate:
            self._validate()
        for a in (self.y, self.event, self.z, self.w):
            a.setflags(write=False)

    # -- basic shape --------------------------------------------------

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def n_treatment_levels(self) -> int:
        return len(self.treatment_levels)

    @property
    def n_instrument_levels(self) -> int:
        return len(self.instrument_levels)

    def _validate(self) -> None:
        n = self.y.shape[0]
        if not (self.event.shape[0] == self.z.shape[0] == self.w.shape[0] == n):
            raise DataValidationError("column lengths differ")
        if n == 0:
            raise DataValidationError("empty record list")
        L = len(self.treatment_levels)
        K = len(self.instrument_levels)
        if len(set(map(str, self.treatment_levels))) != L:
            raise DataValidationError("treatment levels must be distinct")
        if len(set(map(str, self.instrument_levels))) != K:
            raise DataValidationError("instrument levels must be distinct")
        if K < 2:
            raise DataValidationError(f"K >= 2 required, got K={K} instrument level(s)")
        if L < 2:
            raise DataValidationError(f"L >= 2 required, got L={L} treatment level(s)")
        bad = ~np.isfinite(self.y) | (self.y < 0)
        if bad.any():
            i = int(np.argmax(bad))
            raise DataValidationError(f"row {i + 1}: follow-up time must be finite and >= 0, got {self.y[i]}")
        bad = (self.event < 0) | (self.event > 2)
        if bad.any():
            i = int(np.argmax(bad))
            raise DataValidationError(f"row {i + 1}: event code must be in {{0, 1, 2}}, got {self.event[i]}")
        bad = (self.z < 0) | (self.z >= L)
        if bad.any():
            i = int(np.argmax(bad))
            raise DataValidationError(f"row {i + 1}: treatment index out of range, got {self.z[i]}")
        bad = (self.w < 0) | (self.w >= K)
        if bad.any():
            i = int(np.argmax(bad))
            raise DataValidationError(f"row {i + 1}: instrument index out of range, got {self.w[i]}")
        for zw in self.structural_zeros:
            if not (0 <= zw[0] < L and 0 <= zw[1] < K):
                raise DataValidationError(f"structural zero cell {zw} out of range")
        # cell occupancy: empty only if declared, declared must be empty
        occupied = np.zeros((L, K), dtype=bool)
        occupied[self.z, self.w] = True
        for zi in range(L):
            for wi in range(K):
                if occupied[zi, wi] and (zi, wi) in self.structural_zeros:
                    raise DataValidationError(
                        f"cell (z={self.treatment_levels[zi]}, w={self.instrument_levels[wi]}) "
                        "declared structurally empty but has records"
                    )
                if not occupied[zi, wi] and (zi, wi) not in self.structural_zeros:
                    raise DataValidationError(
                        f"empty cell (z={self.treatment_levels[zi]}, w={self.instrument_levels[wi]}); "
                        "declare it in structural_zeros if it is unreachable by design"
                    )

    # -- access helpers ------------------------------------------------

    @property
    def records(self) -> list[ObservationRecord]:
        return [
            ObservationRecord(float(a), int(b), int(c), int(d))
            for a, b, c, d in zip(self.y, self.event, self.z, self.w)
        ]

    def cell_mask(self, cell: CellIndex | tuple[int, int]) -> np.ndarray:
        zi, wi = cell
        return (self.z == zi) & (self.w == wi)

    def cells(self) -> list[CellIndex]:
        return [
            CellIndex(zi, wi)
            for zi in range(self.n_treatment_levels)
            for wi in range(self.n_instrument_levels)
        ]

    @classmethod
    def from_records(
        cls,
        records: Iterable[ObservationRecord | tuple],
        treatment_levels: Sequence,
        instrument_levels: Sequence,
        structural_zeros: Iterable[tuple[int, int]] = (),
    ) -> "Dataset":
        rows = [tuple(r) for r in records]
        if not rows:
            raise DataValidationError("empty record list")
        y, event, z, w = (np.asarray(col) for col in zip(*rows))
        return cls(y, event, z, w, treatment_levels, instrument_levels, structural_zeros)


def swap_causes(data: Dataset) -> Dataset:
    """Relabel event causes 1 <-> 2 (censoring code 0 unchanged).

    Lets any primary-cause routine target the secondary cause instead.
    """
    ev = data.event.copy()
    ev[data.event == 1] = 2
    ev[data.event == 2] = 1
    return Dataset(
        data.y,
        ev,
        data.z,
        data.w,
        data.treatment_levels,
        data.instrument_levels,
        structural_zeros=data.structural_zeros,
        validate=False,
    )


def cell_counts(data: Dataset) -> dict[CellIndex, int]:
    """Number of records in every (z, w) cell. Values sum to n."""
    out: dict[CellIndex, int] = {}
    for cell in data.cells():
        out[cell] = int(np.count_nonzero(data.cell_mask(cell)))
    return out


def resample(data: Dataset, rng: np.random.Generator) -> Dataset:
    """Bootstrap resample of whole records, i.i.d. with replacement.

    Raises DataValidationError if the resample empties an undeclared cell.
    """
    idx = rng.integers(0, data.n, data.n)
    return Dataset(
        data.y[idx],
        data.event[idx],
        data.z[idx],
        data.w[idx],
        data.treatment_levels,
        data.instrument_levels,
        data.structural_zeros,
    )


# -- CSV ingestion and serialization -----------------------------------


def _coerce_labels(raw: list[str]) -> list:
    try:
        return [int(s) for s in raw]
    except ValueError:
        pass
    try:
        return [float(s) for s in raw]
    except ValueError:
        return raw


def load_csv(
    path,
    schema: Mapping[str, str] | None = None,
    treatment_order: Sequence | None = None,
    instrument_order: Sequence | None = None,
    structural_zeros: Iterable[tuple] | None = None,
    event_labels: Mapping[str, int] | None = None,
) -> Dataset:
    """Read a dataset from a CSV file with a header row.

    ``schema`` remaps logical column names; defaults are
    time/event/treatment/instrument. Level registries are built from
    distinct values in order of first appearance unless explicit orderings
    are supplied (or found in a ``<path>.levels.json`` sidecar).
    ``structural_zeros`` lists (treatment_label, instrument_label) pairs of
    cells that are unreachable by design. ``event_labels`` optionally maps
    raw event strings to codes in {0, 1, 2}.
    """
    cols = dict(DEFAULT_COLUMNS)
    if schema:
        unknown = set(schema) - set(cols)
        if unknown:
            raise DataValidationError(f"unknown schema keys: {sorted(unknown)}")
        cols.update(schema)

    sidecar = f"{path}.levels.json"
    side = None
    try:
        with open(sidecar, "r", encoding="utf-8") as fh:
            side = json.load(fh)
    except FileNotFoundError:
        pass

    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise DataValidationError("missing header row")
        for logical, name in cols.items():
            if name not in reader.fieldnames:
                raise DataValidationError(f"missing column '{name}' (for '{logical}')")
        y_raw: list[float] = []
        e_raw: list[int] = []
        z_raw: list[str] = []
        w_raw: list[str] = []
        for i, row in enumerate(reader, start=1):
            s = row[cols["y"]]
            try:
                yv = float(s)
            except (TypeError, ValueError):
                raise DataValidationError(f"row {i}: non-numeric follow-up time {s!r}") from None
            if not np.isfinite(yv) or yv < 0:
                raise DataValidationError(f"row {i}: follow-up time must be finite and >= 0, got {s}")
            ev_s = row[cols["event"]]
            if event_labels is not None and ev_s in event_labels:
                ev = int(event_labels[ev_s])
            else:
                try:
                    ev = int(ev_s)
                except (TypeError, ValueError):
                    raise DataValidationError(f"row {i}: non-integer event code {ev_s!r}") from None
            if ev not in (0, 1, 2):
                raise DataValidationError(f"row {i}: event code must be in {{0, 1, 2}}, got {ev_s}")
            y_raw.append(yv)
            e_raw.append(ev)
            z_raw.append(row[cols["z"]])
            w_raw.append(row[cols["w"]])

    if not y_raw:
        raise DataValidationError("empty record list")

    z_labels = _coerce_labels(z_raw)
    w_labels = _coerce_labels(w_raw)

    def registry(values: list, explicit: Sequence | None, side_key: str) -> list:
        if explicit is not None:
            return list(explicit)
        if side is not None and side_key in side:
            return list(side[side_key])
        seen: list = []
        for v in values:
            if v not in seen:
                seen.append(v)
        return seen

    t_levels = registry(z_labels, treatment_order, "treatment_levels")
    i_levels = registry(w_labels, instrument_order, "instrument_levels")

    def index_of(labels: list, registry_: list, what: str) -> np.ndarray:
        lookup = {lab: i for i, lab in enumerate(registry_)}
        out = np.empty(len(labels), dtype=np.int64)
        for i, lab in enumerate(labels):
            if lab not in lookup:
                raise DataValidationError(f"row {i + 1}: {what} level {lab!r} not in the supplied ordering")
            out[i] = lookup[lab]
        return out

    z_idx = index_of(z_labels, t_levels, "treatment")
    w_idx = index_of(w_labels, i_levels, "instrument")

    zeros: set[tuple[int, int]] = set()
    declared = structural_zeros
    if declared is None and side is not None:
        declared = [tuple(p) for p in side.get("structural_zeros", [])]
    if declared:
        for z_lab, w_lab in declared:
            if z_lab not in t_levels or w_lab not in i_levels:
                raise DataValidationError(f"structural zero ({z_lab!r}, {w_lab!r}) names unknown levels")
            zeros.add((t_levels.index(z_lab), i_levels.index(w_lab)))

    return Dataset(np.array(y_raw), np.array(e_raw), z_idx, w_idx, t_levels, i_levels, zeros)


def save_csv(data: Dataset, path) -> None:
    """Write a dataset as CSV plus a level-registry JSON sidecar.

    Follow-up times are written with shortest round-tripping decimal form,
    so load_csv(save_csv(d)) reproduces record values bit-exactly.
    """
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["time", "event", "treatment", "instrument"])
        t_levels, i_levels = data.treatment_levels, data.instrument_levels
        for yv, ev, zi, wi in zip(data.y, data.event, data.z, data.w):
            writer.writerow([repr(float(yv)), int(ev), t_levels[zi], i_levels[wi]])
    sidecar = {
        "treatment_levels": data.treatment_levels,
        "instrument_levels": data.instrument_levels,
        "structural_zeros": [
            [data.treatment_levels[a], data.instrument_levels[b]]
            for a, b in sorted(data.structural_zeros)
        ],
    }
    with open(f"{path}.levels.json", "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=1)
        fh.write("\n")
