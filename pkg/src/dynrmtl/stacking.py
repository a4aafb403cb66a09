"""Stacked-dataset construction for dynamic RMTL regression.

For each horizon l_j on a grid, every subject's outcome is restricted at
l_j: events before the horizon keep their cause and accrue life lost
(l_j - U for the event of interest, zero for the competing event),
survivors past the horizon contribute zero loss, and subjects censored
strictly before min(T, l_j) are incomplete. Complete rows receive inverse
probability of censoring weights from a per-horizon Kaplan-Meier fit, and
the covariate row is expanded through the polynomial time basis so one
coefficient vector describes all horizons at once.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import IO, Sequence, Union

import numpy as np

from .data import EVENT_CENSORED, CompetingRisksDataset, CovariateSchema, SubjectRecord
from .nonparam import _km_from_arrays

AUTO = "auto"


@dataclass(frozen=True, eq=False)
class HorizonGrid:
    """Strictly increasing positive horizons l_1 < ... < l_J <= tau."""

    points: np.ndarray
    tau: float

    def __post_init__(self):
        pts = np.ascontiguousarray(self.points, dtype=float)
        if pts.ndim != 1 or pts.size == 0:
            raise ValueError("grid needs at least one point")
        if np.any(pts <= 0):
            raise ValueError("grid points must be positive")
        if pts.size > 1 and not np.all(np.diff(pts) > 0):
            raise ValueError("grid points must be strictly increasing")
        if pts[-1] > self.tau + 1e-12:
            raise ValueError("grid points must not exceed tau")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "tau", float(self.tau))

    @property
    def n_points(self) -> int:
        return self.points.size

    def to_json_dict(self) -> dict:
        return {"points": self.points.tolist(), "tau": self.tau}

    @classmethod
    def from_json_dict(cls, doc) -> "HorizonGrid":
        return cls(points=np.asarray(doc["points"], dtype=float), tau=float(doc["tau"]))


@dataclass(frozen=True, eq=False)
class TimeBasis:
    """Polynomial time basis (1, l, l^2) with a per-column activity mask.

    Row 0 of ``active`` is the intercept column; rows 1..p follow the design
    columns in schema order. active[k, m] marks whether the column's l^m
    term is present. The intercept's constant term is always active. A
    column may have no active terms at all, which drops it from the
    expansion entirely (the screened-out state reached by stepwise
    selection).
    """

    active: np.ndarray

    def __post_init__(self):
        act = np.ascontiguousarray(self.active, dtype=bool)
        if act.ndim != 2 or act.shape[1] != 3 or act.shape[0] < 1:
            raise ValueError("active mask must have shape (1 + p, 3)")
        if not act[0, 0]:
            raise ValueError("the intercept constant term must stay active")
        act.setflags(write=False)
        object.__setattr__(self, "active", act)

    @classmethod
    def full(cls, n_design_columns: int) -> "TimeBasis":
        return cls(active=np.ones((1 + n_design_columns, 3), dtype=bool))

    @classmethod
    def constant_only(cls, n_design_columns: int) -> "TimeBasis":
        act = np.zeros((1 + n_design_columns, 3), dtype=bool)
        act[:, 0] = True
        return cls(active=act)

    @property
    def n_columns(self) -> int:
        """Design columns including the intercept."""
        return self.active.shape[0]

    @property
    def q(self) -> int:
        """Expanded dimension: total count of active terms."""
        return int(self.active.sum())

    @property
    def term_layout(self) -> tuple[tuple[int, int], ...]:
        """(column, power) pairs in coefficient order: column-major,
        term-ascending."""
        return tuple(
            (k, m) for k in range(self.n_columns) for m in range(3) if self.active[k, m]
        )

    def term_position(self, column: int, power: int) -> int:
        """Index of a term in the coefficient vector; -1 if inactive."""
        pos = 0
        for k in range(self.n_columns):
            for m in range(3):
                if self.active[k, m]:
                    if k == column and m == power:
                        return pos
                    pos += 1
        return -1

    def term_names(self, design_names: Sequence[str]) -> tuple[str, ...]:
        if len(design_names) != self.n_columns - 1:
            raise ValueError("design_names must cover every non-intercept column")
        cols = ("(intercept)",) + tuple(design_names)
        suffix = ("1", "l", "l^2")
        return tuple(f"{cols[k]}:{suffix[m]}" for k, m in self.term_layout)

    def with_term_removed(self, column: int, power: int) -> "TimeBasis":
        if column == 0 and power == 0:
            raise ValueError("the intercept constant term is not removable")
        act = np.array(self.active)
        if not act[column, power]:
            raise ValueError(f"term (column {column}, power {power}) is already inactive")
        act[column, power] = False
        return TimeBasis(active=act)

    def expand_rows(self, z: np.ndarray, l: float) -> np.ndarray:
        """Expand covariate rows (n, p) at a single horizon into (n, q)."""
        z = np.atleast_2d(np.asarray(z, dtype=float))
        n = z.shape[0]
        if z.shape[1] != self.n_columns - 1:
            raise ValueError(
                f"covariate width {z.shape[1]} does not match basis ({self.n_columns - 1} columns)"
            )
        powers = np.array([1.0, l, l * l])
        cols = np.empty((n, self.q))
        pos = 0
        for k, m in self.term_layout:
            base = np.ones(n) if k == 0 else z[:, k - 1]
            cols[:, pos] = base * powers[m]
            pos += 1
        return cols

    def effect_vector(self, column: int, l: float) -> np.ndarray:
        """Basis-evaluation vector a with beta_col(l) = a . beta."""
        a = np.zeros(self.q)
        powers = (1.0, l, l * l)
        for pos, (k, m) in enumerate(self.term_layout):
            if k == column:
                a[pos] = powers[m]
        return a

    def slope_vector(self, column: int, l: float) -> np.ndarray:
        """Derivative counterpart: beta_col'(l) = a . beta."""
        a = np.zeros(self.q)
        dpowers = (0.0, 1.0, 2.0 * l)
        for pos, (k, m) in enumerate(self.term_layout):
            if k == column:
                a[pos] = dpowers[m]
        return a

    def to_json_dict(self) -> dict:
        return {"degree": 2, "active": self.active.astype(int).tolist()}

    @classmethod
    def from_json_dict(cls, doc) -> "TimeBasis":
        return cls(active=np.asarray(doc["active"], dtype=bool))


def expand_design(z: Sequence[float], l: float, basis: TimeBasis) -> np.ndarray:
    """Expand one covariate vector at horizon l (intercept prepended)."""
    return basis.expand_rows(np.asarray(z, dtype=float)[None, :], l)[0]


def build_time_grid(
    dataset: CompetingRisksDataset,
    l_min: Union[float, str] = AUTO,
    l_max: Union[float, str, None] = AUTO,
    n_points: int = 20,
) -> HorizonGrid:
    """Equally spaced horizon grid over the cause-1 event-time range.

    ``auto`` endpoints use the empirical 10th (l_min) and 95th (l_max)
    percentiles of cause-1 event times, linear-interpolation convention.
    A single-point grid sits at l_max.
    """
    if n_points < 1:
        raise ValueError("grid needs at least one point")
    auto_min = l_min == AUTO or l_min is None
    auto_max = l_max == AUTO or l_max is None
    if auto_min or auto_max:
        cause1 = dataset.times[dataset.events == 1]
        if cause1.size == 0:
            raise ValueError("automatic grid endpoints need at least one cause-1 event")
        if auto_min:
            l_min = float(np.percentile(cause1, 10))
        if auto_max:
            l_max = float(np.percentile(cause1, 95))
    l_min = float(l_min)
    l_max = float(l_max)
    max_time = float(np.max(dataset.times))
    if l_max > max_time:
        raise ValueError(f"l_max={l_max} exceeds the last observed time {max_time}")
    if l_min > l_max:
        raise ValueError(f"l_min={l_min} must not exceed l_max={l_max}")
    if l_min == l_max and n_points != 1:
        raise ValueError("a zero-width range supports only a single-point grid")
    if n_points == 1:
        points = np.array([l_max])
    else:
        points = np.linspace(l_min, l_max, n_points)
    return HorizonGrid(points=points, tau=l_max)


def restrict(
    record: SubjectRecord, l: float, survivors_complete: bool = True
) -> tuple[int, float, bool, float]:
    """Restrict one subject's outcome at horizon l.

    Returns (restricted_event, restricted_time, complete_case, life_lost).
    ``survivors_complete=False`` switches to the literal event-indicator
    reading in which event-free subjects under observation at l count as
    incomplete; the default keeps them complete with zero loss.
    """
    if l <= 0:
        raise ValueError("horizon must be positive")
    u, e = record.observed_time, record.event_code
    if e != EVENT_CENSORED and u <= l:
        return e, u, True, (l - u) if e == 1 else 0.0
    if u >= l:
        return 0, l, bool(survivors_complete), 0.0
    return 0, u, False, 0.0


def _restrict_arrays(
    times: np.ndarray, events: np.ndarray, l: float, survivors_complete: bool
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    event_before = (events != EVENT_CENSORED) & (times <= l)
    survives = times >= l
    r_event = np.where(event_before, events, 0)
    r_time = np.where(event_before, times, np.minimum(times, l))
    complete = event_before | (survives if survivors_complete else np.zeros_like(survives))
    life_lost = np.where(event_before & (events == 1), l - times, 0.0)
    return r_event, r_time, complete, life_lost


@dataclass(frozen=True, eq=False)
class StackedDataset:
    """Columnar stacked rows, subject-contiguous with horizons ascending.

    Row r belongs to subject subject_index[r]; a subject's n_points rows
    are adjacent and ordered by horizon, which the cluster-robust variance
    relies on.
    """

    subject_index: np.ndarray
    subject_ids: tuple[str, ...]
    horizon: np.ndarray
    restricted_event: np.ndarray
    restricted_time: np.ndarray
    complete_case: np.ndarray
    life_lost: np.ndarray
    weight: np.ndarray
    design_expanded: np.ndarray
    grid: HorizonGrid
    basis: TimeBasis
    schema: CovariateSchema
    n_subjects: int

    def __post_init__(self):
        n_rows = self.horizon.size
        for name in (
            "subject_index",
            "horizon",
            "restricted_event",
            "restricted_time",
            "complete_case",
            "life_lost",
            "weight",
        ):
            arr = getattr(self, name)
            if arr.shape != (n_rows,):
                raise ValueError(f"{name} must be 1-d with one entry per row")
            arr.setflags(write=False)
        if self.design_expanded.shape != (n_rows, self.basis.q):
            raise ValueError("design_expanded must be (rows, q)")
        self.design_expanded.setflags(write=False)
        if n_rows != self.n_subjects * self.grid.n_points:
            raise ValueError("row count must equal n_subjects * grid size")

    @property
    def n_rows(self) -> int:
        return self.horizon.size


def build_stacked(
    dataset: CompetingRisksDataset,
    grid: HorizonGrid,
    basis: TimeBasis,
    survivors_complete: bool = True,
) -> StackedDataset:
    """Stack the dataset over the horizon grid with IPCW weights.

    Each horizon gets its own censoring Kaplan-Meier fitted on the
    restricted times, where incomplete rows are the censoring events;
    complete rows are weighted by the inverse left-limit censoring
    survival at their restricted time.
    """
    if basis.n_columns - 1 != dataset.n_covariates:
        raise ValueError("basis width does not match the dataset design columns")
    n = dataset.n
    J = grid.n_points
    r_event = np.empty((J, n), dtype=np.int64)
    r_time = np.empty((J, n))
    complete = np.empty((J, n), dtype=bool)
    life_lost = np.empty((J, n))
    weight = np.empty((J, n))
    design = np.empty((J, n, basis.q))
    for j, l in enumerate(grid.points):
        ev, tm, cc, ll = _restrict_arrays(dataset.times, dataset.events, l, survivors_complete)
        g_hat = _km_from_arrays(tm, ~cc)
        g_left = np.asarray(g_hat.evaluate_minus(tm))
        w = np.zeros(n)
        if np.any(cc):
            bad = cc & (g_left <= 0.0)
            if np.any(bad):
                raise ValueError(
                    f"censoring survival hits zero before a complete case at horizon l={l:g}; "
                    "weights would be infinite"
                )
            w[cc] = 1.0 / g_left[cc]
        r_event[j] = ev
        r_time[j] = tm
        complete[j] = cc
        life_lost[j] = ll
        weight[j] = w
        design[j] = basis.expand_rows(dataset.covariates, l)
    # transpose from horizon-major to subject-major row order
    return StackedDataset(
        subject_index=np.repeat(np.arange(n), J),
        subject_ids=dataset.ids,
        horizon=np.tile(grid.points, n),
        restricted_event=np.ascontiguousarray(r_event.T).reshape(-1),
        restricted_time=np.ascontiguousarray(r_time.T).reshape(-1),
        complete_case=np.ascontiguousarray(complete.T).reshape(-1),
        life_lost=np.ascontiguousarray(life_lost.T).reshape(-1),
        weight=np.ascontiguousarray(weight.T).reshape(-1),
        design_expanded=np.ascontiguousarray(design.transpose(1, 0, 2)).reshape(
            n * J, basis.q
        ),
        grid=grid,
        basis=basis,
        schema=dataset.schema,
        n_subjects=n,
    )


def write_stacked_csv(stacked: StackedDataset, sink: Union[str, IO]) -> None:
    """Dump the stacked rows for inspection."""
    fh, owned = (open(sink, "w", encoding="utf-8", newline=""), True) if isinstance(sink, str) else (sink, False)
    try:
        writer = csv.writer(fh)
        term_cols = [f"x{t}" for t in range(stacked.basis.q)]
        writer.writerow(
            ["subject", "horizon", "event", "time", "complete", "life_lost", "weight"] + term_cols
        )
        for r in range(stacked.n_rows):
            writer.writerow(
                [
                    stacked.subject_ids[stacked.subject_index[r]],
                    repr(float(stacked.horizon[r])),
                    int(stacked.restricted_event[r]),
                    repr(float(stacked.restricted_time[r])),
                    int(stacked.complete_case[r]),
                    repr(float(stacked.life_lost[r])),
                    repr(float(stacked.weight[r])),
                ]
                + [repr(float(x)) for x in stacked.design_expanded[r]]
            )
    finally:
        if owned:
            fh.close()
