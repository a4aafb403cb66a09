"""Nonparametric estimators: censoring Kaplan-Meier, Aalen-Johansen
cumulative incidence, and group-level restricted mean time lost.

The censoring Kaplan-Meier uses a tie convention where non-censoring
departures leave the risk set before censoring events at the same time,
which keeps the inverse-probability weights finite for subjects whose
event time ties a censoring time.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .data import EVENT_CENSORED, CompetingRisksDataset


@dataclass(frozen=True, eq=False)
class StepFunction:
    """Right-continuous step function with left-limit support.

    evaluate(t) returns the value at the largest jump_time <= t, or
    value_at_zero if t lies before the first jump.
    """

    jump_times: np.ndarray
    values: np.ndarray
    value_at_zero: float = 1.0

    def __post_init__(self):
        jt = np.ascontiguousarray(self.jump_times, dtype=float)
        vals = np.ascontiguousarray(self.values, dtype=float)
        if jt.ndim != 1 or vals.shape != jt.shape:
            raise ValueError("jump_times and values must be 1-d arrays of equal length")
        if jt.size and not np.all(np.diff(jt) > 0):
            raise ValueError("jump_times must be strictly increasing")
        jt.setflags(write=False)
        vals.setflags(write=False)
        object.__setattr__(self, "jump_times", jt)
        object.__setattr__(self, "values", vals)

    def evaluate(self, t) -> np.ndarray | float:
        t_arr = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.jump_times, t_arr, side="right") - 1
        padded = np.concatenate(([self.value_at_zero], self.values))
        out = padded[idx + 1]
        return float(out) if np.isscalar(t) or t_arr.ndim == 0 else out

    def evaluate_minus(self, t) -> np.ndarray | float:
        """Left limit: value just before t."""
        t_arr = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.jump_times, t_arr, side="left") - 1
        padded = np.concatenate(([self.value_at_zero], self.values))
        out = padded[idx + 1]
        return float(out) if np.isscalar(t) or t_arr.ndim == 0 else out

    def __call__(self, t):
        return self.evaluate(t)

    def integral(self, upper: float) -> float:
        """Exact integral from 0 to upper (sum of rectangle areas)."""
        if upper < 0:
            raise ValueError("integration bound must be >= 0")
        total = 0.0
        prev_t = 0.0
        prev_v = self.value_at_zero
        for t, v in zip(self.jump_times, self.values):
            if t >= upper:
                break
            total += prev_v * (t - prev_t)
            prev_t, prev_v = t, v
        total += prev_v * (upper - prev_t)
        return total

    def to_json_dict(self) -> dict:
        return {
            "jump_times": self.jump_times.tolist(),
            "values": self.values.tolist(),
            "value_at_zero": self.value_at_zero,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict())


def censoring_km(records: Iterable[tuple[float, bool]]) -> StepFunction:
    """Kaplan-Meier estimate of the censoring survival P(C > t).

    Each record is (time, is_censoring_event). Non-censoring records leave
    the risk set at their time without contributing a factor. At tied times
    the non-censoring departures are removed from the risk set before the
    censoring events are counted.
    """
    recs = list(records)
    if not recs:
        raise ValueError("censoring_km requires at least one record")
    times = np.asarray([r[0] for r in recs], dtype=float)
    is_cens = np.asarray([bool(r[1]) for r in recs])
    if np.any(times < 0):
        raise ValueError("times must be >= 0")
    return _km_from_arrays(times, is_cens)


def _km_from_arrays(times: np.ndarray, is_event: np.ndarray) -> StepFunction:
    """Product-limit estimator treating is_event=True rows as events and
    counting same-time non-event departures out of the risk set first."""
    order = np.argsort(times, kind="stable")
    t_sorted = times[order]
    e_sorted = is_event[order]
    uniq, start = np.unique(t_sorted, return_index=True)
    counts = np.diff(np.concatenate((start, [t_sorted.size])))
    n_total = times.size
    # subjects with time >= s, minus same-time non-event departures
    at_risk_before = n_total - start
    d_event = np.add.reduceat(e_sorted.astype(np.int64), start)
    d_other = counts - d_event
    risk = at_risk_before - d_other
    jump_mask = d_event > 0
    if not np.any(jump_mask):
        return StepFunction(jump_times=np.empty(0), values=np.empty(0), value_at_zero=1.0)
    factors = 1.0 - d_event[jump_mask] / risk[jump_mask]
    surv = np.cumprod(factors)
    return StepFunction(jump_times=uniq[jump_mask], values=surv, value_at_zero=1.0)


def aalen_johansen_cif(dataset: CompetingRisksDataset, cause: int) -> StepFunction:
    """Aalen-Johansen cumulative incidence for the given cause.

    F(t) = sum over event times t_k <= t of S(t_k-) * d_cause(t_k) / n(t_k),
    with S the all-cause Kaplan-Meier survival.
    """
    if cause not in (1, 2):
        raise ValueError("cause must be 1 or 2")
    times = dataset.times
    events = dataset.events
    order = np.argsort(times, kind="stable")
    t_sorted = times[order]
    e_sorted = events[order]
    uniq, start = np.unique(t_sorted, return_index=True)
    counts = np.diff(np.concatenate((start, [t_sorted.size])))
    n_total = times.size
    at_risk = n_total - start
    d_any = np.add.reduceat((e_sorted != EVENT_CENSORED).astype(np.int64), start)
    d_cause = np.add.reduceat((e_sorted == cause).astype(np.int64), start)
    # all-cause survival just before each unique time
    surv_factors = 1.0 - d_any / at_risk
    surv_after = np.cumprod(surv_factors)
    surv_before = np.concatenate(([1.0], surv_after[:-1]))
    increments = surv_before * d_cause / at_risk
    jump_mask = d_cause > 0
    if not np.any(jump_mask):
        return StepFunction(jump_times=np.empty(0), values=np.empty(0), value_at_zero=0.0)
    cif = np.cumsum(increments)[jump_mask]
    return StepFunction(jump_times=uniq[jump_mask], values=cif, value_at_zero=0.0)


def all_cause_km(dataset: CompetingRisksDataset) -> StepFunction:
    """All-cause Kaplan-Meier survival (any event is an event)."""
    return _km_from_arrays(dataset.times, dataset.events != EVENT_CENSORED)


def rmtl_group(dataset: CompetingRisksDataset, cause: int, tau: float) -> float:
    """Restricted mean time lost to the given cause: area under the
    Aalen-Johansen cumulative incidence from 0 to tau.

    tau past the last observed time is allowed only when the all-cause
    survival estimate has reached zero there (the incidence curve is then
    fully determined); with subjects still at risk it is extrapolation and
    refused.
    """
    if tau <= 0:
        raise ValueError("tau must be > 0")
    max_time = float(np.max(dataset.times))
    if tau > max_time:
        surv = all_cause_km(dataset)
        if surv.evaluate(max_time) > 0.0:
            raise ValueError(
                f"tau={tau} exceeds the last observed time {max_time} with subjects "
                "still at risk; refusing to extrapolate"
            )
    cif = aalen_johansen_cif(dataset, cause)
    return cif.integral(tau)
