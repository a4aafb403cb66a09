"""Post-fit analytics: coefficient trajectories over time, per-profile
RMTL prediction with delta-method intervals, and external-validation
metrics (IPCW concordance and weighted absolute prediction error).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence, Union

import numpy as np

from .data import CompetingRisksDataset
from .estimator import FittedModel
from .nonparam import _km_from_arrays
from .stacking import HorizonGrid, TimeBasis, build_stacked

Z_95 = 1.959963984540054


class PredictionRangeError(ValueError):
    """Requested horizon lies outside the fitted grid range."""


def _check_range(fitted: FittedModel, horizons: np.ndarray, extrapolate: bool) -> None:
    if extrapolate:
        return
    lo = float(fitted.grid.points[0])
    hi = float(fitted.grid.points[-1])
    bad = horizons[(horizons < lo - 1e-12) | (horizons > hi + 1e-12)]
    if bad.size:
        raise PredictionRangeError(
            f"horizon {bad[0]:g} is outside the fitted range [{lo:g}, {hi:g}]; "
            "pass extrapolate=True to override"
        )


def _column_index(fitted: FittedModel, covariate: str) -> int:
    if covariate == "(intercept)":
        return 0
    names = fitted.schema.design_names
    if covariate not in names:
        raise KeyError(
            f"unknown covariate {covariate!r}; expected one of {['(intercept)'] + list(names)}"
        )
    return names.index(covariate) + 1


@dataclass(frozen=True)
class EffectEstimate:
    value: float
    se: float
    ci_lower: float
    ci_upper: float


def evaluate_effect(
    fitted: FittedModel, covariate: str, l: float, extrapolate: bool = False
) -> EffectEstimate:
    """Cumulative effect beta_k(l) with delta-method SE and 95% CI."""
    _check_range(fitted, np.asarray([l], dtype=float), extrapolate)
    k = _column_index(fitted, covariate)
    a = fitted.basis.effect_vector(k, float(l))
    value = float(a @ fitted.coefficients)
    se = math.sqrt(max(float(a @ fitted.covariance @ a), 0.0))
    return EffectEstimate(value, se, value - Z_95 * se, value + Z_95 * se)


def real_time_effect(
    fitted: FittedModel, covariate: str, l: float, extrapolate: bool = False
) -> tuple[float, float]:
    """Instantaneous effect: the trajectory slope at l and its magnitude."""
    _check_range(fitted, np.asarray([l], dtype=float), extrapolate)
    k = _column_index(fitted, covariate)
    a = fitted.basis.slope_vector(k, float(l))
    slope = float(a @ fitted.coefficients)
    return slope, abs(slope)


@dataclass(frozen=True, eq=False)
class EffectTrajectory:
    covariate: str
    horizons: np.ndarray
    values: np.ndarray
    ses: np.ndarray
    ci_lower: np.ndarray
    ci_upper: np.ndarray
    slopes: np.ndarray

    def to_json_dict(self) -> dict:
        return {
            "covariate": self.covariate,
            "horizons": self.horizons.tolist(),
            "values": self.values.tolist(),
            "se": self.ses.tolist(),
            "ci_lower": self.ci_lower.tolist(),
            "ci_upper": self.ci_upper.tolist(),
            "slopes": self.slopes.tolist(),
        }


def effect_trajectory(
    fitted: FittedModel,
    covariate: str,
    horizons: Sequence[float],
    extrapolate: bool = False,
) -> EffectTrajectory:
    """beta_k(l) over a horizon grid, with bands and slopes."""
    hs = np.asarray(horizons, dtype=float)
    _check_range(fitted, hs, extrapolate)
    k = _column_index(fitted, covariate)
    values = np.empty(hs.size)
    ses = np.empty(hs.size)
    slopes = np.empty(hs.size)
    for i, l in enumerate(hs):
        a = fitted.basis.effect_vector(k, float(l))
        values[i] = a @ fitted.coefficients
        ses[i] = math.sqrt(max(float(a @ fitted.covariance @ a), 0.0))
        slopes[i] = fitted.basis.slope_vector(k, float(l)) @ fitted.coefficients
    return EffectTrajectory(
        covariate=covariate,
        horizons=hs,
        values=values,
        ses=ses,
        ci_lower=values - Z_95 * ses,
        ci_upper=values + Z_95 * ses,
        slopes=slopes,
    )


@dataclass(frozen=True, eq=False)
class RmtlPrediction:
    horizons: np.ndarray
    values: np.ndarray
    ses: np.ndarray
    ci_lower: np.ndarray
    ci_upper: np.ndarray

    def to_json_dict(self) -> dict:
        return {
            "horizons": self.horizons.tolist(),
            "values": self.values.tolist(),
            "se": self.ses.tolist(),
            "ci_lower": self.ci_lower.tolist(),
            "ci_upper": self.ci_upper.tolist(),
        }


def predict_rmtl(
    fitted: FittedModel,
    profile: Mapping[str, object],
    horizons: Union[float, Sequence[float]],
    extrapolate: bool = False,
) -> RmtlPrediction:
    """Predicted mean life lost for a covariate profile at one or many
    horizons, with delta-method intervals through the inverse link."""
    hs = np.atleast_1d(np.asarray(horizons, dtype=float))
    _check_range(fitted, hs, extrapolate)
    z = fitted.schema.encode(profile)
    values = np.empty(hs.size)
    ses = np.empty(hs.size)
    for i, l in enumerate(hs):
        x = fitted.basis.expand_rows(z[None, :], float(l))[0]
        eta = float(x @ fitted.coefficients)
        se_eta = math.sqrt(max(float(x @ fitted.covariance @ x), 0.0))
        mu = float(fitted.link.g_inverse(eta))
        dmu = float(fitted.link.h(eta))
        values[i] = mu
        ses[i] = abs(dmu) * se_eta
    return RmtlPrediction(
        horizons=hs,
        values=values,
        ses=ses,
        ci_lower=values - Z_95 * ses,
        ci_upper=values + Z_95 * ses,
    )


def _predictions_at(fitted_or_values, validation: CompetingRisksDataset, l: float) -> np.ndarray:
    if isinstance(fitted_or_values, FittedModel):
        fitted = fitted_or_values
        if tuple(fitted.schema.design_names) != tuple(validation.schema.design_names):
            raise ValueError("validation data does not match the model's covariate schema")
        x = fitted.basis.expand_rows(validation.covariates, float(l))
        return np.asarray(fitted.link.g_inverse(x @ fitted.coefficients), dtype=float)
    preds = np.asarray(fitted_or_values, dtype=float)
    if preds.shape != (validation.n,):
        raise ValueError("prediction vector length must match the validation dataset")
    return preds


def c_index(
    fitted_or_values: Union[FittedModel, Sequence[float]],
    validation: CompetingRisksDataset,
    l: float,
) -> float:
    """IPCW-weighted truncated concordance for the event of interest.

    Pair (i, j) is comparable when subject i has the event of interest
    before min(l, U_j); it is concordant when i's predicted loss exceeds
    j's, with prediction ties counting one half. Pairs are weighted by the
    inverse squared censoring survival at i's event time. Accepts a fitted
    model or a precomputed per-subject prediction vector.
    """
    preds = _predictions_at(fitted_or_values, validation, l)
    times = validation.times
    events = validation.events
    g_hat = _km_from_arrays(times, events == 0)
    anchors = np.flatnonzero((events == 1) & (times < l))
    if anchors.size == 0:
        raise ValueError("no comparable pairs: no observed events of interest before l")
    num = 0.0
    den = 0.0
    for i in anchors:
        comparable = times > times[i]
        m = int(np.count_nonzero(comparable))
        if m == 0:
            continue
        g = float(g_hat.evaluate_minus(times[i]))
        w = 1.0 / (g * g)
        better = np.count_nonzero(preds[i] > preds[comparable])
        ties = np.count_nonzero(preds[i] == preds[comparable])
        num += w * (better + 0.5 * ties)
        den += w * m
    if den == 0.0:
        raise ValueError("no comparable pairs at this horizon")
    return num / den


def prediction_error(
    fitted_or_values: Union[FittedModel, Sequence[float]],
    validation: CompetingRisksDataset,
    l: float,
) -> float:
    """IPCW-weighted mean absolute error between the observed restricted
    life lost at horizon l and the predicted mean loss."""
    preds = _predictions_at(fitted_or_values, validation, l)
    grid = HorizonGrid(points=np.array([float(l)]), tau=float(l))
    if isinstance(fitted_or_values, FittedModel):
        basis = fitted_or_values.basis
    else:
        basis = TimeBasis.constant_only(validation.schema.n_design_columns)
    stacked = build_stacked(validation, grid, basis)
    w = stacked.weight
    y = stacked.life_lost
    total = float(np.sum(w))
    if total == 0.0:
        raise ValueError("all IPCW weights are zero at this horizon")
    return float(np.sum(w * np.abs(y - preds)) / total)
