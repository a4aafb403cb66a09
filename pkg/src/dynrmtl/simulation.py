"""Synthetic competing-risks generator and Monte Carlo harness.

Cause 1 follows an improper Gompertz subdistribution hazard
lambda_1(t) = gamma * exp(rho * t) with rho < 0, so the cause-1 incidence
plateaus at P(eps=1) = 1 - exp(gamma/rho) < 1. Cause 2 takes the remaining
mass with a unit-exponential conditional time. Two binary covariates pick
the (gamma, rho) stratum. Because everything is in closed form, the exact
incidence curves, subdistribution hazard ratios, restricted mean times
lost, and true regression coefficients are all available as oracles.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from typing import IO, Mapping, Sequence, Union

import numpy as np

from .data import CompetingRisksDataset, CovariateSchema
from .estimator import EstimationError, LinkSpec, fit, identity_link
from .stacking import HorizonGrid, TimeBasis, build_stacked

STRATA = ((0, 0), (0, 1), (1, 0), (1, 1))

_PILOT_DRAWS = 1_000_000
_PILOT_SEED = 171_717


class SimulationError(RuntimeError):
    pass


def _stratum_key(stratum) -> tuple[int, int]:
    z1, z2 = stratum
    return (int(z1), int(z2))


def _normalize_map(values: Mapping, name: str) -> tuple[float, float, float, float]:
    out = []
    for s in STRATA:
        if s in values:
            out.append(float(values[s]))
        elif f"{s[0]}{s[1]}" in values:
            out.append(float(values[f"{s[0]}{s[1]}"]))
        else:
            raise ValueError(f"{name} is missing stratum {s}")
    return tuple(out)


@dataclass(frozen=True)
class SimulationScenario:
    """Generator parameters: per-stratum (gamma, rho), exposure
    probabilities for the two binary covariates, target censoring
    proportion, and cohort size. gamma/rho follow the STRATA order."""

    gamma: tuple[float, float, float, float]
    rho: tuple[float, float, float, float]
    exposure_prob: tuple[float, float]
    censor_rate: float
    n: int

    def __post_init__(self):
        object.__setattr__(self, "gamma", tuple(float(g) for g in self.gamma))
        object.__setattr__(self, "rho", tuple(float(r) for r in self.rho))
        object.__setattr__(self, "exposure_prob", tuple(float(p) for p in self.exposure_prob))
        if len(self.gamma) != 4 or len(self.rho) != 4:
            raise ValueError("gamma and rho need one value per stratum (4)")
        if any(g <= 0 for g in self.gamma):
            raise ValueError("gamma must be positive")
        if any(r >= 0 for r in self.rho):
            raise ValueError("rho must be negative (improper Gompertz construction)")
        if len(self.exposure_prob) != 2 or any(p < 0 or p > 1 for p in self.exposure_prob):
            raise ValueError("exposure_prob must be two probabilities in [0, 1]")
        if not 0 <= self.censor_rate < 1:
            raise ValueError("censor_rate must lie in [0, 1)")
        if self.n < 1:
            raise ValueError("n must be >= 1")

    @classmethod
    def from_maps(
        cls,
        gamma: Mapping,
        rho: Mapping,
        exposure_prob: Sequence[float],
        censor_rate: float,
        n: int,
    ) -> "SimulationScenario":
        return cls(
            gamma=_normalize_map(gamma, "gamma"),
            rho=_normalize_map(rho, "rho"),
            exposure_prob=tuple(exposure_prob),
            censor_rate=censor_rate,
            n=n,
        )

    def stratum_params(self, stratum) -> tuple[float, float]:
        idx = STRATA.index(_stratum_key(stratum))
        return self.gamma[idx], self.rho[idx]

    def to_json_dict(self) -> dict:
        return {
            "gamma": {f"{s[0]}{s[1]}": g for s, g in zip(STRATA, self.gamma)},
            "rho": {f"{s[0]}{s[1]}": r for s, r in zip(STRATA, self.rho)},
            "exposure_prob": list(self.exposure_prob),
            "censor_rate": self.censor_rate,
            "n": self.n,
        }

    @classmethod
    def from_json_dict(cls, doc: Mapping) -> "SimulationScenario":
        return cls.from_maps(
            gamma=doc["gamma"],
            rho=doc["rho"],
            exposure_prob=doc["exposure_prob"],
            censor_rate=float(doc["censor_rate"]),
            n=int(doc["n"]),
        )


def reference_scenario(n: int = 500, censor_rate: float = 0.1, exposure: float = 0.5) -> SimulationScenario:
    """The two-covariate benchmark configuration used across the tests."""
    return SimulationScenario(
        gamma=(2.88, 1.95, 2.29, 1.55),
        rho=(-1.7, -1.4, -2.9, -2.8),
        exposure_prob=(exposure, exposure),
        censor_rate=censor_rate,
        n=n,
    )


def load_scenario(source: Union[str, IO]) -> SimulationScenario:
    if hasattr(source, "read"):
        doc = json.load(source)
    else:
        with open(source, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    return SimulationScenario.from_json_dict(doc)


def cif1(t, gamma: float, rho: float):
    """Cause-1 cumulative incidence 1 - exp{-(gamma/rho)(e^{rho t} - 1)}."""
    t = np.asarray(t, dtype=float)
    out = 1.0 - np.exp(-(gamma / rho) * (np.exp(rho * t) - 1.0))
    return float(out) if out.ndim == 0 else out


def cif2(t, gamma: float, rho: float):
    """Cause-2 cumulative incidence: exp(gamma/rho) * (1 - e^{-t})."""
    t = np.asarray(t, dtype=float)
    out = math.exp(gamma / rho) * (1.0 - np.exp(-t))
    return float(out) if out.ndim == 0 else out


def p_event1(gamma: float, rho: float) -> float:
    """Total cause-1 mass P(eps = 1) = 1 - exp(gamma/rho)."""
    return 1.0 - math.exp(gamma / rho)


def sample_event(u_outcome, u_time, gamma: float, rho: float):
    """Inverse-CDF draw of (T, eps) from two uniforms.

    The cause indicator compares u_outcome with the cause-1 mass; cause-1
    times invert the conditional incidence, cause-2 times are unit
    exponential.
    """
    u_outcome = np.asarray(u_outcome, dtype=float)
    u_time = np.asarray(u_time, dtype=float)
    p1 = p_event1(gamma, rho)
    is1 = u_outcome < p1
    t1 = (1.0 / rho) * np.log(1.0 - (rho / gamma) * np.log(1.0 - u_time * p1))
    t2 = -np.log(1.0 - u_time)
    t = np.where(is1, t1, t2)
    eps = np.where(is1, 1, 2)
    if t.ndim == 0:
        return float(t), int(eps)
    return t, eps


def shr(scenario: SimulationScenario, which: int, t) -> float:
    """Subdistribution hazard ratio of covariate `which` against the
    (0,0) stratum: gamma_a e^{rho_a t} / gamma_0 e^{rho_0 t}."""
    if which not in (1, 2):
        raise ValueError("which must be 1 or 2")
    g0, r0 = scenario.stratum_params((0, 0))
    ga, ra = scenario.stratum_params((1, 0) if which == 1 else (0, 1))
    t = np.asarray(t, dtype=float)
    out = (ga / g0) * np.exp((ra - r0) * t)
    return float(out) if out.ndim == 0 else out


def _adaptive_simpson(f, a: float, b: float, tol: float) -> float:
    fa, fb = f(a), f(b)
    m = 0.5 * (a + b)
    fm = f(m)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)

    def recurse(a, fa, b, fb, m, fm, whole, tol, depth):
        lm = 0.5 * (a + m)
        rm = 0.5 * (m + b)
        flm, frm = f(lm), f(rm)
        left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
        right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
        if depth <= 0 or abs(left + right - whole) <= 15.0 * tol:
            return left + right + (left + right - whole) / 15.0
        return recurse(a, fa, m, fm, lm, flm, left, tol / 2.0, depth - 1) + recurse(
            m, fm, b, fb, rm, frm, right, tol / 2.0, depth - 1
        )

    return recurse(a, fa, b, fb, m, fm, whole, tol, 50)


def true_rmtl(gamma: float, rho: float, l: float) -> float:
    """Restricted mean time lost to cause 1: integral of cif1 over [0, l],
    adaptive Simpson quadrature to absolute tolerance 1e-6."""
    if l <= 0:
        raise ValueError("l must be positive")
    return _adaptive_simpson(lambda t: cif1(t, gamma, rho), 0.0, float(l), 1e-6)


def true_coefficients(scenario: SimulationScenario, l: float) -> tuple[float, float, float]:
    """True regression coefficients at horizon l as stratum contrasts of
    the exact restricted mean time lost.

    beta0 is the baseline-stratum mean loss; beta2 contrasts the second
    covariate against baseline; beta1 contrasts the first covariate within
    the z2=1 background, the construction whose values the benchmark
    tables report.
    """
    mu = {s: true_rmtl(*scenario.stratum_params(s), l) for s in STRATA}
    beta0 = mu[(0, 0)]
    beta1 = mu[(1, 1)] - mu[(0, 1)]
    beta2 = mu[(0, 1)] - mu[(0, 0)]
    return beta0, beta1, beta2


@lru_cache(maxsize=64)
def _calibrate_cached(
    gamma: tuple, rho: tuple, exposure: tuple, censor_rate: float
) -> float:
    rng = np.random.default_rng(_PILOT_SEED)
    z1 = rng.random(_PILOT_DRAWS) < exposure[0]
    z2 = rng.random(_PILOT_DRAWS) < exposure[1]
    u_out = rng.random(_PILOT_DRAWS)
    u_time = rng.random(_PILOT_DRAWS)
    t = np.empty(_PILOT_DRAWS)
    strata_idx = z1.astype(int) * 2 + z2.astype(int)
    for idx, s in enumerate(STRATA):
        mask = strata_idx == idx
        if np.any(mask):
            g, r = gamma[idx], rho[idx]
            tt, _ = sample_event(u_out[mask], u_time[mask], g, r)
            t[mask] = tt

    def rate(c_max: float) -> float:
        # with C ~ U(0, c_max), P(C < T | T) = min(T / c_max, 1)
        return float(np.mean(np.minimum(t / c_max, 1.0)))

    target = censor_rate
    lo, hi = 1e-9, 1.0
    while rate(hi) > target:
        hi *= 2.0
        if hi > 1e12:
            raise SimulationError(f"censoring rate {target} unattainable")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        r_mid = rate(mid)
        if abs(r_mid - target) <= 2e-4:
            return mid
        if r_mid > target:
            lo = mid
        else:
            hi = mid
    raise SimulationError(f"censoring calibration failed to converge for rate {target}")


def calibrate_censoring(scenario: SimulationScenario) -> float:
    """Upper bound c_max such that C ~ Uniform(0, c_max) censors the target
    proportion of subjects, to within 0.002 on a fixed-seed million-draw
    pilot. A zero target returns +inf (no censoring)."""
    if scenario.censor_rate == 0:
        return math.inf
    if scenario.censor_rate > 0.9:
        raise SimulationError("censoring rates above 0.9 are not supported")
    return _calibrate_cached(
        scenario.gamma, scenario.rho, scenario.exposure_prob, scenario.censor_rate
    )


_COHORT_SCHEMA = CovariateSchema.numeric(["z1", "z2"])


def generate_cohort(scenario: SimulationScenario, seed) -> CompetingRisksDataset:
    """Draw one cohort: stratum from two Bernoullis, (T, eps) by inverse
    sampling, independent uniform censoring. Deterministic given seed."""
    rng = np.random.default_rng(seed)
    n = scenario.n
    p1, p2 = scenario.exposure_prob
    z1 = rng.random(n) < p1
    z2 = rng.random(n) < p2
    u_out = rng.random(n)
    u_time = rng.random(n)
    u_cens = rng.random(n)
    t = np.empty(n)
    eps = np.empty(n, dtype=np.int64)
    strata_idx = z1.astype(int) * 2 + z2.astype(int)
    for idx in range(4):
        mask = strata_idx == idx
        if np.any(mask):
            g, r = scenario.gamma[idx], scenario.rho[idx]
            tt, ee = sample_event(u_out[mask], u_time[mask], g, r)
            t[mask] = tt
            eps[mask] = ee
    c_max = calibrate_censoring(scenario)
    if math.isinf(c_max):
        observed = t
        events = eps
    else:
        c = u_cens * c_max
        observed = np.minimum(t, c)
        events = np.where(t <= c, eps, 0)
    return CompetingRisksDataset(
        times=observed,
        events=events,
        covariates=np.column_stack([z1.astype(float), z2.astype(float)]),
        schema=_COHORT_SCHEMA,
    )


@dataclass(frozen=True, eq=False)
class MetricsTable:
    """Monte Carlo summary per (coefficient, eval point)."""

    eval_points: tuple[float, ...]
    coefficients: tuple[str, ...]
    true_values: np.ndarray
    mean_bias: np.ndarray
    rel_bias: np.ndarray
    rmse: np.ndarray
    rel_se: np.ndarray
    coverage: np.ndarray
    replications: int
    failures: int

    def write_csv(self, sink: Union[str, IO]) -> None:
        fh, owned = (
            (open(sink, "w", encoding="utf-8", newline=""), True)
            if isinstance(sink, str)
            else (sink, False)
        )
        try:
            writer = csv.writer(fh)
            writer.writerow(
                ["coefficient", "l", "true", "bias_x100", "rel_bias", "rmse", "rel_se", "coverage"]
            )
            for k, name in enumerate(self.coefficients):
                for j, l in enumerate(self.eval_points):
                    writer.writerow(
                        [
                            name,
                            f"{l:g}",
                            f"{self.true_values[k, j]:.6f}",
                            f"{100 * self.mean_bias[k, j]:.6f}",
                            f"{self.rel_bias[k, j]:.6f}",
                            f"{self.rmse[k, j]:.6f}",
                            "" if math.isnan(self.rel_se[k, j]) else f"{self.rel_se[k, j]:.6f}",
                            "" if math.isnan(self.coverage[k, j]) else f"{self.coverage[k, j]:.6f}",
                        ]
                    )
        finally:
            if owned:
                fh.close()


def run_monte_carlo(
    scenario: SimulationScenario,
    replications: int,
    eval_points: Sequence[float] = (0.75, 1.0, 1.5),
    master_seed: int = 20230101,
    link: LinkSpec | None = None,
    grid_points: int = 20,
    n_workers: int = 1,
    inject_truth: bool = False,
) -> MetricsTable:
    """Repeatedly generate, stack, and fit; summarize estimator quality.

    The horizon grid is `grid_points` equally spaced points from 0
    (exclusive) to the largest eval point, the layout that reproduces the
    benchmark tables' bias and coverage pattern, including the mild
    quadratic-approximation bias of beta_0 at the top horizon. Estimates
    and delta-method standard errors of beta_k(l) are taken at the eval
    points. Failed replications are excluded; more than 5% failures
    aborts. Results are independent of n_workers because each replication
    owns the RNG substream (master_seed, index) and aggregation runs in
    index order.

    inject_truth replaces the estimator with the exact true values, a
    harness self-test; coverage and rel SE are then undefined and reported
    as NaN.
    """
    if replications < 2:
        raise ValueError("need at least 2 replications")
    link = link or identity_link()
    eval_points = tuple(float(l) for l in eval_points)
    L = len(eval_points)
    truth = np.array([true_coefficients(scenario, l) for l in eval_points]).T  # (3, L)
    calibrate_censoring(scenario)  # warm the cache before any parallel work

    l_top = max(eval_points)
    grid = HorizonGrid(
        points=np.linspace(0.0, l_top, grid_points + 1)[1:], tau=l_top
    )
    estimates = np.full((replications, 3, L), np.nan)
    ses = np.full((replications, 3, L), np.nan)
    failed = np.zeros(replications, dtype=bool)

    def one_rep(rep: int) -> None:
        try:
            cohort = generate_cohort(scenario, seed=[master_seed, rep])
            if inject_truth:
                estimates[rep] = truth
                return
            basis = TimeBasis.full(cohort.n_covariates)
            stacked = build_stacked(cohort, grid, basis)
            fitted = fit(stacked, link)
            for j, l in enumerate(eval_points):
                for k in range(3):
                    a = fitted.basis.effect_vector(k, l)
                    estimates[rep, k, j] = float(a @ fitted.coefficients)
                    ses[rep, k, j] = math.sqrt(
                        max(float(a @ fitted.covariance @ a), 0.0)
                    )
        except (EstimationError, ValueError):
            failed[rep] = True

    if n_workers > 1:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            list(pool.map(one_rep, range(replications)))
    else:
        for rep in range(replications):
            one_rep(rep)

    n_failed = int(failed.sum())
    if n_failed > 0.05 * replications:
        raise SimulationError(
            f"{n_failed}/{replications} replications failed; scenario unusable"
        )
    ok = ~failed
    est = estimates[ok]
    se = ses[ok]
    bias = est - truth[None, :, :]
    mean_bias = bias.mean(axis=0)
    rel_bias = mean_bias / truth
    rmse = np.sqrt((bias**2).mean(axis=0))
    mc_sd = est.std(axis=0, ddof=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        rel_se = se.mean(axis=0) / mc_sd
        covered = np.abs(bias) <= 1.96 * se
        coverage = np.where(
            np.all(np.isnan(se), axis=0), np.nan, covered.mean(axis=0)
        )
    if inject_truth:
        rel_se = np.full_like(rel_se, np.nan)
        coverage = np.full_like(coverage, np.nan)
    return MetricsTable(
        eval_points=eval_points,
        coefficients=("beta0", "beta1", "beta2"),
        true_values=truth,
        mean_bias=mean_bias,
        rel_bias=rel_bias,
        rmse=rmse,
        rel_se=rel_se,
        coverage=coverage,
        replications=replications,
        failures=n_failed,
    )
