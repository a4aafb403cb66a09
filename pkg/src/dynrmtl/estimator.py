"""Weighted estimating-equation fit for dynamic RMTL regression.

The coefficient vector solves

    Phi(beta) = sum_j sum_i w_ij Z*_i(l_j) { Y_ij - g_inv(Z*_i(l_j) beta) } = 0

over the stacked rows, where Y is the observed restricted life lost and w
the IPCW weight. The identity link makes the equation linear (one weighted
least-squares solve); the log link is solved by damped Newton iteration.
Standard errors come from a sandwich estimator with per-subject score sums
in the middle, which accounts for the correlation induced by reusing each
subject at every horizon.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np

from .data import CompetingRisksDataset, CovariateSchema
from .stacking import HorizonGrid, StackedDataset, TimeBasis, build_stacked

MODEL_FORMAT_VERSION = 1


class EstimationError(RuntimeError):
    """The fit could not be completed."""


class RankDeficiencyError(EstimationError):
    def __init__(self, columns: Sequence[str]):
        self.columns = tuple(columns)
        super().__init__(
            "design matrix is rank deficient; collinear columns: " + ", ".join(self.columns)
        )


class ConvergenceError(EstimationError):
    def __init__(self, message: str, final_norm: float):
        self.final_norm = final_norm
        super().__init__(f"{message} (final equation norm {final_norm:.3e})")


@dataclass(frozen=True)
class LinkSpec:
    """Link g with inverse and the derivative h of the inverse."""

    kind: str
    g: Callable[[np.ndarray], np.ndarray]
    g_inverse: Callable[[np.ndarray], np.ndarray]
    h: Callable[[np.ndarray], np.ndarray]


def identity_link() -> LinkSpec:
    return LinkSpec(
        kind="identity",
        g=lambda x: np.asarray(x, dtype=float),
        g_inverse=lambda x: np.asarray(x, dtype=float),
        h=lambda x: np.ones_like(np.asarray(x, dtype=float)),
    )


def log_link() -> LinkSpec:
    return LinkSpec(kind="log", g=np.log, g_inverse=np.exp, h=np.exp)


def get_link(kind: str) -> LinkSpec:
    if kind == "identity":
        return identity_link()
    if kind == "log":
        return log_link()
    raise ValueError(f"unknown link kind {kind!r} (expected 'identity' or 'log')")


@dataclass(frozen=True)
class ConvergenceReport:
    iterations: int
    final_norm: float
    converged: bool


@dataclass(frozen=True, eq=False)
class FittedModel:
    """Immutable fit result: coefficients in expand_design order plus the
    sandwich covariance, with everything needed to predict from scratch."""

    basis: TimeBasis
    coefficients: np.ndarray
    covariance: np.ndarray
    link: LinkSpec
    grid: HorizonGrid
    schema: CovariateSchema
    n_subjects: int
    convergence_report: ConvergenceReport

    def __post_init__(self):
        beta = np.ascontiguousarray(self.coefficients, dtype=float)
        cov = np.ascontiguousarray(self.covariance, dtype=float)
        q = self.basis.q
        if beta.shape != (q,):
            raise ValueError(f"coefficients must have length q={q}")
        if cov.shape != (q, q):
            raise ValueError("covariance must be q x q")
        if not np.allclose(cov, cov.T, atol=1e-10):
            raise ValueError("covariance must be symmetric")
        beta.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "coefficients", beta)
        object.__setattr__(self, "covariance", cov)

    @property
    def term_names(self) -> tuple[str, ...]:
        return self.basis.term_names(self.schema.design_names)

    def to_json_dict(self) -> dict:
        return {
            "format_version": MODEL_FORMAT_VERSION,
            "schema": self.schema.to_json_dict(),
            "basis": self.basis.to_json_dict(),
            "grid": self.grid.to_json_dict(),
            "link": self.link.kind,
            "coefficients": self.coefficients.tolist(),
            "covariance": self.covariance.reshape(-1).tolist(),
            "n_subjects": self.n_subjects,
            "convergence": {
                "iterations": self.convergence_report.iterations,
                "final_norm": self.convergence_report.final_norm,
                "converged": self.convergence_report.converged,
            },
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "FittedModel":
        version = doc.get("format_version")
        if version != MODEL_FORMAT_VERSION:
            raise ValueError(
                f"unsupported model format version {version!r} (expected {MODEL_FORMAT_VERSION})"
            )
        basis = TimeBasis.from_json_dict(doc["basis"])
        q = basis.q
        conv = doc.get("convergence", {})
        return cls(
            basis=basis,
            coefficients=np.asarray(doc["coefficients"], dtype=float),
            covariance=np.asarray(doc["covariance"], dtype=float).reshape(q, q),
            link=get_link(doc["link"]),
            grid=HorizonGrid.from_json_dict(doc["grid"]),
            schema=CovariateSchema.from_json_dict(doc["schema"]),
            n_subjects=int(doc["n_subjects"]),
            convergence_report=ConvergenceReport(
                iterations=int(conv.get("iterations", 0)),
                final_norm=float(conv.get("final_norm", 0.0)),
                converged=bool(conv.get("converged", True)),
            ),
        )

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_dict(), fh, indent=2)
            fh.write("\n")

    @classmethod
    def load(cls, path: str) -> "FittedModel":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json_dict(json.load(fh))


def _collinear_columns(design_w: np.ndarray, names: Sequence[str]) -> list[str]:
    """Columns that fail to raise the rank of the preceding columns."""
    bad: list[str] = []
    kept: list[int] = []
    rank = 0
    for idx in range(design_w.shape[1]):
        r = np.linalg.matrix_rank(design_w[:, kept + [idx]])
        if r > rank:
            kept.append(idx)
            rank = r
        else:
            bad.append(names[idx])
    return bad


def _score(design: np.ndarray, y: np.ndarray, w: np.ndarray, beta: np.ndarray, link: LinkSpec):
    mu = link.g_inverse(design @ beta)
    resid = y - mu
    return design.T @ (w * resid), mu


def fit(
    stacked: StackedDataset,
    link: LinkSpec | None = None,
    tol: float = 1e-8,
    max_iter: int = 100,
    cluster: bool = True,
) -> FittedModel:
    """Solve the weighted estimating equation on a stacked dataset.

    Raises RankDeficiencyError when the weighted design loses column rank
    and ConvergenceError when the log-link Newton iteration stalls.
    Convergence is declared when max|Phi|/n_subjects <= tol.
    """
    link = link or identity_link()
    design = stacked.design_expanded
    y = stacked.life_lost
    w = stacked.weight
    n = stacked.n_subjects
    q = design.shape[1]
    if q == 0:
        raise EstimationError("basis has no active terms")
    sqrt_w = np.sqrt(w)
    design_w = design * sqrt_w[:, None]
    rank = np.linalg.matrix_rank(design_w)
    if rank < q:
        names = list(stacked.basis.term_names(stacked.schema.design_names))
        raise RankDeficiencyError(_collinear_columns(design_w, names))

    if link.kind == "identity":
        beta, *_ = np.linalg.lstsq(design_w, sqrt_w * y, rcond=None)
        phi, _ = _score(design, y, w, beta, link)
        report = ConvergenceReport(
            iterations=1, final_norm=float(np.max(np.abs(phi)) / n), converged=True
        )
    else:
        beta, report = _newton_solve(design, y, w, link, n, tol, max_iter)

    cov = sandwich_variance(beta, stacked, link, cluster=cluster)
    return FittedModel(
        basis=stacked.basis,
        coefficients=beta,
        covariance=cov,
        link=link,
        grid=stacked.grid,
        schema=stacked.schema,
        n_subjects=n,
        convergence_report=report,
    )


def _newton_solve(design, y, w, link, n, tol, max_iter):
    q = design.shape[1]
    beta = np.zeros(q)
    wsum = float(np.sum(w))
    ybar = float(np.sum(w * y)) / wsum if wsum > 0 else 0.0
    if ybar > 0:
        beta[0] = math.log(ybar)
    phi, mu = _score(design, y, w, beta, link)
    if not np.all(np.isfinite(mu)):
        raise ConvergenceError("starting point yields non-finite mean", float("inf"))
    for iteration in range(1, max_iter + 1):
        norm = float(np.max(np.abs(phi)) / n)
        if norm <= tol:
            return beta, ConvergenceReport(iterations=iteration - 1, final_norm=norm, converged=True)
        h = link.h(design @ beta)
        info = design.T @ (design * (w * h)[:, None])
        try:
            delta = np.linalg.solve(info, phi)
        except np.linalg.LinAlgError:
            raise ConvergenceError("singular Newton system", norm) from None
        step = 1.0
        phi_norm = float(np.linalg.norm(phi))
        for _ in range(31):
            cand = beta + step * delta
            mu_c = link.g_inverse(design @ cand)
            if np.all(np.isfinite(mu_c)):
                phi_c = design.T @ (w * (y - mu_c))
                if float(np.linalg.norm(phi_c)) < phi_norm:
                    beta, phi = cand, phi_c
                    break
            step *= 0.5
        else:
            raise ConvergenceError("step halving failed to reduce the equation norm", norm)
    norm = float(np.max(np.abs(phi)) / n)
    if norm <= tol:
        return beta, ConvergenceReport(iterations=max_iter, final_norm=norm, converged=True)
    raise ConvergenceError(f"no convergence after {max_iter} iterations", norm)


def sandwich_variance(
    coefficients: np.ndarray,
    stacked: StackedDataset,
    link: LinkSpec | None = None,
    cluster: bool = True,
) -> np.ndarray:
    """Sandwich covariance of the coefficient estimate.

    The bread is the weighted Jacobian of the estimating equation; the meat
    stacks per-subject summed scores (cluster=True, the default) or raw
    per-row scores (cluster=False, a sensitivity variant that ignores the
    within-subject correlation across horizons).
    """
    link = link or identity_link()
    design = stacked.design_expanded
    y = stacked.life_lost
    w = stacked.weight
    n = stacked.n_subjects
    eta = design @ coefficients
    h = link.h(eta)
    bread = design.T @ (design * (w * h)[:, None]) / n
    scores = (w * (y - link.g_inverse(eta)))[:, None] * design
    if cluster:
        starts = np.flatnonzero(np.r_[True, np.diff(stacked.subject_index) != 0])
        s = np.add.reduceat(scores, starts, axis=0)
    else:
        s = scores
    meat = s.T @ s / n
    try:
        bread_inv = np.linalg.inv(bread)
    except np.linalg.LinAlgError:
        raise EstimationError("singular bread matrix in the sandwich variance") from None
    return bread_inv @ meat @ bread_inv / n


@dataclass(frozen=True)
class WaldRow:
    term: str
    coefficient: float
    se: float
    z: float
    p: float
    degenerate: bool = False


def wald_table(fitted: FittedModel) -> list[WaldRow]:
    """Per-term coefficient, SE, z and two-sided normal p-value."""
    rows = []
    se_all = np.sqrt(np.clip(np.diag(fitted.covariance), 0.0, None))
    for name, coef, se in zip(fitted.term_names, fitted.coefficients, se_all):
        if se == 0.0:
            z = math.inf if coef > 0 else (-math.inf if coef < 0 else math.nan)
            rows.append(WaldRow(name, float(coef), 0.0, z, 0.0, degenerate=True))
            continue
        z = float(coef / se)
        p = math.erfc(abs(z) / math.sqrt(2.0))
        rows.append(WaldRow(name, float(coef), float(se), z, p))
    return rows


def backward_stepwise(
    dataset: CompetingRisksDataset,
    grid: HorizonGrid,
    full_basis: TimeBasis | None = None,
    link: LinkSpec | None = None,
    alpha: float = 0.05,
    tol: float = 1e-8,
    max_iter: int = 100,
    survivors_complete: bool = True,
) -> FittedModel:
    """Backward elimination at single-term granularity.

    Refits after removing the active term with the largest Wald p-value
    above alpha; the intercept constant never leaves. Ties break toward
    the term latest in design order. A covariate whose terms are all
    removed is screened out entirely.
    """
    link = link or identity_link()
    if full_basis is None:
        full_basis = TimeBasis.full(dataset.schema.n_design_columns)
    basis = full_basis
    while True:
        stacked = build_stacked(dataset, grid, basis, survivors_complete=survivors_complete)
        fitted = fit(stacked, link, tol=tol, max_iter=max_iter)
        rows = wald_table(fitted)
        layout = basis.term_layout
        worst = None
        for idx, (row, (col, power)) in enumerate(zip(rows, layout)):
            if col == 0 and power == 0:
                continue
            if row.degenerate or row.p <= alpha:
                continue
            # >= breaks p ties toward the term latest in design order
            if worst is None or row.p >= worst[0]:
                worst = (row.p, idx, col, power)
        if worst is None:
            return fitted
        _, _, col, power = worst
        basis = basis.with_term_removed(col, power)


def fit_static(
    dataset: CompetingRisksDataset,
    tau: float,
    link: LinkSpec | None = None,
    tol: float = 1e-8,
    max_iter: int = 100,
    survivors_complete: bool = True,
) -> FittedModel:
    """Static-effect regression: the single-horizon, constant-basis case.

    Coefficients are cumulative RMTL differences at tau.
    """
    grid = HorizonGrid(points=np.array([float(tau)]), tau=float(tau))
    basis = TimeBasis.constant_only(dataset.schema.n_design_columns)
    stacked = build_stacked(dataset, grid, basis, survivors_complete=survivors_complete)
    return fit(stacked, link or identity_link(), tol=tol, max_iter=max_iter)
