"""Estimators of a finite population total.

All estimators take the auxiliaries of the whole frame (``population_X``),
a :class:`~sindex.design.Sample` and the responses observed on it.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .design import Sample, SurveyDesign, ht_total
from .sim_fit import FitTrace, SingleIndexSplineRegressor


@dataclass
class EstimateReport:
    estimator: str
    t_hat: float
    var_hat: float | None = None
    theta_hat: np.ndarray | None = None
    risk: float | None = None
    trace: FitTrace | None = None
    seed: int | None = None
    N: int | None = None
    n: int | None = None
    design: str | None = None
    predictions: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if not np.isfinite(self.t_hat):
            raise ValueError("estimated total is not finite")
        if self.var_hat is not None and self.var_hat < 0:
            raise ValueError("variance estimate must be non-negative")

    def to_dict(self) -> dict:
        """Flat JSON-ready mapping."""
        return {
            "estimator": self.estimator,
            "t_hat": float(self.t_hat),
            "var_hat": None if self.var_hat is None else float(self.var_hat),
            "theta_hat": None if self.theta_hat is None else [float(v) for v in self.theta_hat],
            "risk": None if self.risk is None else float(self.risk),
            "n": self.n,
            "N": self.N,
            "design": self.design,
            "seed": self.seed,
            "converged": None if self.trace is None else bool(self.trace.converged),
            "iterations": None if self.trace is None else int(self.trace.iterations),
        }


@dataclass
class OracleReport:
    theta_tilde: np.ndarray
    t_diff_tilde: float
    m_tilde: np.ndarray = field(repr=False)
    t_y: float = float("nan")
    trace: FitTrace | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["theta_tilde"] = [float(v) for v in self.theta_tilde]
        d["m_tilde"] = [float(v) for v in self.m_tilde]
        d["trace"] = None if self.trace is None else {
            "iterations": self.trace.iterations,
            "converged": self.trace.converged,
        }
        return d


def _check_inputs(population_X, sample: Sample, y_s):
    X = np.asarray(population_X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y_s = np.asarray(y_s, dtype=float).ravel()
    if y_s.shape[0] != sample.n:
        raise ValueError(
            f"response vector has length {y_s.shape[0]} but the sample has {sample.n} units"
        )
    if sample.n and sample.indices[-1] >= X.shape[0]:
        raise ValueError("sample index outside the population frame")
    return X, y_s


def difference_total(sample: Sample, y_s, m_s, m_total: float) -> float:
    """Generalized difference estimator ``sum_s (y - m)/pi + sum_U m``."""
    return float(np.sum((np.asarray(y_s) - np.asarray(m_s)) / sample.pi) + m_total)


def variance_estimate(sample: Sample, y_s, m_hat_s, design: SurveyDesign) -> float:
    """Design variance estimate of a difference-type total.

    ``sum_{i,j in s} e_i e_j (pi_ij - pi_i pi_j) / (pi_i pi_j pi_ij)`` with
    ``e = y - m_hat`` and ``pi_ii = pi_i``. This is the total-scale value, i.e.
    ``N**2`` times the estimate for the mean.
    """
    e = np.asarray(y_s, dtype=float) - np.asarray(m_hat_s, dtype=float)
    if e.shape[0] != sample.n:
        raise ValueError("residual vector does not match the sample")
    pij = design.pi_matrix(sample.indices)
    if np.any(~(pij > 0)):
        raise ValueError("a sampled pair has zero joint inclusion probability")
    pi = sample.pi
    u = e / pi
    delta = (pij - np.outer(pi, pi)) / pij
    v = float(u @ delta @ u)
    # roundoff can push an exact zero slightly negative
    return max(v, 0.0)


def ht_estimate(population_X, sample: Sample, y_s, design: SurveyDesign,
                seed: int | None = None) -> EstimateReport:
    X, y_s = _check_inputs(population_X, sample, y_s)
    return EstimateReport(
        estimator="HT",
        t_hat=ht_total(sample, y_s),
        var_hat=variance_estimate(sample, y_s, np.zeros_like(y_s), design),
        seed=seed, N=X.shape[0], n=sample.n, design=design.name,
    )


def greg_linear(population_X, sample: Sample, y_s, design: SurveyDesign,
                seed: int | None = None) -> EstimateReport:
    """Linear regression (GREG) estimator with an intercept."""
    X, y_s = _check_inputs(population_X, sample, y_s)
    A_U = np.column_stack([np.ones(X.shape[0]), X])
    A_s = A_U[sample.indices]
    sw = np.sqrt(sample.weights)
    coef, _, rank, _ = np.linalg.lstsq(A_s * sw[:, None], y_s * sw, rcond=None)
    if rank < A_s.shape[1]:
        raise np.linalg.LinAlgError("regression design matrix is rank deficient on the sample")
    m_U = A_U @ coef
    m_s = m_U[sample.indices]
    return EstimateReport(
        estimator="LREG",
        t_hat=difference_total(sample, y_s, m_s, float(np.sum(m_U))),
        var_hat=variance_estimate(sample, y_s, m_s, design),
        seed=seed, N=X.shape[0], n=sample.n, design=design.name,
        predictions=m_U,
    )


def sim_predictions(model, population_X_std) -> np.ndarray:
    """Spline predictions for every frame unit from a fitted :class:`SplineModel`."""
    return model.predict_std(population_X_std)


def sim_estimate(population_X, sample: Sample, y_s, design: SurveyDesign,
                 seed: int | None = None, **options) -> EstimateReport:
    """Single-index spline model-assisted estimator of the total.

    ``options`` are forwarded to :class:`SingleIndexSplineRegressor`.
    """
    X, y_s = _check_inputs(population_X, sample, y_s)
    reg = SingleIndexSplineRegressor(**options)
    reg.fit(X[sample.indices], y_s, sample_weight=sample.weights, frame=X)
    X_std = reg.transform_.standardization.apply(X)
    m_U = sim_predictions(reg.model_, X_std)
    m_s = m_U[sample.indices]
    return EstimateReport(
        estimator="SIM",
        t_hat=difference_total(sample, y_s, m_s, float(np.sum(m_U))),
        var_hat=variance_estimate(sample, y_s, m_s, design),
        theta_hat=reg.theta_, risk=reg.risk_, trace=reg.trace_,
        seed=seed, N=X.shape[0], n=sample.n, design=design.name,
        predictions=m_U,
    )


def oracle_estimate(population_X, y_full, sample: Sample | None = None,
                    **options) -> OracleReport:
    """Population-level fit with unit weights and its difference estimator.

    Without a sample the difference estimator is evaluated on the census and
    equals the population total.
    """
    X = np.asarray(population_X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y_full, dtype=float).ravel()
    if y.shape[0] != X.shape[0]:
        raise ValueError("y_full must cover every frame unit")
    reg = SingleIndexSplineRegressor(**options).fit(X, y, frame=X)
    m = reg.predict(X)
    if sample is None:
        t_diff = float(np.sum(y - m) + np.sum(m))
    else:
        idx = sample.indices
        t_diff = difference_total(sample, y[idx], m[idx], float(np.sum(m)))
    return OracleReport(theta_tilde=reg.theta_, t_diff_tilde=t_diff, m_tilde=m,
                        t_y=float(np.sum(y)), trace=reg.trace_)


ESTIMATORS = {"HT": ht_estimate, "LREG": greg_linear, "SIM": sim_estimate}
