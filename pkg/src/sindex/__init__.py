"""Single-index model-assisted estimation of finite population totals."""

__version__ = "0.1.0"

from .design import SRSWOR, Census, Poisson, Sample, SurveyDesign, draw_sample, ht_total
from .estimators import (
    EstimateReport,
    OracleReport,
    greg_linear,
    ht_estimate,
    oracle_estimate,
    sim_estimate,
    variance_estimate,
)
from .sim_fit import SingleIndexSplineRegressor

__all__ = [
    "SRSWOR",
    "Census",
    "Poisson",
    "Sample",
    "SurveyDesign",
    "draw_sample",
    "ht_total",
    "EstimateReport",
    "OracleReport",
    "greg_linear",
    "ht_estimate",
    "oracle_estimate",
    "sim_estimate",
    "variance_estimate",
    "SingleIndexSplineRegressor",
]
