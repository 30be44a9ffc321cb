"""Design-weighted single-index spline regression.

For a fixed index direction ``theta`` the index ``x' theta`` is mapped to
``z in [0, 1]`` by :class:`~sindex.transform.IndexTransform`, and a cubic
spline in ``z`` is fitted by weighted least squares. The direction itself is
chosen by minimizing the profiled weighted residual sum of squares over the
upper unit hemisphere, parameterized by its first ``d - 1`` coordinates.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .splines import KnotVector, basis_and_derivative, design_matrix, num_knots
from .transform import DEFAULT_ALPHA, IndexTransform, check_unit

logger = logging.getLogger(__name__)

RIDGE_FACTOR = 1e-8


class SplineFitError(np.linalg.LinAlgError):
    pass


class ChartError(ValueError):
    pass


@dataclass(frozen=True)
class SampleData:
    """Standardized auxiliaries, responses and design weights of the fitted units.

    ``population_size`` is the divisor of the empirical risk.
    """

    X: np.ndarray
    y: np.ndarray
    w: np.ndarray
    population_size: int

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        y = np.asarray(self.y, dtype=float).ravel()
        w = np.asarray(self.w, dtype=float).ravel()
        if not (X.shape[0] == y.shape[0] == w.shape[0]):
            raise ValueError("X, y and w must have the same number of rows")
        if np.any(~(w > 0)):
            raise ValueError("design weights must be positive")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "w", w)

    @classmethod
    def census(cls, X, y) -> "SampleData":
        y = np.asarray(y, dtype=float)
        return cls(X, y, np.ones_like(y, dtype=float), len(y))

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def response_scale(self) -> float:
        """Weighted spread of ``y`` on the risk scale; zero iff ``y`` is constant."""
        ybar = np.sum(self.w * self.y) / np.sum(self.w)
        return float(np.sum(self.w * (self.y - ybar) ** 2) / self.population_size)

    def scaled(self, c: float, shift: float = 0.0) -> "SampleData":
        return SampleData(self.X, c * self.y + shift, self.w, self.population_size)


@dataclass
class FitTrace:
    iterations: int = 0
    risk_values: list = field(default_factory=list)
    final_gradient_norm: float = float("nan")
    converged: bool = False
    message: str = ""


@dataclass(frozen=True)
class FitOptions:
    max_iter: int = 200
    gtol: float = 1e-8
    ftol: float = 1e-12
    eps_dome: float = 1e-6
    ridge: bool = True
    init: object = "ols"
    multistart: bool = False
    initial_step: float = 0.1


@dataclass(frozen=True)
class SplineModel:
    """A fitted single-index spline: direction, spline coefficients, knots and transform."""

    theta: np.ndarray
    gamma: np.ndarray
    kv: KnotVector
    transform: IndexTransform

    def __post_init__(self):
        theta = check_unit(self.theta)
        if self.theta.shape[0] > 0 and not theta[-1] > 0:
            raise ValueError("theta must lie on the upper hemisphere (last coordinate > 0)")
        if not np.all(np.isfinite(self.gamma)):
            raise ValueError("spline coefficients must be finite")

    def z(self, X_std) -> np.ndarray:
        return self.transform(X_std, self.theta)

    def predict_std(self, X_std) -> np.ndarray:
        return design_matrix(self.z(X_std), self.kv) @ self.gamma


def _solve_normal(BtWB: np.ndarray, rhs: np.ndarray, ridge: bool) -> tuple[np.ndarray, bool]:
    try:
        c = linalg.cho_factor(BtWB, check_finite=False)
        return linalg.cho_solve(c, rhs, check_finite=False), False
    except linalg.LinAlgError:
        if not ridge:
            raise SplineFitError("insufficient data per knot span") from None
    lam = RIDGE_FACTOR * np.trace(BtWB) / BtWB.shape[0]
    try:
        c = linalg.cho_factor(BtWB + lam * np.eye(BtWB.shape[0]), check_finite=False)
    except linalg.LinAlgError:
        raise SplineFitError("insufficient data per knot span") from None
    return linalg.cho_solve(c, rhs, check_finite=False), True


def _weighted_fit_from_basis(B, y, w, ridge=True):
    Bw = B * w[:, None]
    return _solve_normal(Bw.T @ B, Bw.T @ y, ridge)


def weighted_spline_fit(z, y, w, kv: KnotVector, ridge: bool = True) -> np.ndarray:
    """Spline coefficients solving ``B' W B gamma = B' W y``."""
    z = np.asarray(z, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    w = np.asarray(w, dtype=float).ravel()
    if not (z.shape == y.shape == w.shape):
        raise ValueError("z, y and w must have equal lengths")
    gamma, _ = _weighted_fit_from_basis(design_matrix(z, kv), y, w, ridge)
    return gamma


def _profile(theta, data: SampleData, tr: IndexTransform, kv: KnotVector,
             gradient: bool, ridge: bool = True):
    """Risk at ``theta`` and, optionally, its gradient in the full coordinates."""
    if data.n and np.ptp(data.y) == 0:
        # constants lie in the spline space (partition of unity): the risk is identically zero
        gamma = np.full(kv.dim, data.y[0])
        return 0.0, (np.zeros(data.d) if gradient else None), gamma
    v = data.X @ theta
    z = tr.cdf(v)
    z = np.atleast_1d(z)
    if gradient:
        B, dB = basis_and_derivative(z, kv)
    else:
        B = design_matrix(z, kv)
    gamma, _ = _weighted_fit_from_basis(B, data.y, data.w, ridge)
    resid = data.y - B @ gamma
    risk = float(np.sum(data.w * resid**2) / data.population_size)
    if not gradient:
        return risk, None, gamma
    # d fitted / d theta_q = (B'(z) gamma) * F'(x' theta) * x_q, gamma held at its optimum
    slope = (dB @ gamma) * np.atleast_1d(tr.cdf_deriv(v))
    grad = -2.0 / data.population_size * (data.X.T @ (data.w * resid * slope))
    return risk, grad, gamma


def chart_to_theta(theta_minus_d) -> np.ndarray:
    u = np.atleast_1d(np.asarray(theta_minus_d, dtype=float))
    r2 = float(u @ u)
    if r2 >= 1.0:
        raise ChartError("left hemisphere chart: |theta_{-d}| must be < 1")
    return np.append(u, np.sqrt(1.0 - r2))


def risk(theta, data: SampleData, tr: IndexTransform, kv: KnotVector, ridge: bool = True) -> float:
    """Weighted empirical risk ``N^{-1} sum_s w_i (y_i - fitted_i)^2`` at ``theta``."""
    theta = check_unit(theta)
    return _profile(theta, data, tr, kv, gradient=False, ridge=ridge)[0]


def risk_gradient(theta, data: SampleData, tr: IndexTransform, kv: KnotVector,
                  ridge: bool = True) -> np.ndarray:
    """Gradient of the risk with respect to all ``d`` coordinates of ``theta``."""
    theta = check_unit(theta)
    return _profile(theta, data, tr, kv, gradient=True, ridge=ridge)[1]


def _chart_value_and_grad(u, data, tr, kv, ridge=True):
    theta = chart_to_theta(u)
    f, g, _ = _profile(theta, data, tr, kv, gradient=True, ridge=ridge)
    return f, g[:-1] - theta[:-1] / theta[-1] * g[-1]


def score(theta_minus_d, data: SampleData, tr: IndexTransform, kv: KnotVector,
          ridge: bool = True) -> np.ndarray:
    """Gradient of the risk as a function of the first ``d - 1`` coordinates.

    The last coordinate is ``sqrt(1 - |theta_{-d}|^2)``.
    """
    return _chart_value_and_grad(theta_minus_d, data, tr, kv, ridge)[1]


def ols_init(X_std, y) -> np.ndarray:
    """Normalized OLS slope of ``y`` on ``X_std``, signed so the last coordinate is positive."""
    X_std = np.asarray(X_std, dtype=float)
    if X_std.ndim == 1:
        X_std = X_std[:, None]
    n, d = X_std.shape
    pole = np.zeros(d)
    pole[-1] = 1.0
    if d >= n:
        return pole
    y = np.asarray(y, dtype=float)
    A = np.column_stack([np.ones(n), X_std])
    try:
        coef, _, rank, _ = np.linalg.lstsq(A, y, rcond=None)
    except np.linalg.LinAlgError:
        return pole
    beta = coef[1:]
    norm = np.linalg.norm(beta)
    # slopes at roundoff level (e.g. constant y) carry no direction
    tiny = 1e-10 * np.max(np.abs(y)) / max(float(np.max(np.std(X_std, axis=0))), 1e-300)
    if rank < d + 1 or not np.isfinite(norm) or norm <= tiny:
        return pole
    beta = beta / norm
    if beta[-1] < 0:
        beta = -beta
    if not beta[-1] > 0:
        return pole
    return beta


def _project(u, radius):
    r = np.linalg.norm(u)
    return u if r <= radius else u * (radius / r)


def _minimize_chart(u0, data, tr, kv, opts: FitOptions):
    radius = np.sqrt(1.0 - opts.eps_dome)
    u = _project(np.asarray(u0, dtype=float), radius)
    scale = data.response_scale()
    trace = FitTrace()
    f, g = _chart_value_and_grad(u, data, tr, kv, opts.ridge)
    trace.risk_values.append(f)
    best_f, best_u = f, u.copy()
    if scale == 0.0 or f <= 1e-15 * scale:
        trace.final_gradient_norm = float(np.max(np.abs(g)))
        trace.converged = True
        trace.message = "flat objective"
        return best_u, best_f, trace

    gtol = opts.gtol * scale
    H = None
    c_armijo = 1e-4
    for it in range(opts.max_iter):
        gnorm = float(np.max(np.abs(g)))
        if gnorm <= gtol:
            trace.converged = True
            trace.message = "gradient tolerance"
            break
        if H is None:
            p = -g * (opts.initial_step / np.linalg.norm(g))
        else:
            p = -H @ g
            if g @ p >= 0:
                H = None
                p = -g * (opts.initial_step / np.linalg.norm(g))

        t = 1.0
        accepted = False
        while t > 1e-12:
            u_new = _project(u + t * p, radius)
            step = u_new - u
            if not np.any(step):
                break
            f_new, g_new = _chart_value_and_grad(u_new, data, tr, kv, opts.ridge)
            if f_new <= f + c_armijo * (g @ step):
                accepted = True
                break
            t *= 0.5
        trace.iterations = it + 1
        if not accepted:
            if H is not None:
                H = None
                continue
            trace.converged = gnorm <= 1e-4 * scale
            trace.message = "line search stalled"
            break

        s = step
        yk = g_new - g
        sy = float(s @ yk)
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(yk):
            if H is None:
                H = np.eye(u.size) * (sy / float(yk @ yk))
            rho = 1.0 / sy
            V = np.eye(u.size) - rho * np.outer(s, yk)
            H = V @ H @ V.T + rho * np.outer(s, s)

        decrease = f - f_new
        u, f, g = u_new, f_new, g_new
        trace.risk_values.append(f)
        if f < best_f:
            best_f, best_u = f, u.copy()
        if decrease <= opts.ftol * max(abs(f), 1e-300):
            trace.converged = True
            trace.message = "relative risk decrease"
            break
    else:
        trace.message = "max_iter reached"
    trace.final_gradient_norm = float(np.max(np.abs(g)))
    return best_u, best_f, trace


def fit_theta(data: SampleData, tr: IndexTransform, kv: KnotVector, init=None,
              options: FitOptions | None = None) -> tuple[np.ndarray, FitTrace]:
    """Minimize the empirical risk over the upper hemisphere.

    Returns the lowest-risk iterate and the iteration trace. Hitting
    ``max_iter`` is reported through ``trace.converged`` rather than raised.
    """
    opts = options or FitOptions()
    d = data.d
    if d == 1:
        f = risk(np.ones(1), data, tr, kv, opts.ridge)
        return np.ones(1), FitTrace(0, [f], 0.0, True, "one-dimensional index")

    init = opts.init if init is None else init
    starts = []
    if isinstance(init, str):
        if init == "ols":
            starts.append(ols_init(data.X, data.y))
        elif init == "pole":
            starts.append(np.eye(d)[-1])
        else:
            raise ValueError(f"unknown init {init!r}; use 'ols', 'pole' or a unit vector")
    else:
        theta0 = check_unit(init)
        if theta0.shape[0] != d or not theta0[-1] > 0:
            raise ValueError("initial theta must be a length-d unit vector with last coordinate > 0")
        starts.append(theta0)
    if opts.multistart:
        starts.extend([np.eye(d)[-1], ols_init(data.X, data.y)])

    best = None
    for theta0 in starts:
        u, f, trace = _minimize_chart(theta0[:-1], data, tr, kv, opts)
        if best is None or f < best[1]:
            best = (u, f, trace)
    u, _, trace = best
    theta = chart_to_theta(u)
    if not trace.converged:
        logger.warning("index fit did not converge: %s", trace.message)
    return theta, trace


class SingleIndexSplineRegressor(RegressorMixin, BaseEstimator):
    """Single-index regression with a cubic spline link on the CDF-transformed index.

    Parameters
    ----------
    alpha : float
        The transform radius is the ``100 * (1 - alpha)`` percentile of the
        standardized frame's row norms.
    c1, c2 : int
        Knot constants; ``J = min(c1 * floor(n ** (1/5.5)), c2)``.
    n_interior_knots : int, optional
        Overrides the knot rule.
    max_iter, gtol, ftol, eps_dome, ridge, init, multistart
        Optimizer settings, see :class:`FitOptions`.

    Notes
    -----
    ``fit`` accepts ``frame``, the auxiliaries of the whole population. The
    standardization and radius are computed on the frame and the empirical
    risk is divided by its size; both default to the training rows.
    """

    def __init__(self, alpha=DEFAULT_ALPHA, c1=1, c2=5, n_interior_knots=None,
                 max_iter=200, gtol=1e-8, ftol=1e-12, eps_dome=1e-6, ridge=True,
                 init="ols", multistart=False):
        self.alpha = alpha
        self.c1 = c1
        self.c2 = c2
        self.n_interior_knots = n_interior_knots
        self.max_iter = max_iter
        self.gtol = gtol
        self.ftol = ftol
        self.eps_dome = eps_dome
        self.ridge = ridge
        self.init = init
        self.multistart = multistart

    def _options(self) -> FitOptions:
        return FitOptions(max_iter=self.max_iter, gtol=self.gtol, ftol=self.ftol,
                          eps_dome=self.eps_dome, ridge=self.ridge, init=self.init,
                          multistart=self.multistart)

    def fit(self, X, y, sample_weight=None, frame=None):
        X, y = check_X_y(X, y, y_numeric=True)
        frame = X if frame is None else check_array(frame)
        if frame.shape[1] != X.shape[1]:
            raise ValueError("frame and X must have the same number of columns")
        w = np.ones(X.shape[0]) if sample_weight is None else np.asarray(sample_weight, float)

        tr, _ = IndexTransform.from_frame(frame, self.alpha)
        X_std = tr.standardization.apply(X)
        n = X.shape[0]
        J = (num_knots(n, self.c1, self.c2) if self.n_interior_knots is None
             else int(self.n_interior_knots))
        kv = KnotVector(J)
        if n < kv.dim:
            raise SplineFitError(
                f"sample size {n} is below the spline dimension {kv.dim}; lower c2"
            )
        data = SampleData(X_std, y, w, frame.shape[0])
        theta, trace = fit_theta(data, tr, kv, options=self._options())
        r, _, gamma = _profile(theta, data, tr, kv, gradient=False, ridge=self.ridge)

        self.transform_ = tr
        self.knots_ = kv
        self.theta_ = theta
        self.gamma_ = gamma
        self.risk_ = r
        self.trace_ = trace
        self.model_ = SplineModel(theta, gamma, kv, tr)
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X)
        return self.model_.predict_std(self.transform_.standardization.apply(X))
