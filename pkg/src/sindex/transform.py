"""Standardization, radius selection and the rescaled-Beta CDF transform of the index."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import betainc, gammaln

DEFAULT_ALPHA = 0.05


class DegenerateAuxiliaryError(ValueError):
    pass


@dataclass(frozen=True)
class Standardization:
    """Per-column centre and scale learned from a reference frame."""

    center: np.ndarray
    scale: np.ndarray

    def apply(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.shape[1] != self.center.shape[0]:
            raise ValueError(
                f"expected {self.center.shape[0]} auxiliary columns, got {X.shape[1]}"
            )
        return (X - self.center) / self.scale


def standardize(X) -> tuple[np.ndarray, Standardization]:
    """Centre each column to mean 0 and scale it to sample sd 1 (ddof=1)."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] < 2:
        raise ValueError("standardization needs at least two rows")
    center = X.mean(axis=0)
    scale = X.std(axis=0, ddof=1)
    bad = np.flatnonzero(~(scale > 0))
    if bad.size:
        raise DegenerateAuxiliaryError(
            f"degenerate auxiliary variable in column {int(bad[0])} (zero spread)"
        )
    params = Standardization(center=center, scale=scale)
    return params.apply(X), params


def select_radius(X_std, alpha: float = DEFAULT_ALPHA) -> float:
    """Nearest-rank ``100 * (1 - alpha)`` percentile of the row norms."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    X_std = np.asarray(X_std, dtype=float)
    if X_std.ndim == 1:
        X_std = X_std[:, None]
    N = X_std.shape[0]
    if N == 0:
        raise ValueError("cannot select a radius from an empty frame")
    norms = np.sort(np.linalg.norm(X_std, axis=1))
    # small slack so that e.g. 0.95 * 100 is not rounded up to 96 by float noise
    rank = max(1, math.ceil((1.0 - alpha) * N - 1e-9))
    a = float(norms[rank - 1])
    if not a > 0:
        raise ValueError("selected radius is not positive")
    return a


def _log_norm_const(d: int) -> float:
    # log of Gamma(d+1) / (Gamma((d+1)/2)^2 2^d)
    return gammaln(d + 1) - 2.0 * gammaln((d + 1) / 2.0) - d * math.log(2.0)


def density(v, d: int, a: float):
    """Rescaled centred Beta((d+1)/2, (d+1)/2) density on ``[-a, a]``."""
    if d < 1 or not a > 0:
        raise ValueError("need d >= 1 and a > 0")
    v = np.asarray(v, dtype=float)
    u = v / a
    inside = np.abs(u) <= 1.0
    base = np.where(inside, 1.0 - u * u, 0.0)
    out = np.exp(_log_norm_const(d)) / a * base ** ((d - 1) / 2.0)
    out = np.where(inside, out, 0.0)
    return out if out.ndim else float(out)


def cdf(v, d: int, a: float):
    """CDF of :func:`density`; ``v`` is clamped to ``[-a, a]`` first."""
    if d < 1 or not a > 0:
        raise ValueError("need d >= 1 and a > 0")
    v = np.clip(np.asarray(v, dtype=float), -a, a)
    x = 0.5 * (v / a + 1.0)
    if d == 1:
        out = x
    else:
        shape = (d + 1) / 2.0
        out = betainc(shape, shape, x)
    out = np.clip(out, 0.0, 1.0)
    return out if out.ndim else float(out)


def cdf_deriv(v, d: int, a: float):
    """Derivative of :func:`cdf`, identical to :func:`density`."""
    return density(v, d, a)


@dataclass(frozen=True)
class IndexTransform:
    """Maps index values ``x' theta`` of standardized auxiliaries to ``[0, 1]``."""

    d: int
    a: float
    alpha: float = DEFAULT_ALPHA
    standardization: Standardization | None = None

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("d must be >= 1")
        if not self.a > 0:
            raise ValueError("radius a must be positive")

    @classmethod
    def from_frame(cls, X, alpha: float = DEFAULT_ALPHA) -> tuple["IndexTransform", np.ndarray]:
        """Standardize the frame, pick the radius and return ``(transform, X_std)``."""
        X_std, params = standardize(X)
        a = select_radius(X_std, alpha)
        return cls(d=X_std.shape[1], a=a, alpha=alpha, standardization=params), X_std

    def cdf(self, v):
        return cdf(v, self.d, self.a)

    def cdf_deriv(self, v):
        return cdf_deriv(v, self.d, self.a)

    def __call__(self, X_std, theta) -> np.ndarray:
        return transform_index(X_std, theta, self)


def check_unit(theta, tol: float = 1e-8) -> np.ndarray:
    theta = np.asarray(theta, dtype=float).ravel()
    if abs(np.linalg.norm(theta) - 1.0) > tol:
        raise ValueError("theta must be a unit vector")
    return theta


def transform_index(X_std, theta, tr: IndexTransform) -> np.ndarray:
    """``z_i = F_d(clamp(x_i' theta, -a, a))`` for every row of ``X_std``."""
    theta = check_unit(theta)
    X_std = np.asarray(X_std, dtype=float)
    if X_std.ndim == 1:
        X_std = X_std[:, None]
    if X_std.shape[1] != theta.shape[0]:
        raise ValueError("theta length does not match the number of auxiliaries")
    return np.atleast_1d(tr.cdf(X_std @ theta))
