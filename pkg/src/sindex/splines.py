"""Cubic B-spline bases on [0, 1] with equally spaced interior knots."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

ORDER = 4


def num_knots(n: int, c1: int = 1, c2: int = 5) -> int:
    """Number of interior knots for a sample of size ``n``.

    Returns ``min(c1 * floor(n ** (1 / 5.5)), c2)``.
    """
    if n < 1 or c1 < 1 or c2 < 1:
        raise ValueError("n, c1 and c2 must all be positive integers")
    root = n ** (1.0 / 5.5)
    # guard against n ** (1/5.5) landing a hair below an exact integer
    k = math.floor(root + 1e-12)
    return min(c1 * k, c2)


@dataclass(frozen=True)
class KnotVector:
    """Clamped knot sequence with ``num_interior`` equally spaced interior knots.

    The full sequence has ``ORDER`` copies of 0 on the left, ``ORDER`` copies of 1
    on the right and the interior knots ``j / (J + 1)``, ``j = 1..J``.
    """

    num_interior: int
    order: int = field(default=ORDER)
    knots: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.num_interior < 0:
            raise ValueError("num_interior must be >= 0")
        if self.order != ORDER:
            raise ValueError("only cubic splines (order 4) are supported")
        J = self.num_interior
        interior = np.arange(1, J + 1) / (J + 1)
        knots = np.concatenate([np.zeros(ORDER), interior, np.ones(ORDER)])
        knots.setflags(write=False)
        object.__setattr__(self, "knots", knots)

    @property
    def dim(self) -> int:
        """Dimension of the cubic spline space, ``J + 4``."""
        return self.num_interior + ORDER

    @property
    def spacing(self) -> float:
        return 1.0 / (self.num_interior + 1)


def _check_unit_interval(z: np.ndarray) -> None:
    if np.isnan(z).any():
        raise ValueError("spline arguments must not be NaN")
    if z.size and (z.min() < 0.0 or z.max() > 1.0):
        raise ValueError("spline arguments must lie in [0, 1]")


def _basis_table(z: np.ndarray, kv: KnotVector, order: int) -> np.ndarray:
    """Cox-de Boor recursion up to ``order`` for every point of ``z``.

    Returns an ``(m, len(knots) - order)`` array with column ``j`` holding
    ``B_{j, order}`` over the full knot sequence (0-based indexing).
    """
    t = kv.knots
    nk = len(t)
    m = z.shape[0]

    # order 1: indicator of [t_j, t_{j+1}); the last non-empty span is closed at 1
    B = np.zeros((m, nk - 1))
    span = np.searchsorted(t, z, side="right") - 1
    last = nk - ORDER - 1
    span = np.minimum(span, last)
    B[np.arange(m), span] = 1.0

    zc = z[:, None]
    for k in range(2, order + 1):
        nb = nk - k
        left_den = t[k - 1 : k - 1 + nb] - t[:nb]
        right_den = t[k : k + nb] - t[1 : 1 + nb]
        with np.errstate(divide="ignore", invalid="ignore"):
            left = np.where(left_den > 0, (zc - t[:nb]) / left_den, 0.0)
            right = np.where(right_den > 0, (t[k : k + nb] - zc) / right_den, 0.0)
        B = left * B[:, :nb] + right * B[:, 1 : nb + 1]
    return B


def design_matrix(zs, kv: KnotVector) -> np.ndarray:
    """B-spline design matrix: row ``i`` is ``eval_basis(zs[i], kv)``."""
    z = np.asarray(zs, dtype=float).ravel()
    _check_unit_interval(z)
    return _basis_table(z, kv, ORDER)


def derivative_matrix(zs, kv: KnotVector) -> np.ndarray:
    """First derivatives of every cubic basis function at every point.

    Uses ``B'_{j,4} = 3 * (B_{j,3} / (t_{j+3} - t_j) - B_{j+1,3} / (t_{j+4} - t_{j+1}))``
    which, for equally spaced knots, is ``(J + 1) * (B_{j,3} - B_{j+1,3})`` in the interior.
    """
    z = np.asarray(zs, dtype=float).ravel()
    _check_unit_interval(z)
    return _deriv_from_order3(_basis_table(z, kv, ORDER - 1), kv)


def _deriv_from_order3(B3: np.ndarray, kv: KnotVector) -> np.ndarray:
    t = kv.knots
    nb = kv.dim
    d_left = t[3 : 3 + nb] - t[:nb]
    d_right = t[4 : 4 + nb] - t[1 : 1 + nb]
    c_left = np.where(d_left > 0, 3.0 / np.where(d_left > 0, d_left, 1.0), 0.0)
    c_right = np.where(d_right > 0, 3.0 / np.where(d_right > 0, d_right, 1.0), 0.0)
    return c_left * B3[:, :nb] - c_right * B3[:, 1 : nb + 1]


def basis_and_derivative(zs, kv: KnotVector) -> tuple[np.ndarray, np.ndarray]:
    """Design matrix and derivative matrix sharing one order-3 pass."""
    z = np.asarray(zs, dtype=float).ravel()
    _check_unit_interval(z)
    B3 = _basis_table(z, kv, ORDER - 1)
    t = kv.knots
    nb = kv.dim
    zc = z[:, None]
    left_den = t[3 : 3 + nb] - t[:nb]
    right_den = t[4 : 4 + nb] - t[1 : 1 + nb]
    with np.errstate(divide="ignore", invalid="ignore"):
        left = np.where(left_den > 0, (zc - t[:nb]) / left_den, 0.0)
        right = np.where(right_den > 0, (t[4 : 4 + nb] - zc) / right_den, 0.0)
    B4 = left * B3[:, :nb] + right * B3[:, 1 : nb + 1]
    return B4, _deriv_from_order3(B3, kv)


def eval_basis(z: float, kv: KnotVector) -> np.ndarray:
    """Values ``(B_{-3,4}(z), ..., B_{J,4}(z))`` of the cubic basis at ``z``."""
    return design_matrix([z], kv)[0]


def eval_basis_deriv(z: float, kv: KnotVector) -> np.ndarray:
    """First derivatives of the cubic basis functions at ``z``."""
    return derivative_matrix([z], kv)[0]
