"""Sampling designs, sample draws and Horvitz-Thompson estimation.

Unit labels are 0-based indices into the population frame throughout the
library; file formats carry their own ``id`` column.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

MAX_ENUMERATION = 10_000


@dataclass(frozen=True)
class Sample:
    """Sorted unit indices with their inclusion probabilities."""

    indices: np.ndarray
    pi: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64).ravel()
        pi = np.asarray(self.pi, dtype=float).ravel()
        if idx.shape != pi.shape:
            raise ValueError("indices and inclusion probabilities differ in length")
        if idx.size and np.any(np.diff(idx) <= 0):
            raise ValueError("sample indices must be strictly increasing")
        if np.any(pi <= 0) or np.any(pi > 1):
            raise ValueError("inclusion probabilities must lie in (0, 1]")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "pi", pi)

    @property
    def weights(self) -> np.ndarray:
        return 1.0 / self.pi

    @property
    def n(self) -> int:
        return int(self.indices.size)

    def __len__(self) -> int:
        return self.n


class SurveyDesign:
    """Base class: first and second order inclusion probabilities plus a sampler."""

    name = "design"

    def __init__(self, population_size: int):
        if population_size < 1:
            raise ValueError("population size must be >= 1")
        self.population_size = int(population_size)

    @property
    def N(self) -> int:
        return self.population_size

    def pi(self, i=None) -> np.ndarray:
        raise NotImplementedError

    def pi_joint(self, i, j) -> np.ndarray:
        raise NotImplementedError

    def pi_matrix(self, idx=None) -> np.ndarray:
        """Joint inclusion probabilities among ``idx`` (all units by default)."""
        idx = np.arange(self.N) if idx is None else np.asarray(idx, dtype=np.int64)
        return self.pi_joint(idx[:, None], idx[None, :])

    def draw(self, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def summary(self) -> dict:
        return {"design": self.name, "N": self.N}

    def sample_from_indices(self, indices) -> Sample:
        idx = np.unique(np.asarray(indices, dtype=np.int64))
        if idx.size and (idx[0] < 0 or idx[-1] >= self.N):
            raise ValueError("sample index out of range")
        return Sample(idx, self.pi(idx))


class SRSWOR(SurveyDesign):
    """Simple random sampling without replacement of fixed size ``n``."""

    name = "srswor"

    def __init__(self, population_size: int, n: int):
        super().__init__(population_size)
        if not 1 <= n <= population_size:
            raise ValueError(f"sample size n={n} must satisfy 1 <= n <= N={population_size}")
        self.n = int(n)

    def pi(self, i=None) -> np.ndarray:
        shape = (self.N,) if i is None else np.shape(i)
        return np.full(shape, self.n / self.N)

    def pi_joint(self, i, j) -> np.ndarray:
        i, j = np.broadcast_arrays(np.asarray(i), np.asarray(j))
        N, n = self.N, self.n
        off = n * (n - 1) / (N * (N - 1)) if N > 1 else 1.0
        return np.where(i == j, n / N, off)

    def draw(self, rng: np.random.Generator) -> np.ndarray:
        return np.sort(rng.choice(self.N, size=self.n, replace=False))

    def summary(self) -> dict:
        return {"design": self.name, "N": self.N, "n": self.n}


class Census(SRSWOR):
    """Every unit sampled with certainty."""

    name = "census"

    def __init__(self, population_size: int):
        super().__init__(population_size, population_size)


class Poisson(SurveyDesign):
    """Independent Bernoulli inclusion with unit-specific probabilities."""

    name = "poisson"

    def __init__(self, pi):
        pi = np.asarray(pi, dtype=float).ravel()
        super().__init__(pi.size)
        if np.any(pi <= 0) or np.any(pi > 1):
            raise ValueError("Poisson inclusion probabilities must lie in (0, 1]")
        self._pi = pi

    def pi(self, i=None) -> np.ndarray:
        return self._pi.copy() if i is None else self._pi[np.asarray(i)]

    def pi_joint(self, i, j) -> np.ndarray:
        i, j = np.broadcast_arrays(np.asarray(i), np.asarray(j))
        pi_i, pi_j = self._pi[i], self._pi[j]
        return np.where(i == j, pi_i, pi_i * pi_j)

    def draw(self, rng: np.random.Generator) -> np.ndarray:
        return np.flatnonzero(rng.random(self.N) < self._pi)

    def summary(self) -> dict:
        return {"design": self.name, "N": self.N, "expected_n": float(self._pi.sum())}


def draw_sample(design: SurveyDesign, rng_seed: int) -> Sample:
    """Draw one sample; identical seeds give identical samples."""
    rng = np.random.default_rng(rng_seed)
    return design.sample_from_indices(design.draw(rng))


def ht_total(sample: Sample, y_s) -> float:
    """Horvitz-Thompson estimator ``sum_s y_i / pi_i``."""
    y_s = np.asarray(y_s, dtype=float).ravel()
    if y_s.shape[0] != sample.n:
        raise ValueError(
            f"response vector has length {y_s.shape[0]} but the sample has {sample.n} units"
        )
    return float(np.sum(y_s / sample.pi))


def ht_variance_population(design: SurveyDesign, y) -> float:
    """Design variance of the HT total, ``sum_ij (pi_ij - pi_i pi_j) y_i/pi_i y_j/pi_j``."""
    y = np.asarray(y, dtype=float).ravel()
    if y.shape[0] != design.N:
        raise ValueError("y must cover the whole population")
    pi = design.pi()
    delta = design.pi_matrix() - np.outer(pi, pi)
    u = y / pi
    return float(u @ delta @ u)


def enumerate_design(design: SurveyDesign) -> list[tuple[Sample, float]]:
    """All samples of a small SRSWOR design with their selection probabilities."""
    if not isinstance(design, SRSWOR):
        raise TypeError("enumeration is only available for SRSWOR designs")
    count = math.comb(design.N, design.n)
    if design.N > 12 or count > MAX_ENUMERATION:
        raise ValueError(f"design has {count} samples; enumeration is limited to small N")
    p = 1.0 / count
    return [
        (design.sample_from_indices(c), p)
        for c in itertools.combinations(range(design.N), design.n)
    ]
