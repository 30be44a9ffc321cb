"""Synthetic superpopulations and CSV population frames."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MEAN_DIMS = {"m1": 2, "m2": 2, "m3": 2, "m4": 2, "m5": 4, "m6": 10}


class PopulationFileError(ValueError):
    pass


def _sinusoid_theta(d: int) -> np.ndarray:
    theta = np.zeros(d)
    theta[[0, 1, d - 1]] = 1.0
    return theta / math.sqrt(3.0)


def true_index(mean_fn: str) -> np.ndarray | None:
    """Index direction of the mean function in raw coordinates, if it has one."""
    _check_name(mean_fn)
    if mean_fn in ("m1", "m2", "m3"):
        return np.array([1.0, 1.0]) / math.sqrt(2.0)
    if mean_fn in ("m5", "m6"):
        return _sinusoid_theta(MEAN_DIMS[mean_fn])
    return None


def _check_name(mean_fn: str) -> None:
    if mean_fn not in MEAN_DIMS:
        raise ValueError(
            f"unknown mean function {mean_fn!r}; valid options: {', '.join(MEAN_DIMS)}"
        )


def mean_value(fn: str, x) -> np.ndarray | float:
    """Evaluate mean function ``fn`` at a point or at every row of ``x``."""
    _check_name(fn)
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    d = MEAN_DIMS[fn]
    if X.shape[1] != d:
        raise ValueError(f"{fn} takes {d}-dimensional input, got {X.shape[1]}")
    if fn in ("m5", "m6"):
        out = np.sin(np.pi * (X @ _sinusoid_theta(d)))
    else:
        s = X[:, 0] + X[:, 1]
        if fn == "m1":
            out = s
        elif fn == "m2":
            out = 1.0 + s**2
        elif fn == "m3":
            out = s + 4.0 * np.exp(-(s**2))
        else:
            out = s + 4.0 * np.exp(-(s**2)) + np.sqrt(X[:, 0] ** 2 + X[:, 1] ** 2)
    return float(out[0]) if single else out


@dataclass(frozen=True)
class Population:
    X: np.ndarray
    y: np.ndarray | None = None
    ids: np.ndarray | None = None
    columns: tuple = ()

    @property
    def N(self) -> int:
        return int(self.X.shape[0])

    @property
    def d(self) -> int:
        return int(self.X.shape[1])

    @property
    def total(self) -> float:
        if self.y is None:
            raise ValueError("population has no response column")
        return float(np.sum(self.y))

    def unit_ids(self) -> np.ndarray:
        return np.arange(1, self.N + 1) if self.ids is None else self.ids


@dataclass(frozen=True)
class PopulationSpec:
    mean_fn: str
    sigma: float = 0.1
    N: int = 1000
    seed: int = 0

    def __post_init__(self):
        _check_name(self.mean_fn)
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")
        if self.N < 2:
            raise ValueError("N must be at least 2")

    @property
    def d(self) -> int:
        return MEAN_DIMS[self.mean_fn]


def generate(spec: PopulationSpec) -> Population:
    """Draw ``X ~ U(0,1)^d`` and ``y = m(X) + sigma * eps`` from separate seed streams."""
    x_seq, e_seq = np.random.SeedSequence(spec.seed).spawn(2)
    X = np.random.default_rng(x_seq).random((spec.N, spec.d))
    eps = np.random.default_rng(e_seq).standard_normal(spec.N)
    y = mean_value(spec.mean_fn, X) + spec.sigma * eps
    cols = tuple(f"x{q + 1}" for q in range(spec.d))
    return Population(X=X, y=y, ids=np.arange(1, spec.N + 1), columns=cols)


def load_population(path, d: int | None = None, require_y: bool = False) -> Population:
    """Read a frame with header ``id, x1..xd[, y]``.

    Errors carry the offending line number or column name.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise PopulationFileError(f"{path}: empty file") from None
        if "id" not in header:
            raise PopulationFileError(f"{path}: missing column 'id'")
        xcols = sorted((h for h in header if h[:1] == "x" and h[1:].isdigit()),
                       key=lambda h: int(h[1:]))
        if d is None:
            d = len(xcols)
        if d < 1:
            raise PopulationFileError(f"{path}: no auxiliary columns x1..xd")
        for q in range(1, d + 1):
            if f"x{q}" not in header:
                raise PopulationFileError(f"{path}: missing column 'x{q}'")
        has_y = "y" in header
        if require_y and not has_y:
            raise PopulationFileError(f"{path}: missing column 'y'")
        pos = [header.index(f"x{q}") for q in range(1, d + 1)]
        id_pos = header.index("id")
        y_pos = header.index("y") if has_y else None

        ids, rows, ys = [], [], []
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise PopulationFileError(
                    f"{path}, line {line_no}: expected {len(header)} fields, got {len(row)}"
                )
            try:
                ids.append(int(row[id_pos]))
                rows.append([float(row[p]) for p in pos])
                if has_y:
                    cell = row[y_pos].strip()
                    # blank responses are allowed: frames often carry y only for sampled units
                    ys.append(float(cell) if cell else float("nan"))
            except ValueError:
                raise PopulationFileError(
                    f"{path}, line {line_no}: non-numeric value"
                ) from None
    if not rows:
        raise PopulationFileError(f"{path}: no data rows")
    ids = np.asarray(ids, dtype=np.int64)
    if np.unique(ids).size != ids.size:
        raise PopulationFileError(f"{path}: duplicate ids")
    X = np.asarray(rows, dtype=float)
    if not np.all(np.isfinite(X)):
        raise PopulationFileError(f"{path}: non-finite auxiliary value")
    y = np.asarray(ys, dtype=float) if has_y else None
    return Population(X=X, y=y, ids=ids, columns=tuple(f"x{q}" for q in range(1, d + 1)))


def write_population(pop: Population, target) -> None:
    """Write ``pop`` as CSV to a path or an open text stream."""
    if hasattr(target, "write"):
        _write_rows(pop, target)
        return
    with Path(target).open("w", newline="", encoding="utf-8") as fh:
        _write_rows(pop, fh)


def _write_rows(pop: Population, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    cols = [f"x{q}" for q in range(1, pop.d + 1)]
    w.writerow(["id", *cols] + (["y"] if pop.y is not None else []))
    for k, uid in enumerate(pop.unit_ids()):
        row = [int(uid), *(repr(float(v)) for v in pop.X[k])]
        if pop.y is not None:
            row.append(repr(float(pop.y[k])))
        w.writerow(row)
