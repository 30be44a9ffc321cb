"""Monte Carlo evaluation of total estimators under repeated sampling.

One population is generated (or loaded) per configuration; replicate ``r``
draws its sample with seed ``base_seed + r``. Replicates are independent, so
they can run in a process pool without changing the results.
"""

from __future__ import annotations

import csv
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import __version__
from .design import SRSWOR, Census, Poisson, SurveyDesign, draw_sample
from .estimators import difference_total, greg_linear, ht_estimate, oracle_estimate, sim_estimate
from .population import MEAN_DIMS, Population, PopulationSpec, generate, load_population, true_index
from .transform import standardize

logger = logging.getLogger(__name__)

VALID_ESTIMATORS = ("HT", "LREG", "SIM", "ORACLE")
MAX_EXCLUDED_FRACTION = 0.05


class HarnessError(RuntimeError):
    pass


@dataclass(frozen=True)
class McConfig:
    mean_fn: str | None = "m1"
    sigma: float = 0.1
    N: int = 1000
    population_seed: int = 20240101
    population_file: str | None = None
    design: str = "srswor"
    n: int = 100
    estimators: tuple = ("HT", "LREG", "SIM")
    replicates: int = 200
    base_seed: int = 0
    c1: int = 1
    c2: int = 5
    alpha: float = 0.05
    jobs: int = 1

    def __post_init__(self):
        ests = tuple(e.upper() for e in self.estimators)
        object.__setattr__(self, "estimators", ests)
        if not ests:
            raise ValueError("at least one estimator is required")
        bad = [e for e in ests if e not in VALID_ESTIMATORS]
        if bad:
            raise ValueError(
                f"unknown estimator {bad[0]!r}; valid options: {', '.join(VALID_ESTIMATORS)}"
            )
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        if self.population_file is None:
            if self.mean_fn not in MEAN_DIMS:
                raise ValueError(
                    f"unknown mean function {self.mean_fn!r}; valid options: "
                    f"{', '.join(MEAN_DIMS)}"
                )
        if self.design not in ("srswor", "poisson", "census"):
            raise ValueError("design must be one of srswor, poisson, census")

    @property
    def sim_options(self) -> dict:
        return {"c1": self.c1, "c2": self.c2, "alpha": self.alpha}

    def to_dict(self) -> dict:
        d = asdict(self)
        d["estimators"] = list(self.estimators)
        return d

    @classmethod
    def from_dict(cls, doc: dict) -> "McConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(doc) - names
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(sorted(unknown))}")
        doc = dict(doc)
        if "estimators" in doc:
            doc["estimators"] = tuple(doc["estimators"])
        return cls(**doc)


@dataclass
class EstimatorSummary:
    estimator: str
    mean: float
    bias: float
    sd: float
    mse: float
    pct_rel_bias: float
    mse_ratio_vs_sim: float | None = None


@dataclass
class ThetaMetrics:
    mean: np.ndarray
    bias: np.ndarray
    sd: np.ndarray
    mse: np.ndarray
    amse: float

    def to_dict(self) -> dict:
        return {k: (v.tolist() if isinstance(v, np.ndarray) else v)
                for k, v in asdict(self).items()}


@dataclass
class McResult:
    config: McConfig
    N: int
    t_y: float
    summaries: dict
    theta: ThetaMetrics | None
    theta_reference: np.ndarray | None
    rows: list = field(repr=False)
    excluded: int = 0
    errors: list = field(default_factory=list, repr=False)
    mean_sim_seconds: float | None = None

    def to_dict(self, include_timing: bool = True) -> dict:
        out = {
            "tool_version": __version__,
            "config": self.config.to_dict(),
            "N": self.N,
            "t_y": self.t_y,
            "summaries": {k: asdict(v) for k, v in self.summaries.items()},
            "theta": None if self.theta is None else self.theta.to_dict(),
            "theta_reference": None if self.theta_reference is None
            else self.theta_reference.tolist(),
            "excluded": self.excluded,
            "errors": list(self.errors),
            "rows": [_row_for_json(r) for r in self.rows],
        }
        if include_timing:
            out["mean_sim_seconds"] = self.mean_sim_seconds
        else:
            for r in out["rows"]:
                r.pop("sim_seconds", None)
        return out


def _row_for_json(row: dict) -> dict:
    return {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in row.items()}


def theta_metrics(theta_hats, reference) -> ThetaMetrics:
    """Per-coordinate MEAN/BIAS/SD/MSE of index estimates about ``reference`` plus AMSE.

    Estimates are compared as returned (last coordinate positive); no
    absolute values are taken.
    """
    T = np.atleast_2d(np.asarray(theta_hats, dtype=float))
    ref = np.asarray(reference, dtype=float).ravel()
    if T.shape[1] != ref.shape[0]:
        raise ValueError("reference dimension does not match the estimates")
    mean = T.mean(axis=0)
    sd = T.std(axis=0, ddof=1) if T.shape[0] > 1 else np.zeros(T.shape[1])
    mse = np.mean((T - ref) ** 2, axis=0)
    return ThetaMetrics(mean=mean, bias=mean - ref, sd=sd, mse=mse, amse=float(mse.mean()))


def build_population(cfg: McConfig) -> Population:
    if cfg.population_file is not None:
        return load_population(cfg.population_file, require_y=True)
    return generate(PopulationSpec(cfg.mean_fn, cfg.sigma, cfg.N, cfg.population_seed))


def build_design(cfg: McConfig, N: int) -> SurveyDesign:
    if cfg.design == "census":
        return Census(N)
    if cfg.design == "poisson":
        return Poisson(np.full(N, cfg.n / N))
    return SRSWOR(N, cfg.n)


def _reference_theta(cfg: McConfig, pop: Population):
    """True index expressed in standardized coordinates, when the model has one."""
    if cfg.population_file is not None:
        return None
    theta0 = true_index(cfg.mean_fn)
    if theta0 is None:
        return None
    _, params = standardize(pop.X)
    # x' theta0 = x_std' (scale * theta0) + const
    v = params.scale * theta0
    return v / np.linalg.norm(v)


def _replicate(cfg: McConfig, pop: Population, design: SurveyDesign,
               oracle_m: np.ndarray | None, r: int) -> dict:
    seed = cfg.base_seed + r
    row = {"replicate": r, "seed": seed}
    try:
        sample = draw_sample(design, seed)
        y_s = pop.y[sample.indices]
        row["n"] = sample.n
        for name in cfg.estimators:
            if name == "HT":
                row["HT"] = ht_estimate(pop.X, sample, y_s, design).t_hat
            elif name == "LREG":
                row["LREG"] = greg_linear(pop.X, sample, y_s, design).t_hat
            elif name == "SIM":
                t0 = time.perf_counter()
                rep = sim_estimate(pop.X, sample, y_s, design, **cfg.sim_options)
                row["sim_seconds"] = time.perf_counter() - t0
                row["SIM"] = rep.t_hat
                row["SIM_var"] = rep.var_hat
                row["theta_hat"] = rep.theta_hat
                row["converged"] = bool(rep.trace.converged)
            elif name == "ORACLE":
                idx = sample.indices
                row["ORACLE"] = difference_total(sample, y_s, oracle_m[idx],
                                                 float(np.sum(oracle_m)))
    except Exception as exc:  # recorded and excluded, never fatal per replicate
        row["error"] = f"{type(exc).__name__}: {exc}"
    return row


def _run_chunk(args):
    cfg, pop, design, oracle_m, rs = args
    return [_replicate(cfg, pop, design, oracle_m, r) for r in rs]


def run_monte_carlo(cfg: McConfig) -> McResult:
    pop = build_population(cfg)
    if pop.y is None or not np.all(np.isfinite(pop.y)):
        raise HarnessError("Monte Carlo runs need a response for every population unit")
    design = build_design(cfg, pop.N)

    oracle = None
    if "ORACLE" in cfg.estimators or (cfg.population_file is not None and "SIM" in cfg.estimators):
        oracle = oracle_estimate(pop.X, pop.y, **cfg.sim_options)
    oracle_m = None if oracle is None else oracle.m_tilde

    reps = list(range(1, cfg.replicates + 1))
    if cfg.jobs > 1:
        chunks = [reps[k::cfg.jobs] for k in range(cfg.jobs)]
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            parts = list(pool.map(_run_chunk, [(cfg, pop, design, oracle_m, c) for c in chunks]))
        rows = sorted((row for part in parts for row in part), key=lambda r: r["replicate"])
    else:
        rows = _run_chunk((cfg, pop, design, oracle_m, reps))

    good = [r for r in rows if "error" not in r]
    errors = [f"replicate {r['replicate']}: {r['error']}" for r in rows if "error" in r]
    excluded = len(rows) - len(good)
    if excluded > MAX_EXCLUDED_FRACTION * len(rows):
        raise HarnessError(
            f"{excluded} of {len(rows)} replicates failed; first error: {errors[0]}"
        )
    if not good:
        raise HarnessError("no successful replicates")

    t_y = pop.total
    summaries = {}
    for name in cfg.estimators:
        t = np.array([r[name] for r in good])
        err = t - t_y
        mean = float(t.mean())
        summaries[name] = EstimatorSummary(
            estimator=name,
            mean=mean,
            bias=mean - t_y,
            sd=float(t.std(ddof=1)) if t.size > 1 else 0.0,
            mse=float(np.mean(err**2)),
            pct_rel_bias=float(100.0 * (mean - t_y) / t_y) if t_y != 0 else float("nan"),
        )
    if "SIM" in summaries:
        base = summaries["SIM"].mse
        for s in summaries.values():
            s.mse_ratio_vs_sim = s.mse / base if base > 0 else None

    theta = ref = None
    if "SIM" in cfg.estimators:
        ref = _reference_theta(cfg, pop)
        if ref is None and oracle is not None:
            ref = oracle.theta_tilde
        if ref is not None:
            theta = theta_metrics(np.array([r["theta_hat"] for r in good]), ref)

    times = [r["sim_seconds"] for r in good if "sim_seconds" in r]
    return McResult(
        config=cfg, N=pop.N, t_y=t_y, summaries=summaries, theta=theta, theta_reference=ref,
        rows=rows, excluded=excluded, errors=errors,
        mean_sim_seconds=float(np.mean(times)) if times else None,
    )


def expand_grid(doc: dict) -> list[McConfig]:
    """Configs for every (mean function, sigma, n) cell of a simulation document.

    List-valued keys ``mean_fns``, ``sigmas`` and ``ns`` span the grid; other
    keys are passed to :class:`McConfig`. The population seed depends on the
    (mean function, sigma) cell only, so all sample sizes share a population.
    """
    doc = dict(doc)
    mean_fns = doc.pop("mean_fns", [doc.pop("mean_fn", "m1")])
    sigmas = doc.pop("sigmas", [doc.pop("sigma", 0.1)])
    ns = doc.pop("ns", [doc.pop("n", 100)])
    pop_seed = int(doc.pop("population_seed", McConfig.population_seed))
    if "population_file" in doc and doc["population_file"] is not None:
        mean_fns, sigmas = [None], [0.0]
    base = McConfig.from_dict({**doc, "mean_fn": mean_fns[0], "sigma": sigmas[0],
                               "n": ns[0], "population_seed": pop_seed})
    out = []
    for fi, fn in enumerate(mean_fns):
        for si, sigma in enumerate(sigmas):
            for n in ns:
                out.append(replace(base, mean_fn=fn, sigma=float(sigma), n=int(n),
                                   population_seed=pop_seed + 1000 * fi + si))
    return out


TABLE_COLUMNS = [
    "model", "sigma", "n", "N", "replicates", "estimator", "mean", "bias", "sd", "mse",
    "pct_rel_bias", "mse_ratio_vs_sim", "amse_theta", "mean_sim_seconds", "excluded",
    "base_seed", "population_seed",
]

TABLE_SCHEMA = {
    "type": "object",
    "required": ["tool_version", "configs", "rows"],
    "properties": {
        "tool_version": {"type": "string"},
        "configs": {"type": "array", "items": {"type": "object"}},
        "rows": {
            "type": "array",
            "items": {
                "type": "object",
                "required": TABLE_COLUMNS,
                "properties": {
                    "model": {"type": ["string", "null"]},
                    "estimator": {"enum": list(VALID_ESTIMATORS)},
                    "sigma": {"type": "number"},
                    "n": {"type": "integer"},
                    "N": {"type": "integer"},
                    "replicates": {"type": "integer"},
                    "mean": {"type": "number"},
                    "bias": {"type": "number"},
                    "sd": {"type": "number"},
                    "mse": {"type": "number", "minimum": 0},
                    "pct_rel_bias": {"type": "number"},
                    "mse_ratio_vs_sim": {"type": ["number", "null"]},
                    "amse_theta": {"type": ["number", "null"]},
                    "mean_sim_seconds": {"type": ["number", "null"]},
                    "excluded": {"type": "integer"},
                    "base_seed": {"type": "integer"},
                    "population_seed": {"type": "integer"},
                },
            },
        },
    },
}


def table_rows(results) -> list[dict]:
    results = [results] if isinstance(results, McResult) else list(results)
    rows = []
    for res in results:
        cfg = res.config
        model = cfg.mean_fn if cfg.population_file is None else Path(cfg.population_file).stem
        for name, s in res.summaries.items():
            rows.append({
                "model": model,
                "sigma": cfg.sigma,
                "n": cfg.n,
                "N": res.N,
                "replicates": cfg.replicates,
                "estimator": name,
                "mean": s.mean,
                "bias": s.bias,
                "sd": s.sd,
                "mse": s.mse,
                "pct_rel_bias": s.pct_rel_bias,
                "mse_ratio_vs_sim": s.mse_ratio_vs_sim,
                "amse_theta": res.theta.amse if (name == "SIM" and res.theta) else None,
                "mean_sim_seconds": res.mean_sim_seconds if name == "SIM" else None,
                "excluded": res.excluded,
                "base_seed": cfg.base_seed,
                "population_seed": cfg.population_seed,
            })
    return rows


def emit_tables(results, path, fmt: str = "csv") -> Path:
    """Write one row per (model, sigma, n, estimator) cell as CSV or JSON.

    CSV files start with ``#`` comment lines echoing the tool version and the
    configs; :func:`read_table_csv` skips them.
    """
    results = [results] if isinstance(results, McResult) else list(results)
    path = Path(path)
    rows = table_rows(results)
    configs = [r.config.to_dict() for r in results]
    if fmt == "json":
        doc = {"tool_version": __version__, "configs": configs, "rows": rows}
        path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    elif fmt == "csv":
        with path.open("w", newline="", encoding="utf-8") as fh:
            fh.write(f"# tool_version: {__version__}\n")
            for c in configs:
                fh.write(f"# config: {json.dumps(c, sort_keys=True)}\n")
            w = csv.DictWriter(fh, fieldnames=TABLE_COLUMNS)
            w.writeheader()
            for row in rows:
                w.writerow({k: ("" if v is None else (repr(v) if isinstance(v, float) else v))
                            for k, v in row.items()})
    else:
        raise ValueError("format must be 'csv' or 'json'")
    return path


def read_table_csv(path) -> list[dict]:
    numeric = {"sigma", "mean", "bias", "sd", "mse", "pct_rel_bias", "mse_ratio_vs_sim",
               "amse_theta", "mean_sim_seconds"}
    integer = {"n", "N", "replicates", "excluded", "base_seed", "population_seed"}
    with Path(path).open(newline="", encoding="utf-8") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    out = []
    for row in csv.DictReader(lines):
        parsed = {}
        for k, v in row.items():
            if v == "":
                parsed[k] = None
            elif k in numeric:
                parsed[k] = float(v)
            elif k in integer:
                parsed[k] = int(v)
            else:
                parsed[k] = v
        out.append(parsed)
    return out


def format_summary(results) -> str:
    """Human-readable table with 6 significant digits."""
    results = [results] if isinstance(results, McResult) else list(results)
    lines = []
    hdr = f"{'model':>8} {'sigma':>6} {'n':>5} {'est':>6} {'mean':>12} {'bias':>12} " \
          f"{'sd':>12} {'mse':>12} {'relbias%':>10} {'ratio':>8}"
    lines.append(hdr)
    for row in table_rows(results):
        ratio = row["mse_ratio_vs_sim"]
        lines.append(
            f"{str(row['model']):>8} {row['sigma']:>6.3g} {row['n']:>5d} {row['estimator']:>6} "
            f"{row['mean']:>12.6g} {row['bias']:>12.6g} {row['sd']:>12.6g} {row['mse']:>12.6g} "
            f"{row['pct_rel_bias']:>10.4g} {('-' if ratio is None else f'{ratio:.4g}'):>8}"
        )
    for res in results:
        if res.theta is not None:
            lines.append(f"{res.config.mean_fn or res.config.population_file} n={res.config.n}: "
                         f"AMSE(theta) = {res.theta.amse:.6g}")
    return "\n".join(lines)
