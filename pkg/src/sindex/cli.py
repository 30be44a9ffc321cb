"""Command-line interface.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .design import SRSWOR, Census, Poisson, draw_sample
from .estimators import greg_linear, ht_estimate, oracle_estimate, sim_estimate
from .harness import (
    HarnessError,
    McConfig,
    emit_tables,
    expand_grid,
    format_summary,
    run_monte_carlo,
)
from .population import MEAN_DIMS, PopulationFileError, PopulationSpec, generate, load_population, write_population
from .sim_fit import SampleData, SplineFitError, chart_to_theta, risk, score
from .splines import KnotVector
from .transform import IndexTransform

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
GRADIENT_THRESHOLD = 1e-3


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _default_seed() -> int:
    env = os.environ.get("SINDEX_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"SINDEX_SEED must be an integer, got {env!r}") from None


def _print_config(config: dict) -> None:
    print(f"# sindex {__version__} config: {json.dumps(config, sort_keys=True)}", file=sys.stderr)


def _write_output(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _parse_estimators(spec: str, allowed) -> list[str]:
    names = [s.strip().upper() for s in spec.split(",") if s.strip()]
    bad = [s for s in names if s not in allowed]
    if not names or bad:
        raise UsageError(f"unknown estimator {bad[0] if bad else spec!r}; valid: {', '.join(allowed)}")
    return names


def _read_sample_file(path, ids: np.ndarray, design: str, n_pop: int):
    """Parse ``id,y[,pi]`` rows into (Sample, y_s, design object)."""
    pos = {int(u): k for k, u in enumerate(ids)}
    rows = []
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "id" not in reader.fieldnames:
            raise DataError(f"{path}: sample file needs an 'id' column")
        for line_no, row in enumerate(reader, start=2):
            try:
                uid = int(row["id"])
            except (TypeError, ValueError):
                raise DataError(f"{path}, line {line_no}: bad id") from None
            if uid not in pos:
                raise DataError(f"{path}, line {line_no}: id {uid} is not in the population")
            y = (row.get("y") or "").strip()
            if not y:
                raise DataError(f"missing y for sampled id {uid}")
            try:
                yv = float(y)
                piv = float(row["pi"]) if row.get("pi") else None
            except ValueError:
                raise DataError(f"{path}, line {line_no}: non-numeric value") from None
            rows.append((pos[uid], yv, piv))
    if not rows:
        raise DataError(f"{path}: empty sample")
    rows.sort()
    idx = np.array([r[0] for r in rows])
    if np.unique(idx).size != idx.size:
        raise DataError(f"{path}: duplicate ids")
    y_s = np.array([r[1] for r in rows])
    if design == "poisson":
        if any(r[2] is None for r in rows):
            raise DataError(f"{path}: a 'pi' column is required for Poisson samples")
        # inclusion probabilities of unsampled units never enter the estimators
        pi = np.full(n_pop, 0.5)
        pi[idx] = [r[2] for r in rows]
        des = Poisson(pi)
    elif design == "census":
        if idx.size != n_pop:
            raise DataError("census design needs a response for every population unit")
        des = Census(n_pop)
    else:
        des = SRSWOR(n_pop, idx.size)
    return des.sample_from_indices(idx), y_s, des


def cmd_estimate(args) -> int:
    seed = args.seed if args.seed is not None else _default_seed()
    names = _parse_estimators(args.estimators, ("HT", "LREG", "SIM", "ORACLE"))
    config = {
        "command": "estimate", "population": args.population, "sample": args.sample,
        "design": args.design, "n": args.n, "seed": seed, "alpha": args.alpha,
        "c1": args.c1, "c2": args.c2, "estimators": names,
    }
    _print_config(config)
    pop = load_population(args.population)
    if args.sample:
        sample, y_s, design = _read_sample_file(args.sample, pop.unit_ids(), args.design, pop.N)
    else:
        if pop.y is None:
            raise DataError("population file has no 'y' column; pass --sample")
        if args.design == "census":
            design = Census(pop.N)
        elif args.n is None:
            raise UsageError("--n is required to draw a sample")
        elif args.design == "poisson":
            design = Poisson(np.full(pop.N, args.n / pop.N))
        else:
            if not 1 <= args.n <= pop.N:
                raise UsageError(f"--n must lie in [1, {pop.N}]")
            design = SRSWOR(pop.N, args.n)
        sample = draw_sample(design, seed)
        y_s = pop.y[sample.indices]
        missing = np.flatnonzero(~np.isfinite(y_s))
        if missing.size:
            raise DataError(f"missing y for sampled id {pop.unit_ids()[sample.indices[missing[0]]]}")

    options = {"alpha": args.alpha, "c1": args.c1, "c2": args.c2}
    reports = []
    for name in names:
        if name == "HT":
            rep = ht_estimate(pop.X, sample, y_s, design, seed=seed).to_dict()
        elif name == "LREG":
            rep = greg_linear(pop.X, sample, y_s, design, seed=seed).to_dict()
        elif name == "SIM":
            rep = sim_estimate(pop.X, sample, y_s, design, seed=seed, **options).to_dict()
        else:
            if pop.y is None:
                raise DataError("the ORACLE estimator needs y for every population unit")
            orc = oracle_estimate(pop.X, pop.y, sample, **options)
            rep = {"estimator": "ORACLE", "t_hat": orc.t_diff_tilde, "var_hat": None,
                   "theta_hat": [float(v) for v in orc.theta_tilde], "n": sample.n,
                   "N": pop.N, "design": design.name, "seed": seed,
                   "converged": orc.trace.converged, "iterations": orc.trace.iterations}
        reports.append(rep)
    doc = {"tool_version": __version__, "config": config, "reports": reports}
    _write_output(json.dumps(doc, indent=2) + "\n", args.out)
    return EXIT_OK


def _load_sim_doc(ref: str | None) -> dict:
    if ref is None:
        return {}
    path = Path(ref)
    if not path.exists():
        bundled = resources.files("sindex") / "configs" / (ref if ref.endswith(".json") else ref + ".json")
        if not bundled.is_file():
            raise UsageError(f"config {ref!r} not found")
        text = bundled.read_text(encoding="utf-8")
    else:
        text = path.read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"invalid config JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise UsageError("config must be a JSON object")
    return doc


def cmd_simulate(args) -> int:
    doc = _load_sim_doc(args.config)
    overrides = {
        "mean_fns": args.mean_fn, "sigmas": args.sigma, "ns": args.n,
        "replicates": args.replicates, "base_seed": args.seed, "jobs": args.jobs,
        "population_file": args.population, "N": args.N, "alpha": args.alpha,
        "c1": args.c1, "c2": args.c2, "design": args.design,
    }
    for k, v in overrides.items():
        if v is not None:
            doc[k] = v
    if args.estimators:
        doc["estimators"] = _parse_estimators(args.estimators, ("HT", "LREG", "SIM", "ORACLE"))
    if "base_seed" not in doc:
        doc["base_seed"] = _default_seed()
    for fn in doc.get("mean_fns", []):
        if fn not in MEAN_DIMS:
            raise UsageError(f"unknown mean function {fn!r}; valid options: {', '.join(MEAN_DIMS)}")
    try:
        configs = expand_grid(doc)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid config: {exc}") from None
    _print_config({"command": "simulate", **doc})

    results = [run_monte_carlo(cfg) for cfg in configs]
    print(format_summary(results))
    if args.out:
        emit_tables(results, args.out, args.format)
    return EXIT_OK


def cmd_oracle(args) -> int:
    config = {"command": "oracle", "population": args.population, "alpha": args.alpha,
              "c1": args.c1, "c2": args.c2}
    _print_config(config)
    pop = load_population(args.population, require_y=True)
    rep = oracle_estimate(pop.X, pop.y, alpha=args.alpha, c1=args.c1, c2=args.c2)
    out = rep.to_dict()
    if not args.with_predictions:
        out.pop("m_tilde")
    doc = {"tool_version": __version__, "config": config, "N": pop.N, "oracle": out}
    _write_output(json.dumps(doc, indent=2) + "\n", args.out)
    return EXIT_OK


def gradient_check(d: int, n: int, seed: int, constant_y: bool = False,
                   step: float = 1e-5) -> tuple[float, np.ndarray, np.ndarray]:
    """Max relative deviation between the analytic score and central differences.

    The instance has U(0,1) auxiliaries, a sinusoidal single-index response,
    unequal design weights and a random interior point of the chart.
    """
    rng = np.random.default_rng(seed)
    X = rng.random((n, d))
    direction = rng.normal(size=d)
    direction /= np.linalg.norm(direction)
    if constant_y:
        y = np.full(n, 3.0)
    else:
        y = np.sin(np.pi * X @ np.abs(direction)) + 0.1 * rng.standard_normal(n)
    tr, X_std = IndexTransform.from_frame(X)
    w = 1.0 / rng.uniform(0.2, 1.0, n)
    data = SampleData(X_std, y, w, population_size=int(np.ceil(w.sum())))
    kv = KnotVector(3)
    u = rng.normal(size=d - 1)
    u *= rng.uniform(0.1, 0.8) / max(np.linalg.norm(u), 1e-12)
    g = score(u, data, tr, kv)
    fd = np.empty(d - 1)
    for q in range(d - 1):
        e = np.zeros(d - 1)
        e[q] = step
        fd[q] = (risk(chart_to_theta(u + e), data, tr, kv)
                 - risk(chart_to_theta(u - e), data, tr, kv)) / (2 * step)
    if constant_y:
        return float(np.max(np.abs(g))), g, fd
    dev = float(np.max(np.abs(g - fd)) / max(np.max(np.abs(fd)), 1e-300))
    return dev, g, fd


def cmd_check_gradient(args) -> int:
    seed = args.seed if args.seed is not None else _default_seed()
    if args.d < 2:
        raise UsageError("--d must be at least 2")
    if args.n < 8:
        raise UsageError("--n must be at least 8")
    config = {"command": "check-gradient", "d": args.d, "n": args.n, "seed": seed,
              "constant_y": args.constant_y}
    _print_config(config)
    dev, g, fd = gradient_check(args.d, args.n, seed, args.constant_y)
    label = "max |score|" if args.constant_y else "max relative deviation"
    print(f"score:             {np.array2string(g, precision=6)}")
    print(f"finite difference: {np.array2string(fd, precision=6)}")
    print(f"{label}: {dev:.6g}")
    return EXIT_NUMERIC if dev > GRADIENT_THRESHOLD else EXIT_OK


def cmd_gen_population(args) -> int:
    seed = args.seed if args.seed is not None else _default_seed()
    if args.mean_fn not in MEAN_DIMS:
        raise UsageError(f"unknown mean function {args.mean_fn!r}; valid options: {', '.join(MEAN_DIMS)}")
    config = {"command": "gen-population", "mean_fn": args.mean_fn, "sigma": args.sigma,
              "N": args.N, "seed": seed}
    _print_config(config)
    pop = generate(PopulationSpec(args.mean_fn, args.sigma, args.N, seed))
    write_population(pop, args.out or sys.stdout)
    return EXIT_OK


def _add_model_flags(p):
    p.add_argument("--alpha", type=float, default=0.05, help="radius percentile parameter")
    p.add_argument("--c1", type=int, default=1)
    p.add_argument("--c2", type=int, default=5)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sindex", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"sindex {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("estimate", help="estimate a population total")
    p.add_argument("--population", required=True, help="CSV with id, x1..xd[, y]")
    p.add_argument("--sample", help="CSV with id, y[, pi] for the sampled units")
    p.add_argument("--design", choices=("srswor", "poisson", "census"), default="srswor")
    p.add_argument("--n", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--estimators", default="sim")
    p.add_argument("--out")
    _add_model_flags(p)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("simulate", help="Monte Carlo evaluation of the estimators")
    p.add_argument("config", nargs="?", help="JSON config path or bundled config name")
    p.add_argument("--mean-fn", nargs="+")
    p.add_argument("--sigma", type=float, nargs="+")
    p.add_argument("--n", type=int, nargs="+")
    p.add_argument("--N", type=int)
    p.add_argument("--population", help="CSV population with y instead of a mean function")
    p.add_argument("--design", choices=("srswor", "poisson", "census"))
    p.add_argument("--replicates", type=int)
    p.add_argument("--seed", type=int, help="base seed; replicate r uses seed + r")
    p.add_argument("--estimators")
    p.add_argument("--jobs", type=int)
    p.add_argument("--out")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--alpha", type=float)
    p.add_argument("--c1", type=int)
    p.add_argument("--c2", type=int)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("oracle", help="population-level fit (all responses known)")
    p.add_argument("--population", required=True)
    p.add_argument("--with-predictions", action="store_true")
    p.add_argument("--out")
    _add_model_flags(p)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("check-gradient", help="compare the analytic score with finite differences")
    p.add_argument("--d", type=int, default=3)
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--seed", type=int)
    p.add_argument("--constant-y", action="store_true")
    p.set_defaults(func=cmd_check_gradient)

    p = sub.add_parser("gen-population", help="write a synthetic population CSV")
    p.add_argument("--mean-fn", required=True)
    p.add_argument("--sigma", type=float, default=0.1)
    p.add_argument("--N", type=int, default=1000)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_gen_population)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"sindex: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, PopulationFileError, FileNotFoundError) as exc:
        print(f"sindex: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (SplineFitError, np.linalg.LinAlgError, HarnessError) as exc:
        print(f"sindex: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"sindex: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
