"""Command-line interface: ``netpls simulate | fit | bootstrap | eval``.

Exit codes: 0 success, 2 input error, 3 numerical failure, 4 config error.
"""
from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .bootstrap import CI_METHODS, WeightScheme, run_bootstrap
from .clustering import COV_MODELS, GmmFit
from .errors import (
    ConfigError,
    GeneratorInvalidError,
    InputError,
    InvalidArgumentError,
    NetPLSError,
    NumericalFailure,
)
from .estimator import FitConfig, FitResult
from .io import (
    Dataset,
    load_dataset,
    read_assignments,
    read_json,
    save_dataset,
    save_matrix,
    write_assignments,
    write_json,
)
from .metrics import adjusted_rand_index, mse, normalized_mutual_information
from .model import ModelParams, ResidualBlocks, Signature
from .pipeline import estimate
from .simulate import simulate_type1, simulate_type2

SCHEMA_VERSION = 1
EXIT_OK, EXIT_INPUT, EXIT_NUMERICAL, EXIT_CONFIG = 0, 2, 3, 4
METHOD_ALIASES = {"percentile": "percentile", "basic": "basic", "normal": "normal_bias_corrected",
                  "normal_bias_corrected": "normal_bias_corrected"}

log = logging.getLogger("netpls")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(f"{self.prog}: {message}")


def _threads(args) -> int:
    if args.threads is not None:
        return args.threads
    env = os.environ.get("NETPLS_THREADS")
    if env is None:
        return 1
    try:
        value = int(env)
    except ValueError as exc:
        raise ConfigError(f"NETPLS_THREADS must be an integer, got {env!r}") from exc
    if value < 1:
        raise ConfigError("NETPLS_THREADS must be at least 1")
    return value


def _versions() -> dict:
    return {"netpls": __version__, "numpy": np.__version__, "scipy": scipy.__version__}


def _init_range(text: str) -> tuple:
    try:
        lo, hi = (float(v) for v in text.split(":"))
    except ValueError as exc:
        raise ConfigError(f"--init-range expects LO:HI, got {text!r}") from exc
    return lo, hi


def _dim(text: str):
    if text == "auto":
        return None
    try:
        d = int(text)
    except ValueError as exc:
        raise ConfigError(f"--dim expects 'auto' or a positive integer, got {text!r}") from exc
    if d < 1:
        raise ConfigError("--dim must be positive")
    return d


def _pairs(text: str | None, n: int):
    """Parse ``"1-2,3-4"`` (1-based node ids) into zero-based pairs."""
    if not text:
        return None
    pairs = []
    for item in text.split(","):
        try:
            i, j = (int(v) for v in item.strip().split("-"))
        except ValueError as exc:
            raise ConfigError(f"--tracked-pairs expects I-J[,I-J...], got {item!r}") from exc
        if not (1 <= i <= n and 1 <= j <= n and i != j):
            raise ConfigError(f"tracked pair {item!r} is not a pair of distinct nodes in 1..{n}")
        pairs.append((min(i, j) - 1, max(i, j) - 1))
    return pairs


def _block_pairs(z, K):
    """One representative node pair for every cluster pair ``a <= b``."""
    pairs = []
    for a in range(K):
        for b in range(a, K):
            ia, ib = np.flatnonzero(z == a), np.flatnonzero(z == b)
            if a == b and ia.size >= 2:
                pairs.append((int(ia[0]), int(ia[1])))
            elif a != b and ia.size and ib.size:
                i, j = int(ia[0]), int(ib[0])
                pairs.append((min(i, j), max(i, j)))
    return pairs


# ----------------------------------------------------------------------------- simulate

def cmd_simulate(args) -> int:
    if args.type == 2 and args.setting == "a":
        raise ConfigError(
            "type 2 setting a is impossible: with a single binary covariate the pairs with "
            "x_ij = 0 force every residual entry into [0, 1], so no type II residual arises"
        )
    if args.type == 1:
        A, truth = simulate_type1(args.n, args.setting, args.seed)
    else:
        A, truth = simulate_type2(args.n, args.setting, args.seed, layout=args.layout)
    node_values = {}
    if truth.node_covariates:
        node_values = {k: ("quantitative", v) for k, v in truth.node_covariates.items()}
    ds = Dataset(A, truth.X, list(truth.covariate_names), {}, node_values)
    out = Path(args.out_dir)
    save_dataset(ds, out)
    write_json(out / "truth.json", {
        "schema_version": SCHEMA_VERSION,
        "meta": truth.meta,
        "seed": args.seed,
        "n": args.n,
        "covariate_names": list(truth.covariate_names),
        "gamma": truth.gamma,
        "theta": truth.theta,
        "means": truth.means,
        "signature": {"q": truth.signature.q, "s": truth.signature.s},
        "z": truth.z + 1,
        "P": truth.P,
        **({} if truth.covariate_blocks is None else {"covariate_blocks": truth.covariate_blocks + 1}),
    })
    print(f"wrote {out}/adjacency.csv, manifest.csv, truth.json")
    return EXIT_OK


# ----------------------------------------------------------------------------- fit

def cmd_fit(args) -> int:
    if args.kmax < 1:
        raise ConfigError("--kmax must be at least 1")
    cov_models = tuple(m.strip() for m in args.cov_models.split(","))
    if any(m not in COV_MODELS for m in cov_models):
        raise ConfigError(f"--cov-models must be drawn from {','.join(COV_MODELS)}")
    try:
        config = FitConfig(
            max_iter=args.max_iter, tol=args.tol, num_inits=args.inits,
            init_range=_init_range(args.init_range), d=_dim(args.dim),
            seed=args.seed, threads=_threads(args), impute_diagonal=not args.hollow,
        )
    except InvalidArgumentError as exc:
        raise ConfigError(str(exc)) from exc
    ds = load_dataset(args.adjacency, args.covariates)
    est = estimate(ds.adjacency, ds.edge_covariates, config, K=args.k, k_max=args.kmax,
                   cov_models=cov_models, clamp=args.clamp)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    perm = est.node_permutation
    ix = np.ix_(perm, perm)
    save_matrix(out / "C.csv", est.C[ix])
    save_matrix(out / "Theta.csv", est.theta_expanded[ix])
    save_matrix(out / "P.csv", est.P[ix])
    save_matrix(out / "Lambda.csv", est.fit.Lambda[perm])
    write_assignments(out / "assignments.csv", est.blocks.assignments[perm], perm)
    res, gmm, blocks = est.fit, est.gmm, est.blocks
    report = {
        "schema_version": SCHEMA_VERSION,
        "versions": _versions(),
        "seed": args.seed,
        "inputs": {
            "adjacency": str(Path(args.adjacency).resolve()),
            "covariates": str(Path(args.covariates).resolve()) if args.covariates else None,
            "provenance": ds.provenance,
        },
        "config": {
            "max_iter": config.max_iter, "tol": config.tolerance(ds.n), "inits": config.num_inits,
            "init_range": list(config.init_range), "dim": args.dim, "kmax": args.kmax, "k": args.k,
            "cov_models": list(cov_models), "clamp": args.clamp,
            "impute_diagonal": config.impute_diagonal,
        },
        "n": ds.n,
        "covariate_names": ds.covariate_names,
        "gamma": res.gamma,
        "objective": res.objective,
        "converged": res.converged,
        "iterations": res.iterations,
        "init_used": res.init_used,
        "start_inits": res.start_inits,
        "start_objectives": res.start_objectives,
        "signature": {"q": res.signature.q, "s": res.signature.s},
        "trace": [{"gamma": t.gamma, "objective": t.objective, "d": t.d, "q": t.q, "s": t.s}
                  for t in res.trace],
        "Lambda": res.Lambda,
        "clusters": {
            "K": blocks.K, "cov_model": gmm.cov_model, "bic": gmm.bic, "loglik": gmm.loglik,
            "mean_uncertainty": gmm.mean_uncertainty, "means": blocks.means, "theta": blocks.theta,
        },
        "assignments": blocks.assignments + 1,
        "node_permutation": perm + 1,
    }
    write_json(out / "report.json", report)
    print(f"gamma = {np.array2string(res.gamma, precision=6)}; d = {res.signature.d} "
          f"(q={res.signature.q}, s={res.signature.s}); K = {blocks.K}; wrote {out}/report.json")
    return EXIT_OK


def _restore_point(report):
    sig = Signature(report["signature"]["q"], report["signature"]["s"])
    Lambda = np.asarray(report["Lambda"], dtype=float).reshape(report["n"], sig.d)
    params = ModelParams(np.asarray(report["gamma"], dtype=float), Lambda, sig)
    fit = FitResult(params, report["objective"], [], report["converged"], report["init_used"] or 0.0)
    cl = report["clusters"]
    means = np.asarray(cl["means"], dtype=float).reshape(cl["K"], sig.d)
    blocks = ResidualBlocks.from_means(means, np.asarray(report["assignments"]) - 1, sig)
    return fit, blocks, cl["cov_model"]


# ----------------------------------------------------------------------------- bootstrap

def cmd_bootstrap(args) -> int:
    report = read_json(args.report)
    try:
        fit, blocks, cov_model = _restore_point(report)
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"{args.report}: not a fit report ({exc})") from exc
    inputs = report.get("inputs", {})
    ds = load_dataset(args.adjacency or inputs["adjacency"], args.covariates or inputs.get("covariates"))
    if ds.n != fit.Lambda.shape[0]:
        raise InputError(f"dataset has {ds.n} nodes, report has {fit.Lambda.shape[0]}")
    methods = []
    for m in args.methods.split(","):
        if m.strip() not in METHOD_ALIASES:
            raise ConfigError(f"unknown interval method {m!r}")
        methods.append(METHOD_ALIASES[m.strip()])
    if not 0 < args.level < 1:
        raise ConfigError("--level must lie in (0, 1)")
    if args.B < 2:
        raise ConfigError("--B must be at least 2 to form intervals")
    alpha = None if args.alpha == "auto" else float(args.alpha)
    try:
        scheme = WeightScheme(args.scheme, alpha, args.m)
    except InvalidArgumentError as exc:
        raise ConfigError(str(exc)) from exc
    pairs = _pairs(args.tracked_pairs, ds.n) or _block_pairs(blocks.assignments, blocks.K)
    ens = run_bootstrap(fit, blocks, ds.adjacency, ds.edge_covariates, B=args.B, scheme=scheme,
                        seed=args.seed, tracked_pairs=pairs, cov_model=cov_model,
                        threads=_threads(args), unit_weights=args.unit_weights,
                        impute_diagonal=report.get("config", {}).get("impute_diagonal", True))
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    table = ens.intervals(args.level, methods)
    names = [r["parameter"] for r in table]
    samples = np.column_stack([s for _, _, s in ens.parameters()]) if names else np.zeros((ens.B, 0))
    with open(out / "samples.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for row in samples:
            w.writerow(["%.17g" % v for v in row])
    with open(out / "histograms.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["parameter", "bin_lo", "bin_hi", "count"])
        for name, col in zip(names, samples.T):
            counts, edges = np.histogram(col, bins=args.bins)
            for c, lo, hi in zip(counts, edges[:-1], edges[1:]):
                w.writerow([name, "%.17g" % lo, "%.17g" % hi, int(c)])
    write_json(out / "cis.json", {
        "schema_version": SCHEMA_VERSION,
        "versions": _versions(),
        "seed": args.seed,
        "B_requested": args.B,
        "B_used": ens.B,
        "failures": ens.failures,
        "scheme": {"kind": scheme.kind, "alpha": scheme.rate(ds.n) if scheme.kind == "bayesian" else None,
                   "m": scheme.m},
        "unit_weights": args.unit_weights,
        "level": args.level,
        "tracked_pairs": [[i + 1, j + 1] for i, j in ens.tracked_pairs],
        "intervals": table,
        "wall_clock_seconds": ens.elapsed,
    })
    print(f"{ens.B} replicates ({ens.failures} failed) in {ens.elapsed:.1f}s; wrote {out}/cis.json")
    return EXIT_OK


# ----------------------------------------------------------------------------- eval

def _labels_from(path):
    p = Path(path)
    if p.suffix == ".json":
        data = read_json(p)
        key = "z" if "z" in data else "assignments"
        if key not in data:
            raise InputError(f"{path}: no 'z' or 'assignments' field")
        return np.asarray(data[key], dtype=int) - 1, data
    return read_assignments(p), None


def cmd_eval(args) -> int:
    a, data_a = _labels_from(args.a)
    b, data_b = _labels_from(args.b)
    if a.size != b.size:
        raise InputError(f"partitions cover {a.size} and {b.size} nodes")
    result = {
        "ARI": adjusted_rand_index(a, b),
        "NMI": normalized_mutual_information(a, b, args.nmi_average),
    }
    if data_a and data_b and "gamma" in data_a and "gamma" in data_b:
        ga, gb = np.asarray(data_a["gamma"], float), np.asarray(data_b["gamma"], float)
        if ga.shape == gb.shape:
            result["MSE"] = mse([ga], gb).tolist()
    if args.out:
        write_json(args.out, result)
    for k, v in result.items():
        print(f"{k}\t{v}")
    return EXIT_OK


# ----------------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="netpls", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="generate a synthetic dataset")
    s.add_argument("--type", type=int, choices=(1, 2), required=True)
    s.add_argument("--setting", choices=("a", "b", "c"), required=True)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--layout", choices=("independent", "nested"), default="independent",
                   help="type II: covariate blocks drawn independently of, or nested in, the residual blocks")
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_simulate)

    f = sub.add_parser("fit", help="fit the model and cluster latent positions")
    f.add_argument("--adjacency", required=True)
    f.add_argument("--covariates", help="covariate manifest CSV")
    f.add_argument("--max-iter", type=int, default=500)
    f.add_argument("--inits", type=int, default=20)
    f.add_argument("--init-range", default="0.15:2.0")
    f.add_argument("--tol", type=float, default=None)
    f.add_argument("--dim", default="auto")
    f.add_argument("--kmax", type=int, default=9)
    f.add_argument("--k", type=int, default=None, help="fix the number of clusters")
    f.add_argument("--cov-models", default=",".join(COV_MODELS))
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--clamp", action="store_true", help="truncate P-hat to [0, 1]")
    f.add_argument("--hollow", action="store_true",
                   help="embed A - sum gamma_l X_l with its zero diagonal instead of imputing it")
    f.add_argument("--threads", type=int, default=None)
    f.add_argument("--out-dir", required=True)
    f.set_defaults(func=cmd_fit)

    b = sub.add_parser("bootstrap", help="bootstrap confidence intervals for a fit")
    b.add_argument("--report", required=True)
    b.add_argument("--adjacency", help="override the adjacency path stored in the report")
    b.add_argument("--covariates", help="override the manifest path stored in the report")
    b.add_argument("--B", type=int, default=999)
    b.add_argument("--scheme", choices=("bayesian", "naive", "moon"), default="bayesian")
    b.add_argument("--alpha", default="auto")
    b.add_argument("--m", type=int, default=None)
    b.add_argument("--level", type=float, default=0.95)
    b.add_argument("--methods", default="percentile,basic,normal")
    b.add_argument("--tracked-pairs", default=None)
    b.add_argument("--bins", type=int, default=30)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--unit-weights", action="store_true", help="debug: all weights equal to one")
    b.add_argument("--threads", type=int, default=None)
    b.add_argument("--out-dir", required=True)
    b.set_defaults(func=cmd_bootstrap)

    e = sub.add_parser("eval", help="compare two partitions")
    e.add_argument("a", help="assignments CSV, truth.json or report.json")
    e.add_argument("b", help="assignments CSV, truth.json or report.json")
    e.add_argument("--nmi-average", choices=("geometric", "arithmetic"), default="geometric")
    e.add_argument("--out", default=None)
    e.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (InputError, FileNotFoundError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (NumericalFailure, GeneratorInvalidError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except InvalidArgumentError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NetPLSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
