"""Command-line interface: dataset simulation, model fitting, Monte Carlo
studies, and evaluation reporting.

Exit codes: 0 success, 2 input error, 3 non-convergence, 4 numerical
failure. All randomness flows from --seed; reports are byte-stable for a
fixed seed regardless of worker count.
"""

from __future__ import annotations

import argparse
import csv
import sys

import numpy as np

from . import reports
from .em import (
    EmConfig,
    SurvivalRecord,
    bootstrap_se,
    em_fit,
    logit_em_fit,
    records_to_arrays,
    uncured_weight,
)
from .cox import promotion_cdf_at
from .exceptions import (
    InputError,
    NonConvergenceError,
    NumericalError,
    PcmError,
)
from .metrics import imputed_roc, roc_auc
from .simulate import METHODS, SimConfig, gen_dataset
from .study import StudyConfig, run_study

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NONCONVERGENCE = 3
EXIT_NUMERICAL = 4


def _repr_float(v):
    return repr(float(v))


# ---------------------------------------------------------------------------
# dataset CSV I/O  (schema: t,delta,x1..xp,z1..zq)
# ---------------------------------------------------------------------------


def write_dataset_csv(path, records):
    t, delta, X, Z = records_to_arrays(records)
    p, q = X.shape[1], Z.shape[1]
    header = (["t", "delta"]
              + [f"x{j + 1}" for j in range(p)]
              + [f"z{j + 1}" for j in range(q)])
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(header)
        for i in range(len(t)):
            out.writerow([_repr_float(t[i]), int(delta[i])]
                         + [_repr_float(v) for v in X[i]]
                         + [_repr_float(v) for v in Z[i]])


def write_truth_csv(path, dataset):
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["true_pi", "true_cure", "split"])
        for i in range(len(dataset.true_pi)):
            out.writerow([_repr_float(dataset.true_pi[i]),
                          int(dataset.true_cure[i]),
                          dataset.split[i]])


def read_dataset_csv(path):
    """Parse a dataset CSV into records; errors carry 1-based line numbers."""
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise InputError(f"cannot open {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InputError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if header[:2] != ["t", "delta"]:
            raise InputError(f"{path}: header must start with t,delta")
        x_cols = [i for i, h in enumerate(header) if h.startswith("x")]
        z_cols = [i for i, h in enumerate(header) if h.startswith("z")]
        if not x_cols or not z_cols:
            raise InputError(f"{path}: need at least one x and one z column")
        records = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise InputError(
                    f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}"
                )
            try:
                t = float(row[0])
                delta = int(row[1])
                x = np.array([float(row[i]) for i in x_cols])
                z = np.array([float(row[i]) for i in z_cols])
            except ValueError as exc:
                raise InputError(f"{path}:{lineno}: {exc}") from exc
            if delta not in (0, 1):
                raise InputError(f"{path}:{lineno}: delta must be 0 or 1")
            if not t > 0:
                raise InputError(f"{path}:{lineno}: t must be positive")
            records.append(SurvivalRecord(t=t, delta=delta, x=x, z=z))
    if not records:
        raise InputError(f"{path}: no data rows")
    return records


def read_truth_csv(path):
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise InputError(f"cannot open {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["true_pi", "true_cure", "split"]:
            raise InputError(f"{path}: expected header true_pi,true_cure,split")
        pi, cure, split = [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                pi.append(float(row[0]))
                cure.append(int(row[1]))
            except (ValueError, IndexError) as exc:
                raise InputError(f"{path}:{lineno}: {exc}") from exc
            split.append(row[2])
    return np.array(pi), np.array(cure, dtype=int), np.array(split)


# ---------------------------------------------------------------------------
# standardization
# ---------------------------------------------------------------------------


def standardize_records(records):
    """Center and scale x and z columns; returns new records plus the
    means/SDs for the report."""
    t, delta, X, Z = records_to_arrays(records)
    stats = {}
    out = {}
    for name, M in (("x", X), ("z", Z)):
        mean = M.mean(axis=0)
        sd = M.std(axis=0, ddof=0)
        if np.any(sd == 0):
            raise InputError(f"cannot standardize: constant {name} column")
        stats[f"{name}_mean"], stats[f"{name}_sd"] = mean, sd
        out[name] = (M - mean) / sd
    new = [SurvivalRecord(t=float(t[i]), delta=int(delta[i]),
                          x=out["x"][i], z=out["z"][i])
           for i in range(len(records))]
    return new, stats


def apply_standardizer(records, stats):
    t, delta, X, Z = records_to_arrays(records)
    Xs = (X - stats["x_mean"]) / stats["x_sd"]
    Zs = (Z - stats["z_mean"]) / stats["z_sd"]
    return [SurvivalRecord(t=float(t[i]), delta=int(delta[i]), x=Xs[i], z=Zs[i])
            for i in range(len(records))]


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def _default_cv_folds(n):
    return 10 if n < 200 else 5


def cmd_simulate(args):
    config = SimConfig(
        method=args.method, n=args.n, seed=args.seed,
        alpha=args.alpha, censor_rate=args.censor_rate,
        train_fraction=args.train_fraction,
    )
    dataset = gen_dataset(config)
    write_dataset_csv(args.out, dataset.records)
    truth_path = args.truth_out or (args.out + ".truth.csv")
    write_truth_csv(truth_path, dataset)
    print(f"wrote {args.out} ({config.n} rows) and {truth_path}")
    return EXIT_OK


def _parse_grid(text):
    return tuple(float(v) for v in text.split(",")) if text else None


def cmd_fit(args):
    records = read_dataset_csv(args.data)
    standardizer = None
    if args.standardize:
        records, standardizer = standardize_records(records)

    kernel = None
    if args.gamma is not None or args.cost is not None:
        if args.gamma is None or args.cost is None:
            raise InputError("--gamma and --cost must be given together")
        from .svm import KernelSpec

        kernel = KernelSpec(gamma=args.gamma, cost=args.cost)
    cv_folds = args.cv_folds or _default_cv_folds(len(records))
    config = EmConfig(
        kernel=kernel,
        gamma_grid=_parse_grid(args.gamma_grid),
        cost_grid=_parse_grid(args.cost_grid),
        cv_folds=cv_folds, m=args.m, eps=args.eps,
        max_iter=args.max_iter, seed=args.seed,
    )
    fit_fn = em_fit if args.model == "pcm-svm" else logit_em_fit
    fit = fit_fn(records, config)

    boot = None
    if args.bootstrap:
        boot = bootstrap_se(records, config, r=args.bootstrap,
                            seed=args.seed, model=args.model)
    with open(args.out, "w") as fh:
        fh.write(reports.write_fit_report(fit, standardizer=standardizer,
                                          bootstrap=boot))
    status = "converged" if fit.converged else "did not converge"
    print(f"wrote {args.out}: {args.model} {status} "
          f"in {fit.diagnostics.iteration} iterations")
    return EXIT_OK if fit.converged else EXIT_NONCONVERGENCE


def cmd_mc_study(args):
    cv_folds = args.cv_folds or _default_cv_folds(args.n)
    kwargs = dict(
        method=args.method, n=args.n, runs=args.runs, seed=args.seed,
        m=args.m, eps=args.eps, max_iter=args.max_iter,
        cv_folds=cv_folds, jobs=args.jobs,
    )
    gamma_grid = _parse_grid(args.gamma_grid)
    cost_grid = _parse_grid(args.cost_grid)
    if gamma_grid:
        kwargs["gamma_grid"] = gamma_grid
    if cost_grid:
        kwargs["cost_grid"] = cost_grid
    result = run_study(StudyConfig(**kwargs))
    with open(args.out, "w") as fh:
        fh.write(reports.write_study_report(result))
    print(f"wrote {args.out}: {result.runs_used}/{args.runs} runs used, "
          f"{result.failures} failures")
    return EXIT_OK


def cmd_evaluate(args):
    with open(args.fit) as fh:
        fit, standardizer = reports.read_fit_report(fh.read())
    records = read_dataset_csv(args.data)
    if standardizer is not None:
        records = apply_standardizer(records, standardizer)
    t, delta, X, Z = records_to_arrays(records)
    pi = fit.incidence.predict_pi(X)
    F = promotion_cdf_at(t, Z, fit.latency)
    w = uncured_weight(pi, F, delta)

    metrics = {"model": fit.model, "subjects": len(records)}
    if args.truth:
        true_pi, true_cure, split = read_truth_csv(args.truth)
        if len(true_cure) != len(records):
            raise InputError("truth sidecar row count does not match dataset")
        curve = roc_auc(pi, true_cure)
        metrics["auc_true_labels"] = curve.auc
        metrics["pi_mse_vs_truth"] = float(np.mean((pi - true_pi) ** 2))
        for part in ("train", "test"):
            mask = split == part
            if mask.any() and len(np.unique(true_cure[mask])) == 2:
                metrics[f"auc_{part}"] = roc_auc(pi[mask], true_cure[mask]).auc
    else:
        if args.seed is None:
            raise InputError("--seed is required for imputed-label evaluation")
        rng = np.random.default_rng(np.random.SeedSequence(args.seed))
        result = imputed_roc(fit, records, reps=args.reps, rng=rng)
        curve = result["curve"]
        metrics["imputed_mean_auc"] = result["mean_auc"]
        metrics["imputation_reps_used"] = result["reps_used"]
        metrics["imputation_reps_dropped"] = result["reps_dropped"]

    with open(args.out, "w") as fh:
        fh.write(reports.write_evaluate_report(metrics))
    if args.roc_out:
        with open(args.roc_out, "w") as fh:
            fh.write(reports.write_roc_tsv(curve))
    print(f"wrote {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(
        prog="pcmsvm",
        description="Promotion-time cure model with SVM incidence: "
                    "simulation, fitting, Monte Carlo studies, evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic dataset")
    p.add_argument("--method", choices=METHODS, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--truth-out", default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--censor-rate", type=float, default=0.2)
    p.add_argument("--train-fraction", type=float, default=2.0 / 3.0)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="fit a cure model to a dataset CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--model", choices=("pcm-svm", "pcm-logit"), default="pcm-svm")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--standardize", action="store_true")
    p.add_argument("--gamma", type=float, default=None,
                   help="fixed kernel width (skips tuning; needs --cost)")
    p.add_argument("--cost", type=float, default=None)
    p.add_argument("--gamma-grid", default=None, help="comma-separated tuning grid")
    p.add_argument("--cost-grid", default=None)
    p.add_argument("--cv-folds", type=int, default=None,
                   help="default: 10 when n < 200, else 5")
    p.add_argument("--m", type=int, default=5, help="imputation count")
    p.add_argument("--eps", type=float, default=1e-3)
    p.add_argument("--max-iter", type=int, default=50)
    p.add_argument("--bootstrap", type=int, default=0,
                   help="bootstrap replicates for standard errors")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("mc-study", help="Monte Carlo comparison study")
    p.add_argument("--method", choices=METHODS, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--runs", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--m", type=int, default=5)
    p.add_argument("--eps", type=float, default=1e-3)
    p.add_argument("--max-iter", type=int, default=50)
    p.add_argument("--cv-folds", type=int, default=None)
    p.add_argument("--gamma-grid", default=None)
    p.add_argument("--cost-grid", default=None)
    p.set_defaults(func=cmd_mc_study)

    p = sub.add_parser("evaluate", help="evaluate a fit report on a dataset")
    p.add_argument("--fit", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--truth", default=None,
                   help="truth sidecar; omitted => imputed-label ROC")
    p.add_argument("--reps", type=int, default=500)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--roc-out", default=None, help="plot-ready ROC TSV path")
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2 on usage errors, matching EXIT_INPUT
        return int(exc.code) if exc.code else EXIT_OK
    try:
        return args.func(args)
    except InputError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NonConvergenceError as exc:
        print(f"non-convergence: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except (NumericalError, PcmError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
