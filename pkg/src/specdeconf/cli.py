"""``specdeconf`` command-line front end.

Exit codes: 0 ok, 2 usage or config error, 3 data/shape error, 4 numerical failure.
Numbers in CSV output use the shortest decimal that round-trips to the same double.
"""

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from specdeconf import diagnostics, experiments
from specdeconf.errors import SpecDeconfError
from specdeconf.hdam import METHODS, FittedHDAM, active_set, fit, predict
from specdeconf.metrics import strength_ranking
from specdeconf.modelselect import CVPlan, cv_select
from specdeconf.simgen import SimConfig, gen_dataset

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


class CLIError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def fmt(v):
    """Shortest round-trip text for a number (``repr`` of a Python float)."""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_matrix(path, A):
    A = np.atleast_2d(np.asarray(A, dtype=float))
    with open(path, "w", newline="") as fh:
        for row in A.tolist():
            fh.write(",".join(repr(v) for v in row) + "\n")


def write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) for v in r])


def read_matrix(path, name):
    try:
        A = np.loadtxt(path, delimiter=",", ndmin=2)
    except OSError as exc:
        raise CLIError(f"{name}: cannot read {path}: {exc}", EXIT_USAGE) from None
    except ValueError as exc:
        raise CLIError(f"{name}: malformed CSV in {path}: {exc}", EXIT_DATA) from None
    if not np.all(np.isfinite(A)):
        raise CLIError(f"{name}: non-finite entries in {path}", EXIT_DATA)
    return A


def read_xy(args):
    X = read_matrix(args.x, "X")
    Y = read_matrix(args.y, "Y")
    if Y.shape[1] != 1 and Y.shape[0] == 1:
        Y = Y.T
    if Y.shape[1] != 1:
        raise CLIError(f"Y must have one column, got {Y.shape[1]}", EXIT_DATA)
    if Y.shape[0] != X.shape[0]:
        raise CLIError(f"X has {X.shape[0]} rows but Y has {Y.shape[0]}", EXIT_DATA)
    return X, Y[:, 0]


def read_json(path, what):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CLIError(f"{what}: cannot read {path}: {exc}", EXIT_USAGE) from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise CLIError(f"{what}: {path} line {exc.lineno} column {exc.colno}: {exc.msg}", EXIT_USAGE) from None


def build(cls, d, what):
    """Instantiate a config dataclass from a dict with field-level messages."""
    if not isinstance(d, dict):
        raise CLIError(f"{what}: top level must be a JSON object", EXIT_USAGE)
    unknown = sorted(set(d) - set(cls.__dataclass_fields__))
    if unknown:
        raise CLIError(f"{what}: unknown field(s) {', '.join(unknown)}", EXIT_USAGE)
    try:
        return cls(**d)
    except (TypeError, ValueError, SpecDeconfError) as exc:
        raise CLIError(f"{what}: {exc}", EXIT_USAGE) from None


def summary(f, top=10):
    ranking = strength_ranking(f)[:top]
    return {
        "method": f.method,
        "K": f.K,
        "lambda": f.lam,
        "active_size": len(active_set(f)),
        "top_strengths": [{"covariate": j, "strength": s} for j, s in ranking if s > 0],
        "q_hat": f.q_hat,
        "converged": f.converged,
        "kkt_residual": f.kkt_residual,
    }


def save_model(out, f):
    out.mkdir(parents=True, exist_ok=True)
    (out / "model.json").write_text(f.to_json())
    (out / "summary.json").write_text(json.dumps(summary(f), indent=1))


def cmd_simulate(args):
    cfg = build(SimConfig, read_json(args.config, "config"), "config")
    draw = gen_dataset(cfg, args.error_method)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_matrix(out / "X.csv", draw.X)
    write_matrix(out / "Y.csv", draw.Y[:, None])
    (out / "truth.json").write_text(json.dumps(draw.truth_dict(), indent=1))


def cmd_fit(args):
    X, Y = read_xy(args)
    f = fit(
        X,
        Y,
        args.K,
        args.lam,
        args.method,
        args.rho,
        args.center_columns,
        allow_nonconverged=args.allow_nonconverged,
    )
    save_model(Path(args.out), f)
    print(json.dumps(summary(f)))


def cmd_cv(args):
    X, Y = read_xy(args)
    plan_d = read_json(args.plan, "plan") if args.plan else {}
    if isinstance(plan_d, dict):
        plan_d = dict(plan_d)
        plan_d.setdefault("method", args.method)
        if args.jobs is not None:
            plan_d["jobs"] = args.jobs
        for key in ("K_grid", "multipliers"):
            if isinstance(plan_d.get(key), list):
                plan_d[key] = tuple(plan_d[key])
    plan = build(CVPlan, plan_d, "plan")
    K, lam, report = cv_select(X, Y, plan)
    f = fit(X, Y, K, lam, plan.method, plan.rho, plan.center_columns, allow_nonconverged=args.allow_nonconverged)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "cv_report.csv").write_text(report.to_csv())
    save_model(out, f)
    print(json.dumps(summary(f)))


def cmd_experiment(args):
    if args.name not in experiments.SCENARIOS:
        valid = ", ".join(sorted(experiments.SCENARIOS))
        raise CLIError(f"unknown experiment {args.name!r}; valid names: {valid}", EXIT_USAGE)
    rows = experiments.run_experiment(
        args.name,
        influence=args.influence,
        sigma_e=args.sigma_e,
        replicates=args.replicates,
        seed=args.seed,
        desk=args.desk_scale,
        jobs=args.jobs,
    )
    write_rows(args.out, ("scenario", "method", "replicate", "metric", "value"), rows)


def cmd_spectrum(args):
    X = read_matrix(args.x, "X")
    d = diagnostics.singular_values(X, center=args.center)
    write_rows(args.out, ("index", "singular_value"), [(i + 1, v) for i, v in enumerate(d.tolist())])


def cmd_predict(args):
    f = FittedHDAM.from_json(Path(args.model).read_text())
    X = read_matrix(args.x, "X")
    write_matrix(args.out, predict(f, X)[:, None])


def cmd_leakage(args):
    X = read_matrix(args.x, "X")
    truth = read_json(args.truth, "truth")
    try:
        cfg = SimConfig.from_dict(truth["config"])
        Psi = np.array(truth["Psi"], dtype=float).reshape(cfg.q, cfg.p)
        psi = np.array(truth["psi"], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise CLIError(f"truth: {exc}", EXIT_USAGE) from None
    if X.shape[1] != cfg.p:
        raise CLIError(f"X has {X.shape[1]} columns, truth has p = {cfg.p}", EXIT_DATA)
    before, after = diagnostics.confounding_leakage(X, Psi, psi, cfg.sigma_matrix(), args.rho)
    bound = diagnostics.compatibility_lower_bound(Psi, cfg.sigma_matrix())
    print(json.dumps({"leak_before": before, "leak_after": after, "compatibility_lower_bound": bound}))


def parser():
    p = argparse.ArgumentParser(prog="specdeconf", description="Spectrally deconfounded additive models.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="draw a dataset from a JSON SimConfig")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--error-method", choices=("cholesky", "ar1"), default="cholesky")
    s.set_defaults(func=cmd_simulate)

    def data_args(s):
        s.add_argument("--x", required=True, help="X.csv, no header")
        s.add_argument("--y", required=True, help="Y.csv, one column")
        s.add_argument("--method", choices=METHODS, default="deconfounded")
        s.add_argument("--out", required=True, help="output directory")
        s.add_argument("--allow-nonconverged", action="store_true")

    s = sub.add_parser("fit", help="fit at a given (K, lambda)")
    data_args(s)
    s.add_argument("--K", type=int, required=True)
    s.add_argument("--lambda", dest="lam", type=float, required=True)
    s.add_argument("--rho", type=float, default=0.5)
    s.add_argument("--center-columns", action="store_true")
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("cv", help="choose (K, lambda) by cross-validation and refit")
    data_args(s)
    s.add_argument("--plan", help="CVPlan JSON; defaults are used when omitted")
    s.add_argument("--jobs", type=int, default=None)
    s.set_defaults(func=cmd_cv)

    s = sub.add_parser("experiment", help="run a named simulation scenario")
    s.add_argument("name")
    s.add_argument("--influence", choices=("equal", "decreasing"), default="equal")
    s.add_argument("--sigma-e", choices=("identity", "toeplitz"), default="identity")
    s.add_argument("--replicates", type=int, default=None)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--desk-scale", action="store_true")
    s.add_argument("--jobs", type=int, default=experiments.default_jobs())
    s.add_argument("--out", required=True, help="results CSV path")
    s.set_defaults(func=cmd_experiment)

    s = sub.add_parser("spectrum", help="singular values of X")
    s.add_argument("--x", required=True)
    s.add_argument("--center", action="store_true", help="center columns first")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_spectrum)

    s = sub.add_parser("predict", help="evaluate a saved model on new X")
    s.add_argument("--model", required=True)
    s.add_argument("--x", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("leakage", help="confounding leakage before/after the trim transform")
    s.add_argument("--x", required=True)
    s.add_argument("--truth", required=True)
    s.add_argument("--rho", type=float, default=0.5)
    s.set_defaults(func=cmd_leakage)
    return p


def main(argv=None):
    p = parser()
    try:
        args = p.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        args.func(args)
    except CLIError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except SpecDeconfError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
