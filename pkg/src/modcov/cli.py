"""Command-line interface: fit, score, evaluate, simulate, export-modified.

Exit codes: 0 success, 2 input validation, 3 fit non-convergence,
4 incompatible model/data. All randomness flows from --seed; commands that
need randomness refuse to run without it.
"""

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import __version__
from .data import BINOMIAL, COX, build_modified_design, load_dataset
from .errors import ModcovError, ModelMismatchError, ValidationError
from .model_io import load_model, save_model
from .pipeline import fit_interaction_model
from .scoring import REL_RISK, RISK_DIFF, relative_risk, risk_difference, stratify
from .simulate import DEFAULT_METHODS, make_setting, run_experiment
from .survival import cox_newton, cox_two_group, kaplan_meier, logrank

_METHOD_FLAGS = {"new": "new", "augmented": "new_augmented", "full": "full_regression"}


def _threads(args):
    if getattr(args, "threads", None):
        return args.threads
    env = os.environ.get("MODCOV_THREADS", "").strip()
    return int(env) if env else None


def _parse_lambda(text):
    if text == "cv":
        return "cv"
    try:
        value = float(text)
    except ValueError:
        raise ValidationError(f"--lambda must be 'cv' or a number, got {text!r}") from None
    if value < 0:
        raise ValidationError("--lambda must be >= 0")
    return value


def cmd_fit(args):
    dataset = load_dataset(args.data, args.family, treatment_zero_one=args.treatment_01)
    adaptive = None if args.adaptive == "none" else args.adaptive
    if args.method == "full" and adaptive is not None:
        raise ValidationError("adaptive weights apply to the modified-covariate methods only")
    model = fit_interaction_model(
        dataset, method=_METHOD_FLAGS[args.method], link=args.link,
        lam=_parse_lambda(args.lam), folds=args.folds, seed=args.seed,
        adaptive=adaptive, adaptive_direction=args.adaptive_direction,
        exempt_first=args.exempt_first, rule=args.rule)
    save_model(model, args.out, input_path=args.data)
    path = getattr(model, "_cv_path", None)
    summary = [
        f"family={model.family} method={model.method}"
        + (f" link={model.link}" if model.link else ""),
        f"n={model.training['n']} p={len(model.coef)}",
        f"nonzero coefficients: {int(np.count_nonzero(model.coef))} of {len(model.coef)}",
        f"lambda={model.penalty['lambda']:.6g} ({model.penalty['selection']})",
    ]
    if path is not None:
        cv_file = args.out + ".cv.csv"
        with open(cv_file, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["lambda", "cv_mean", "cv_se"])
            for lam, m, s in zip(path.lambdas, path.cv_mean, path.cv_se):
                w.writerow([repr(float(lam)), repr(float(m)), repr(float(s))])
        summary.append(f"cv curve: {cv_file}")
    summary.append(f"model written: {args.out}")
    print("\n".join(summary))
    return 0


def _check_columns(model, dataset):
    expect = tuple(model.basis.columns[1:])
    if dataset.covariate_names != expect:
        raise ModelMismatchError(
            f"data columns {list(dataset.covariate_names)} do not match "
            f"model covariates {list(expect)}")


def cmd_score(args):
    model = load_model(args.model)
    dataset = load_dataset(args.data, model.family, treatment_zero_one=args.treatment_01)
    _check_columns(model, dataset)
    scores = model.score(dataset.covariates)
    delta = None
    if model.family == BINOMIAL and model.link == RISK_DIFF:
        delta = risk_difference(model, dataset.covariates)
    elif model.family == BINOMIAL and model.link == REL_RISK:
        delta = relative_risk(model, dataset.covariates)
    groups = None
    if args.stratify != "none":
        rule = args.stratify if args.stratify in ("median", "tertile") else int(args.stratify[1:])
        groups = stratify(scores, rule)

    header = ["id", "score"]
    if delta is not None:
        header.append("delta_hat")
    if groups is not None:
        header.append("group")
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(out)
        w.writerow(header)
        for i in range(dataset.n):
            row = [dataset.ids[i], repr(float(scores[i]))]
            if delta is not None:
                row.append(repr(float(delta[i])))
            if groups is not None:
                row.append(groups.names[groups.labels[i]])
            w.writerow(row)
    finally:
        if args.out:
            out.close()
    if args.out:
        print(f"scores written: {args.out}")
    return 0


def _km_points(time, status):
    curve = kaplan_meier(time, status)
    return [{"time": float(t), "survival": float(s)}
            for t, s in zip(curve.times, curve.survival)]


def cmd_evaluate(args):
    model = load_model(args.model)
    if model.family != COX:
        raise ModelMismatchError("evaluate supports survival models only")
    dataset = load_dataset(args.data, COX, treatment_zero_one=args.treatment_01)
    _check_columns(model, dataset)
    scores = model.score(dataset.covariates)
    groups = stratify(scores, args.groups)

    strata = []
    for gi, name in enumerate(groups.names):
        idx = np.nonzero(groups.labels == gi)[0]
        entry = {"group": name, "n": int(idx.size),
                 "events": int(dataset.status[idx].sum()) if idx.size else 0}
        if idx.size:
            t, s, trt = dataset.time[idx], dataset.status[idx], dataset.treatment[idx]
            arms = np.unique(trt)
            if arms.size == 2 and s.sum() > 0:
                two = cox_two_group(t, s, trt)
                if two.estimable:
                    entry["hazard_ratio"] = two.hazard_ratio
                    entry["log_hr"] = two.log_hr
                    entry["hr_se"] = two.se
                    entry["hr_p"] = two.pvalue
                else:
                    entry["hazard_ratio"] = None
                    entry["hr_note"] = two.reason
                lr = logrank(t, s, trt)
                entry["logrank_p"] = lr.pvalue
            entry["km"] = {f"arm{arm:+.0f}": _km_points(t[trt == arm], s[trt == arm])
                           for arm in arms}
        strata.append(entry)

    sc = scores - scores.mean()
    design = np.column_stack([dataset.treatment, sc, dataset.treatment * sc])
    try:
        beta, info, _ = cox_newton(design, dataset.time, dataset.status)
        cov = np.linalg.inv(info)
        z = beta[2] / np.sqrt(cov[2, 2])
        from scipy.stats import norm
        interaction = {"coef": float(beta[2]), "se": float(np.sqrt(cov[2, 2])),
                       "p": float(2.0 * norm.sf(abs(z))),
                       "design": "treatment + score + treatment:score"}
    except ModcovError as exc:
        interaction = {"coef": None, "note": str(exc)}

    report = {"n": dataset.n, "groups_rule": args.groups,
              "cutpoints": list(groups.cutpoints), "strata": strata,
              "interaction_wald": interaction}
    text = json.dumps(report, indent=2)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
        km_file = args.out + ".km.csv"
        with open(km_file, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["group", "arm", "time", "survival"])
            for entry in strata:
                for arm, pts in entry.get("km", {}).items():
                    for pt in pts:
                        w.writerow([entry["group"], arm, repr(pt["time"]),
                                    repr(pt["survival"])])
        print(f"evaluation written: {args.out}\nkm curves: {km_file}")
    else:
        print(text)
    return 0


def cmd_simulate(args):
    setting = make_setting(args.setting, args.family, p=args.p, n=args.n,
                           test_n=args.test_n)
    methods = tuple(args.methods.split(","))
    results = run_experiment(setting, methods=methods, reps=args.reps,
                             master_seed=args.seed, folds=args.folds,
                             threads=_threads(args))
    os.makedirs(args.out_dir, exist_ok=True)
    rows_file = os.path.join(args.out_dir, "results.csv")
    with open(rows_file, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["setting", "family", "p", "method", "rep", "spearman"])
        for m in methods:
            for r, rho in enumerate(results[m].spearmans):
                w.writerow([args.setting, setting.family, setting.p, m, r,
                            repr(float(rho))])
    summary = {m: {"median": results[m].median,
                   "quartiles": results[m].quartiles(),
                   "failures": results[m].failures,
                   "mean_runtime_s": float(np.mean(results[m].runtimes))}
               for m in methods}
    summary_file = os.path.join(args.out_dir, "summary.json")
    with open(summary_file, "w") as fh:
        json.dump({"setting": args.setting, "family": setting.family,
                   "p": setting.p, "n": setting.n, "reps": args.reps,
                   "seed": args.seed, "methods": summary}, fh, indent=2)
        fh.write("\n")
    for m in methods:
        q1, med, q3 = results[m].quartiles()
        print(f"{m:>16}: median spearman {med:.4f} (IQR {q1:.4f}..{q3:.4f}, "
              f"failures {results[m].failures})")
    print(f"results: {rows_file}\nsummary: {summary_file}")
    return 0


def cmd_export_modified(args):
    dataset = load_dataset(args.data, args.family, treatment_zero_one=args.treatment_01)
    design = build_modified_design(dataset)
    outcome_cols = ["y"] if dataset.family != COX else ["time", "status"]
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(list(design.basis.columns) + outcome_cols)
        for i in range(dataset.n):
            row = [repr(float(v)) for v in design.modified[i]]
            if dataset.family != COX:
                row.append(repr(float(dataset.y[i])))
            else:
                row.extend([repr(float(dataset.time[i])), repr(float(dataset.status[i]))])
            w.writerow(row)
    print(f"modified data written: {args.out} "
          f"({dataset.n} rows, {design.modified.shape[1]} basis columns)")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="modcov",
        description="Treatment-interaction scoring from randomized trial data")
    parser.add_argument("--version", action="version", version=f"modcov {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common_data(p):
        p.add_argument("--data", required=True, help="input CSV")
        p.add_argument("--treatment-01", action="store_true",
                       help="treatment column is coded 0/1 (remapped to -1/+1)")

    p = sub.add_parser("fit", help="fit a scoring model")
    add_common_data(p)
    p.add_argument("--family", required=True, choices=["gaussian", "binomial", "cox"])
    p.add_argument("--method", default="new", choices=sorted(_METHOD_FLAGS))
    p.add_argument("--link", default=RISK_DIFF, choices=[RISK_DIFF, REL_RISK],
                   help="binomial working model")
    p.add_argument("--lambda", dest="lam", default="cv",
                   help="'cv' or a fixed penalty value")
    p.add_argument("--folds", type=int, default=20)
    p.add_argument("--adaptive", default="none", choices=["none", "pooled", "armwise"])
    p.add_argument("--adaptive-direction", default="reciprocal",
                   choices=["reciprocal", "as-written"])
    p.add_argument("--exempt-first", action="store_true",
                   help="leave the intercept-interaction column unpenalized")
    p.add_argument("--rule", default="min", choices=["min", "1se"],
                   help="CV selection rule")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True, help="model JSON path")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("score", help="score subjects with a fitted model")
    p.add_argument("--model", required=True)
    add_common_data(p)
    p.add_argument("--stratify", default="none",
                   help="none | median | tertile | q<k>")
    p.add_argument("--out", default=None, help="scores CSV (default stdout)")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("evaluate", help="stratified survival evaluation")
    p.add_argument("--model", required=True)
    add_common_data(p)
    p.add_argument("--groups", default="median", choices=["median", "tertile"])
    p.add_argument("--out", default=None, help="evaluation JSON (default stdout)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("simulate", help="run the method-comparison study")
    p.add_argument("--setting", type=int, required=True, choices=[1, 2, 3, 4])
    p.add_argument("--family", required=True, choices=["gaussian", "binomial", "cox"])
    p.add_argument("--p", type=int, default=50)
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--test-n", type=int, default=10000)
    p.add_argument("--reps", type=int, default=100)
    p.add_argument("--folds", type=int, default=20)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--methods", default=",".join(DEFAULT_METHODS))
    p.add_argument("--threads", type=int, default=None,
                   help="parallel replications (MODCOV_THREADS as fallback)")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("export-modified", help="write the modified observations")
    add_common_data(p)
    p.add_argument("--family", required=True, choices=["gaussian", "binomial", "cox"])
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_modified)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ModcovError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
