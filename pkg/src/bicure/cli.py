"""``bicure`` command line.

Exit codes: 0 ok, 1 other model error, 2 config error, 3 parse error,
4 non-convergence, 5 unreliable study.
"""

import argparse
import csv
import io
import json
import math
import sys

import numpy as np
from scipy import stats

from .config import StudyKind, StudyModel, load_design, load_params, load_study
from .data import CureTruthDataset, dataset_to_csv, load_retinopathy, read_csv
from .datagen import generate
from .dependence import dependence_report
from .errors import BicureError, ConfigError, DataFormatError, NonConvergenceError
from .estimation import FitConfig, fit_all_regimes, fit_regime
from .studies import _clean, run_study
from .survival import FrailtySpec, WeibullMargin, marginal_survival_population

EXIT_OK, EXIT_ERROR, EXIT_CONFIG, EXIT_PARSE, EXIT_NONCONV, EXIT_UNRELIABLE = 0, 1, 2, 3, 4, 5

MODELS = ("indep", "gumbel", "fgm")
REGIMES = ("eq1", "lt1", "gt1", "inf", "all")


def _dump(obj):
    return json.dumps(_clean(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _write(path, text):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def _load_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc


def _table(rows, cols):
    widths = [max(len(c), *(len(r[i]) for r in rows)) for i, c in enumerate(cols)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(cols, widths))]
    lines += ["  ".join(v.ljust(w) for v, w in zip(r, widths)) for r in rows]
    return "\n".join(lines) + "\n"


def _g(x, fmt="{:.4f}"):
    return "-" if x is None or (isinstance(x, float) and not math.isfinite(x)) else fmt.format(x)


# subcommands

def cmd_simulate(args):
    design = load_design(args.design)
    if args.n is not None:
        design = design.with_n(args.n)
    if args.seed is not None:
        design = design.with_seed(args.seed)
    _write(args.out, dataset_to_csv(generate(design)))
    return EXIT_OK


def _fit_report_dict(report, lrt):
    out = report.to_dict()
    if lrt is not None:
        out["lrt"] = lrt
    return out


def cmd_fit(args):
    data = read_csv(args.data)
    if data.n == 0:
        raise DataFormatError(f"{args.data}: no data rows")
    config = FitConfig(starts=args.starts, seed=args.seed or 0)
    covariates = args.covariates and data.has_covariates
    if args.covariates and not data.has_covariates:
        raise ConfigError("--covariates given but the data file has no covariate columns")
    lrt = None
    if args.regime == "all":
        report = fit_all_regimes(args.model, data, config, covariates=covariates)
        if "eq1" in report.fits:
            lam = max(0.0, 2.0 * (report.loglik_max - report.fits["eq1"].loglik_max))
            lrt = {"statistic": lam, "p_value": float(stats.chi2.sf(lam, 1)), "alpha": args.alpha,
                   "reject": bool(lam > stats.chi2.ppf(1 - args.alpha, 1))}
    else:
        report = fit_regime(args.model, args.regime, data, config, covariates=covariates)
    _write(args.out, _dump(_fit_report_dict(report, lrt)))
    if args.out not in (None, "-"):
        sys.stdout.write(_human_fit(report, lrt))
    return EXIT_OK


def _human_fit(report, lrt):
    d = report.to_dict()
    rows = [(p["name"], _g(p["estimate"]), _g(p["se"]), f"[{_g(p['ci_low'])}, {_g(p['ci_high'])}]")
            for p in d["parameters"]]
    text = f"{report.copula} / {report.regime}: loglik {report.loglik_max:.3f}  AIC {report.aic:.3f}  " \
           f"BIC {report.bic:.3f}\n"
    text += _table(rows, ("parameter", "estimate", "se", "95% ci"))
    if report.flags:
        text += "flags: " + ", ".join(report.flags) + "\n"
    if report.regime_table:
        rows = [(r, _g(v["loglik"], "{:.3f}"), _g(v["aic"], "{:.3f}"), _g(v["bic"], "{:.3f}"), str(v["n_params"]))
                for r, v in report.regime_table.items()]
        text += _table(rows, ("regime", "loglik", "aic", "bic", "n_params"))
    if lrt:
        text += f"LRT R=1: statistic {lrt['statistic']:.3f}, p-value {lrt['p_value']:.4f}\n"
    return text


def _fit_values(report_json):
    pars = {p["name"]: p["estimate"] for p in report_json["parameters"]}
    regime = report_json["regime"]
    R = {"eq1": 1.0, "inf": math.inf}.get(regime, pars.get("R"))
    p1, p2 = report_json["cure_fractions"]
    return pars, R, p1, p2


def cmd_dep(args):
    if args.fit:
        rep = _load_json(args.source)
        try:
            pars, R, p1, p2 = _fit_values(rep)
            copula = rep["copula"]
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"{args.source}: not a fit report ({exc})") from exc
        theta, gamma = pars.get("theta", 0.0), pars["gamma"]
    else:
        p = load_params(args.source)
        if p.has_covariates:
            raise ConfigError("dep needs p1/p2, not cure coefficients")
        copula, theta, gamma, p1, p2, R = p.copula, p.theta, p.gamma, p.cure.p1, p.cure.p2, p.regime.value
    sample = None
    if args.sample:
        ds = read_csv(args.sample)
        if not isinstance(ds, CureTruthDataset):
            raise ConfigError("sample coefficients need an uncensored dataset")
        sample = ds.pairs()
    rep = dependence_report(copula, theta, gamma, p1, p2, R, sample=sample)
    _write(args.out, _dump(rep.to_dict()))
    return EXIT_OK


def _study_outputs(report, out):
    text = report.to_json()
    if out in (None, "-"):
        sys.stdout.write(text)
        return
    _write(out + ".json", text)
    rows = report.table_rows()
    cols = []
    for r in rows:
        cols += [k for k in r if k not in cols]
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: ("" if v is None else repr(v) if isinstance(v, float) else v) for k, v in _clean(r).items()})
    _write(out + ".csv", buf.getvalue())
    _write(out + ".timing.json", _dump(report.timing))


def _finish_study(model, args):
    if args.reps is not None:
        model = model.model_copy(update={"replications": args.reps})
    if args.seed is not None:
        model = model.model_copy(update={"seed": args.seed})
    if args.n is not None:
        model = model.model_copy(update={"n_grid": [args.n]})
    if args.alpha is not None:
        model = model.model_copy(update={"alpha": args.alpha})
    try:
        StudyModel.model_validate(model.model_dump())
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    report = run_study(model)
    _study_outputs(report, args.out or model.output)
    if report.unreliable:
        sys.stderr.write(f"study unreliable: {report.failed} of {report.total} replications failed\n")
        return EXIT_UNRELIABLE
    return EXIT_OK


def cmd_study(args):
    return _finish_study(load_study(args.spec), args)


def cmd_em_compare(args):
    raw = _load_json(args.design)
    spec = {"study": StudyKind.em.value, "design": raw, "replications": args.reps or 100,
            "fit": {"starts": args.starts, "compute_se": False}}
    try:
        model = StudyModel.model_validate(spec)
        model.design.build()
    except (ValueError, BicureError) as exc:
        raise ConfigError(f"{args.design}: {exc}") from exc
    args.reps = None
    return _finish_study(model, args)


def cmd_curves(args):
    rep = _load_json(args.report)
    try:
        pars, _, p1, p2 = _fit_values(rep)
        f = FrailtySpec(pars["gamma"])
        margins = (WeibullMargin(pars["a1"], pars["r1"]), WeibullMargin(pars["a2"], pars["r2"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{args.report}: not a fit report ({exc})") from exc
    if args.points < 2 or not args.tmax > 0:
        raise ConfigError("--points must be at least 2 and --tmax positive")
    grid = np.linspace(0.0, args.tmax, args.points)
    s1 = marginal_survival_population(p1, margins[0], f, grid)
    s2 = marginal_survival_population(p2, margins[1], f, grid)
    lines = ["t,survival1,survival2,cure1,cure2"]
    lines += [f"{t!r},{a!r},{b!r},{p1!r},{p2!r}" for t, a, b in zip(grid.tolist(), s1.tolist(), s2.tolist())]
    _write(args.out, "\n".join(lines) + "\n")
    return EXIT_OK


def cmd_prepare_retinopathy(args):
    _write(args.out, dataset_to_csv(load_retinopathy(args.source)))
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="bicure", description="Bivariate cure frailty-copula models.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="draw a dataset from a design file")
    p.add_argument("design")
    p.add_argument("--n", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="maximum likelihood fit of a dataset")
    p.add_argument("data")
    p.add_argument("--model", choices=MODELS, default="gumbel")
    p.add_argument("--regime", choices=REGIMES, default="all")
    p.add_argument("--covariates", action="store_true")
    p.add_argument("--starts", type=int, default=8)
    p.add_argument("--seed", type=int)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--out")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("dep", help="rank correlations from a parameter file or fit report")
    p.add_argument("source")
    p.add_argument("--fit", action="store_true", help="source is a fit report")
    p.add_argument("--sample", help="dataset CSV for the sample coefficients")
    p.add_argument("--out")
    p.set_defaults(func=cmd_dep)

    for name, func, help_ in (("study", cmd_study, "run a Monte Carlo study file"),
                              ("em-compare", cmd_em_compare, "EM against direct maximization")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("spec" if name == "study" else "design")
        p.add_argument("--reps", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--n", type=int)
        p.add_argument("--alpha", type=float)
        p.add_argument("--out", help="output prefix; writes PREFIX.json, PREFIX.csv and PREFIX.timing.json")
        if name == "em-compare":
            p.add_argument("--starts", type=int, default=3)
        p.set_defaults(func=func)

    p = sub.add_parser("curves", help="fitted population survival curves")
    p.add_argument("report")
    p.add_argument("--tmax", type=float, default=80.0)
    p.add_argument("--points", type=int, default=161)
    p.add_argument("--out")
    p.set_defaults(func=cmd_curves)

    p = sub.add_parser("prepare-retinopathy", help="convert the wide retinopathy export")
    p.add_argument("source")
    p.add_argument("--out")
    p.set_defaults(func=cmd_prepare_retinopathy)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        code, msg = EXIT_CONFIG, f"config error: {exc}"
    except DataFormatError as exc:
        code, msg = EXIT_PARSE, f"parse error: {exc}"
    except NonConvergenceError as exc:
        code, msg = EXIT_NONCONV, f"did not converge: {exc}"
    except BicureError as exc:
        code, msg = EXIT_ERROR, f"error: {exc}"
    sys.stderr.write(msg + "\n")
    return code


if __name__ == "__main__":
    sys.exit(main())
