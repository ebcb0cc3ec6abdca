"""Monte Carlo studies: replication runner and aggregation.

Every replication draws its data from ``replicate_seeds(cell_seed, k)`` so a
report depends only on the study file, never on the number of workers.
"""

import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .config import StudyKind, StudyModel
from .datagen import generate, mix64, replicate_seeds
from .dependence import dependence_report, sample_rho_b, sample_tau_b
from .em import EmConfig, PSI_NAMES, direct_fit, em_fit
from .errors import BicureError, ConfigError
from .estimation import fit_regime, lrt_r_equals_one
from .survival import _normalize_copula

__all__ = ["StudyReport", "run_study", "worker_count", "FAILURE_LIMIT"]

FAILURE_LIMIT = 0.20


def worker_count(tasks):
    env = os.environ.get("BICURE_THREADS")
    try:
        cap = int(env) if env else (os.cpu_count() or 1)
    except ValueError as exc:
        raise ConfigError(f"BICURE_THREADS must be an integer, got {env!r}") from exc
    return max(1, min(cap, tasks))


@dataclass
class StudyReport:
    study: str
    cells: list
    total: int
    failed: int
    unreliable: bool
    spec: dict
    timing: dict = field(default_factory=dict)

    @property
    def failure_rate(self):
        return self.failed / self.total if self.total else 0.0

    def to_dict(self):
        """Deterministic part of the report (wall times are kept apart in ``timing``)."""
        return {"study": self.study, "spec": self.spec, "replications": self.total, "failed": self.failed,
                "failure_rate": self.failure_rate, "unreliable": self.unreliable, "cells": self.cells}

    def to_json(self):
        return json.dumps(_clean(self.to_dict()), indent=2, sort_keys=True, allow_nan=False) + "\n"

    def table_rows(self):
        """Flat rows for the CSV table."""
        rows = []
        for cell in self.cells:
            key = {k: v for k, v in cell.items() if k in ("n", "R")}
            if "parameters" in cell:
                rows += [dict(key, **p) for p in cell["parameters"]]
            else:
                rows.append(dict(key, **{k: v for k, v in cell.items() if not isinstance(v, (list, dict))}))
        return rows


def _clean(x):
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        if math.isnan(x):
            return None
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


# cells

def _cells(model):
    kind = model.study
    ns = model.ns()
    if kind == StudyKind.type1:
        return [{"n": n, "R": 1.0} for n in ns]
    if kind == StudyKind.power:
        grid = sorted(set([1.0] + list(model.r_grid)))
        return [{"n": n, "R": r} for n in ns for r in grid]
    return [{"n": n, "R": None} for n in ns]


def _design(model, cell, seed):
    return model.design.at(R=cell["R"], n=cell["n"]).build().with_seed(seed)


def _fit_copula(model, design):
    return _normalize_copula(model.fit.model or design.params.copula)


# one replication

def _replicate(args):
    spec_json, cell, k, seed = args
    model = StudyModel.model_validate_json(spec_json)
    out = {"k": k, "seed": seed}
    t0 = time.perf_counter()
    try:
        design = _design(model, cell, seed)
        out.update(_RUNNERS[model.study](model, design, seed))
        out["ok"] = True
    except (BicureError, FloatingPointError, np.linalg.LinAlgError) as exc:
        out.update(ok=False, error=f"{type(exc).__name__}: {exc}")
    out["seconds"] = time.perf_counter() - t0
    return out


def _run_rank(model, design, seed):
    pairs = generate(design).pairs()
    return {"tau_b": sample_tau_b(pairs), "rho_b": sample_rho_b(pairs)}


def _fit_regime_name(model, design):
    r = model.fit.regime
    return design.params.regime.regime if r in (None, "truth") else r


def _run_mle(model, design, seed):
    data = generate(design)
    rep = fit_regime(_fit_copula(model, design), _fit_regime_name(model, design), data,
                     model.fit.config(seed), covariates=data.has_covariates)
    return {"estimates": rep.natural, "se": dict(rep.se), "ci": {k: list(v) for k, v in rep.ci.items()},
            "flags": list(rep.flags), "names": list(rep.layout.names)}


def _run_lrt(model, design, seed):
    data = generate(design)
    config = replace(model.fit.config(seed), compute_se=False)
    res = lrt_r_equals_one(_fit_copula(model, design), data, config, alpha=model.alpha,
                           covariates=data.has_covariates)
    return {"statistic": res.statistic, "p_value": res.p_value, "reject": res.reject,
            "best_regime": res.unrestricted.regime}


def _run_em(model, design, seed):
    data = generate(design)
    t0 = time.perf_counter()
    em = em_fit(data, EmConfig(seed=seed))
    t1 = time.perf_counter()
    direct = direct_fit(data, model.fit.config(seed))
    t2 = time.perf_counter()
    dn = dict(direct.natural)
    return {"em": {k: em.psi[k] for k in PSI_NAMES}, "direct": {k: dn[k] for k in PSI_NAMES},
            "loglik_em": em.report.loglik_max, "loglik_direct": direct.loglik_max,
            "iterations": em.iterations, "ascent_violations": em.ascent_violations,
            "time_em": t1 - t0, "time_direct": t2 - t1}


_RUNNERS = {StudyKind.rank: _run_rank, StudyKind.mle: _run_mle, StudyKind.type1: _run_lrt,
            StudyKind.power: _run_lrt, StudyKind.em: _run_em}


# aggregation

def _mean_sd(x):
    x = np.asarray([v for v in x if v is not None and math.isfinite(v)], dtype=float)
    if x.size == 0:
        return math.nan, math.nan, 0
    sd = float(np.std(x, ddof=1)) if x.size > 1 else math.nan
    return float(x.mean()), sd, int(x.size)


def _truth(params, names):
    v = {"theta": params.theta, "gamma": params.gamma, "R": params.regime.value, "a1": params.margin1.a,
         "r1": params.margin1.r, "a2": params.margin2.a, "r2": params.margin2.r}
    cure = params.cure
    if params.has_covariates:
        covs = ("x",)
        for j, b in ((1, cure.beta1), (2, cure.beta2)):
            v[f"beta{j}_0"] = b[0]
            v.update({f"beta{j}_{c}": bi for c, bi in zip(covs, b[1:])})
        v["beta_0"] = cure.beta1[0]
        v.update({f"beta_{c}": bi for c, bi in zip(covs, cure.beta1[1:])})
    else:
        v.update(p1=cure.p1, p2=cure.p2, p=cure.p1)
    return {n: float(v[n]) for n in names if n in v}


def _agg_rank(model, design, ok):
    p = design.params
    pop = dependence_report(p.copula, p.theta, p.gamma, p.cure.p1, p.cure.p2, p.regime.value)
    out = {}
    for key, theory in (("tau_b", pop.tau_b), ("rho_b", pop.rho_b)):
        mean, sd, k = _mean_sd([r[key] for r in ok])
        se = sd / math.sqrt(k) if k > 1 else math.nan
        out[key] = {"theory": theory, "mean": mean, "sd": sd, "se_mean": se, "count": k,
                    "within_3se": bool(abs(mean - theory) <= 3 * se) if k > 1 else False}
    return out


def _agg_mle(model, design, ok):
    if not ok:
        return {"parameters": []}
    names = ok[0]["names"]
    truth = _truth(design.params, names)
    rows = []
    for name in names:
        est = np.array([r["estimates"][name] for r in ok], dtype=float)
        tv = truth.get(name, math.nan)
        mean, sd, k = _mean_sd(est)
        ses = [r["se"][name] for r in ok if name in r["se"]]
        cis = [r["ci"][name] for r in ok if name in r["ci"]]
        cover = sum(1 for lo, hi in cis if lo <= tv <= hi)
        rows.append({"parameter": name, "truth": tv, "mean": mean, "bias": mean - tv,
                     "mse": float(np.mean((est - tv) ** 2)), "sd": sd,
                     "se_mean": float(np.mean(ses)) if ses else math.nan,
                     "cp": cover / len(cis) if cis else math.nan, "cp_count": cover, "ci_count": len(cis)})
    return {"parameters": rows}


def _agg_lrt(model, design, ok):
    rej = sum(1 for r in ok if r["reject"])
    k = len(ok)
    rate = rej / k if k else math.nan
    return {"rejections": rej, "rate": rate, "alpha": model.alpha,
            "se_rate": math.sqrt(rate * (1 - rate) / k) if k else math.nan,
            "mean_statistic": _mean_sd([r["statistic"] for r in ok])[0]}


def _agg_em(model, design, ok):
    rows = []
    truth = _truth(design.params, PSI_NAMES)
    for name in PSI_NAMES:
        row = {"parameter": name, "truth": truth[name]}
        for method in ("em", "direct"):
            est = np.array([r[method][name] for r in ok], dtype=float)
            mean, sd, _ = _mean_sd(est)
            row.update({f"{method}_mean": mean, f"{method}_bias": mean - truth[name], f"{method}_sd": sd,
                        f"{method}_mse": float(np.mean((est - truth[name]) ** 2)) if est.size else math.nan})
        row["mean_diff"] = row["em_mean"] - row["direct_mean"]
        rows.append(row)
    dll = [abs(r["loglik_em"] - r["loglik_direct"]) for r in ok]
    return {"parameters": rows, "max_abs_loglik_diff": max(dll) if dll else math.nan,
            "median_iterations": float(np.median([r["iterations"] for r in ok])) if ok else math.nan,
            "ascent_violations": sum(r["ascent_violations"] for r in ok)}


_AGGREGATORS = {StudyKind.rank: _agg_rank, StudyKind.mle: _agg_mle, StudyKind.type1: _agg_lrt,
                StudyKind.power: _agg_lrt, StudyKind.em: _agg_em}


def _check(model):
    design = model.design.build()
    kind = model.study
    if kind == StudyKind.em:
        p = design.params
        if p.copula != "gumbel" or p.has_covariates or p.regime.regime != "eq1":
            raise ConfigError("EmCompare needs a Gumbel design with R=1 and no covariates")
    if kind == StudyKind.power and not model.r_grid:
        raise ConfigError("LrtPower needs a non-empty r_grid")
    if kind == StudyKind.rank and design.params.has_covariates:
        raise ConfigError("RankValidation needs a design without covariates")
    if kind == StudyKind.rank and design.censor is not None:
        raise ConfigError("RankValidation needs an uncensored design (censor: null)")
    for cell in _cells(model):
        try:
            _design(model, cell, 0)
        except (BicureError, ValueError) as exc:
            raise ConfigError(f"cell n={cell['n']}, R={cell['R']}: {exc}") from exc


def run_study(model, workers=None, progress=None):
    """Run every replication of every cell and aggregate in a fixed order."""
    _check(model)
    spec_json = model.model_dump_json()
    cells = _cells(model)
    tasks = []
    for ci, cell in enumerate(cells):
        base = mix64(model.seed, ci)
        tasks += [(spec_json, cell, k, replicate_seeds(base, k)) for k in range(model.replications)]
    workers = worker_count(len(tasks)) if workers is None else max(1, min(workers, len(tasks)))
    if workers == 1:
        results = []
        for t in tasks:
            results.append(_replicate(t))
            if progress:
                progress(len(results), len(tasks))
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_replicate, tasks, chunksize=max(1, len(tasks) // (8 * workers))))
    out_cells, failed, timing = [], 0, {}
    for ci, cell in enumerate(cells):
        res = results[ci * model.replications:(ci + 1) * model.replications]
        ok = [r for r in res if r["ok"]]
        bad = [r for r in res if not r["ok"]]
        failed += len(bad)
        base = mix64(model.seed, ci)
        design = _design(model, cell, base)
        entry = {"n": cell["n"], "R": design.params.regime.value if cell["R"] is not None else None,
                 "cell_seed": base, "replications": len(res), "failed": len(bad),
                 "failures": [{"k": r["k"], "seed": r["seed"], "error": r["error"]} for r in bad]}
        entry.update(_AGGREGATORS[model.study](model, design, ok))
        out_cells.append(entry)
        key = f"n={cell['n']},R={cell['R']}"
        timing[key] = {"seconds_total": sum(r["seconds"] for r in res)}
        if model.study == StudyKind.em and ok:
            timing[key].update(median_time_em=float(np.median([r["time_em"] for r in ok])),
                               median_time_direct=float(np.median([r["time_direct"] for r in ok])))
    total = len(tasks)
    unreliable = any(c["failed"] > FAILURE_LIMIT * c["replications"] for c in out_cells)
    return StudyReport(model.study.value, out_cells, total, failed, unreliable,
                       json.loads(spec_json), timing)

