"""Maximum likelihood across odds-ratio regimes, Wald intervals and the LRT for R = 1."""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, stats
from scipy.special import logit

from .errors import GradientUndefinedError, NonConvergenceError, ParameterDomainError
from .likelihood import log_cells_batch, loglik_batch
from .numerics import fd_gradient, fd_hessian
from .transforms import ParamLayout, forward, inverse, inverse_derivative

__all__ = [
    "FitConfig",
    "FitReport",
    "LrtResult",
    "REGIME_ORDER",
    "fit_regime",
    "fit_all_regimes",
    "wald_ci",
    "lrt_r_equals_one",
    "initial_values",
]

REGIME_ORDER = ("eq1", "lt1", "gt1", "inf")
# a transformed coordinate this far out means the estimate has run onto an edge of its range
BOUNDARY_Z = 12.0


@dataclass(frozen=True)
class FitConfig:
    starts: int = 8
    max_iter: int = 500
    grad_tol: float = 1e-6
    perturb_scale: float = 0.3
    seed: int = 0
    # a start counts as converged when the final max-norm gradient is below this
    stationarity_tol: float = 1e-3
    compute_se: bool = True
    level: float = 0.95

    def __post_init__(self):
        if self.starts < 1:
            raise ParameterDomainError("starts must be at least 1")
        if not (self.grad_tol > 0 and self.stationarity_tol > 0 and self.max_iter > 0):
            raise ParameterDomainError("tolerances and max_iter must be positive")
        if not 0 < self.level < 1:
            raise ParameterDomainError("level must lie in (0, 1)")


@dataclass
class FitReport:
    copula: str
    regime: str
    layout: ParamLayout
    z: np.ndarray
    estimates: object
    loglik_max: float
    n: int
    converged: bool
    grad_max: float
    se: dict = field(default_factory=dict)
    se_transformed: dict = field(default_factory=dict)
    ci: dict = field(default_factory=dict)
    cure_fractions: tuple = ()
    hessian_min_eig: float = math.nan
    flags: list = field(default_factory=list)
    diagnostics: list = field(default_factory=list)
    regime_table: dict = field(default_factory=dict)
    iterations: int = 0

    @property
    def n_params(self):
        return self.layout.size

    @property
    def aic(self):
        return -2.0 * self.loglik_max + 2.0 * self.n_params

    @property
    def bic(self):
        return -2.0 * self.loglik_max + self.n_params * math.log(self.n)

    @property
    def natural(self):
        return dict(zip(self.layout.names, self.layout.natural(self.z)))

    def summary_row(self):
        return {"loglik": self.loglik_max, "aic": self.aic, "bic": self.bic, "n_params": self.n_params,
                "converged": self.converged}

    def to_dict(self):
        nat = self.natural
        params = []
        for name in self.layout.names:
            se = self.se.get(name, math.nan)
            lo, hi = self.ci.get(name, (math.nan, math.nan))
            params.append({"name": name, "estimate": nat[name], "se": _num(se), "ci_low": _num(lo), "ci_high": _num(hi)})
        return {
            "copula": self.copula,
            "regime": self.regime,
            "n": self.n,
            "loglik": self.loglik_max,
            "aic": self.aic,
            "bic": self.bic,
            "n_params": self.n_params,
            "converged": self.converged,
            "grad_max": self.grad_max,
            "parameters": params,
            "cure_fractions": list(self.cure_fractions),
            "flags": list(self.flags),
            "regime_table": {k: {kk: _num(vv) if isinstance(vv, float) else vv for kk, vv in v.items()}
                             for k, v in self.regime_table.items()},
        }


def _num(x):
    x = float(x)
    return x if math.isfinite(x) else None


@dataclass(frozen=True)
class LrtResult:
    statistic: float
    p_value: float
    reject: bool
    alpha: float
    restricted: FitReport
    unrestricted: FitReport


def wald_ci(estimate, se_transformed, transform, level=0.95):
    """Interval built on the transformed scale and mapped back."""
    q = stats.norm.ppf(0.5 + level / 2.0)
    z = float(forward(transform, estimate))
    lo = float(inverse(transform, z - q * se_transformed))
    hi = float(inverse(transform, z + q * se_transformed))
    return (lo, hi) if lo <= hi else (hi, lo)


def _plateau(t, d):
    ev = t[d == 1]
    if ev.size == 0:
        return 0.5
    q90 = np.quantile(ev, 0.9)
    return float(np.clip(np.mean((d == 0) & (t > q90)), 0.05, 0.95))


def initial_values(layout, data):
    """Heuristic start on the natural scale, in layout order."""
    v = {"gamma": 0.5, "a1": 1.0, "a2": 1.0, "theta": 0.1, "R": {"lt1": 0.5, "gt1": 2.0}.get(layout.regime)}
    for j, (t, d) in enumerate(((data.t1, data.d1), (data.t2, data.d2)), start=1):
        v[f"r{j}"] = max(d.sum(), 1) / t.sum()
    p1, p2 = _plateau(data.t1, data.d1), _plateau(data.t2, data.d2)
    v.update(p1=p1, p2=p2, p=0.5 * (p1 + p2))
    v.update(beta1_0=float(logit(p1)), beta2_0=float(logit(p2)), beta_0=float(logit(0.5 * (p1 + p2))))
    return np.array([v.get(name, 0.0) for name in layout.names])


def _start_points(layout, data, config, extra_starts=()):
    z0 = layout.unconstrained(initial_values(layout, data))
    rng = np.random.default_rng(config.seed)
    pts = [np.asarray(z, dtype=float) for z in extra_starts] + [z0]
    while len(pts) < config.starts + len(extra_starts):
        pts.append(z0 + rng.uniform(-config.perturb_scale, config.perturb_scale, z0.size))
    return pts


class _Objective:
    """Negative log-likelihood and its FD gradient from one batched evaluation."""

    def __init__(self, layout, data):
        self.layout = layout
        self.data = data
        self.evals = 0

    def batch(self, pts):
        self.evals += len(pts)
        return loglik_batch(self.layout, pts, self.data)

    def __call__(self, z):
        k = z.size
        h = 1e-6 * np.maximum(1.0, np.abs(z))
        pts = np.vstack([z[None, :], z + np.diag(h), z - np.diag(h)])
        vals = self.batch(pts)
        f = vals[0]
        if not np.isfinite(f):
            return np.inf, np.zeros(k)
        if not np.all(np.isfinite(vals)):
            # one-sided near an infeasible edge
            g = np.where(np.isfinite(vals[1:k + 1]), (vals[1:k + 1] - f) / h, (f - vals[k + 1:]) / h)
            g = np.nan_to_num(g, nan=0.0, posinf=0.0, neginf=0.0)
        else:
            g = (vals[1:k + 1] - vals[k + 1:]) / (2.0 * h)
        return -f, -g


def _optimize_from(obj, z0, config):
    res = optimize.minimize(obj, z0, jac=True, method="BFGS",
                            options={"gtol": config.grad_tol, "maxiter": config.max_iter})
    z = res.x
    ll = -res.fun if np.isfinite(res.fun) else -np.inf
    try:
        g = fd_gradient(lambda p: _finite_or_raise(obj.batch(p)), z)
        gmax = float(np.max(np.abs(g)))
    except GradientUndefinedError:
        gmax = math.inf
    return {"z": z, "loglik": float(ll), "grad_max": gmax, "iterations": int(res.nit),
            "message": str(res.message), "converged": bool(np.isfinite(ll) and gmax < config.stationarity_tol)}


def _finite_or_raise(vals):
    if not np.all(np.isfinite(vals)):
        raise GradientUndefinedError("non-finite log-likelihood in gradient stencil")
    return vals


def fit_regime(copula, regime, data, config=None, covariates=None, extra_starts=()):
    """Multi-start BFGS fit of one regime; the best converged start wins."""
    config = config or FitConfig()
    layout = ParamLayout.for_data(copula, regime, data, covariates=covariates)
    obj = _Objective(layout, data)
    runs = []
    for k, z0 in enumerate(_start_points(layout, data, config, extra_starts)):
        if not np.isfinite(obj.batch(z0[None, :])[0]):
            runs.append({"start": k, "converged": False, "loglik": -math.inf, "message": "infeasible start"})
            continue
        out = _optimize_from(obj, z0, config)
        out["start"] = k
        runs.append(out)
    good = [r for r in runs if r["converged"]]
    diag = [{k: v for k, v in r.items() if k != "z"} for r in runs]
    if not good:
        raise NonConvergenceError(f"no start converged for {copula}/{regime}", diag)
    best = max(good, key=lambda r: r["loglik"])
    report = FitReport(
        copula=layout.copula, regime=regime, layout=layout, z=best["z"], estimates=layout.to_params(best["z"]),
        loglik_max=best["loglik"], n=data.n, converged=True, grad_max=best["grad_max"], diagnostics=diag,
        iterations=best["iterations"],
    )
    report.cure_fractions = _mean_cure_fractions(layout, best["z"], data)
    if config.compute_se:
        _attach_se(report, obj, config)
    _flag_flat(report, obj)
    if any(k != "identity" and abs(zi) > BOUNDARY_Z for k, zi in zip(layout.kinds, report.z)):
        report.flags.append("boundary")
    return report


def _mean_cure_fractions(layout, z, data):
    vals = layout.split(z[None, :])
    l11, l10, l01, _ = log_cells_batch(layout, vals, data.x1, data.x2)
    p1 = np.exp(np.logaddexp(l11, l10)).mean()
    p2 = np.exp(np.logaddexp(l11, l01)).mean()
    return float(p1), float(p2)


def _attach_se(report, obj, config):
    layout, z = report.layout, report.z
    try:
        hess = fd_hessian(lambda p: _finite_or_raise(obj.batch(p)), z, rel=1e-4)
    except GradientUndefinedError:
        report.flags.append("hessian_undefined")
        return
    info = -hess
    eig = np.linalg.eigvalsh(info)
    report.hessian_min_eig = float(eig.min())
    if eig.min() <= 0 or not np.all(np.isfinite(eig)):
        report.flags.append("se_unavailable")
        tol = -1e-4 * abs(np.trace(info)) / z.size
        if eig.min() < tol:
            report.flags.append("not_psd")
        return
    vecs = np.linalg.eigh(info)[1]
    var = (vecs**2 / eig).sum(axis=1)
    nat = layout.natural(z)
    if not np.all(np.isfinite(var)) or eig.min() < 1e-12 * eig.max():
        # numerically singular: the optimum sits on an edge of the transformed space
        report.flags.append("se_unavailable")
        return
    se_z = np.sqrt(var)
    for name, kind, zi, s, est in zip(layout.names, layout.kinds, z, se_z, nat):
        report.se_transformed[name] = float(s)
        report.se[name] = float(abs(inverse_derivative(kind, zi)) * s)
        report.ci[name] = wald_ci(est, s, kind, config.level)


def _flag_flat(report, obj):
    z = report.z
    h = 1e-2 * np.maximum(1.0, np.abs(z))
    pts = np.vstack([z + np.diag(h), z - np.diag(h)])
    vals = obj.batch(pts)
    if np.all(np.isfinite(vals)) and np.max(np.abs(vals - report.loglik_max)) < 1e-8:
        report.flags.append("flat_likelihood")


def _warm_starts(eq1, regime, data):
    """Map an R=1 optimum into nearby points of another regime."""
    src = eq1.layout
    dst = ParamLayout.for_data(src.copula, regime, data, covariates=src.covariates)
    nat = dict(zip(src.names, src.natural(eq1.z)))
    if regime in ("lt1", "gt1"):
        out = []
        for r in ((0.9,) if regime == "lt1" else (1.1,)):
            vals = dict(nat, R=r)
            out.append(dst.unconstrained([vals[n] for n in dst.names]))
        return out
    if dst.covariates:
        vals = dict(nat)
        vals["beta_0"] = 0.5 * (nat["beta1_0"] + nat["beta2_0"])
        for c in dst.cov_names[0]:
            vals[f"beta_{c}"] = 0.5 * (nat.get(f"beta1_{c}", 0.0) + nat.get(f"beta2_{c}", 0.0))
    else:
        vals = dict(nat, p=0.5 * (nat["p1"] + nat["p2"]))
    return [dst.unconstrained([vals[n] for n in dst.names])]


def fit_all_regimes(copula, data, config=None, covariates=None, regimes=REGIME_ORDER):
    """Fit every regime and return the best by log-likelihood, with the full table."""
    config = config or FitConfig()
    fits, failures = {}, {}
    eq1 = None
    for regime in regimes:
        extra = _warm_starts(eq1, regime, data) if eq1 is not None and regime != "eq1" else ()
        try:
            fits[regime] = fit_regime(copula, regime, data, config, covariates, extra)
        except NonConvergenceError as exc:
            failures[regime] = exc.diagnostics
            continue
        if regime == "eq1":
            eq1 = fits[regime]
    if not fits:
        raise NonConvergenceError(f"no regime converged for {copula}", failures)
    best = None
    for regime in regimes:
        if regime in fits and (best is None or fits[regime].loglik_max > best.loglik_max):
            best = fits[regime]
    table = {r: dict(fits[r].summary_row()) for r in fits}
    for r in failures:
        table[r] = {"loglik": math.nan, "aic": math.nan, "bic": math.nan, "n_params": None, "converged": False}
    for f in fits.values():
        f.regime_table = table
    best.regime_table = table
    best.fits = fits
    return best


def lrt_r_equals_one(copula, data, config=None, alpha=0.05, covariates=None):
    """lambda = 2 {max over all regimes - max under R=1}, referred to chi-square(1)."""
    best = fit_all_regimes(copula, data, config, covariates)
    fits = best.fits
    if "eq1" not in fits:
        raise NonConvergenceError("the R=1 fit did not converge", [])
    restricted = fits["eq1"]
    lam = max(0.0, 2.0 * (best.loglik_max - restricted.loglik_max))
    p = float(stats.chi2.sf(lam, 1))
    return LrtResult(lam, p, bool(lam > stats.chi2.ppf(1.0 - alpha, 1)), alpha, restricted, best)
