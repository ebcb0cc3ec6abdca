"""EM estimation for the Gumbel model with R = 1 and no covariates.

The cure indicators (X1, X2) are the missing data. Given them, the rows
split into four cure configurations: both cured (likelihood 1), one margin
uncured (a univariate gamma-frailty term) or both uncured (the Gumbel kernel).
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .errors import NonConvergenceError, ParameterDomainError
from .estimation import FitConfig, FitReport, _attach_se, _Objective, fit_regime, initial_values
from .likelihood import loglik_batch
from .numerics import log_laplace
from .survival import ModelParams, log_kernel, log_kernel_d1, log_kernel_d2, log_kernel_d12
from .transforms import ParamLayout

__all__ = ["EStepExpectations", "EmConfig", "EmResult", "e_step", "q_function", "em_fit", "direct_fit",
           "posterior_entropy", "PSI_NAMES"]

PSI_NAMES = ("theta", "gamma", "p1", "p2", "a1", "r1", "a2", "r2")
_TIME_NAMES = ("theta", "gamma", "a1", "r1", "a2", "r2")
_THETA_FLOOR = 1e-10
LAYOUT = ParamLayout("gumbel", "eq1")


@dataclass(frozen=True)
class EStepExpectations:
    x1: np.ndarray
    x2: np.ndarray
    x12: np.ndarray

    def config_weights(self):
        """Posterior probabilities of (X1, X2) = (1,1), (1,0), (0,1), (0,0)."""
        w11 = self.x12
        w10 = self.x1 - self.x12
        w01 = self.x2 - self.x12
        return w11, w10, w01, 1.0 - self.x1 - self.x2 + self.x12


@dataclass(frozen=True)
class EmConfig:
    eps: float = 1e-5
    max_em_iter: int = 5000
    starts: int = 1
    seed: int = 0
    inner_gtol: float = 1e-8
    inner_max_iter: int = 200
    compute_se: bool = False

    def __post_init__(self):
        if not self.eps > 0:
            raise ParameterDomainError("eps must be positive")
        if self.max_em_iter < 1 or self.starts < 1:
            raise ParameterDomainError("max_em_iter and starts must be at least 1")


@dataclass
class EmResult:
    report: FitReport
    iterations: int
    trajectory: list = field(default_factory=list)
    ascent_violations: int = 0
    psi: dict = field(default_factory=dict)


def _check(params, data):
    if params.copula != "gumbel" or params.regime.regime != "eq1" or params.has_covariates:
        raise ParameterDomainError("EM is implemented for the Gumbel model with R=1 and no covariates")
    if data.has_covariates:
        raise ParameterDomainError("EM does not use covariates")


def _config_logs(th, g, a1, r1, a2, r2, data):
    """Per-row log time-likelihood under each uncured configuration, shape (m, n).

    Keys are (X1, X2); the both-cured configuration contributes log 1 = 0
    and only exists for doubly censored rows. Impossible configurations are -inf.
    """
    m = np.broadcast(th, g, a1).shape[0]
    lt1, lt2 = np.log(data.t1), np.log(data.t2)
    lh1 = np.log(r1) + a1 * lt1
    lh2 = np.log(r2) + a2 * lt2
    h1, h2 = np.exp(lh1), np.exp(lh2)
    lhaz1 = np.log(a1) + lh1 - lt1
    lhaz2 = np.log(a2) + lh2 - lt2
    d1 = data.d1.astype(bool)
    d2 = data.d2.astype(bool)
    full = lambda v: np.broadcast_to(v, (m, data.n))  # noqa: E731
    neg = np.full((m, data.n), -np.inf)
    out = {}
    out[(1, 1)] = np.where(~d1 & ~d2, 0.0, neg)
    # margin 2 uncured only: margin 1 must be censored
    l2 = np.where(d2, lhaz2 + log_laplace(g, h2, 1.0), log_laplace(g, h2))
    out[(1, 0)] = np.where(~d1, full(l2), neg)
    l1 = np.where(d1, lhaz1 + log_laplace(g, h1, 1.0), log_laplace(g, h1))
    out[(0, 1)] = np.where(~d2, full(l1), neg)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        k00 = np.empty((m, data.n))
        for pattern, fn in (((0, 0), log_kernel), ((1, 0), log_kernel_d1), ((0, 1), log_kernel_d2),
                            ((1, 1), log_kernel_d12)):
            idx = data.pattern_index(pattern)
            if idx.size == 0:
                continue
            val = fn("gumbel", th, g, h1[:, idx] if np.ndim(h1) == 2 else h1[idx],
                     h2[:, idx] if np.ndim(h2) == 2 else h2[idx])
            haz = 0.0
            if pattern[0]:
                haz = haz + (lhaz1[:, idx] if np.ndim(lhaz1) == 2 else lhaz1[idx])
            if pattern[1]:
                haz = haz + (lhaz2[:, idx] if np.ndim(lhaz2) == 2 else lhaz2[idx])
            k00[:, idx] = val + haz
    out[(0, 0)] = k00
    return out


def _psi_from_params(params):
    return {"theta": params.theta, "gamma": params.gamma, "p1": params.cure.p1, "p2": params.cure.p2,
            "a1": params.margin1.a, "r1": params.margin1.r, "a2": params.margin2.a, "r2": params.margin2.r}


def _params_from_psi(psi):
    return ModelParams.build("gumbel", psi["theta"], psi["gamma"], p1=psi["p1"], p2=psi["p2"], R=1.0,
                             a1=psi["a1"], r1=psi["r1"], a2=psi["a2"], r2=psi["r2"])


def _col(x):
    return np.atleast_1d(np.asarray(x, dtype=float))[:, None]


def _logs_at(psi, data):
    return {k: v[0] for k, v in _config_logs(*(_col(psi[n]) for n in _TIME_NAMES), data).items()}


def _log_prior(p1, p2):
    return {(1, 1): math.log(p1 * p2), (1, 0): math.log(p1 * (1 - p2)), (0, 1): math.log((1 - p1) * p2),
            (0, 0): math.log((1 - p1) * (1 - p2))}


_CONFIGS = ((1, 1), (1, 0), (0, 1), (0, 0))


def e_step(params, data):
    """Posterior means of X1, X2 and X1*X2 for every row."""
    _check(params, data)
    psi = _psi_from_params(params)
    logs = _logs_at(psi, data)
    prior = _log_prior(psi["p1"], psi["p2"])
    joint = np.vstack([prior[c] + logs[c] for c in _CONFIGS])
    norm = np.logaddexp.reduce(joint, axis=0)
    with np.errstate(invalid="ignore"):
        post = np.exp(joint - norm)
    post = np.nan_to_num(post, nan=0.0)
    w11, w10, w01, _ = post
    return EStepExpectations(x1=w11 + w10, x2=w11 + w01, x12=w11)


def _weighted(w, logv):
    return np.where(w > 0, w * np.where(np.isfinite(logv), logv, 0.0), 0.0)


def q_function(params, expectations, data):
    """Expected complete-data log-likelihood."""
    _check(params, data)
    psi = _psi_from_params(params)
    return _q_cure(psi["p1"], psi["p2"], expectations) + float(_q_time_batch(
        {n: np.array([psi[n]]) for n in _TIME_NAMES}, expectations, data)[0])


def _q_cure(p1, p2, e):
    return float(np.sum(e.x1 * math.log(p1) + (1 - e.x1) * math.log1p(-p1)
                        + e.x2 * math.log(p2) + (1 - e.x2) * math.log1p(-p2)))


def _q_time_batch(vals, e, data):
    logs = _config_logs(*(_col(vals[n]) for n in _TIME_NAMES), data)
    w = dict(zip(_CONFIGS, e.config_weights()))
    total = 0.0
    for c in ((1, 0), (0, 1), (0, 0)):
        lv = logs[c]
        bad = (w[c] > 0) & ~np.isfinite(lv)
        total = total + _weighted(w[c], lv).sum(axis=1) + np.where(bad.any(axis=1), -np.inf, 0.0)
    return total


def posterior_entropy(params, data):
    e = e_step(params, data)
    w = np.vstack(e.config_weights())
    with np.errstate(divide="ignore", invalid="ignore"):
        return float(-np.sum(np.where(w > 0, w * np.log(w), 0.0)))


def _m_step(psi, e, data, config):
    n = data.n
    new = dict(psi)
    new["p1"] = float(np.clip(e.x1.sum() / n, 1e-12, 1 - 1e-12))
    new["p2"] = float(np.clip(e.x2.sum() / n, 1e-12, 1 - 1e-12))
    # theta stays on its natural scale: under log(theta) the gradient vanishes at 0 and EM sticks there
    u0 = np.array([max(psi["theta"], _THETA_FLOOR)] + [math.log(max(psi[k], 1e-300)) for k in _TIME_NAMES[1:]])

    def fbatch(U):
        vals = {k: np.exp(U[:, i]) for i, k in enumerate(_TIME_NAMES) if i}
        vals["theta"] = U[:, 0]
        return _q_time_batch(vals, e, data)

    def fun(u):
        k = u.size
        h = 1e-6 * np.maximum(1.0, np.abs(u))
        up = u + np.diag(h)
        down = u - np.diag(h)
        fwd = down[0, 0] < _THETA_FLOOR
        if fwd:
            down[0, 0] = u[0]
        v = fbatch(np.vstack([u[None, :], up, down]))
        if not np.isfinite(v[0]):
            return np.inf, np.zeros(k)
        v = np.where(np.isfinite(v), v, v[0])
        width = 2.0 * h
        if fwd:
            width[0] = h[0]
        return -v[0], -(v[1:k + 1] - v[k + 1:]) / width

    q0 = fbatch(u0[None, :])[0]
    bounds = [(_THETA_FLOOR, None)] + [(None, None)] * (u0.size - 1)
    res = optimize.minimize(fun, u0, jac=True, method="L-BFGS-B", bounds=bounds,
                            options={"gtol": config.inner_gtol, "ftol": 1e-15, "maxiter": config.inner_max_iter})
    if np.isfinite(res.fun) and -res.fun > q0:
        new["theta"] = float(res.x[0])
        for i, k in enumerate(_TIME_NAMES):
            if i:
                new[k] = float(np.exp(res.x[i]))
    return new


def _observed(psi, data):
    z = LAYOUT.from_params(_params_from_psi(psi))
    return float(loglik_batch(LAYOUT, z[None, :], data)[0])


def _em_run(psi, data, config):
    ll = _observed(psi, data)
    traj = [ll]
    violations = 0
    for it in range(1, config.max_em_iter + 1):
        e = e_step(_params_from_psi(psi), data)
        new = _m_step(psi, e, data, config)
        step = math.sqrt(sum((new[k] - psi[k]) ** 2 for k in PSI_NAMES))
        ll_new = _observed(new, data)
        if ll_new < ll - 1e-8:
            violations += 1
        psi, ll = new, ll_new
        traj.append(ll)
        if step <= config.eps:
            return psi, it, traj, violations, True
    return psi, config.max_em_iter, traj, violations, False


def em_fit(data, config=None, start=None):
    """Run EM from the heuristic start (plus perturbed starts) and keep the best limit."""
    config = config or EmConfig()
    if data.has_covariates:
        raise ParameterDomainError("EM does not use covariates")
    if start is not None:
        starts = [_psi_from_params(start)]
    else:
        base = dict(zip(LAYOUT.names, initial_values(LAYOUT, data)))
        z0 = LAYOUT.unconstrained([base[k] for k in LAYOUT.names])
        rng = np.random.default_rng(config.seed)
        zs = [z0] + [z0 + rng.uniform(-0.3, 0.3, z0.size) for _ in range(config.starts - 1)]
        starts = [dict(zip(LAYOUT.names, LAYOUT.natural(z))) for z in zs]
    best = None
    runs = []
    for psi0 in starts:
        psi, it, traj, viol, ok = _em_run(dict(psi0), data, config)
        runs.append({"iterations": it, "loglik": traj[-1], "converged": ok, "ascent_violations": viol,
                     "trajectory": traj})
        if ok and (best is None or traj[-1] > best[2][-1]):
            best = (psi, it, traj, viol)
    if best is None:
        raise NonConvergenceError("EM did not converge from any start", runs)
    psi, it, traj, viol = best
    params = _params_from_psi(psi)
    z = LAYOUT.from_params(params)
    obj = _Objective(LAYOUT, data)
    report = FitReport(copula="gumbel", regime="eq1", layout=LAYOUT, z=z, estimates=params, loglik_max=traj[-1],
                       n=data.n, converged=True, grad_max=math.nan, diagnostics=runs, iterations=it)
    report.cure_fractions = (psi["p1"], psi["p2"])
    if config.compute_se:
        _attach_se(report, obj, FitConfig())
    return EmResult(report=report, iterations=it, trajectory=traj, ascent_violations=viol, psi=psi)


def direct_fit(data, config=None):
    """The direct-maximization counterpart used in EM comparisons."""
    return fit_regime("gumbel", "eq1", data, config or FitConfig(compute_se=False))
