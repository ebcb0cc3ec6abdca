"""Observed-data log-likelihood.

Each row contributes one of four censoring-pattern terms:

    (0,0)  log S(t1, t2)
    (1,0)  log(-dS/dt1) = log h1 + log{p01 L1(H1) + p00 (-K1)}
    (0,1)  log(-dS/dt2) = log h2 + log{p10 L1(H2) + p00 (-K2)}
    (1,1)  log d2S/dt1dt2 = log h1 + log h2 + log p00 + log K12

with L1(s) = (1 + gamma s)^-(1/gamma + 1). Everything is evaluated in log
space with a leading batch axis over parameter vectors, so finite-difference
stencils cost one vectorized pass.
"""

import logging
from dataclasses import dataclass

import numpy as np

from .cure import p11_from_odds
from .errors import GradientUndefinedError, ShapeError
from .numerics import fd_gradient, log_expit, log_laplace
from .survival import log_kernel, log_kernel_d1, log_kernel_d2, log_kernel_d12
from .transforms import ParamLayout

__all__ = [
    "loglik",
    "loglik_batch",
    "loglik_rows",
    "loglik_gradient",
    "pattern_terms",
    "PatternTerms",
    "log_cells_batch",
]

log = logging.getLogger(__name__)


def _log(x):
    with np.errstate(divide="ignore"):
        return np.log(x)


def _eta(beta, x):
    """beta (m, 1+q), x (n, q) -> (m, n)."""
    if beta.shape[1] == 1:
        return np.broadcast_to(beta[:, :1], (beta.shape[0], x.shape[0]))
    return beta[:, :1] + beta[:, 1:] @ x.T


def log_cells_batch(layout, vals, x1=None, x2=None):
    """log(p11, p10, p01, p00), each of shape (m, n) or (m, 1) without covariates."""
    if layout.covariates:
        c1, c2 = layout.cov_cols
        if layout.shared:
            eta = _eta(layout.coefficient_block(vals, 1), x1[:, list(c1)])
            return log_expit(eta), np.full(eta.shape, -np.inf), np.full(eta.shape, -np.inf), log_expit(-eta)
        eta1 = _eta(layout.coefficient_block(vals, 1), x1[:, list(c1)])
        eta2 = _eta(layout.coefficient_block(vals, 2), x2[:, list(c2)])
    else:
        if layout.shared:
            lp = _log(vals["p"])[:, None]
            lq = _log(-np.expm1(lp))
            return lp, np.full(lp.shape, -np.inf), np.full(lp.shape, -np.inf), lq
        p1, p2 = vals["p1"][:, None], vals["p2"][:, None]
        eta1 = np.log(p1) - np.log1p(-p1)
        eta2 = np.log(p2) - np.log1p(-p2)
    # log(1 - expit(x)) = log expit(x) - x
    lp1, lp2 = log_expit(eta1), log_expit(eta2)
    lq1, lq2 = lp1 - eta1, lp2 - eta2
    if layout.regime == "eq1":
        return lp1 + lp2, lp1 + lq2, lq1 + lp2, lq1 + lq2
    p1, p2 = np.exp(lp1), np.exp(lp2)
    r = vals["R"][:, None]
    p11 = p11_from_odds(p1, p2, r, strict=False)
    p11 = np.minimum(np.maximum(p11, np.maximum(p1 + p2 - 1.0, 0.0)), np.minimum(p1, p2))
    p10 = np.maximum(p1 - p11, 0.0)
    p01 = np.maximum(p2 - p11, 0.0)
    # 1 - p1 - p2 + p11 = q1 - p01 loses less precision than the raw sum
    p00 = np.maximum(np.exp(lq1) - p01, 0.0)
    return _log(p11), _log(p10), _log(p01), _log(p00)


def _pattern_value(copula, th, g, a1, r1, a2, r2, cells, lt1, lt2, pattern):
    """log contribution of rows sharing one censoring pattern. All args broadcast to (m, rows)."""
    l11, l10, l01, l00 = cells
    lh1 = np.log(r1) + a1 * lt1
    lh2 = np.log(r2) + a2 * lt2
    h1, h2 = np.exp(lh1), np.exp(lh2)
    if pattern == (0, 0):
        terms = (l11, l01 + log_laplace(g, h1), l10 + log_laplace(g, h2), l00 + log_kernel(copula, th, g, h1, h2))
        return np.logaddexp(np.logaddexp(terms[0], terms[1]), np.logaddexp(terms[2], terms[3]))
    if pattern == (1, 0):
        haz = np.log(a1) + lh1 - lt1
        return haz + np.logaddexp(l01 + log_laplace(g, h1, 1.0), l00 + log_kernel_d1(copula, th, g, h1, h2))
    if pattern == (0, 1):
        haz = np.log(a2) + lh2 - lt2
        return haz + np.logaddexp(l10 + log_laplace(g, h2, 1.0), l00 + log_kernel_d2(copula, th, g, h1, h2))
    haz = np.log(a1) + lh1 - lt1 + np.log(a2) + lh2 - lt2
    return haz + l00 + log_kernel_d12(copula, th, g, h1, h2)


def _col(v):
    return v[:, None]


def _row_values(layout, Z, data):
    """(m, n) matrix of per-row log contributions."""
    vals = layout.split(Z)
    th = _col(vals["theta"]) if "theta" in vals else 0.0
    g = _col(vals["gamma"])
    a1, r1, a2, r2 = (_col(vals[k]) for k in ("a1", "r1", "a2", "r2"))
    cells = log_cells_batch(layout, vals, data.x1, data.x2)
    out = np.empty((Z.shape[0], data.n))
    lt1_all, lt2_all = np.log(data.t1), np.log(data.t2)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        for pattern in ((0, 0), (1, 0), (0, 1), (1, 1)):
            idx = data.pattern_index(pattern)
            if idx.size == 0:
                continue
            cs = tuple(c[:, idx] if c.shape[1] > 1 else c for c in cells)
            out[:, idx] = _pattern_value(layout.copula, th, g, a1, r1, a2, r2, cs, lt1_all[idx], lt2_all[idx], pattern)
    return out


def loglik_batch(layout, Z, data):
    """Log-likelihood at each row of ``Z`` (unconstrained scale). Non-finite values become -inf."""
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    vals = _row_values(layout, Z, data)
    total = vals.sum(axis=1)
    return np.where(np.isfinite(total), total, -np.inf)


def _layout_for(params, data):
    cov = params.has_covariates
    layout = ParamLayout.for_data(params.copula, params.regime.regime, data, covariates=cov)
    if cov:
        q1, q2 = len(params.cure.beta1) - 1, len(params.cure.beta2) - 1
        if layout.shared:
            if q1 != len(layout.cov_cols[0]):
                raise ShapeError(f"{q1} shared slopes for {len(layout.cov_cols[0])} margin-invariant covariates")
        elif (q1, q2) != (data.x1.shape[1], data.x2.shape[1]):
            raise ShapeError("coefficient lengths do not match the dataset covariates")
    return layout


def loglik(params, data):
    """Observed-data log-likelihood; -inf (with a logged diagnostic) if any term is non-finite."""
    layout = _layout_for(params, data)
    z = layout.from_params(params)
    value = float(loglik_batch(layout, z[None, :], data)[0])
    if not np.isfinite(value):
        log.debug("non-finite log-likelihood at %s", params)
    return value


def loglik_rows(params, data):
    layout = _layout_for(params, data)
    return _row_values(layout, layout.from_params(params)[None, :], data)[0]


def loglik_gradient(params, data, layout=None, z=None):
    """Central-difference gradient on the unconstrained scale (step 1e-6 max(1, |z|))."""
    if layout is None:
        layout = _layout_for(params, data)
        z = layout.from_params(params)

    def fbatch(pts):
        vals = loglik_batch(layout, pts, data)
        if not np.all(np.isfinite(vals)):
            raise GradientUndefinedError("log-likelihood is -inf next to the evaluation point")
        return vals

    return fd_gradient(fbatch, z, rel=1e-6)


@dataclass(frozen=True)
class PatternTerms:
    """Per-row logs of S, -dS/dt1, -dS/dt2 and d2S/dt1dt2, plus model intermediates.

    ``extras`` holds the A/B terms for Gumbel, B terms for independence
    and q/D/E terms for FGM, named as in the likelihood expansions.
    """

    log_S: np.ndarray
    log_f1: np.ndarray
    log_f2: np.ndarray
    log_f12: np.ndarray
    extras: dict


def pattern_terms(params, t1, t2, x1=None, x2=None):
    """All four pattern terms at arbitrary positive times (rows broadcast)."""
    from .data import BivariateDataset

    t1 = np.atleast_1d(np.asarray(t1, dtype=float))
    t2 = np.atleast_1d(np.asarray(t2, dtype=float))
    t1, t2 = np.broadcast_arrays(t1, t2)
    n = t1.size
    out = {}
    for pattern, key in (((0, 0), "log_S"), ((1, 0), "log_f1"), ((0, 1), "log_f2"), ((1, 1), "log_f12")):
        d1 = np.full(n, pattern[0])
        d2 = np.full(n, pattern[1])
        if params.has_covariates:
            if x1 is None or x2 is None:
                raise ShapeError("covariate model needs x1 and x2")
            ds = BivariateDataset(t1.ravel(), t2.ravel(), d1, d2, x1, x2, params.covariate_names)
        else:
            ds = BivariateDataset(t1.ravel(), t2.ravel(), d1, d2)
        out[key] = loglik_rows(params, ds)
    return PatternTerms(extras=_extras(params, t1.ravel(), t2.ravel(), x1, x2), **out)


def _extras(params, t1, t2, x1, x2):
    g, th = params.gamma, params.theta
    h1, h2 = params.margin1.cumhaz(t1), params.margin2.cumhaz(t2)
    if params.has_covariates:
        layout = _layout_for(params, _probe(t1, t2, x1, x2, params))
        vals = layout.split(layout.from_params(params)[None, :])
        cells = [np.exp(c[0]) for c in log_cells_batch(layout, vals, np.atleast_2d(x1), np.atleast_2d(x2))]
    else:
        c = params.cells()
        cells = [np.full(t1.shape, v) for v in c.as_tuple()]
    p11, p10, p01, p00 = cells
    L1 = lambda s: np.exp(log_laplace(g, s, 1.0))  # noqa: E731
    if params.copula == "independence":
        k1 = np.exp(log_laplace(g, h1 + h2, 1.0))
        return {"B1": p01 * L1(h1) + p00 * k1, "B2": p10 * L1(h2) + p00 * k1}
    if params.copula == "gumbel":
        d = th + 1.0
        n_ = (h1**d + h2**d) ** (1.0 / d)
        A = 1.0 + g * n_
        e = -(1.0 / g + 1.0)
        B1 = np.log(p01 * (1 + g * h1) ** e + p00 * g**th * h1**th * A**e * (A - 1.0) ** (-th))
        B2 = np.log(p10 * (1 + g * h2) ** e + p00 * g**th * h2**th * A**e * (A - 1.0) ** (-th))
        return {"A": A, "B1": B1, "B2": B2}
    q1, q2 = 1.0 + g * h1, 1.0 + g * h2
    e1, e2 = -(1.0 / g + 1.0), -(1.0 / g + 2.0)
    D1 = p01 * q1**e1 + p00 * ((1 + th) * (q1 + q2 - 1) ** e1 - 2 * th * (2 * q1 + q2 - 2) ** e1
                              - th * (q1 + 2 * q2 - 2) ** e1 + 2 * th * (2 * q1 + 2 * q2 - 3) ** e1)
    D2 = p10 * q2**e1 + p00 * ((1 + th) * (q1 + q2 - 1) ** e1 - th * (2 * q1 + q2 - 2) ** e1
                              - 2 * th * (q1 + 2 * q2 - 2) ** e1 + 2 * th * (2 * q1 + 2 * q2 - 3) ** e1)
    E = (1 + g) * ((1 + th) * (q1 + q2 - 1) ** e2 - 2 * th * (2 * q1 + q2 - 2) ** e2
                   - 2 * th * (q1 + 2 * q2 - 2) ** e2 + 4 * th * (2 * q1 + 2 * q2 - 3) ** e2)
    return {"q1": q1, "q2": q2, "D1": D1, "D2": D2, "E": E}


def _probe(t1, t2, x1, x2, params):
    from .data import BivariateDataset

    n = t1.size
    return BivariateDataset(t1, t2, np.zeros(n, int), np.zeros(n, int), x1, x2, params.covariate_names)
