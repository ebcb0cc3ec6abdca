"""Bivariate copulas used by the cure frailty-copula model.

The Gumbel family is parameterized so that ``theta = 0`` is the product
copula: C(u, v) = exp(-{(-log u)^(theta+1) + (-log v)^(theta+1)}^(1/(theta+1))).
Clayton, BB1 and the generalized FGM family are the copulas induced by
mixing the independence, Gumbel and FGM copulas over a gamma frailty with
variance ``gamma``.
"""

from dataclasses import dataclass

import numpy as np

from .errors import BoundaryError, ParameterDomainError, UnsupportedOperationError

__all__ = [
    "CopulaFamily",
    "copula_cdf",
    "copula_partials",
    "sample_copula",
    "induced_family",
    "induced_copula_cstar",
    "sample_positive_stable",
]

KINDS = ("independence", "gumbel", "fgm", "clayton", "bb1", "genfgm")

# (s-coefficient on margin 1, on margin 2, weight multiplier) of the four
# gamma-Laplace terms making up the FGM mixture; weights are (1+theta, -theta, -theta, theta)
FGM_TERMS = ((1, 1), (2, 1), (1, 2), (2, 2))


def fgm_weights(theta):
    return (1.0 + theta, -theta, -theta, theta)


@dataclass(frozen=True)
class CopulaFamily:
    kind: str
    theta: float = 0.0
    gamma: float = 1.0

    def __post_init__(self):
        kind = self.kind.lower()
        aliases = {"indep": "independence", "product": "independence", "gen_fgm": "genfgm"}
        kind = aliases.get(kind, kind)
        if kind not in KINDS:
            raise ParameterDomainError(f"unknown copula kind {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        th, g = float(self.theta), float(self.gamma)
        if not (np.isfinite(th) and np.isfinite(g)):
            raise ParameterDomainError("copula parameters must be finite")
        if kind in ("gumbel", "bb1") and th < 0:
            raise ParameterDomainError(f"{kind} requires theta >= 0, got {th}")
        if kind in ("fgm", "genfgm") and not -1.0 <= th <= 1.0:
            raise ParameterDomainError(f"{kind} requires theta in [-1, 1], got {th}")
        if kind in ("clayton", "bb1", "genfgm") and g <= 0:
            raise ParameterDomainError(f"{kind} requires gamma > 0, got {g}")


def _check_unit(*arrays):
    for a in arrays:
        if np.any((a < 0) | (a > 1)) or np.any(np.isnan(a)):
            raise ParameterDomainError("copula arguments must lie in [0, 1]")


def _minus_log(u):
    with np.errstate(divide="ignore"):
        return -np.log(u)


def _xpow(u, gamma):
    """u^(-gamma) - 1 without cancellation; +inf at u = 0."""
    with np.errstate(divide="ignore", over="ignore"):
        return np.expm1(-gamma * np.log(u))


def _pnorm(a, b, delta):
    """(a^delta + b^delta)^(1/delta) with scaling against overflow."""
    m = np.maximum(a, b)
    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        ra = np.where(m > 0, a / m, 0.0)
        rb = np.where(m > 0, b / m, 0.0)
        out = m * (ra**delta + rb**delta) ** (1.0 / delta)
    out = np.where(np.isinf(m), np.inf, out)
    return np.where(m == 0, 0.0, out)


def _laplace(gamma, s):
    with np.errstate(over="ignore"):
        return np.exp(-np.log1p(s) / gamma)


def copula_cdf(fam, u, v):
    """Evaluate C(u, v) for the family; broadcasts over array arguments."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    _check_unit(u, v)
    k, th, g = fam.kind, fam.theta, fam.gamma
    if k == "independence" or (k == "gumbel" and th == 0.0):
        out = u * v
    elif k == "gumbel":
        out = np.exp(-_pnorm(_minus_log(u), _minus_log(v), th + 1.0))
    elif k == "fgm":
        out = u * v * (1.0 + th * (1.0 - u) * (1.0 - v))
    elif k == "clayton":
        out = _laplace(g, _xpow(u, g) + _xpow(v, g))
    elif k == "bb1":
        out = _laplace(g, _pnorm(_xpow(u, g), _xpow(v, g), th + 1.0))
    else:
        xu, xv = _xpow(u, g), _xpow(v, g)
        out = sum(w * _laplace(g, a * xu + b * xv) for w, (a, b) in zip(fgm_weights(th), FGM_TERMS))
        out = np.where((u == 0) | (v == 0), 0.0, out)
    out = np.clip(out, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def copula_partials(fam, u, v):
    """Analytic (dC/du, dC/dv, d2C/dudv) at interior points."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if np.any((u <= 0) | (u >= 1) | (v <= 0) | (v >= 1)):
        raise BoundaryError("copula_partials is defined on the open unit square only")
    k, th, g = fam.kind, fam.theta, fam.gamma
    if k == "independence" or (k == "gumbel" and th == 0.0):
        cu, cv, c = v * np.ones_like(u), u * np.ones_like(v), np.ones(np.broadcast(u, v).shape)
    elif k == "gumbel":
        a, b = -np.log(u), -np.log(v)
        m = _pnorm(a, b, th + 1.0)
        cdf = np.exp(-m)
        cu = cdf * (a / m) ** th / u
        cv = cdf * (b / m) ** th / v
        c = cdf * (a * b) ** th * m ** (-2.0 * th) * (1.0 + th / m) / (u * v)
    elif k == "fgm":
        cu = v * (1.0 + th * (1.0 - 2.0 * u) * (1.0 - v))
        cv = u * (1.0 + th * (1.0 - u) * (1.0 - 2.0 * v))
        c = 1.0 + th * (1.0 - 2.0 * u) * (1.0 - 2.0 * v)
    elif k == "clayton":
        s = _xpow(u, g) + _xpow(v, g)
        cu = u ** (-g - 1.0) * np.exp(-(1.0 / g + 1.0) * np.log1p(s))
        cv = v ** (-g - 1.0) * np.exp(-(1.0 / g + 1.0) * np.log1p(s))
        c = (1.0 + g) * (u * v) ** (-g - 1.0) * np.exp(-(1.0 / g + 2.0) * np.log1p(s))
    elif k == "bb1":
        xu, xv = _xpow(u, g), _xpow(v, g)
        n = _pnorm(xu, xv, th + 1.0)
        base1 = -(1.0 / g + 1.0) * np.log1p(n)
        cu = np.exp(base1 + th * np.log(xu / n) - (g + 1.0) * np.log(u))
        cv = np.exp(base1 + th * np.log(xv / n) - (g + 1.0) * np.log(v))
        log_c = (
            th * (np.log(xu) + np.log(xv))
            - 2.0 * th * np.log(n)
            - (1.0 / g + 2.0) * np.log1p(n)
            + np.log((1.0 + g) + th * g * (1.0 + n) / n)
            - (g + 1.0) * (np.log(u) + np.log(v))
        )
        c = np.exp(log_c)
    else:
        xu, xv = _xpow(u, g), _xpow(v, g)
        cu = cv = c = 0.0
        for w, (a, b) in zip(fgm_weights(th), FGM_TERMS):
            s = a * xu + b * xv
            l1 = np.exp(-(1.0 / g + 1.0) * np.log1p(s))
            l2 = np.exp(-(1.0 / g + 2.0) * np.log1p(s))
            cu = cu + w * a * l1
            cv = cv + w * b * l1
            c = c + w * a * b * l2
        cu = cu * u ** (-g - 1.0)
        cv = cv * v ** (-g - 1.0)
        c = (1.0 + g) * c * (u * v) ** (-g - 1.0)
    return cu, cv, c


def sample_positive_stable(rng, alpha, size):
    """Positive stable variates with Laplace transform exp(-s**alpha), 0 < alpha < 1.

    Chambers-Mallows-Stuck in Kanter's form.
    """
    theta = rng.uniform(0.0, np.pi, size)
    e = rng.standard_exponential(size)
    return (
        np.sin(alpha * theta)
        / np.sin(theta) ** (1.0 / alpha)
        * (np.sin((1.0 - alpha) * theta) / e) ** ((1.0 - alpha) / alpha)
    )


def sample_copula(fam, rng, n):
    """Draw ``n`` pairs from the copula; returns an array of shape (n, 2)."""
    if n < 1:
        raise ValueError("n must be at least 1")
    k, th = fam.kind, fam.theta
    if k == "independence" or (k == "gumbel" and th == 0.0):
        return rng.uniform(size=(n, 2))
    if k == "gumbel":
        alpha = 1.0 / (th + 1.0)
        s = sample_positive_stable(rng, alpha, n)
        e = rng.standard_exponential((n, 2))
        return np.exp(-((e / s[:, None]) ** alpha))
    if k == "fgm":
        u = rng.uniform(size=n)
        w = rng.uniform(size=n)
        a = th * (1.0 - 2.0 * u)
        # root in [0, 1] of v*(1 + a*(1 - v)) = w, rationalized
        v = 2.0 * w / ((1.0 + a) + np.sqrt((1.0 + a) ** 2 - 4.0 * a * w))
        return np.column_stack([u, v])
    raise UnsupportedOperationError(f"sampling is not implemented for the {k} copula")


_INDUCED = {"independence": "clayton", "gumbel": "bb1", "fgm": "genfgm"}


def induced_family(base, gamma):
    """The copula C*_{theta,gamma} of the uncured pair under gamma frailty."""
    if base.kind not in _INDUCED:
        raise ParameterDomainError(f"no induced copula for base {base.kind}")
    if not gamma > 0:
        raise ParameterDomainError(f"gamma must be positive, got {gamma}")
    return CopulaFamily(_INDUCED[base.kind], theta=base.theta, gamma=gamma)


def induced_copula_cstar(base, gamma, u, v):
    return copula_cdf(induced_family(base, gamma), u, v)
