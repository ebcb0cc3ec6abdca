"""Closed-form survival functions of the cure frailty-copula model.

With Weibull baselines S0j(t) = exp(-r_j t^a_j) the cumulative baseline
hazards are H_j = r_j t^a_j, and the both-uncured term of the joint survival
is a kernel K(H1, H2) = E_W[C_theta(exp(-W H1), exp(-W H2))]:

    independence  (1 + gamma (H1 + H2))^(-1/gamma)
    gumbel        A^(-1/gamma),  A = 1 + gamma (H1^(theta+1) + H2^(theta+1))^(1/(theta+1))
    fgm           four-term combination of (1 + gamma s)^(-1/gamma)

The ``log_kernel*`` helpers return logs of K and of its (signed) partial
derivatives in H; they broadcast, so a leading batch axis of parameter
vectors can be evaluated in one pass.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .copulas import FGM_TERMS, fgm_weights
from .cure import CureMargins, CureRegression, OddsRatioRegime, solve_cells, subject_cells
from .errors import ParameterDomainError
from .numerics import log_laplace, stable_log1p_pow

__all__ = [
    "WeibullMargin",
    "FrailtySpec",
    "ModelParams",
    "MODEL_COPULAS",
    "marginal_survival_uncured",
    "marginal_survival_population",
    "joint_survival",
    "gumbel_A",
    "log_kernel",
    "log_kernel_d1",
    "log_kernel_d2",
    "log_kernel_d12",
]

MODEL_COPULAS = ("independence", "gumbel", "fgm")


@dataclass(frozen=True)
class WeibullMargin:
    a: float
    r: float

    def __post_init__(self):
        if not (self.a > 0 and self.r > 0):
            raise ParameterDomainError(f"Weibull shape and rate must be positive, got a={self.a}, r={self.r}")

    def cumhaz(self, t):
        return self.r * np.asarray(t, dtype=float) ** self.a

    def hazard(self, t):
        t = np.asarray(t, dtype=float)
        return self.a * self.r * t ** (self.a - 1.0)

    def baseline_survival(self, t):
        return np.exp(-self.cumhaz(t))


@dataclass(frozen=True)
class FrailtySpec:
    gamma: float

    def __post_init__(self):
        if not self.gamma > 0:
            raise ParameterDomainError(f"frailty variance must be positive, got {self.gamma}")

    def laplace(self, s):
        return stable_log1p_pow(self.gamma, s)


def _normalize_copula(name):
    name = name.lower()
    name = {"indep": "independence"}.get(name, name)
    if name not in MODEL_COPULAS:
        raise ParameterDomainError(f"model copula must be one of {MODEL_COPULAS}, got {name!r}")
    return name


@dataclass(frozen=True)
class ModelParams:
    """Full parameter vector of the model.

    ``cure`` is either :class:`CureMargins` (no covariates) or
    :class:`CureRegression`.
    """

    copula: str
    theta: float
    frailty: FrailtySpec
    cure: object
    regime: OddsRatioRegime
    margin1: WeibullMargin
    margin2: WeibullMargin
    covariate_names: tuple = field(default=((), ()))

    def __post_init__(self):
        object.__setattr__(self, "copula", _normalize_copula(self.copula))
        th = float(self.theta)
        if self.copula == "gumbel" and th < 0:
            raise ParameterDomainError("gumbel theta must be >= 0")
        if self.copula == "fgm" and not -1 <= th <= 1:
            raise ParameterDomainError("fgm theta must lie in [-1, 1]")
        if self.copula == "independence":
            th = 0.0
        object.__setattr__(self, "theta", th)
        if not isinstance(self.cure, (CureMargins, CureRegression)):
            raise ParameterDomainError("cure must be CureMargins or CureRegression")

    @classmethod
    def build(cls, copula, theta=0.0, gamma=1.0, p1=None, p2=None, beta1=None, beta2=None,
              R=1.0, a1=1.0, r1=1.0, a2=1.0, r2=1.0, covariate_names=((), ())):
        regime = R if isinstance(R, OddsRatioRegime) else OddsRatioRegime.from_value(R)
        if beta1 is not None:
            shared = regime.regime == "inf"
            cure = CureRegression(beta1, beta2 if beta2 is not None else beta1, shared=shared)
        else:
            cure = CureMargins(p1, p2)
        return cls(copula, theta, FrailtySpec(gamma), cure, regime, WeibullMargin(a1, r1),
                   WeibullMargin(a2, r2), covariate_names)

    @property
    def gamma(self):
        return self.frailty.gamma

    @property
    def has_covariates(self):
        return isinstance(self.cure, CureRegression)

    def cells(self, x1=(), x2=()):
        """Cure cells, subject-specific when the cure part has covariates."""
        if isinstance(self.cure, CureMargins):
            return solve_cells(self.cure, self.regime)
        return subject_cells(self.cure, x1, x2, self.regime)

    def cure_probabilities(self, x1=None, x2=None):
        """Vectorized p1(x1), p2(x2) over rows of covariate matrices."""
        if isinstance(self.cure, CureMargins):
            return self.cure.p1, self.cure.p2
        b1 = np.asarray(self.cure.beta1)
        b2 = np.asarray(self.cure.beta2)
        eta1 = b1[0] + (np.asarray(x1) @ b1[1:] if b1.size > 1 else 0.0)
        eta2 = b2[0] + (np.asarray(x2) @ b2[1:] if b2.size > 1 else 0.0)
        return expit(eta1), expit(eta2)


def marginal_survival_uncured(m, f, t):
    """(1 + gamma r t^a)^(-1/gamma)."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ParameterDomainError("times must be non-negative")
    return stable_log1p_pow(f.gamma, m.cumhaz(t))


def marginal_survival_population(p, m, f, t):
    return p + (1.0 - p) * marginal_survival_uncured(m, f, t)


def gumbel_A(params, t1, t2):
    """A = 1 + gamma {(r1 t1^a1)^(theta+1) + (r2 t2^a2)^(theta+1)}^(1/(theta+1))."""
    h1 = params.margin1.cumhaz(t1)
    h2 = params.margin2.cumhaz(t2)
    return 1.0 + params.gamma * _pnorm(h1, h2, params.theta + 1.0)


def _pnorm(a, b, delta):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    m = np.maximum(a, b)
    safe = np.where(m > 0, m, 1.0)
    out = safe * ((a / safe) ** delta + (b / safe) ** delta) ** (1.0 / delta)
    return np.where(m > 0, out, 0.0)


def _kernel(copula, theta, gamma, h1, h2):
    if copula == "independence":
        return stable_log1p_pow(gamma, h1 + h2)
    if copula == "gumbel":
        return stable_log1p_pow(gamma, _pnorm(h1, h2, theta + 1.0))
    return sum(w * stable_log1p_pow(gamma, a * h1 + b * h2) for w, (a, b) in zip(fgm_weights(theta), FGM_TERMS))


def joint_survival(params, cells, t1, t2):
    """S(t1, t2) = p11 + p01 S1(t1) + p10 S2(t2) + p00 K(H1, H2)."""
    t1 = np.asarray(t1, dtype=float)
    t2 = np.asarray(t2, dtype=float)
    if np.any(t1 < 0) or np.any(t2 < 0):
        raise ParameterDomainError("times must be non-negative")
    g = params.gamma
    h1 = params.margin1.cumhaz(t1)
    h2 = params.margin2.cumhaz(t2)
    out = (
        cells.p11
        + cells.p01 * stable_log1p_pow(g, h1)
        + cells.p10 * stable_log1p_pow(g, h2)
        + cells.p00 * _kernel(params.copula, params.theta, g, h1, h2)
    )
    return float(out) if np.ndim(out) == 0 else out


# Log-space kernels for the likelihood. H1, H2 > 0; theta, gamma broadcast.


def _gumbel_parts(theta, gamma, lh1, lh2):
    delta = theta + 1.0
    log_n = np.logaddexp(delta * lh1, delta * lh2) / delta
    n = np.exp(log_n)
    log_a = np.log1p(gamma * n)
    return log_n, n, log_a


def _fgm_sum(theta, gamma, h1, h2, order, coef):
    """log sum_k w_k coef_k (1+gamma s_k)^-(1/gamma+order), scaled by the s = H1+H2 term."""
    s0 = h1 + h2
    q0 = 1.0 + gamma * s0
    total = 0.0
    for w, c, (a, b) in zip(fgm_weights(theta), coef, FGM_TERMS):
        extra = (a - 1) * h1 + (b - 1) * h2
        ratio = log_laplace(gamma, extra / q0, order)
        total = total + w * c * np.exp(ratio)
    with np.errstate(divide="ignore", invalid="ignore"):
        return log_laplace(gamma, s0, order) + np.log(total)


_ONES = (1, 1, 1, 1)


def log_kernel(copula, theta, gamma, h1, h2):
    if copula == "independence":
        return log_laplace(gamma, h1 + h2)
    if copula == "gumbel":
        log_n, n, log_a = _gumbel_parts(theta, gamma, np.log(h1), np.log(h2))
        return log_laplace(gamma, n)
    return _fgm_sum(theta, gamma, h1, h2, 0.0, _ONES)


def log_kernel_d1(copula, theta, gamma, h1, h2):
    """log(-dK/dH1)."""
    if copula == "independence":
        return log_laplace(gamma, h1 + h2, 1.0)
    if copula == "gumbel":
        lh1 = np.log(h1)
        log_n, n, log_a = _gumbel_parts(theta, gamma, lh1, np.log(h2))
        return log_laplace(gamma, n, 1.0) + theta * (lh1 - log_n)
    return _fgm_sum(theta, gamma, h1, h2, 1.0, tuple(a for a, _ in FGM_TERMS))


def log_kernel_d2(copula, theta, gamma, h1, h2):
    """log(-dK/dH2)."""
    if copula == "independence":
        return log_laplace(gamma, h1 + h2, 1.0)
    if copula == "gumbel":
        lh2 = np.log(h2)
        log_n, n, log_a = _gumbel_parts(theta, gamma, np.log(h1), lh2)
        return log_laplace(gamma, n, 1.0) + theta * (lh2 - log_n)
    return _fgm_sum(theta, gamma, h1, h2, 1.0, tuple(b for _, b in FGM_TERMS))


def log_kernel_d12(copula, theta, gamma, h1, h2):
    """log(d2K/dH1dH2)."""
    if copula == "independence":
        return np.log1p(gamma) + log_laplace(gamma, h1 + h2, 2.0)
    if copula == "gumbel":
        lh1, lh2 = np.log(h1), np.log(h2)
        log_n, n, log_a = _gumbel_parts(theta, gamma, lh1, lh2)
        return (
            theta * (lh1 + lh2 - 2.0 * log_n)
            + log_laplace(gamma, n, 2.0)
            + np.log((1.0 + gamma) + theta * (gamma + 1.0 / n))
        )
    return np.log1p(gamma) + _fgm_sum(theta, gamma, h1, h2, 2.0, tuple(a * b for a, b in FGM_TERMS))


def limit_no_frailty(params, cells, t1, t2):
    """gamma -> 0 form p11 + p01 S01 + p10 S02 + p00 C_theta(S01, S02)."""
    from .copulas import CopulaFamily, copula_cdf

    s1 = params.margin1.baseline_survival(t1)
    s2 = params.margin2.baseline_survival(t2)
    fam = CopulaFamily(params.copula, theta=params.theta)
    return cells.p11 + cells.p01 * s1 + cells.p10 * s2 + cells.p00 * copula_cdf(fam, s1, s2)


def is_finite_regime(params):
    return not math.isinf(params.regime.value)
