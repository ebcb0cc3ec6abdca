"""Joint distribution of the two cure indicators.

The 2x2 table of (X1, X2) is parameterized by the marginal cure fractions
and the odds ratio R = p11*p00 / (p10*p01). Covariates enter the marginal
fractions through a logistic link.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, logit

from .errors import InconsistentMarginsError, NumericalDegeneracyError, ParameterDomainError, ShapeError

__all__ = [
    "CureMargins",
    "OddsRatioRegime",
    "CureCells",
    "CureRegression",
    "solve_cells",
    "p11_from_odds",
    "odds_ratio_of",
    "cure_fraction",
    "subject_cells",
    "odds_to_unconstrained",
    "odds_from_unconstrained",
]

REGIMES = ("eq1", "lt1", "gt1", "inf")


@dataclass(frozen=True)
class CureMargins:
    p1: float
    p2: float

    def __post_init__(self):
        for p in (self.p1, self.p2):
            if not 0.0 < p < 1.0:
                raise ParameterDomainError(f"cure fractions must lie in (0, 1), got {p}")


@dataclass(frozen=True)
class OddsRatioRegime:
    regime: str
    r_value: float | None = None

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise ParameterDomainError(f"unknown odds-ratio regime {self.regime!r}")
        r = self.r_value
        if self.regime in ("eq1", "inf"):
            if r is not None and not (r == 1.0 if self.regime == "eq1" else math.isinf(r)):
                raise ParameterDomainError(f"regime {self.regime} does not take R={r}")
        elif r is None:
            raise ParameterDomainError(f"regime {self.regime} needs a value for R")
        elif self.regime == "lt1" and not 0.0 < r < 1.0:
            raise ParameterDomainError(f"regime lt1 needs 0 < R < 1, got {r}")
        elif self.regime == "gt1" and not (1.0 < r < math.inf):
            raise ParameterDomainError(f"regime gt1 needs 1 < R < inf, got {r}")

    @classmethod
    def from_value(cls, r):
        r = float(r)
        if r == 1.0:
            return cls("eq1")
        if math.isinf(r) and r > 0:
            return cls("inf")
        if 0.0 < r < 1.0:
            return cls("lt1", r)
        if r > 1.0:
            return cls("gt1", r)
        raise ParameterDomainError(f"odds ratio must be positive, got {r}")

    @property
    def value(self):
        if self.regime == "eq1":
            return 1.0
        if self.regime == "inf":
            return math.inf
        return self.r_value


@dataclass(frozen=True)
class CureCells:
    p11: float
    p10: float
    p01: float
    p00: float

    @property
    def p1(self):
        return self.p11 + self.p10

    @property
    def p2(self):
        return self.p11 + self.p01

    def as_tuple(self):
        return (self.p11, self.p10, self.p01, self.p00)


@dataclass(frozen=True)
class CureRegression:
    """Logistic cure model; coefficient vectors start with the intercept."""

    beta1: tuple
    beta2: tuple
    shared: bool = False

    def __post_init__(self):
        b1 = tuple(float(b) for b in np.atleast_1d(self.beta1))
        b2 = tuple(float(b) for b in np.atleast_1d(self.beta2))
        if len(b1) == 0 or len(b2) == 0:
            raise ShapeError("coefficient vectors need at least an intercept")
        if self.shared and b1 != b2:
            raise ParameterDomainError("shared cure regression needs identical coefficients")
        object.__setattr__(self, "beta1", b1)
        object.__setattr__(self, "beta2", b2)

    @classmethod
    def from_margins(cls, margins):
        return cls((float(logit(margins.p1)),), (float(logit(margins.p2)),))


def p11_from_odds(p1, p2, r, strict=True):
    """Minus-root of the odds-ratio quadratic, vectorized.

    Written as 2*R*p1*p2 / (f + sqrt(D)), the rationalized form of
    (f - sqrt(D)) / (2(R-1)); it is finite at R = 1 (giving p1*p2) and
    tends to min(p1, p2) as R -> inf. When f < 0 (small R with large
    margins) the rationalized denominator cancels, so the direct form is used.
    Everything is divided by max(R, 1) so huge R cannot overflow. With
    ``strict=False`` a degenerate discriminant yields nan instead of raising.
    """
    p1 = np.asarray(p1, dtype=float)
    p2 = np.asarray(p2, dtype=float)
    r = np.asarray(r, dtype=float)
    s = np.maximum(r, 1.0)
    big = np.isinf(r)
    with np.errstate(invalid="ignore"):
        # R = inf takes the limiting values r/s = (r-1)/s = 1
        rs = np.where(big, 1.0, r / s)
        r1s = np.where(big, 1.0, (r - 1.0) / s)
    f = r1s * (p1 + p2) + 1.0 / s
    # for R > 1 the expanded discriminant is a sum of positive terms; the
    # textbook difference f^2 - 4R(R-1)p1p2 cancels badly when p1 = p2
    cross = p1 * (1.0 - p2) + p2 * (1.0 - p1)
    expanded = (r1s * (p1 - p2)) ** 2 + 2.0 * r1s * cross / s + (1.0 / s) ** 2
    disc = np.where(r > 1.0, expanded, f * f - 4.0 * rs * r1s * p1 * p2)
    if strict and not np.all(disc > 0):
        raise NumericalDegeneracyError("non-positive discriminant in odds-ratio root")
    with np.errstate(divide="ignore", invalid="ignore"):
        root = np.sqrt(disc)
        rational = 2.0 * rs * p1 * p2 / (f + root)
        direct = (f - root) / (2.0 * r1s)
    return np.where(f >= 0, rational, direct)


def solve_cells(margins, regime):
    p1, p2 = margins.p1, margins.p2
    if regime.regime == "inf":
        if p1 != p2:
            raise InconsistentMarginsError(f"R=inf forces X1 = X2 but p1={p1} != p2={p2}")
        return CureCells(p1, 0.0, 0.0, 1.0 - p1)
    if regime.regime == "eq1":
        p11 = p1 * p2
    else:
        p11 = float(p11_from_odds(p1, p2, regime.r_value))
    # Frechet bounds; rounding can push p11 past them by an ulp
    p11 = min(max(p11, max(p1 + p2 - 1.0, 0.0)), min(p1, p2))
    return CureCells(p11, p1 - p11, p2 - p11, 1.0 - p1 - p2 + p11)


def odds_ratio_of(cells):
    """p11*p00 / (p10*p01); ``math.inf`` when an off-diagonal cell is zero."""
    if cells.p10 == 0.0 or cells.p01 == 0.0:
        return math.inf
    return cells.p11 * cells.p00 / (cells.p10 * cells.p01)


def _linear_predictor(beta, x):
    beta = np.asarray(beta, dtype=float)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape[-1] != beta.size - 1:
        raise ShapeError(f"{x.shape[-1]} covariates for {beta.size - 1} slopes")
    return beta[0] + x @ beta[1:]


def cure_fraction(reg, x1=(), x2=()):
    """Subject-level cure probabilities (p1(x1), p2(x2))."""
    eta1 = _linear_predictor(reg.beta1, x1)
    eta2 = _linear_predictor(reg.beta2, x2)
    # keep the probabilities strictly inside (0, 1) when |eta| is huge
    lo, hi = np.finfo(float).tiny, 1.0 - np.finfo(float).epsneg
    return float(np.clip(expit(eta1), lo, hi)), float(np.clip(expit(eta2), lo, hi))


def subject_cells(reg, x1, x2, regime):
    p1, p2 = cure_fraction(reg, x1, x2)
    if regime.regime == "inf":
        if not reg.shared and not math.isclose(p1, p2, rel_tol=0, abs_tol=1e-14):
            raise InconsistentMarginsError("R=inf needs a shared cure regression")
        return CureCells(p1, 0.0, 0.0, 1.0 - p1)
    return solve_cells(CureMargins(p1, p2), regime)


def odds_to_unconstrained(r, regime):
    if regime == "lt1":
        return float(logit(r))
    if regime == "gt1":
        return math.log(r - 1.0)
    raise ParameterDomainError(f"R is not estimated under regime {regime}")


def odds_from_unconstrained(z, regime):
    if regime == "lt1":
        return expit(z)
    if regime == "gt1":
        return 1.0 + np.exp(z)
    raise ParameterDomainError(f"R is not estimated under regime {regime}")
