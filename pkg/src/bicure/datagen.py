"""Simulation of censored and uncensored data from the cure frailty-copula model."""

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .copulas import CopulaFamily, sample_copula
from .cure import CureMargins, CureRegression, p11_from_odds
from .data import BivariateDataset, CureTruthDataset
from .errors import ConfigError
from .survival import ModelParams

__all__ = [
    "SimDesign",
    "generate",
    "mix64",
    "replicate_seeds",
    "setting",
    "SETTINGS",
]

COVARIATE_MODES = ("none", "uniform", "shared")

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def mix64(base, k):
    """SplitMix64 finalizer applied to base + (k+1) * golden-ratio increment.

    The finalizer is a bijection on 64-bit integers, so distinct k (below 2^64)
    never collide for a fixed base.
    """
    z = (int(base) + (int(k) + 1) * _GOLDEN) & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def replicate_seeds(base_seed, k):
    """Seed of replication ``k`` (an int or an iterable of ints)."""
    if np.ndim(k) == 0:
        return mix64(base_seed, k)
    return [mix64(base_seed, i) for i in k]


@dataclass(frozen=True)
class SimDesign:
    """A data-generating design. ``censor`` is None or a (lo, hi) uniform window."""

    params: ModelParams
    n: int
    censor: tuple = None
    covariates: str = "none"
    seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ConfigError("n must be at least 1")
        if self.covariates not in COVARIATE_MODES:
            raise ConfigError(f"covariates must be one of {COVARIATE_MODES}")
        if self.censor is not None:
            lo, hi = self.censor
            if not (hi > lo >= 0):
                raise ConfigError("uniform censoring needs hi > lo >= 0")
            object.__setattr__(self, "censor", (float(lo), float(hi)))
        has_reg = isinstance(self.params.cure, CureRegression)
        if has_reg != (self.covariates != "none"):
            raise ConfigError("covariate mode must match the cure model of params")
        inf = self.params.regime.regime == "inf"
        if inf and has_reg and self.covariates != "shared":
            raise ConfigError("R=inf with covariates needs shared covariates")
        if inf and not has_reg and self.params.cure.p1 != self.params.cure.p2:
            raise ConfigError("R=inf without covariates needs p1 == p2")
        if has_reg:
            if len(self.params.cure.beta1) != 2 or len(self.params.cure.beta2) != 2:
                raise ConfigError("simulated covariate designs use one Uniform(0,1) covariate per margin")

    def with_seed(self, seed):
        return SimDesign(self.params, self.n, self.censor, self.covariates, seed)

    def with_n(self, n):
        return SimDesign(self.params, n, self.censor, self.covariates, self.seed)


def _cure_indicators(params, rng, x1, x2, n):
    regime = params.regime.regime
    if isinstance(params.cure, CureMargins):
        p1 = np.full(n, params.cure.p1)
        p2 = np.full(n, params.cure.p2)
    else:
        b1, b2 = params.cure.beta1, params.cure.beta2
        p1 = expit(b1[0] + b1[1] * x1[:, 0])
        p2 = expit(b2[0] + b2[1] * x2[:, 0])
    if regime == "eq1":
        return rng.uniform(size=n) < p1, rng.uniform(size=n) < p2
    if regime == "inf":
        x = rng.uniform(size=n) < p1
        return x, x.copy()
    p11 = p11_from_odds(p1, p2, params.regime.r_value)
    p11 = np.clip(p11, np.maximum(p1 + p2 - 1.0, 0.0), np.minimum(p1, p2))
    cum = np.column_stack([p11, p1, p1 + p2 - p11])  # (1,1), (1,0), (0,1), (0,0)
    u = rng.uniform(size=n)
    cell = (u[:, None] >= cum).sum(axis=1)
    return np.isin(cell, (0, 1)), np.isin(cell, (0, 2))


def latent_times(params, rng, n, x1=None, x2=None):
    """Event times T1, T2 with np.inf for cured margins."""
    xc1, xc2 = _cure_indicators(params, rng, x1, x2, n)
    g = params.gamma
    w = rng.gamma(1.0 / g, g, size=n)
    uv = sample_copula(CopulaFamily(params.copula, theta=params.theta), rng, n)
    times = []
    for j, (cured, m) in enumerate(((xc1, params.margin1), (xc2, params.margin2))):
        z = np.where(cured, 0.0, w)
        with np.errstate(divide="ignore"):
            t = (-np.log(uv[:, j]) / (m.r * z)) ** (1.0 / m.a)
        t[cured] = np.inf
        times.append(t)
    return times[0], times[1], xc1, xc2


def generate(design, return_truth=False):
    """Draw one dataset.

    With ``censor=None`` the result is a :class:`CureTruthDataset` holding
    the extended times; otherwise a censored :class:`BivariateDataset`.
    ``return_truth`` also returns the latent cure indicators.
    """
    rng = np.random.default_rng(design.seed)
    n = design.n
    x1 = x2 = None
    names = ((), ())
    if design.covariates == "uniform":
        x1 = rng.uniform(size=(n, 1))
        x2 = rng.uniform(size=(n, 1))
        names = (("x",), ("x",))
    elif design.covariates == "shared":
        x1 = rng.uniform(size=(n, 1))
        x2 = x1.copy()
        names = (("x",), ("x",))
    t1, t2, c1, c2 = latent_times(design.params, rng, n, x1, x2)
    if design.censor is None:
        ds = CureTruthDataset(t1, t2, x1, x2, names)
    else:
        lo, hi = design.censor
        c = rng.uniform(lo, hi, size=n)
        # a zero censoring time is a measure-zero event; keep times positive
        c = np.maximum(c, np.finfo(float).tiny)
        ds = BivariateDataset(np.minimum(t1, c), np.minimum(t2, c), (t1 <= c).astype(int), (t2 <= c).astype(int),
                              x1, x2, names)
    return (ds, (c1, c2)) if return_truth else ds


def setting(name, R=None, n=200, seed=0, censor=(0.0, 6.0)):
    """Named designs: 'A', 'B' (with covariates), 'S_A', 'S_B' (no covariates), 'S1' (rank validation)."""
    if name not in SETTINGS:
        raise ConfigError(f"unknown setting {name!r}; choose from {sorted(SETTINGS)}")
    spec = dict(SETTINGS[name])
    if R is not None:
        spec["R"] = R
    covariates = spec.pop("covariates")
    if name == "S1":
        censor = None
    params = ModelParams.build(**spec)
    return SimDesign(params, n, censor, covariates, seed)


SETTINGS = {
    "A": dict(copula="gumbel", theta=2.0, gamma=0.5, R=2.0, a1=1.0, r1=1.5, a2=1.0, r2=2.0,
              beta1=(1.0, -1.0), beta2=(-1.0, 1.0), covariates="uniform"),
    "B": dict(copula="gumbel", theta=0.5, gamma=0.5, R=0.5, a1=1.0, r1=1.5, a2=1.0, r2=2.0,
              beta1=(1.0, -1.0), beta2=(-1.0, 1.0), covariates="uniform"),
    "S_A": dict(copula="gumbel", theta=2.0, gamma=0.5, p1=0.6, p2=0.4, R=2.0, a1=1.0, r1=1.5, a2=1.0, r2=2.0,
                covariates="none"),
    "S_B": dict(copula="gumbel", theta=0.5, gamma=0.5, p1=0.6, p2=0.4, R=0.5, a1=1.0, r1=1.5, a2=1.0, r2=2.0,
                covariates="none"),
    "S1": dict(copula="gumbel", theta=1.0, gamma=1.0, p1=0.4, p2=0.2, R=2.0, a1=1.0, r1=1.0, a2=1.0, r2=1.0,
               covariates="none"),
}
