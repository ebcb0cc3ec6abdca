"""Mapping between model parameters and the unconstrained optimization vector.

Positive quantities are log-transformed, the FGM theta goes through atanh,
cure probabilities through logit, and the odds ratio through the
region-specific map (logit on (0,1), log(R-1) on (1,inf)). Regression
coefficients are left as they are.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, logit

from .cure import CureMargins, CureRegression, OddsRatioRegime
from .errors import ParameterDomainError, ShapeError
from .survival import FrailtySpec, ModelParams, WeibullMargin, _normalize_copula

__all__ = ["ParamLayout", "TRANSFORMS", "forward", "inverse", "inverse_derivative"]

TRANSFORMS = ("identity", "log", "atanh", "logit", "logm1")
_TINY = float(np.finfo(float).tiny)
_BELOW_ONE = float(np.nextafter(1.0, 0.0))
_ABOVE_ONE = float(np.nextafter(1.0, 2.0))


def forward(kind, x):
    x = np.asarray(x, dtype=float)
    if kind == "identity":
        return x
    if kind == "log":
        return np.log(x)
    if kind == "atanh":
        with np.errstate(divide="ignore"):  # the FGM endpoints map to -inf/inf and back
            return np.arctanh(x)
    if kind == "logit":
        return logit(x)
    if kind == "logm1":
        return np.log(x - 1.0)
    raise ParameterDomainError(f"unknown transform {kind!r}")


def inverse(kind, z):
    z = np.asarray(z, dtype=float)
    if kind == "identity":
        return z
    if kind in ("log", "logm1"):
        # overflow to inf is the intended limit of a runaway optimizer step
        with np.errstate(over="ignore"):
            return np.exp(z) + (1.0 if kind == "logm1" else 0.0)
    if kind == "atanh":
        return np.tanh(z)
    if kind == "logit":
        return expit(z)
    raise ParameterDomainError(f"unknown transform {kind!r}")


def inverse_derivative(kind, z):
    """d(natural)/d(z), for the delta method."""
    z = np.asarray(z, dtype=float)
    if kind == "identity":
        return np.ones_like(z)
    if kind in ("log", "logm1"):
        return np.exp(z)
    if kind == "atanh":
        return 1.0 - np.tanh(z) ** 2
    if kind == "logit":
        p = expit(z)
        return p * (1.0 - p)
    raise ParameterDomainError(f"unknown transform {kind!r}")


@dataclass(frozen=True)
class ParamLayout:
    """Ordering and transforms of the free parameters for one (model, regime, data shape).

    ``cov_cols`` gives, per margin, the covariate columns of the dataset
    that enter the cure model. Under R=inf both margins share one
    coefficient vector over ``cov_cols[0]``.
    """

    copula: str
    regime: str
    covariates: bool = False
    cov_cols: tuple = ((), ())
    cov_names: tuple = ((), ())

    def __post_init__(self):
        object.__setattr__(self, "copula", _normalize_copula(self.copula))
        if self.regime not in ("eq1", "lt1", "gt1", "inf"):
            raise ParameterDomainError(f"unknown regime {self.regime!r}")
        cols = tuple(tuple(int(c) for c in cs) for cs in self.cov_cols)
        object.__setattr__(self, "cov_cols", cols)
        names = self.cov_names
        if names == ((), ()) and any(cols):
            names = tuple(tuple(f"v{c + 1}" for c in cs) for cs in cols)
        object.__setattr__(self, "cov_names", tuple(tuple(ns) for ns in names))
        if self.shared and self.cov_cols[0] != self.cov_cols[1]:
            raise ShapeError("R=inf layout needs the same covariate columns in both margins")
        entries = []
        if self.copula == "gumbel":
            entries.append(("theta", "log"))
        elif self.copula == "fgm":
            entries.append(("theta", "atanh"))
        entries.append(("gamma", "log"))
        if self.regime == "lt1":
            entries.append(("R", "logit"))
        elif self.regime == "gt1":
            entries.append(("R", "logm1"))
        entries += [("a1", "log"), ("r1", "log"), ("a2", "log"), ("r2", "log")]
        if not self.covariates:
            entries += [("p", "logit")] if self.shared else [("p1", "logit"), ("p2", "logit")]
        elif self.shared:
            entries += [("beta_0", "identity")] + [(f"beta_{c}", "identity") for c in self.cov_names[0]]
        else:
            for j in (1, 2):
                entries += [(f"beta{j}_0", "identity")] + [(f"beta{j}_{c}", "identity") for c in self.cov_names[j - 1]]
        object.__setattr__(self, "_entries", tuple(entries))

    @property
    def shared(self):
        return self.regime == "inf"

    @property
    def names(self):
        return tuple(n for n, _ in self._entries)

    @property
    def kinds(self):
        return tuple(k for _, k in self._entries)

    @property
    def size(self):
        return len(self._entries)

    def index(self, name):
        return self.names.index(name)

    @classmethod
    def for_data(cls, copula, regime, data, covariates=None):
        """Layout fitting ``data``; under R=inf only margin-invariant covariates are kept."""
        covariates = data.has_covariates if covariates is None else covariates
        if not covariates:
            return cls(copula, regime)
        if regime == "inf":
            cols = tuple(data.shared_covariates())
            names = tuple(data.covariate_names[0][c] for c in cols)
            return cls(copula, regime, True, (cols, cols), (names, names))
        cols = (tuple(range(data.x1.shape[1])), tuple(range(data.x2.shape[1])))
        return cls(copula, regime, True, cols, data.covariate_names)

    # batched decoding

    def split(self, Z):
        """Natural-scale parameters from an (m, k) array; values have shape (m,)."""
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        if Z.shape[1] != self.size:
            raise ShapeError(f"expected {self.size} parameters, got {Z.shape[1]}")
        with np.errstate(over="ignore"):
            return {n: inverse(k, Z[:, i]) for i, (n, k) in enumerate(self._entries)}

    def coefficient_block(self, vals, margin):
        """(m, 1+q) coefficient matrix of a margin from :meth:`split` output."""
        if self.shared:
            prefix, names = "beta", self.cov_names[0]
        else:
            prefix, names = f"beta{margin}", self.cov_names[margin - 1]
        keys = [f"{prefix}_0"] + [f"{prefix}_{c}" for c in names]
        return np.column_stack([vals[k] for k in keys])

    def natural(self, z):
        z = np.asarray(z, dtype=float)
        return np.array([float(inverse(k, zi)) for zi, k in zip(z, self.kinds)])

    def unconstrained(self, natural):
        return np.array([float(forward(k, x)) for x, k in zip(natural, self.kinds)])

    # ModelParams <-> vector

    def to_params(self, z):
        v = {n: float(x) for n, x in zip(self.names, self.natural(z))}
        # far-out coordinates saturate to the closed endpoint in double precision
        for n, k in zip(self.names, self.kinds):
            if k == "logit":
                v[n] = min(max(v[n], _TINY), _BELOW_ONE)
            elif k == "logm1":
                v[n] = max(v[n], _ABOVE_ONE)
            elif k == "log":
                v[n] = max(v[n], _TINY)
        regime = {"eq1": OddsRatioRegime("eq1"), "inf": OddsRatioRegime("inf")}.get(self.regime)
        if regime is None:
            regime = OddsRatioRegime(self.regime, v["R"])
        if not self.covariates:
            cure = CureMargins(v["p"], v["p"]) if self.shared else CureMargins(v["p1"], v["p2"])
        elif self.shared:
            b = tuple(v[n] for n in self.names if n.startswith("beta_"))
            cure = CureRegression(b, b, shared=True)
        else:
            b1 = tuple(v[n] for n in self.names if n.startswith("beta1_"))
            b2 = tuple(v[n] for n in self.names if n.startswith("beta2_"))
            cure = CureRegression(b1, b2)
        m1, m2 = WeibullMargin(v["a1"], v["r1"]), WeibullMargin(v["a2"], v["r2"])
        return ModelParams(self.copula, v.get("theta", 0.0), FrailtySpec(v["gamma"]), cure, regime, m1, m2,
                           self.cov_names)

    def from_params(self, params):
        if params.regime.regime != self.regime:
            raise ParameterDomainError(f"params are in regime {params.regime.regime}, layout is {self.regime}")
        v = {"gamma": params.gamma, "a1": params.margin1.a, "r1": params.margin1.r,
             "a2": params.margin2.a, "r2": params.margin2.r}
        if "theta" in self.names:
            v["theta"] = params.theta
        if "R" in self.names:
            v["R"] = params.regime.value
        cure = params.cure
        if not self.covariates:
            if not isinstance(cure, CureMargins):
                raise ParameterDomainError("layout without covariates needs CureMargins")
            if self.shared:
                v["p"] = cure.p1
            else:
                v["p1"], v["p2"] = cure.p1, cure.p2
        else:
            if not isinstance(cure, CureRegression):
                raise ParameterDomainError("layout with covariates needs CureRegression")
            blocks = [("beta", cure.beta1, self.cov_names[0])] if self.shared else [
                ("beta1", cure.beta1, self.cov_names[0]), ("beta2", cure.beta2, self.cov_names[1])]
            for prefix, beta, names in blocks:
                if len(beta) != len(names) + 1:
                    raise ShapeError(f"{prefix} has {len(beta)} entries, layout expects {len(names) + 1}")
                v[f"{prefix}_0"] = beta[0]
                for c, b in zip(names, beta[1:]):
                    v[f"{prefix}_{c}"] = b
        return self.unconstrained([v[n] for n in self.names])

