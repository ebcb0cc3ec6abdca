"""JSON schemas for design, parameter and study files."""

import json
import math
from enum import Enum
from typing import List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .datagen import SETTINGS, SimDesign, setting
from .errors import BicureError, ConfigError
from .estimation import FitConfig
from .survival import ModelParams

__all__ = ["ParamsModel", "DesignModel", "StudyModel", "StudyKind", "FitModel",
           "load_design", "load_params", "load_study", "parse_r"]


def parse_r(value):
    """Odds ratio from JSON: a positive number, or "inf"/"Infinity"."""
    if isinstance(value, str):
        if value.strip().lower() in ("inf", "infinity", "+inf"):
            return math.inf
        raise ValueError(f"R must be a number or 'inf', got {value!r}")
    return float(value)


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ParamsModel(_Strict):
    copula: Literal["indep", "independence", "gumbel", "fgm"] = "gumbel"
    theta: float = 0.0
    gamma: float = 1.0
    p1: Optional[float] = None
    p2: Optional[float] = None
    beta1: Optional[List[float]] = None
    beta2: Optional[List[float]] = None
    R: Union[float, str] = 1.0
    a1: float = 1.0
    r1: float = 1.0
    a2: float = 1.0
    r2: float = 1.0

    @field_validator("R")
    @classmethod
    def _r(cls, v):
        return parse_r(v)

    @model_validator(mode="after")
    def _cure(self):
        if (self.p1 is None) == (self.beta1 is None):
            raise ValueError("give either p1/p2 or beta1/beta2")
        if self.beta1 is None and self.p2 is None:
            raise ValueError("p2 is required with p1")
        return self

    def build(self):
        return ModelParams.build(**self.model_dump())


class DesignModel(_Strict):
    """Either a named ``setting`` (with an optional ``R`` override) or explicit ``params``."""

    setting: Optional[str] = None
    R: Union[float, str, None] = None
    params: Optional[ParamsModel] = None
    n: int = Field(200, ge=1)
    censor: Optional[Tuple[float, float]] = (0.0, 6.0)
    covariates: Literal["none", "uniform", "shared"] = "none"
    seed: int = Field(0, ge=0)

    @field_validator("R")
    @classmethod
    def _r(cls, v):
        return None if v is None else parse_r(v)

    @model_validator(mode="after")
    def _source(self):
        if (self.setting is None) == (self.params is None):
            raise ValueError("give exactly one of 'setting' and 'params'")
        if self.setting is not None and self.setting not in SETTINGS:
            raise ValueError(f"unknown setting {self.setting!r}; choose from {sorted(SETTINGS)}")
        return self

    def build(self):
        if self.setting is not None:
            return setting(self.setting, R=self.R, n=self.n, seed=self.seed, censor=self.censor)
        return SimDesign(self.params.build(), self.n, self.censor, self.covariates, self.seed)

    def at(self, R=None, n=None):
        """Copy with the odds ratio and/or sample size replaced."""
        upd = {} if n is None else {"n": n}
        if R is not None:
            if self.setting is not None:
                upd["R"] = R
            else:
                upd["params"] = self.params.model_copy(update={"R": R})
        return self.model_copy(update=upd)


class StudyKind(str, Enum):
    rank = "RankValidation"
    mle = "MleStudy"
    type1 = "LrtTypeI"
    power = "LrtPower"
    em = "EmCompare"


class FitModel(_Strict):
    starts: int = Field(1, ge=1)
    max_iter: int = Field(500, ge=1)
    model: Optional[Literal["indep", "independence", "gumbel", "fgm"]] = None
    regime: Optional[Literal["eq1", "lt1", "gt1", "inf", "truth"]] = "truth"
    compute_se: bool = True

    def config(self, seed=0):
        return FitConfig(starts=self.starts, max_iter=self.max_iter, seed=seed, compute_se=self.compute_se)


class StudyModel(_Strict):
    study: StudyKind
    design: DesignModel
    replications: int = Field(ge=1)
    alpha: float = Field(0.05, gt=0.0, lt=1.0)
    r_grid: List[Union[float, str]] = Field(default_factory=list)
    n_grid: List[int] = Field(default_factory=list)
    seed: int = Field(0, ge=0)
    fit: FitModel = Field(default_factory=FitModel)
    output: Optional[str] = None

    @field_validator("r_grid")
    @classmethod
    def _grid(cls, v):
        out = [parse_r(r) for r in v]
        if any(not r > 0 for r in out):
            raise ValueError("r_grid values must be positive")
        return out

    @field_validator("n_grid")
    @classmethod
    def _ns(cls, v):
        if any(n < 1 for n in v):
            raise ValueError("n_grid values must be positive")
        return v

    def ns(self):
        return list(self.n_grid) or [self.design.n]


def _describe(exc, text):
    if isinstance(exc, json.JSONDecodeError):
        return f"line {exc.lineno} column {exc.colno}: {exc.msg}"
    if isinstance(exc, ValidationError):
        parts = []
        for err in exc.errors():
            loc = ".".join(str(p) for p in err["loc"]) or "<root>"
            parts.append(f"{loc}: {err['msg']}")
        return "; ".join(parts)
    return str(exc)


def _load(path, model):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from exc
    try:
        return model.model_validate(json.loads(text))
    except (json.JSONDecodeError, ValidationError) as exc:
        raise ConfigError(f"{path}: {_describe(exc, text)}") from exc


def _checked(path, build):
    try:
        return build()
    except (BicureError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def load_design(path):
    """SimDesign from a design JSON file."""
    model = _load(path, DesignModel)
    return _checked(path, model.build)


def load_params(path):
    model = _load(path, ParamsModel)
    return _checked(path, model.build)


def load_study(path):
    """Validated StudyModel; the design is built once here so errors surface early."""
    model = _load(path, StudyModel)
    _checked(path, model.design.build)
    return model
