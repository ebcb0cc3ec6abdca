"""Bivariate cure frailty-copula models with zero-inflated gamma frailty."""

from .copulas import CopulaFamily, copula_cdf, copula_partials, induced_copula_cstar, sample_copula
from .cure import CureCells, CureMargins, CureRegression, OddsRatioRegime, odds_ratio_of, solve_cells, subject_cells
from .data import BivariateDataset, CureTruthDataset, load_retinopathy, read_csv, write_csv
from .likelihood import loglik, loglik_gradient, pattern_terms
from .survival import (
    FrailtySpec,
    ModelParams,
    WeibullMargin,
    gumbel_A,
    joint_survival,
    marginal_survival_population,
    marginal_survival_uncured,
)

__version__ = "0.1.0"
