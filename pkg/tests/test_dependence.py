import math

import numpy as np
import pytest

from bicure.copulas import CopulaFamily, induced_family
from bicure.cure import CureCells, CureMargins, OddsRatioRegime, solve_cells
from bicure.datagen import generate, setting
from bicure.dependence import (
    dependence_report,
    rho_00,
    rho_b_theoretical,
    sample_rho_b,
    sample_tau_b,
    tau_00,
    tau_b_theoretical,
    tau_quadrature,
)
from bicure.errors import InsufficientDataError

S1_CELLS = solve_cells(CureMargins(0.4, 0.2), OddsRatioRegime.from_value(2.0))


def test_tau_00_examples():
    assert tau_00("independence", 0.0, 2.0) == 0.5
    assert tau_00("gumbel", 1.0, 1.0) == pytest.approx(0.667, abs=5e-4)
    assert tau_00("fgm", 0.0, 1.0) == pytest.approx(1 / 3, abs=1e-6)
    assert abs(tau_00("fgm", -1.0, 1e-6) + 2 / 9) < 5e-3


def test_rho_00_examples():
    assert abs(rho_00("independence", 0.0, 1e-8)) < 1e-6
    assert abs(rho_00("gumbel", 1.0, 1.0) - 0.847) < 5e-3
    assert rho_00("gumbel", 50.0, 1.0) > 0.99


def test_tau_b_examples():
    t00 = tau_00("gumbel", 1.0, 1.0)
    assert tau_b_theoretical(S1_CELLS, t00) == pytest.approx(0.252, abs=5e-4)
    # p00 = 1 in the limit: the uncured coefficient comes through unchanged
    tiny = CureCells(1e-300, 1e-300, 1e-300, 1.0 - 3e-300)
    assert tau_b_theoretical(tiny, 0.37) == pytest.approx(0.37, abs=1e-12)
    half = CureCells(0.0, 0.5, 0.5, 0.0)
    assert tau_b_theoretical(half, tau_00("independence", 0.0, 1.0)) == pytest.approx(-2 / 3, abs=1e-15)


def test_rho_b_examples():
    r00 = rho_00("gumbel", 1.0, 1.0)
    assert rho_b_theoretical(S1_CELLS, r00) == pytest.approx(0.299, abs=5e-4)
    tiny = CureCells(1e-300, 1e-300, 1e-300, 1.0 - 3e-300)
    assert rho_b_theoretical(tiny, 0.41) == pytest.approx(0.41, abs=1e-12)
    ind = solve_cells(CureMargins(0.3, 0.6), OddsRatioRegime.from_value(1.0))
    assert rho_b_theoretical(ind, 0.0) == pytest.approx(0.0, abs=1e-15)


@pytest.mark.parametrize("kind", ["independence", "gumbel"])
def test_closed_form_tau_matches_quadrature(kind):
    thetas = [0.0] if kind == "independence" else [0.3, 1.0, 3.0]
    for theta in thetas:
        for gamma in (0.3, 1.0, 3.0):
            base = CopulaFamily(kind, theta=theta)
            quad = tau_quadrature(induced_family(base, gamma))
            assert abs(quad - tau_00(kind, theta, gamma)) < 1e-4


def test_tau_b_lower_bound_over_random_draws():
    rng = np.random.default_rng(17)
    worst = 1.0
    for k in range(10_000):
        kind = ("independence", "gumbel", "fgm")[k % 3]
        theta = {"independence": 0.0, "gumbel": rng.exponential(2.0), "fgm": rng.uniform(-1, 1)}[kind]
        gamma = math.exp(rng.uniform(math.log(1e-3), math.log(20.0)))
        p1, p2 = rng.uniform(0.005, 0.995, 2)
        R = math.exp(rng.uniform(-6, 6))
        cells = solve_cells(CureMargins(p1, p2), OddsRatioRegime.from_value(R))
        tb = tau_b_theoretical(cells, tau_00(kind, theta, gamma))
        assert -1.0 <= tb <= 1.0
        worst = min(worst, tb)
    assert worst >= -2 / 3 - 1e-9


def test_sample_trivial_cases():
    x = np.arange(1.0, 6.0)
    up = np.column_stack([x, x**2])
    down = np.column_stack([x, 1.0 / x])
    assert sample_tau_b(up) == pytest.approx(1.0)
    assert sample_rho_b(up) == pytest.approx(1.0)
    assert sample_rho_b(down) == pytest.approx(-1.0)
    cured = np.column_stack([np.full(5, np.inf), x])
    assert math.isnan(sample_tau_b(cured))
    assert math.isnan(sample_rho_b(cured))
    with pytest.raises(InsufficientDataError):
        sample_tau_b([[1.0, 2.0]])


def test_sample_tau_b_by_hand():
    # pairs with one cured value per margin; Kendall tau-b counted directly
    pairs = np.array([[1.0, 2.0], [3.0, np.inf], [np.inf, 1.0], [2.0, 3.0]])
    n = len(pairs)
    s = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            s += np.sign(pairs[i, 0] - pairs[j, 0]) * np.sign(pairs[i, 1] - pairs[j, 1])
    nt = n * (n - 1) / 2
    assert sample_tau_b(pairs) == pytest.approx(s / nt)
    tied = np.array([[1.0, 2.0], [np.inf, np.inf], [np.inf, 1.0], [2.0, 3.0], [0.5, np.inf]])
    s = sum(np.sign(tied[i, 0] - tied[j, 0]) * np.sign(tied[i, 1] - tied[j, 1])
            for i in range(5) for j in range(i + 1, 5) if not (np.isinf(tied[i, 0]) and np.isinf(tied[j, 0]))
            and not (np.isinf(tied[i, 1]) and np.isinf(tied[j, 1])))
    nt = 10.0
    assert sample_tau_b(tied) == pytest.approx(s / math.sqrt((nt - 1) * (nt - 1)))


def test_sample_rho_b_midranks():
    pairs = np.array([[1.0, 4.0], [2.0, np.inf], [np.inf, 3.0], [np.inf, np.inf], [5.0, 1.0]])
    rx = np.array([1, 2, 4.5, 4.5, 3])
    ry = np.array([3, 4.5, 2, 4.5, 1])
    n = 5
    w0 = n**3 - n
    u = v = 2**3 - 2
    raw = 12 * np.dot(rx - 3, ry - 3) / w0
    assert sample_rho_b(pairs) == pytest.approx(raw * w0 / math.sqrt((w0 - u) * (w0 - v)), rel=1e-14)


def test_invariance_to_increasing_transforms():
    ds = generate(setting("S1", n=400, seed=3))
    pairs = ds.pairs()
    cubed = pairs**3
    assert sample_tau_b(cubed) == sample_tau_b(pairs)
    assert sample_rho_b(cubed) == sample_rho_b(pairs)


def test_report():
    rep = dependence_report("gumbel", 1.0, 1.0, 0.4, 0.2, 2.0)
    assert rep.tau_method == "closed_form"
    assert rep.tau_b == pytest.approx(0.252, abs=5e-4)
    d = rep.to_dict()
    assert d["sample_tau_b"] is None
    fgm = dependence_report("fgm", 0.5, 1.0, 0.4, 0.2, 0.5)
    assert fgm.tau_method == "quadrature" and -1 < fgm.tau_b <= 1


@pytest.mark.parametrize("n", [100, 300, 1000])
def test_monte_carlo_consistency(n):
    reps = 200
    taus, rhos = np.empty(reps), np.empty(reps)
    for k in range(reps):
        pairs = generate(setting("S1", n=n, seed=10_000 * n + k)).pairs()
        taus[k], rhos[k] = sample_tau_b(pairs), sample_rho_b(pairs)
    tb = tau_b_theoretical(S1_CELLS, tau_00("gumbel", 1.0, 1.0))
    rb = rho_b_theoretical(S1_CELLS, rho_00("gumbel", 1.0, 1.0))
    for est, truth in ((taus, tb), (rhos, rb)):
        se = est.std(ddof=1) / math.sqrt(reps)
        assert abs(est.mean() - truth) < 3 * se
