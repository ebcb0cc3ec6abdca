import math

import numpy as np
import pytest

import bicure.likelihood as lk
from bicure.data import BivariateDataset
from bicure.datagen import generate, setting
from bicure.errors import ShapeError
from bicure.survival import ModelParams, joint_survival
from bicure.transforms import ParamLayout

# ---------------------------------------------------------------------------
# oracles: the log-likelihood written out term by term per censoring pattern


def _cells_oracle(p1, p2, R):
    if R == 1.0:
        p11 = p1 * p2
    else:
        f = (R - 1.0) * (p1 + p2) + 1.0
        p11 = (f - np.sqrt(f * f - 4.0 * R * (R - 1.0) * p1 * p2)) / (2.0 * (R - 1.0))
    return p11, p1 - p11, p2 - p11, 1.0 - p1 - p2 + p11


def _logistic(beta, x):
    eta = beta[0] + x @ np.asarray(beta[1:])
    return 1.0 / (1.0 + np.exp(-eta))


def _survival_oracle(copula, th, g, cells, h1, h2):
    p11, p10, p01, p00 = cells
    lap = lambda s: (1.0 + g * s) ** (-1.0 / g)  # noqa: E731
    if copula == "independence":
        k = lap(h1 + h2)
    elif copula == "gumbel":
        k = lap((h1 ** (th + 1) + h2 ** (th + 1)) ** (1 / (th + 1)))
    else:
        k = (1 + th) * lap(h1 + h2) - th * lap(2 * h1 + h2) - th * lap(h1 + 2 * h2) + th * lap(2 * h1 + 2 * h2)
    return p11 + p01 * lap(h1) + p10 * lap(h2) + p00 * k


def explicit_loglik(copula, th, g, beta1, beta2, R, a1, r1, a2, r2, data, fgm_double_factor=False):
    t1, t2, d1, d2 = data.t1, data.t2, data.d1, data.d2
    p1, p2 = _logistic(beta1, data.x1), _logistic(beta2, data.x2)
    cells = _cells_oracle(p1, p2, R)
    p11, p10, p01, p00 = cells
    h1, h2 = r1 * t1**a1, r2 * t2**a2
    dd12 = np.sum(d1 * d2)
    dj = (d1.sum(), d2.sum())
    S = _survival_oracle(copula, th, g, cells, h1, h2)
    cens = (1 - d1) * (1 - d2)
    e1 = -(1 / g + 1)
    if copula == "gumbel":
        A = 1 + g * (h1 ** (th + 1) + h2 ** (th + 1)) ** (1 / (th + 1))
        B1 = np.log(p01 * (1 + g * h1) ** e1 + p00 * g**th * r1**th * t1 ** (a1 * th) * A**e1 * (A - 1) ** (-th))
        B2 = np.log(p10 * (1 + g * h2) ** e1 + p00 * g**th * r2**th * t2 ** (a2 * th) * A**e1 * (A - 1) ** (-th))
        ll = (2 * th + 1) * dd12 * np.log(g)
        ll += sum(dj[j] * np.log(a) + (dj[j] + th * dd12) * np.log(r) for j, (a, r) in enumerate(((a1, r1), (a2, r2))))
        ll += np.sum(d1 * (a1 - 1 + d2 * a1 * th) * np.log(t1)) + np.sum(d2 * (a2 - 1 + d1 * a2 * th) * np.log(t2))
        ll += np.sum(d1 * (1 - d2) * B1) + np.sum((1 - d1) * d2 * B2) + np.sum(cens * np.log(S))
        both = d1 * d2 == 1
        Ab = A[both]
        ll += np.sum(np.log((1 + 1 / g + th) * Ab - (1 + 1 / g)))
        ll += np.sum(np.log(p00[both] if np.ndim(p00) else p00) - (2 + 1 / g) * np.log(Ab) - (2 * th + 1) * np.log(Ab - 1))
        return ll
    base = dd12 * np.log(1 + g) + sum(dj[j] * (np.log(r) + np.log(a)) for j, (a, r) in enumerate(((a1, r1), (a2, r2))))
    base += np.sum(cens * np.log(S)) + np.sum(d1 * (a1 - 1) * np.log(t1)) + np.sum(d2 * (a2 - 1) * np.log(t2))
    p00v = np.broadcast_to(p00, t1.shape)
    if copula == "independence":
        s = 1 + g * (h1 + h2)
        B1 = p01 * (1 + g * h1) ** e1 + p00 * s**e1
        B2 = p10 * (1 + g * h2) ** e1 + p00 * s**e1
        both = d1 * d2 == 1
        return (base + np.sum(d1 * (1 - d2) * np.log(B1)) + np.sum((1 - d1) * d2 * np.log(B2))
                + np.sum(np.log(p00v[both]) - (1 / g + 2) * np.log(s[both])))
    q1, q2 = 1 + g * h1, 1 + g * h2
    e2 = -(1 / g + 2)
    D1 = p01 * q1**e1 + p00 * ((1 + th) * (q1 + q2 - 1) ** e1 - 2 * th * (2 * q1 + q2 - 2) ** e1
                              - th * (q1 + 2 * q2 - 2) ** e1 + 2 * th * (2 * q1 + 2 * q2 - 3) ** e1)
    D2 = p10 * q2**e1 + p00 * ((1 + th) * (q1 + q2 - 1) ** e1 - th * (2 * q1 + q2 - 2) ** e1
                              - 2 * th * (q1 + 2 * q2 - 2) ** e1 + 2 * th * (2 * q1 + 2 * q2 - 3) ** e1)
    E = (1 + g) * ((1 + th) * (q1 + q2 - 1) ** e2 - 2 * th * (2 * q1 + q2 - 2) ** e2
                   - 2 * th * (q1 + 2 * q2 - 2) ** e2 + 4 * th * (2 * q1 + 2 * q2 - 3) ** e2)
    both = d1 * d2 == 1
    with np.errstate(invalid="ignore", divide="ignore"):
        logs = np.log(D1), np.log(D2), np.log(p00v * E)
    if not fgm_double_factor:
        # E already carries the (1 + gamma) factor of the double-event density
        base -= dd12 * np.log(1 + g)
    return (base + np.sum(np.where(d1 * (1 - d2) == 1, logs[0], 0.0))
            + np.sum(np.where((1 - d1) * d2 == 1, logs[1], 0.0)) + np.sum(logs[2][both]))


# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def cov_data():
    return generate(setting("A", n=100, seed=21))


CASES = [
    ("gumbel", 1.3, 0.6, 2.0),
    ("gumbel", 0.4, 1.5, 0.5),
    ("gumbel", 0.8, 0.8, 1.0),
    ("independence", 0.0, 0.9, 2.0),
    ("independence", 0.0, 0.3, 1.0),
    ("fgm", 0.7, 0.6, 3.0),
    ("fgm", -0.5, 1.2, 0.4),
]


@pytest.mark.parametrize("copula,theta,gamma,R", CASES)
def test_loglik_matches_explicit_form(cov_data, copula, theta, gamma, R):
    b1, b2 = (0.8, -0.6), (-0.7, 1.1)
    params = ModelParams.build(copula, theta=theta, gamma=gamma, beta1=b1, beta2=b2, R=R, a1=1.1, r1=1.4,
                               a2=0.9, r2=1.8, covariate_names=cov_data.covariate_names)
    ours = lk.loglik(params, cov_data)
    ref = explicit_loglik(copula, theta, gamma, b1, b2, R, 1.1, 1.4, 0.9, 1.8, cov_data)
    assert math.isfinite(ours)
    assert ours == pytest.approx(ref, rel=1e-10, abs=1e-8)


def test_fgm_double_event_factor_counted_once(cov_data):
    # at theta=0 the FGM model is the independence model; keeping (1 + gamma) both in E
    # and as a separate term overshoots it by exactly d12 log(1 + gamma)
    args = (0.0, 0.6, (0.8, -0.6), (-0.7, 1.1), 2.0, 1.1, 1.4, 0.9, 1.8, cov_data)
    ind = explicit_loglik("independence", *args)
    assert explicit_loglik("fgm", *args) == pytest.approx(ind, rel=1e-12)
    raw = explicit_loglik("fgm", *args, fgm_double_factor=True)
    assert raw - ind == pytest.approx(cov_data.d12_total * math.log(1.6), rel=1e-10)
    params = ModelParams.build("fgm", theta=0.0, gamma=0.6, beta1=(0.8, -0.6), beta2=(-0.7, 1.1), R=2.0, a1=1.1,
                               r1=1.4, a2=0.9, r2=1.8, covariate_names=cov_data.covariate_names)
    assert lk.loglik(params, cov_data) == pytest.approx(ind, rel=1e-12)


def test_dataset_has_every_pattern(cov_data):
    for pattern in ((0, 0), (1, 0), (0, 1), (1, 1)):
        assert cov_data.pattern_index(pattern).size > 0


def test_pattern_extras_match_explicit_terms():
    params = ModelParams.build("gumbel", theta=1.2, gamma=0.7, p1=0.5, p2=0.3, R=2.0, a1=1.1, r1=1.4, a2=0.9, r2=1.8)
    t1, t2 = np.array([0.3, 1.1]), np.array([0.8, 0.2])
    ex = lk.pattern_terms(params, t1, t2).extras
    h1, h2 = 1.4 * t1**1.1, 1.8 * t2**0.9
    A = 1 + 0.7 * (h1**2.2 + h2**2.2) ** (1 / 2.2)
    assert np.allclose(ex["A"], A, rtol=1e-14)
    cells = _cells_oracle(0.5, 0.3, 2.0)
    e1 = -(1 / 0.7 + 1)
    B1 = np.log(cells[2] * (1 + 0.7 * h1) ** e1 + cells[3] * 0.7**1.2 * 1.4**1.2 * t1 ** (1.1 * 1.2)
                * A**e1 * (A - 1) ** -1.2)
    assert np.allclose(ex["B1"], B1, rtol=1e-12)


COPULAS = [("independence", 0.0), ("gumbel", 1.1), ("fgm", 0.8), ("fgm", -1.0)]


def _richardson(d, h=1e-3):
    return (4 * d(h) - d(2 * h)) / 3


@pytest.mark.parametrize("copula,theta", COPULAS)
def test_pattern_terms_match_finite_differences(copula, theta, rng):
    for _ in range(20):
        params = ModelParams.build(copula, theta=theta, gamma=rng.uniform(0.2, 3.0), p1=rng.uniform(0.1, 0.9),
                                   p2=rng.uniform(0.1, 0.9), R=float(np.exp(rng.uniform(-2, 2))),
                                   a1=rng.uniform(0.6, 2.0), r1=rng.uniform(0.3, 2.0),
                                   a2=rng.uniform(0.6, 2.0), r2=rng.uniform(0.3, 2.0))
        cells = params.cells()
        t1, t2 = rng.uniform(0.2, 2.5, 2)
        pt = lk.pattern_terms(params, t1, t2)
        S = lambda a, b: joint_survival(params, cells, a, b)  # noqa: E731
        f1 = _richardson(lambda h: -(S(t1 + h, t2) - S(t1 - h, t2)) / (2 * h))
        f2 = _richardson(lambda h: -(S(t1, t2 + h) - S(t1, t2 - h)) / (2 * h))
        f12 = _richardson(lambda h: (S(t1 + h, t2 + h) - S(t1 + h, t2 - h) - S(t1 - h, t2 + h)
                                     + S(t1 - h, t2 - h)) / (4 * h * h))
        assert np.exp(pt.log_S[0]) == pytest.approx(S(t1, t2), rel=1e-12)
        assert np.exp(pt.log_f1[0]) == pytest.approx(f1, rel=1e-6)
        assert np.exp(pt.log_f2[0]) == pytest.approx(f2, rel=1e-6)
        assert np.exp(pt.log_f12[0]) == pytest.approx(f12, rel=1e-5)


def test_fgm_density_limit():
    # cure fractions ~ 0 and gamma ~ 0: copula density times Weibull densities
    th = 0.6
    params = ModelParams.build("fgm", theta=th, gamma=1e-9, p1=1e-12, p2=1e-12, a1=1.3, r1=0.7, a2=0.8, r2=1.6)
    t1, t2 = 0.9, 1.4
    u, v = math.exp(-0.7 * t1**1.3), math.exp(-1.6 * t2**0.8)
    f1 = 1.3 * 0.7 * t1**0.3 * u
    f2 = 0.8 * 1.6 * t2**-0.2 * v
    c = 1 + th * (1 - 2 * u) * (1 - 2 * v)
    got = math.exp(lk.pattern_terms(params, t1, t2).log_f12[0])
    assert got == pytest.approx(c * f1 * f2, rel=1e-6)


def test_gumbel_small_theta_is_independence():
    data = generate(setting("S_A", n=50, seed=4))
    kw = dict(gamma=0.6, p1=0.5, p2=0.4, R=1.5, a1=1.0, r1=1.2, a2=1.1, r2=1.7)
    g = lk.loglik(ModelParams.build("gumbel", theta=1e-9, **kw), data)
    i = lk.loglik(ModelParams.build("independence", **kw), data)
    assert abs(g - i) < 1e-6


def test_single_censored_row_is_log_survival():
    params = ModelParams.build("fgm", theta=0.3, gamma=1.2, p1=0.3, p2=0.7, R=4.0, a1=1.2, r1=0.5, a2=0.6, r2=2.0)
    data = BivariateDataset([1.3], [0.4], [0], [0])
    S = joint_survival(params, params.cells(), 1.3, 0.4)
    assert lk.loglik(params, data) == pytest.approx(math.log(S), rel=1e-13)


def test_loglik_is_sum_of_rows(sa_data):
    params = ModelParams.build("gumbel", theta=1.0, gamma=0.5, p1=0.6, p2=0.4, R=2.0, a1=1.0, r1=1.5, a2=1.0, r2=2.0)
    rows = lk.loglik_rows(params, sa_data)
    assert rows.shape == (sa_data.n,)
    assert lk.loglik(params, sa_data) == pytest.approx(rows.sum(), rel=1e-14)


def test_double_event_term_unused_without_double_events(sa_data, monkeypatch):
    keep = np.flatnonzero(sa_data.d1 * sa_data.d2 == 0)
    data = sa_data.subset(keep)
    assert data.d12_total == 0
    params = ModelParams.build("gumbel", theta=1.0, gamma=0.5, p1=0.6, p2=0.4, R=2.0, a1=1.0, r1=1.5, a2=1.0, r2=2.0)
    before = lk.loglik(params, data)

    def boom(*args, **kwargs):
        raise AssertionError("double-event kernel evaluated")

    monkeypatch.setattr(lk, "log_kernel_d12", boom)
    assert lk.loglik(params, data) == before
    with pytest.raises(AssertionError):
        lk.loglik(params, sa_data)


def test_continuity_at_one():
    data = generate(setting("S_A", n=100, seed=8))
    kw = dict(theta=1.2, gamma=0.5, p1=0.55, p2=0.35, a1=1.0, r1=1.5, a2=1.0, r2=2.0)
    at_one = lk.loglik(ModelParams.build("gumbel", R=1.0, **kw), data)
    for r in (1 - 1e-6, 1 + 1e-6):
        assert abs(lk.loglik(ModelParams.build("gumbel", R=r, **kw), data) - at_one) < 1e-4


def test_infinite_odds_is_the_limit_of_large_R():
    data = generate(setting("S_A", R=1e6, n=100, seed=9))
    # discordant cells shrink like R^(-1/2), so R must be very large
    kw = dict(theta=1.2, gamma=0.5, p1=0.45, p2=0.45, a1=1.0, r1=1.5, a2=1.0, r2=2.0)
    inf = lk.loglik(ModelParams.build("gumbel", R=math.inf, **kw), data)
    big = lk.loglik(ModelParams.build("gumbel", R=1e20, **kw), data)
    assert math.isfinite(inf)
    assert big == pytest.approx(inf, abs=1e-4)


def test_nonfinite_gives_minus_inf_sentinel():
    data = BivariateDataset([1.0, 2.0], [1.0, 0.5], [1, 1], [1, 0])
    params = ModelParams.build("fgm", theta=0.5, gamma=1e300, p1=0.5, p2=0.5, a1=1e3, r1=1e300, a2=1.0, r2=1.0)
    value = lk.loglik(params, data)
    assert value == -math.inf or math.isfinite(value)


def test_shape_mismatch(cov_data):
    params = ModelParams.build("gumbel", theta=1.0, gamma=0.5, beta1=(0.1, 0.2, 0.3), beta2=(0.1, 0.2), R=2.0)
    with pytest.raises(ShapeError):
        lk.loglik(params, cov_data)


def test_gradient_matches_richer_difference(rng):
    data = generate(setting("S_A", n=100, seed=12))
    layout = ParamLayout("gumbel", "gt1")
    z = layout.unconstrained([1.5, 0.6, 2.5, 1.1, 1.3, 0.9, 2.2, 0.55, 0.45])
    params = layout.to_params(z)
    grad = lk.loglik_gradient(params, data)
    f = lambda x: float(lk.loglik_batch(layout, x[None, :], data)[0])  # noqa: E731
    for _ in range(3):
        u = rng.normal(size=z.size)
        u /= np.linalg.norm(u)
        # Richardson extrapolation of two central differences
        d = lambda h: (f(z + h * u) - f(z - h * u)) / (2 * h)  # noqa: E731
        rich = (4 * d(1e-4) - d(2e-4)) / 3
        assert grad @ u == pytest.approx(rich, rel=1e-4)


def test_zero_covariate_column_leaves_gradient_unchanged(cov_data):
    zero = BivariateDataset(cov_data.t1, cov_data.t2, cov_data.d1, cov_data.d2,
                            np.column_stack([cov_data.x1, np.zeros(cov_data.n)]),
                            np.column_stack([cov_data.x2, np.zeros(cov_data.n)]), (("x", "z"), ("x", "z")))
    kw = dict(theta=1.3, gamma=0.6, R=2.0, a1=1.1, r1=1.4, a2=0.9, r2=1.8)
    p_small = ModelParams.build("gumbel", beta1=(0.8, -0.6), beta2=(-0.7, 1.1), covariate_names=cov_data.covariate_names, **kw)
    p_big = ModelParams.build("gumbel", beta1=(0.8, -0.6, 0.0), beta2=(-0.7, 1.1, 0.0),
                              covariate_names=zero.covariate_names, **kw)
    g_small = lk.loglik_gradient(p_small, cov_data)
    g_big = lk.loglik_gradient(p_big, zero)
    names = ParamLayout.for_data("gumbel", "gt1", zero).names
    keep = [i for i, n in enumerate(names) if not n.endswith("_z")]
    assert np.max(np.abs(g_big[keep] - g_small)) < 1e-8
