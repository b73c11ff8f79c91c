import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats as sps

from atmq.pdt import BetaModel, EmpiricalPdt
from atmq.stats import (
    covariance_ellipse,
    ks_statistic,
    moment_summary,
    pearson,
    tangential_width,
    theta_rotation,
    write_table,
)


def test_ks_matches_scipy(rng):
    x = rng.beta(2, 3, 500)
    model = BetaModel(2.2, 3.0)
    ref = sps.kstest(x, lambda v: model.cdf(v)).statistic
    res = ks_statistic(x, model)
    assert res.d == pytest.approx(ref, rel=1e-12) and res.n_samples == 500
    assert res.kind == "empirical-vs-model"


def test_ks_two_sample_matches_scipy(rng):
    a, b = rng.random(300), rng.random(700) ** 1.2
    res = ks_statistic(a, EmpiricalPdt(b))
    assert res.d == pytest.approx(sps.ks_2samp(a, b).statistic, rel=1e-12)
    assert res.kind == "empirical-vs-empirical"


def test_ks_hand_value():
    # uniform law, samples at 0.5: ECDF jumps 0 -> 1 at the median
    assert ks_statistic([0.5], BetaModel(1, 1)).d == pytest.approx(0.5)
    with pytest.raises(ValueError):
        ks_statistic([], BetaModel(1, 1))


def test_pearson(rng):
    x = rng.normal(size=200)
    y = 0.5 * x + rng.normal(size=200)
    assert pearson(x, y) == pytest.approx(np.corrcoef(x, y)[0, 1], rel=1e-12)
    assert pearson(x, -2 * x) == pytest.approx(-1.0)
    with pytest.raises(ValueError):
        pearson(x, np.ones_like(x))
    with pytest.raises(ValueError):
        pearson([1.0], [2.0])


def test_moment_summary_matches_scipy(rng):
    x = rng.gamma(2.0, size=1000)
    s = moment_summary(x)
    assert s.skewness == pytest.approx(sps.skew(x), rel=1e-10)
    assert s.excess_kurtosis == pytest.approx(sps.kurtosis(x), rel=1e-10)
    assert s.variance == pytest.approx(np.var(x, ddof=1))
    with pytest.raises(ValueError):
        moment_summary([1.0, 1.0, 1.0, 1.0])


@given(st.lists(st.floats(-5, 5), min_size=1, max_size=20), st.lists(st.floats(-5, 5), min_size=1, max_size=20))
def test_theta_rotation_is_orthogonal(a, b):
    n = min(len(a), len(b))
    t1, t2 = np.array(a[:n]), np.array(b[:n])
    c, s = theta_rotation(t1, t2)
    np.testing.assert_allclose(c * c + s * s, t1 * t1 + t2 * t2, rtol=1e-12, atol=1e-12)


def test_covariance_ellipse(rng):
    cov = np.array([[2.0, 0.8], [0.8, 1.0]])
    v = rng.multivariate_normal([1.0, -1.0], cov, 20_000)
    e = covariance_ellipse(v[:, 0], v[:, 1], level=4.0)
    # chi-square with two degrees of freedom: P(q <= 4) = 1 - e^-2
    assert e.contains(v[:, 0], v[:, 1]).mean() == pytest.approx(1 - math.exp(-2), abs=0.01)
    pts = e.contour(50)
    d = pts - e.center
    q = np.einsum("ni,ij,nj->n", d, e.inverse, d)
    np.testing.assert_allclose(q, 4.0, rtol=1e-10)
    assert e.semi_axes[0] >= e.semi_axes[1]
    with pytest.raises(ValueError):
        covariance_ellipse(v[:, 0], 2 * v[:, 0])


def test_tangential_width_conventions():
    rec = SimpleNamespace(x0=0.0, y0=2.0, Sxx=4.0, Sxy=0.0, Syy=1.0)
    # printed convention: chi = atan(x0 / y0) = 0 picks the x axis
    assert tangential_width(rec, "printed") == (2.0, 2.0)
    w, r0 = tangential_width(rec, "radial")
    assert w == pytest.approx(1.0) and r0 == 2.0
    with pytest.raises(ValueError):
        tangential_width(SimpleNamespace(x0=0.0, y0=0.0, Sxx=1, Sxy=0, Syy=1))
    with pytest.raises(ValueError):
        tangential_width(rec, "diagonal")


def test_write_table(tmp_path):
    p = write_table(tmp_path / "t.csv", ["a", "b"], [[1, float("nan")], ["x", 0.25]], "demo v1")
    assert p.read_text().splitlines() == ["# demo v1", "a,b", "1,NA", "x,0.25"]
