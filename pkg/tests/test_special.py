import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special as sp

from atmq.pdt import elliptic_disc_transmittance
from atmq.special import (
    _log_ratio,
    gauss_legendre,
    i1e,
    lambertw_exp,
    one_minus_i0e,
    one_minus_j0,
    weibull_shape_scale,
)


def _mp_one_minus_i0e(x):
    mpmath.mp.dps = 40
    return float(1 - mpmath.exp(-x) * mpmath.besseli(0, x))


@pytest.mark.parametrize("x", [1e-12, 1e-6, 1e-3, 0.1, 0.49, 0.51, 2.0, 30.0, 700.0])
def test_one_minus_i0e_matches_high_precision(x):
    assert one_minus_i0e(np.array([x]))[0] == pytest.approx(_mp_one_minus_i0e(x), rel=1e-12)


def test_i1e_is_scaled_bessel():
    x = np.array([0.1, 1.0, 10.0])
    np.testing.assert_allclose(i1e(x), np.exp(-x) * sp.iv(1, x), rtol=1e-13)


def test_log_ratio_continuous_across_series_switch():
    x = np.array([0.5 - 1e-9, 0.5 + 1e-9])
    v = _log_ratio(x)
    assert abs(v[0] - v[1]) < 1e-8


@pytest.mark.parametrize("x", [1e-8, 1e-4, 0.3, 3.0])
def test_log_ratio_matches_high_precision(x):
    mpmath.mp.dps = 40
    ref = mpmath.log(2 * (1 - mpmath.exp(-x / 2)) / (1 - mpmath.exp(-x) * mpmath.besseli(0, x)))
    assert _log_ratio(np.array([x]))[0] == pytest.approx(float(ref), rel=1e-10)


@pytest.mark.parametrize("width", [0.5, 1.0, 2.0, 4.0])
def test_weibull_law_exact_at_aperture_edge(width):
    # shape and scale are fixed so that the law is exact when the offset equals the radius
    a = 1.0
    shape, scale = weibull_shape_scale(a, 2.0 / width)
    eta0 = 1 - math.exp(-2 * a * a / width**2)
    approx = eta0 * math.exp(-((a / scale) ** shape))
    exact = elliptic_disc_transmittance(a, 0.0, width**2, 0.0, width**2, a, order=512)
    assert approx == pytest.approx(float(exact), abs=1e-12)


@pytest.mark.parametrize("width", [0.5, 1.0, 2.0])
def test_weibull_law_close_to_exact_offset_transmittance(width):
    a = 1.0
    shape, scale = weibull_shape_scale(a, 2.0 / width)
    r = np.linspace(0, 3, 31)
    approx = (1 - math.exp(-2 / width**2)) * np.exp(-((r / scale) ** shape))
    exact = elliptic_disc_transmittance(r, 0 * r, width**2 + 0 * r, 0 * r, width**2 + 0 * r, a, order=512)
    assert np.max(np.abs(approx - exact)) < 0.015


def test_weibull_wide_beam_limit_is_gaussian_shape():
    shape, scale = weibull_shape_scale(1.0, 2.0 / 100.0)
    assert shape == pytest.approx(2.0, abs=1e-3)


@given(st.floats(-50, 450))
def test_lambertw_exp_matches_scipy(log_z):
    assert lambertw_exp(np.array([log_z]))[0] == pytest.approx(sp.lambertw(math.exp(log_z)).real, rel=1e-12)


@pytest.mark.parametrize("log_z", [600.0, 1e4, 1e8])
def test_lambertw_exp_large_argument_satisfies_defining_identity(log_z):
    w = lambertw_exp(np.array([log_z]))[0]
    assert w + math.log(w) == pytest.approx(log_z, rel=1e-14)


def test_one_minus_j0_series_and_direct_agree():
    x = np.array([1e-6, 5e-3, 9.99e-3, 1.001e-2, 1.0, 20.0])
    mpmath.mp.dps = 40
    ref = [float(1 - mpmath.besselj(0, v)) for v in x]
    np.testing.assert_allclose(one_minus_j0(x), ref, rtol=1e-10)


@settings(max_examples=30)
@given(st.integers(1, 30))
def test_gauss_legendre_integrates_polynomials_exactly(n):
    t, w = gauss_legendre(n)
    for deg in range(2 * n):
        assert np.sum(w * t**deg) == pytest.approx(1.0 / (deg + 1), rel=1e-12)
