"""Special functions and quadrature helpers shared across the package.

Everything here is vectorised over numpy arrays.  Scaled Bessel functions
come from :mod:`scipy.special`; the wrappers below only add the
cancellation-free small-argument branches and a log-domain Lambert W that
the transmittance formulas need.
"""
from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from scipy import special

# Below this argument the alternating series are used instead of the
# scaled Bessel functions (relative error of the series < 1e-15 here).
_SERIES_X = 0.5
_SERIES_TERMS = 30


@lru_cache(maxsize=None)
def _series_coefficients():
    # e^{-x} I0(x) = 1F1(1/2; 1; -2x) and e^{-x} I1(x) = (x/2) 1F1(3/2; 3; -2x)
    c0 = np.empty(_SERIES_TERMS)
    c1 = np.empty(_SERIES_TERMS)
    cexp = np.empty(_SERIES_TERMS)
    for j in range(_SERIES_TERMS):
        c0[j] = special.poch(0.5, j) / math.factorial(j) ** 2 * (-2.0) ** j
        c1[j] = special.poch(1.5, j) / (special.poch(3.0, j) * math.factorial(j)) * (-2.0) ** j
        cexp[j] = (-0.5) ** j / math.factorial(j)
    return c0, c1, cexp


def one_minus_i0e(x):
    """``1 - exp(-x) I0(x)`` for ``x >= 0`` without cancellation at small ``x``."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    small = x < _SERIES_X
    big = ~small
    out[big] = 1.0 - special.i0e(x[big])
    if np.any(small):
        c0, _, _ = _series_coefficients()
        xs = x[small]
        # drop the j=0 term (which is 1) and negate
        out[small] = -np.polynomial.polynomial.polyval(xs, np.r_[0.0, c0[1:]])
    return out


def i1e(x):
    """``exp(-x) I1(x)``."""
    return special.i1e(np.asarray(x, dtype=float))


def _log_ratio(x):
    """``ln[2 (1 - e^{-x/2}) / (1 - e^{-x} I0(x))]``, stable for small ``x``."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    small = x < _SERIES_X
    big = ~small
    xb = x[big]
    out[big] = np.log(-2.0 * np.expm1(-0.5 * xb) / one_minus_i0e(xb))
    if np.any(small):
        c0, _, cexp = _series_coefficients()
        xs = x[small]
        # 2(1 - e^{-x/2}) - (1 - e^{-x}I0) as a power series; the linear terms cancel
        diff = np.r_[0.0, -2.0 * cexp[1:] + c0[1:]]
        num = np.polynomial.polynomial.polyval(xs, diff)
        den = -np.polynomial.polynomial.polyval(xs, np.r_[0.0, c0[1:]])
        out[small] = np.log1p(num / den)
    return out


def weibull_shape_scale(aperture_radius, zeta):
    """Shape and scale of the log-negative Weibull transmittance law.

    ``zeta`` is an inverse beam width (``2/W`` for a circular beam of
    radius ``W``).  Returns ``(shape, scale)`` where ``scale`` carries the
    units of ``aperture_radius``.

    The maximum transmittance entering both expressions is the circular
    one at the same ``zeta``: ``1 - exp(-R^2 zeta^2 / 2)``.
    """
    R = float(aperture_radius)
    zeta = np.abs(np.asarray(zeta, dtype=float))
    x = (R * zeta) ** 2
    x = np.maximum(x, 1e-300)
    log_ratio = _log_ratio(x)
    small = x < _SERIES_X
    # 2x e^{-x}I1(x) / (1 - e^{-x}I0(x)); tends to 2 as x -> 0
    frac = np.empty_like(x)
    big = ~small
    frac[big] = 2.0 * x[big] * special.i1e(x[big]) / one_minus_i0e(x[big])
    if np.any(small):
        c0, c1, _ = _series_coefficients()
        xs = x[small]
        num = np.polynomial.polynomial.polyval(xs, c1)  # (e^{-x}I1)/(x/2)
        den = -np.polynomial.polynomial.polyval(xs, np.r_[c0[1:], 0.0])  # (1-e^{-x}I0)/x
        frac[small] = xs * num / den
    shape = frac / log_ratio
    scale = R * log_ratio ** (-1.0 / shape)
    return shape, scale


def lambertw_exp(log_z):
    """Principal Lambert W of ``exp(log_z)``, usable when ``exp`` would overflow."""
    log_z = np.asarray(log_z, dtype=float)
    out = np.empty_like(log_z)
    direct = log_z < 500.0
    out[direct] = special.lambertw(np.exp(log_z[direct])).real
    if np.any(~direct):
        L = log_z[~direct]
        w = L - np.log(L)
        for _ in range(50):
            step = (w + np.log(w) - L) / (1.0 + 1.0 / w)
            w = w - step
            if np.all(np.abs(step) <= 1e-15 * np.abs(w)):
                break
        out[~direct] = w
    return out


def one_minus_j0(x):
    """``1 - J0(x)``, series below ``x = 1e-2``."""
    x = np.asarray(x, dtype=float)
    out = 1.0 - special.j0(x)
    small = np.abs(x) < 1e-2
    xs = x[small] ** 2
    out[small] = xs / 4.0 - xs**2 / 64.0 + xs**3 / 2304.0
    return out


@lru_cache(maxsize=None)
def gauss_legendre(n):
    """Gauss-Legendre nodes and weights on ``[0, 1]``."""
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def panel_quadrature(f, edges, order=16):
    """Fixed-order Gauss-Legendre over consecutive panels ``edges``."""
    edges = np.asarray(edges, dtype=float)
    t, w = gauss_legendre(order)
    a = edges[:-1, None]
    h = np.diff(edges)[:, None]
    nodes = a + h * t
    return float(np.sum(f(nodes) * h * w))


def log_panels(lo, hi, max_width=0.05):
    """Panel edges between ``lo`` and ``hi`` uniform in ``ln`` with bounded width."""
    n = max(1, int(math.ceil(math.log(hi / lo) / max_width)))
    return lo * np.exp(np.linspace(0.0, math.log(hi / lo), n + 1))
