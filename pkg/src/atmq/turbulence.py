"""Turbulence spectrum, phase spectral density and reference quantities."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .errors import ConfigError, NumericalError
from .special import gauss_legendre, log_panels, one_minus_j0


@dataclass(frozen=True)
class TurbulenceParams:
    """Modified von Karman-Tatarskii turbulence.

    ``cn2`` in m^(-2/3); ``l0`` (inner) and ``L0`` (outer) scales in m.
    ``cn2 == 0`` is accepted and describes vacuum.
    """

    cn2: float
    l0: float = 1e-3
    L0: float = 80.0

    def __post_init__(self):
        if not self.cn2 >= 0.0:
            raise ConfigError(f"cn2 must be non-negative, got {self.cn2}")
        if not 0.0 < self.l0 < self.L0:
            raise ConfigError(f"need 0 < l0 < L0, got l0={self.l0}, L0={self.L0}")


@dataclass(frozen=True)
class OpticalParams:
    wavelength: float

    def __post_init__(self):
        if not self.wavelength > 0.0:
            raise ConfigError(f"wavelength must be positive, got {self.wavelength}")

    @property
    def k(self) -> float:
        return 2.0 * math.pi / self.wavelength


def spectrum_phi_n(kappa, params: TurbulenceParams):
    """Refractive-index spectrum Phi_n(kappa) in m^3."""
    kappa = np.asarray(kappa, dtype=float)
    return (
        0.033
        * params.cn2
        * np.exp(-((kappa * params.l0 / (2.0 * math.pi)) ** 2))
        / (kappa**2 + params.L0**-2) ** (11.0 / 6.0)
    )


def phase_psd(kappa, params: TurbulenceParams, optics: OpticalParams, slab_length: float):
    """Power spectral density of a phase screen for a slab of length ``slab_length``."""
    return 2.0 * math.pi * slab_length * optics.k**2 * spectrum_phi_n(kappa, params)


def rytov_parameter(params: TurbulenceParams, optics: OpticalParams, z_ap: float) -> float:
    """Plane-wave Rytov variance ``1.23 Cn2 k^(7/6) z^(11/6)``."""
    if not z_ap > 0:
        raise ValueError("path length must be positive")
    return 1.23 * params.cn2 * optics.k ** (7.0 / 6.0) * z_ap ** (11.0 / 6.0)


def default_spectral_bounds(params: TurbulenceParams):
    """Default wave-number band ``[1/(15 L0), 2/l0]`` for sparse-spectrum screens."""
    return 1.0 / (15.0 * params.L0), 2.0 / params.l0


def _theory_band(params):
    return 1e-4 / params.L0, 10.0 / params.l0


def band_phase_variance(params, optics, slab_length, k_lo=None, k_hi=None) -> float:
    """``<phi^2> = 2 pi int kappa Phi_phi(kappa) dkappa`` over ``[k_lo, k_hi]``."""
    lo, hi = _theory_band(params)
    k_lo = lo if k_lo is None else k_lo
    k_hi = hi if k_hi is None else k_hi
    f = lambda k: 2.0 * math.pi * k * phase_psd(k, params, optics, slab_length)
    return _integrate_log(f, k_lo, k_hi)


def _integrate_log(f, lo, hi, rtol=1e-8):
    # integrate in ln(kappa); integrand is smooth there
    g = lambda t: f(math.exp(t)) * math.exp(t)
    val, err = integrate.quad(g, math.log(lo), math.log(hi), limit=500, epsrel=rtol, epsabs=0.0)
    if not np.isfinite(val) or err > max(10 * rtol * abs(val), 1e-300):
        raise NumericalError(f"quadrature did not converge: value={val}, error={err}")
    return val


def structure_function_theory(delta_r, params, optics, slab_length):
    """Phase-structure function ``D(dr) = 4 pi int kappa Phi_phi [1 - J0(kappa dr)] dkappa``.

    Integration runs over ``[1e-4/L0, 10/l0]``.  Low wave numbers are handled
    on logarithmic panels; above ``4/dr`` the Bessel oscillation is resolved
    on linear panels until its envelope no longer matters, after which only
    the non-oscillating part is integrated.
    """
    scalar = np.ndim(delta_r) == 0
    drs = np.atleast_1d(np.asarray(delta_r, dtype=float))
    if np.any(drs < 0):
        raise ValueError("separations must be non-negative")
    lo, hi = _theory_band(params)
    g = lambda k: k * phase_psd(k, params, optics, slab_length)
    out = np.empty_like(drs)
    t16, w16 = gauss_legendre(16)
    for i, dr in enumerate(drs):
        if dr == 0.0:
            out[i] = 0.0
            continue
        k_osc = min(hi, 4.0 / dr)
        edges = log_panels(lo, k_osc, 0.05) if k_osc > lo else np.array([lo, lo])
        acc = 0.0
        if k_osc > lo:
            a = edges[:-1, None]
            h = np.diff(edges)[:, None]
            nodes = a + h * t16
            acc += np.sum(g(nodes) * one_minus_j0(nodes * dr) * h * w16)
        k = k_osc
        if k < hi:
            # linear panels, two per Bessel period, until the J0 envelope is negligible
            width = math.pi / dr
            gk_ref = acc + 1e-300
            chunk = 64 * width
            while k < hi:
                kk = min(hi, k + chunk)
                chunk *= 2.0
                e = np.linspace(k, kk, int(math.ceil((kk - k) / width)) + 1)
                a = e[:-1, None]
                h = np.diff(e)[:, None]
                nodes = a + h * t16
                acc += np.sum(g(nodes) * one_minus_j0(nodes * dr) * h * w16)
                k = kk
                # remaining |J0| contribution bound: int_k^inf g * sqrt(2/(pi k dr))
                tail_g = _integrate_log(g, k, hi) if k < hi else 0.0
                if tail_g * math.sqrt(2.0 / (math.pi * k * dr)) < 1e-10 * gk_ref:
                    acc += tail_g
                    break
                gk_ref = acc
        out[i] = 4.0 * math.pi * acc
    return float(out[0]) if scalar else out


def phase_variance(params, optics, slab_length) -> float:
    """Full-band ``<phi^2>``; the structure function saturates to twice this."""
    return band_phase_variance(params, optics, slab_length)
