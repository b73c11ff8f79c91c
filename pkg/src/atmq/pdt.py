"""Probability distributions of transmittance (PDTs).

Each model exposes ``pdf``, ``cdf``, inverse-CDF sampling and
``integrate(f) = int_0^1 f(eta) P(eta) deta`` evaluated by a quadrature
suited to the family.  Families:

``lognormal``        truncated log-normal fitted to two moments
``wandering``        log-negative Weibull law of a wandering Gaussian beam
``elliptic``         empirical law of the elliptic-beam transmittance
``total_prob_LN``    mixture of truncated log-normals over the centroid offset
``total_prob_Beta``  mixture of Beta laws over the centroid offset
``beta``             Beta law fitted to two moments
``empirical``        sample-based step CDF
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from .errors import ModelInapplicableError, NumericalError
from .sampling import SampleSet, semiaxis_angle, wandering_variance
from .special import gauss_legendre, lambertw_exp, weibull_shape_scale

_SQRT2 = math.sqrt(2.0)


# inputs -----------------------------------------------------------------------


@dataclass(frozen=True)
class MomentPair:
    """First two moments of the transmittance, ``m1 = <eta>`` and ``m2 = <eta^2>``."""

    m1: float
    m2: float

    def __post_init__(self):
        if not 0.0 < self.m1 <= 1.0:
            raise ModelInapplicableError(f"need 0 < <eta> <= 1, got {self.m1}")
        if not self.m2 > self.m1**2:
            raise ModelInapplicableError(
                f"degenerate moments: <eta^2>={self.m2} does not exceed <eta>^2={self.m1**2}"
            )
        if self.m2 > self.m1:
            raise ModelInapplicableError(
                f"invalid moments: <eta^2>={self.m2} exceeds <eta>={self.m1}, impossible for eta in [0, 1]"
            )

    @classmethod
    def from_samples(cls, eta) -> "MomentPair":
        eta = np.asarray(eta, dtype=float)
        return cls(float(eta.mean()), float(np.mean(eta * eta)))

    @property
    def variance(self) -> float:
        return self.m2 - self.m1**2


@dataclass(frozen=True)
class BeamGeometry:
    aperture_radius: float
    short_term_width: float
    wandering_std: float

    def __post_init__(self):
        if not (self.aperture_radius > 0 and self.short_term_width > 0):
            raise ModelInapplicableError("aperture radius and short-term width must be positive")
        if not self.wandering_std >= 0:
            raise ModelInapplicableError("wandering std must be non-negative")

    @property
    def eta0(self) -> float:
        return -math.expm1(-2.0 * (self.aperture_radius / self.short_term_width) ** 2)

    def weibull(self):
        """``(shape, scale)`` of the log-negative Weibull law at ``zeta = 2 / W_ST``."""
        shape, scale = weibull_shape_scale(self.aperture_radius, 2.0 / self.short_term_width)
        return float(shape), float(scale)


# models -------------------------------------------------------------------------


class PdtModel:
    family = "model"

    def pdf(self, eta):
        raise NotImplementedError

    def cdf(self, eta):
        raise NotImplementedError

    def ppf(self, u):
        raise NotImplementedError

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return self.ppf(rng.random(n))

    def integrate(self, f) -> float:
        raise NotImplementedError

    def moment(self, k: int) -> float:
        return self.integrate(lambda e: e**k)

    def normalization(self) -> float:
        return self.integrate(lambda e: np.ones_like(e))

    @property
    def params(self) -> dict:
        return {}


def _quad(f, a, b, **kw):
    val, err = integrate.quad(f, a, b, limit=400, epsabs=1e-15, epsrel=1e-10, **kw)
    if not np.isfinite(val):
        raise NumericalError("density quadrature did not converge")
    return val


class TruncatedLogNormal(PdtModel):
    """``ln eta ~ N(-mu, sigma^2)`` conditioned on ``eta <= 1``."""

    family = "lognormal"

    def __init__(self, mu: float, sigma: float):
        if not sigma > 0:
            raise ModelInapplicableError("log-normal width must be positive")
        self.mu = float(mu)
        self.sigma = float(sigma)
        self.log_norm = float(special.log_ndtr(self.mu / self.sigma))  # ln F(1)

    @property
    def params(self):
        return {"mu": self.mu, "sigma": self.sigma}

    def pdf(self, eta):
        eta = np.asarray(eta, dtype=float)
        out = np.zeros_like(eta)
        ok = (eta > 0) & (eta <= 1)
        z = (np.log(eta[ok]) + self.mu) / self.sigma
        out[ok] = np.exp(-0.5 * z * z - self.log_norm) / (math.sqrt(2 * math.pi) * self.sigma * eta[ok])
        return out

    def cdf(self, eta):
        eta = np.asarray(eta, dtype=float)
        with np.errstate(divide="ignore"):
            z = (np.log(np.clip(eta, 0.0, 1.0)) + self.mu) / self.sigma
        return np.where(eta >= 1, 1.0, np.exp(special.log_ndtr(z) - self.log_norm))

    def ppf(self, u):
        u = np.asarray(u, dtype=float)
        z = special.ndtri(u * math.exp(self.log_norm))
        return np.minimum(np.exp(self.sigma * z - self.mu), 1.0)

    def truncated_moment(self, k: int) -> float:
        """Closed form ``E[eta^k | eta <= 1]``."""
        s, m = self.sigma, self.mu
        return math.exp(-k * m + 0.5 * k * k * s * s + special.log_ndtr((m - k * s * s) / s) - self.log_norm)

    def untruncated_moment(self, k: int) -> float:
        return math.exp(-k * self.mu + 0.5 * k * k * self.sigma**2)

    def integrate(self, f):
        # in t = ln(eta), the density is a Gaussian cut at t = 0
        lo = -self.mu - 40.0 * self.sigma
        if lo >= 0:
            lo = -40.0 * self.sigma
        g = lambda t: f(math.exp(t)) * math.exp(-0.5 * ((t + self.mu) / self.sigma) ** 2)
        pts = [p for p in (-self.mu,) if lo < p < 0]
        val = _quad(g, lo, 0.0, points=pts or None)
        return val / (math.sqrt(2 * math.pi) * self.sigma) * math.exp(-self.log_norm)


def lognormal_from_moments(m: MomentPair) -> TruncatedLogNormal:
    mu = -math.log(m.m1**2 / math.sqrt(m.m2))
    sigma2 = math.log(m.m2 / m.m1**2)
    return TruncatedLogNormal(mu, math.sqrt(sigma2))


class BetaModel(PdtModel):
    family = "beta"

    def __init__(self, a: float, b: float):
        if not (a > 0 and b > 0):
            raise ModelInapplicableError(f"Beta parameters must be positive, got a={a}, b={b}")
        self.a = float(a)
        self.b = float(b)
        self.log_beta = float(special.betaln(a, b))

    @property
    def params(self):
        return {"a": self.a, "b": self.b}

    def pdf(self, eta):
        eta = np.asarray(eta, dtype=float)
        out = np.zeros_like(eta)
        ok = (eta > 0) & (eta < 1)
        e = eta[ok]
        out[ok] = np.exp((self.a - 1) * np.log(e) + (self.b - 1) * np.log1p(-e) - self.log_beta)
        return out

    def cdf(self, eta):
        return special.betainc(self.a, self.b, np.clip(np.asarray(eta, dtype=float), 0.0, 1.0))

    def ppf(self, u):
        return special.betaincinv(self.a, self.b, np.asarray(u, dtype=float))

    def exact_moment(self, k: int) -> float:
        return math.exp(special.betaln(self.a + k, self.b) - self.log_beta)

    def integrate(self, f):
        # split at the mean; endpoint singularities go into algebraic weights
        a1, b1 = self.a - 1.0, self.b - 1.0
        sa, sb = min(a1, 0.0), min(b1, 0.0)
        mid = self.a / (self.a + self.b)

        def part(pa, pb):
            def g(e):
                # QUADPACK may probe the endpoints, where p * log(0) means -inf for p > 0
                lead = (pa * math.log(e) if e > 0 else -math.inf) if pa else 0.0
                tail = (pb * math.log1p(-e) if e < 1 else -math.inf) if pb else 0.0
                return f(e) * math.exp(lead + tail - self.log_beta)

            return g

        left = _quad(part(a1 - sa, b1), 0.0, mid, weight="alg", wvar=(sa, 0.0))
        right = _quad(part(a1, b1 - sb), mid, 1.0, weight="alg", wvar=(0.0, sb))
        return left + right


def beta_from_moments(m: MomentPair) -> BetaModel:
    if m.m2 >= m.m1:
        raise ModelInapplicableError("invalid moments for a Beta law: <eta^2> must be below <eta>")
    a = (m.m1 - m.m2) / (m.m2 - m.m1**2) * m.m1
    return BetaModel(a, a * (1.0 / m.m1 - 1.0))


class LogNegativeWeibull(PdtModel):
    """Transmittance ``eta0 exp[-(r/scale)^shape]`` of a beam whose offset ``r`` is Rayleigh(sigma).

    Supported on ``(0, eta0]``; the density vanishes above ``eta0``.
    """

    family = "wandering"

    def __init__(self, eta0: float, shape: float, scale: float, sigma: float):
        if not 0 < eta0 <= 1:
            raise ModelInapplicableError(f"maximum transmittance must lie in (0, 1], got {eta0}")
        if not (shape > 0 and scale > 0 and sigma > 0):
            raise ModelInapplicableError("Weibull shape, scale and wandering std must be positive")
        self.eta0, self.shape, self.scale, self.sigma = float(eta0), float(shape), float(scale), float(sigma)
        self.c = self.scale**2 / (2.0 * self.sigma**2)

    @property
    def params(self):
        return {"eta0": self.eta0, "shape": self.shape, "scale": self.scale, "sigma_bw": self.sigma}

    def pdf(self, eta):
        eta = np.asarray(eta, dtype=float)
        out = np.zeros_like(eta)
        ok = (eta > 0) & (eta < self.eta0)
        s = np.log(self.eta0 / eta[ok])
        p = 2.0 / self.shape
        out[ok] = 2.0 * self.c / (eta[ok] * self.shape) * s ** (p - 1.0) * np.exp(-self.c * s**p)
        return out

    def cdf(self, eta):
        eta = np.asarray(eta, dtype=float)
        out = np.ones_like(eta)
        below = eta < self.eta0
        with np.errstate(divide="ignore"):
            s = np.log(self.eta0 / np.maximum(eta[below], 0.0))
        out[below] = np.exp(-self.c * s ** (2.0 / self.shape))
        return out

    def ppf(self, u):
        u = np.asarray(u, dtype=float)
        with np.errstate(divide="ignore"):
            s = (-np.log(u) / self.c) ** (self.shape / 2.0)
        return self.eta0 * np.exp(-s)

    def integrate(self, f):
        # eta = eta0 e^{-s}: P(eta) deta = (2c/shape) s^{2/shape - 1} exp(-c s^{2/shape}) ds
        p = 2.0 / self.shape
        s_max = (60.0 / self.c) ** (1.0 / p)
        g = lambda s: f(self.eta0 * math.exp(-s)) * math.exp(-self.c * s**p)
        val = _quad(g, 0.0, s_max, weight="alg", wvar=(p - 1.0, 0.0))
        return val * 2.0 * self.c / self.shape


class PointMass(PdtModel):
    def __init__(self, value: float, family: str = "point"):
        self.value = float(value)
        self.family = family

    @property
    def params(self):
        return {"value": self.value}

    def pdf(self, eta):
        return np.zeros_like(np.asarray(eta, dtype=float))

    def cdf(self, eta):
        return np.where(np.asarray(eta, dtype=float) >= self.value, 1.0, 0.0)

    def ppf(self, u):
        return np.full_like(np.asarray(u, dtype=float), self.value)

    def integrate(self, f):
        return float(f(self.value))


def wandering_pdt(g: BeamGeometry) -> PdtModel:
    eta0 = g.eta0
    if not eta0 > 0:
        raise ModelInapplicableError("maximum transmittance is not positive")
    if g.wandering_std == 0:
        return PointMass(eta0, family="wandering")
    shape, scale = g.weibull()
    return LogNegativeWeibull(eta0, shape, scale, g.wandering_std)


class Mixture(PdtModel):
    """Finite mixture; ``weights`` sum to one."""

    def __init__(self, weights, components, family="mixture", nodes=None):
        w = np.asarray(weights, dtype=float)
        if np.any(w < 0) or not w.sum() > 0:
            raise ValueError("mixture weights must be non-negative with positive sum")
        self.weights = w / w.sum()
        self.components = list(components)
        self.family = family
        self.nodes = None if nodes is None else np.asarray(nodes, dtype=float)

    @property
    def params(self):
        return {"components": len(self.components)}

    def pdf(self, eta):
        return sum(w * c.pdf(eta) for w, c in zip(self.weights, self.components))

    def cdf(self, eta):
        return sum(w * c.cdf(eta) for w, c in zip(self.weights, self.components))

    def ppf(self, u):
        # bisection on the monotone mixture CDF
        u = np.asarray(u, dtype=float)
        lo = np.zeros_like(u)
        hi = np.ones_like(u)
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            below = self.cdf(mid) < u
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        return hi

    def sample(self, n, rng):
        which = rng.choice(len(self.components), size=n, p=self.weights)
        out = np.empty(n)
        for j in np.unique(which):
            idx = which == j
            out[idx] = self.components[j].sample(int(idx.sum()), rng)
        return out

    def integrate(self, f):
        return float(sum(w * c.integrate(f) for w, c in zip(self.weights, self.components)))

    def moment(self, k):
        return float(sum(w * _component_moment(c, k) for w, c in zip(self.weights, self.components)))


def _component_moment(model, k):
    if isinstance(model, TruncatedLogNormal):
        return model.truncated_moment(k)
    if isinstance(model, BetaModel):
        return model.exact_moment(k)
    return model.moment(k)


class EmpiricalPdt(PdtModel):
    """Step CDF of a sample with a Freedman-Diaconis histogram density."""

    def __init__(self, samples, family="empirical"):
        s = np.sort(np.asarray(samples, dtype=float).ravel())
        if s.size == 0:
            raise ValueError("empirical PDT needs at least one sample")
        self.samples = s
        self.family = family
        self._hist = None

    @property
    def params(self):
        return {"n": int(self.samples.size)}

    def cdf(self, eta):
        return np.searchsorted(self.samples, np.asarray(eta, dtype=float), side="right") / self.samples.size

    def ppf(self, u):
        u = np.asarray(u, dtype=float)
        idx = np.clip(np.ceil(u * self.samples.size).astype(int) - 1, 0, self.samples.size - 1)
        return self.samples[idx]

    def histogram(self):
        if self._hist is None:
            s = self.samples
            lo, hi = float(s[0]), float(s[-1])
            if hi - lo <= 0:
                lo, hi = lo - 0.5e-6, hi + 0.5e-6
            iqr = float(np.subtract(*np.percentile(s, [75, 25])))
            width = 2.0 * iqr / s.size ** (1.0 / 3.0)
            bins = int(np.ceil((hi - lo) / width)) if width > 0 else 16
            bins = min(max(bins, 16), 512)
            dens, edges = np.histogram(s, bins=bins, range=(lo, hi), density=True)
            self._hist = (dens, edges)
        return self._hist

    def pdf(self, eta):
        dens, edges = self.histogram()
        eta = np.asarray(eta, dtype=float)
        idx = np.searchsorted(edges, eta, side="right") - 1
        idx = np.where(eta == edges[-1], len(dens) - 1, idx)
        ok = (idx >= 0) & (idx < len(dens))
        return np.where(ok, dens[np.clip(idx, 0, len(dens) - 1)], 0.0)

    def integrate(self, f):
        return float(np.mean(f(self.samples)))

    def normalization(self):
        dens, edges = self.histogram()
        return float(np.sum(dens * np.diff(edges)))


def empirical_pdt(samples) -> EmpiricalPdt:
    return EmpiricalPdt(samples)


# total probability -------------------------------------------------------------


@dataclass(frozen=True)
class ConditionalMoments:
    """Moments of the transmittance for an aperture displaced by ``offsets`` from the centroid."""

    offsets: np.ndarray
    m1: np.ndarray
    m2: np.ndarray

    def at(self, r):
        r = np.asarray(r, dtype=float)
        if np.any(r > self.offsets[-1] * (1 + 1e-12)) or np.any(r < 0):
            raise ModelInapplicableError(
                f"offset {float(np.max(r)):.4g} m lies outside the conditional grid [0, {self.offsets[-1]:.4g}] m"
            )
        return np.interp(r, self.offsets, self.m1), np.interp(r, self.offsets, self.m2)


MAX_SKIPPED = 0.01


def conditional_moments(sample_set: SampleSet, aperture: int, r0_grid=None) -> ConditionalMoments:
    """Conditional moments from the run-time accumulators, optionally interpolated to ``r0_grid``."""
    sums = sample_set.cond_sum[aperture]
    count = sample_set.cond_count[aperture]
    offsets = np.asarray(sample_set.offsets, dtype=float)
    expected = len(sample_set) * sample_set.config.conditional.directions
    r_max = offsets[-1] if r0_grid is None else float(np.max(r0_grid))
    used = offsets <= r_max
    upper = np.searchsorted(offsets, r_max)
    if upper < len(offsets):
        used[upper] = True
    skipped = 1.0 - count / expected
    bad = used & (skipped > MAX_SKIPPED)
    if np.any(bad):
        j = int(np.argmax(bad))
        raise ModelInapplicableError(
            f"offset r0={offsets[j]:.4g} m: {skipped[j]:.1%} of displaced apertures left the grid"
        )
    with np.errstate(invalid="ignore", divide="ignore"):
        m1 = sums[:, 0] / count
        m2 = sums[:, 1] / count
    cond = ConditionalMoments(offsets[used], m1[used], m2[used])
    if r0_grid is None:
        return cond
    r = np.asarray(r0_grid, dtype=float)
    a, b = cond.at(r)
    return ConditionalMoments(r, a, b)


def _family_builder(family):
    if family in ("lognormal", "LN", "total_prob_LN"):
        return lognormal_from_moments, "total_prob_LN"
    if family in ("beta", "Beta", "total_prob_Beta"):
        return beta_from_moments, "total_prob_Beta"
    raise ValueError(f"unknown conditional family {family!r}; use 'lognormal' or 'beta'")


def _mixture(radii, weights, m1, m2, family):
    build, tag = _family_builder(family)
    comps = []
    for r, a, b in zip(radii, m1, m2):
        try:
            comps.append(build(MomentPair(float(a), float(b))))
        except ModelInapplicableError as exc:
            raise ModelInapplicableError(f"conditional moments at r0={r:.4g} m: {exc}") from exc
    return Mixture(weights, comps, tag, nodes=radii)


def total_probability_pdt(cond: ConditionalMoments, sigma_bw: float, family: str, nodes: int = 24) -> Mixture:
    """Mixture over the Rayleigh-distributed centroid offset ``r0``.

    Gauss-Legendre nodes on ``[0, 5 sigma_bw]``; weights are the Rayleigh
    density times the quadrature weights, renormalized to one.
    """
    if sigma_bw == 0:
        m1, m2 = cond.at([0.0])
        return _mixture([0.0], [1.0], m1, m2, family)
    r_max = 5.0 * sigma_bw
    if cond.offsets[-1] < r_max * (1 - 1e-9):
        raise ModelInapplicableError(
            f"conditional moments reach {cond.offsets[-1]:.4g} m but 5 sigma_bw = {r_max:.4g} m is needed"
        )
    t, w = gauss_legendre(nodes)
    r = r_max * t
    weights = w * r / sigma_bw**2 * np.exp(-0.5 * (r / sigma_bw) ** 2)
    m1, m2 = cond.at(r)
    return _mixture(r, weights, m1, m2, family)


_U_PANELS = (0.0, 3.0, 6.0, 10.0)


def weak_wandering_coefficients(m: MomentPair, g: BeamGeometry):
    """``(eta0, h0^2, shape, scale)`` for the weak-wandering conditional moments."""
    shape, scale = g.weibull()
    ratio = g.wandering_std / scale

    def denom(k):
        f = lambda u: u * math.exp(-0.5 * u * u - k * (ratio * u) ** shape)
        val, err = integrate.quad(f, 0.0, _U_PANELS[-1], points=_U_PANELS[1:-1], epsrel=1e-10, epsabs=0, limit=200)
        if not val > 0 or err > 1e-8 * val:
            raise NumericalError(f"weak-wandering normalization quadrature failed (value {val}, error {err})")
        return val

    return m.m1 / denom(1), m.m2 / denom(2), shape, scale


def total_probability_weak_wandering(m: MomentPair, g: BeamGeometry, family: str, order: int = 32) -> Mixture:
    """Total-probability PDT with Weibull-shaped conditional moments fixed by ``m``."""
    eta0, h02, shape, scale = weak_wandering_coefficients(m, g)
    if g.wandering_std == 0:
        return _mixture([0.0], [1.0], [m.m1], [m.m2], family)
    t, w = gauss_legendre(order)
    edges = np.asarray(_U_PANELS)
    u = (edges[:-1, None] + np.diff(edges)[:, None] * t).ravel()
    wu = (np.diff(edges)[:, None] * w).ravel() * u * np.exp(-0.5 * u * u)
    r = g.wandering_std * u
    decay = (r / scale) ** shape
    return _mixture(r, wu, eta0 * np.exp(-decay), h02 * np.exp(-2.0 * decay), family)


# elliptic beams -----------------------------------------------------------------


def _elliptic_max_transmittance(R, w1sq, w2sq):
    w1 = np.sqrt(w1sq)
    w2 = np.sqrt(w2sq)
    inv1, inv2 = 1.0 / w1sq, 1.0 / w2sq
    a = R * R * np.abs(inv1 - inv2)
    b = R * R * (inv1 + inv2)
    first = special.i0e(a) * np.exp(a - b)
    circ = np.abs(w1 - w2) < 1e-6 * np.maximum(w1, w2)
    # circular entries get a harmless placeholder and are replaced below
    dz = np.where(circ, 1.0 / R, np.abs(1.0 / w1 - 1.0 / w2))
    gap = np.where(circ, 1.0, np.abs(w1 - w2))
    bracket = -np.expm1(-0.5 * R * R * dz * dz)
    shape, scale = weibull_shape_scale(R, dz)
    expo = np.minimum(shape * np.log(R * (w1 + w2) / gap / scale), 700.0)
    third = 2.0 * bracket * np.exp(-np.exp(expo))
    out = 1.0 - first - third
    circular = -np.expm1(-2.0 * R * R / np.where(circ, w1sq, 1.0))
    return np.where(circ, circular, out)


def effective_width_sq(R, w1sq, w2sq, angle):
    """``W_eff^2`` along direction ``angle`` measured from the ``W1`` axis."""
    inv1, inv2 = 1.0 / w1sq, 1.0 / w2sq
    log_z = (
        np.log(4.0 * R * R / np.sqrt(w1sq * w2sq))
        + 2.0 * R * R * (inv1 + inv2)
        + R * R * (inv1 - inv2) * np.cos(2.0 * angle)
    )
    return 4.0 * R * R / lambertw_exp(log_z)


def elliptic_transmittance(x0, y0, theta1, theta2, phi, W0, aperture_radius):
    """Approximate transmittance of an elliptic Gaussian beam through a centred aperture.

    ``theta_i = ln(W_i^2 / W0^2)``; ``phi`` is the angle of the ``W1`` axis to
    ``x`` and the centroid direction is ``atan2(y0, x0)``.
    """
    x0, y0, theta1, theta2, phi = np.broadcast_arrays(
        *(np.asarray(v, dtype=float) for v in (x0, y0, theta1, theta2, phi))
    )
    R = float(aperture_radius)
    w1sq = W0 * W0 * np.exp(theta1)
    w2sq = W0 * W0 * np.exp(theta2)
    r0 = np.hypot(x0, y0)
    chi = np.arctan2(y0, x0)
    eta_max = _elliptic_max_transmittance(R, w1sq, w2sq)
    weff2 = effective_width_sq(R, w1sq, w2sq, phi - chi)
    shape, scale = weibull_shape_scale(R, 2.0 / np.sqrt(weff2))
    with np.errstate(divide="ignore"):
        decay = np.exp(shape * np.log(r0 / scale))
    return np.clip(eta_max * np.exp(-decay), 0.0, 1.0)


def elliptic_disc_transmittance(x0, y0, sxx, sxy, syy, aperture_radius, order: int = 256):
    """Exact power of the Gaussian ``2/(pi sqrt(det S)) exp[-2 (r-r0)^T S^-1 (r-r0)]`` in a centred disc.

    The inner integral along ``y`` is an error-function difference; the outer
    one uses Gauss-Legendre nodes in ``x = R sin t``.
    """
    x0, y0, sxx, sxy, syy = (np.asarray(v, dtype=float)[..., None] for v in (x0, y0, sxx, sxy, syy))
    R = float(aperture_radius)
    det = sxx * syy - sxy * sxy
    qa, qb, qc = syy / det, -sxy / det, sxx / det
    t, w = gauss_legendre(order)
    ang = math.pi * (t - 0.5)
    x = R * np.sin(ang)
    half = R * np.cos(ang)
    dx = x - x0
    shift = y0 - qb * dx / qc
    s = np.sqrt(2.0 * qc)
    inner = 0.5 * (special.erf(s * (half - shift)) - special.erf(s * (-half - shift)))
    pref = 2.0 / (math.pi * np.sqrt(det)) * np.sqrt(math.pi / (2.0 * qc))
    outer = pref * np.exp(-2.0 * (qa - qb * qb / qc) * dx * dx) * inner
    val = np.sum(outer * half * w, axis=-1) * math.pi
    return np.clip(val, 0.0, 1.0)


@dataclass(frozen=True)
class EllipticParams:
    mean: np.ndarray  # (0, 0, <Theta1>, <Theta2>)
    cov: np.ndarray  # 4x4
    W0: float
    aperture_radius: float


def elliptic_params_from_samples(sample_set: SampleSet, aperture: int, W0: float | None = None) -> EllipticParams:
    """Gaussian statistics of ``(x0, y0, Theta1, Theta2)`` from sample moments of ``W_i^2``."""
    W0 = sample_set.config.beam.W0 if W0 is None else float(W0)
    w = np.stack([sample_set.column("W1sq"), sample_set.column("W2sq")])
    mean_w = w.mean(axis=1)
    cov_w = np.cov(w)
    theta_mean = np.log(mean_w / W0**2 / np.sqrt(1.0 + np.diag(cov_w) / mean_w**2))
    theta_cov = np.log1p(cov_w / np.outer(mean_w, mean_w))
    cov = np.zeros((4, 4))
    cov[:2, :2] = wandering_variance(sample_set) * np.eye(2)
    cov[2:, 2:] = theta_cov
    mean = np.array([0.0, 0.0, theta_mean[0], theta_mean[1]])
    return EllipticParams(mean, cov, W0, float(sample_set.radii[aperture]))


def elliptic_pdt_analytic(params: EllipticParams, n_draws: int, rng: np.random.Generator) -> EmpiricalPdt:
    if n_draws < 10_000:
        raise ValueError(f"need at least 10000 draws for a usable empirical law, got {n_draws}")
    cov = 0.5 * (params.cov + params.cov.T)
    evals, evecs = np.linalg.eigh(cov)
    tol = 1e-12 * max(1.0, float(np.abs(evals).max()))
    if evals.min() < -tol:
        raise ModelInapplicableError(f"covariance is not positive semidefinite (eigenvalue {evals.min():.4g})")
    root = evecs * np.sqrt(np.clip(evals, 0.0, None))
    v = params.mean + rng.standard_normal((n_draws, 4)) @ root.T
    phi = 0.5 * math.pi * rng.random(n_draws)
    eta = elliptic_transmittance(v[:, 0], v[:, 1], v[:, 2], v[:, 3], phi, params.W0, params.aperture_radius)
    return EmpiricalPdt(eta, family="elliptic")


def elliptic_semianalytic_samples(sample_set: SampleSet, aperture: int, method: str = "closed_form") -> np.ndarray:
    """Per-record transmittance of the elliptic Gaussian matched to the record's ``r0`` and ``S``.

    ``method="closed_form"`` uses the Lambert-W approximation of
    :func:`elliptic_transmittance`; ``"integral"`` integrates the elliptic
    Gaussian over the aperture exactly.
    """
    R = float(sample_set.radii[aperture])
    x0, y0 = sample_set.x0, sample_set.y0
    sxx, sxy, syy = sample_set.spot()
    if method == "integral":
        out = np.empty(len(x0))
        for s in range(0, len(x0), 4096):
            sl = slice(s, s + 4096)
            out[sl] = elliptic_disc_transmittance(x0[sl], y0[sl], sxx[sl], sxy[sl], syy[sl], R)
        return out
    if method == "closed_form":
        W0 = sample_set.config.beam.W0
        w1 = sample_set.column("W1sq")
        w2 = sample_set.column("W2sq")
        phi = semiaxis_angle(sxx, sxy, syy)
        return elliptic_transmittance(x0, y0, np.log(w1 / W0**2), np.log(w2 / W0**2), phi, W0, R)
    raise ValueError(f"unknown method {method!r}")


def elliptic_pdt_semianalytic(sample_set: SampleSet, aperture: int, method: str = "closed_form") -> EmpiricalPdt:
    return EmpiricalPdt(elliptic_semianalytic_samples(sample_set, aperture, method), family="elliptic_semianalytic")


# summaries -----------------------------------------------------------------------


def model_summary(model: PdtModel) -> str:
    """Canonical ``key=value`` text: family, parameters, moments, normalization."""
    lines = [f"family={model.family}"]
    for k in sorted(model.params):
        lines.append(f"param.{k}={_fmt(model.params[k])}")
    lines.append(f"m1={_fmt(model.moment(1))}")
    lines.append(f"m2={_fmt(model.moment(2))}")
    lines.append(f"normalization={_fmt(model.normalization())}")
    return "\n".join(lines) + "\n"


def _fmt(v):
    return f"{v:.12g}" if isinstance(v, float) else str(v)


__all__ = [
    "MomentPair",
    "BeamGeometry",
    "PdtModel",
    "TruncatedLogNormal",
    "BetaModel",
    "LogNegativeWeibull",
    "PointMass",
    "Mixture",
    "EmpiricalPdt",
    "ConditionalMoments",
    "EllipticParams",
    "lognormal_from_moments",
    "beta_from_moments",
    "wandering_pdt",
    "empirical_pdt",
    "conditional_moments",
    "total_probability_pdt",
    "total_probability_weak_wandering",
    "weak_wandering_coefficients",
    "elliptic_transmittance",
    "elliptic_disc_transmittance",
    "elliptic_params_from_samples",
    "elliptic_pdt_analytic",
    "elliptic_pdt_semianalytic",
    "elliptic_semianalytic_samples",
    "model_summary",
]
