import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from atmq.errors import ModelInapplicableError
from atmq.pdt import (
    BeamGeometry,
    BetaModel,
    ConditionalMoments,
    EllipticParams,
    EmpiricalPdt,
    Mixture,
    MomentPair,
    PointMass,
    TruncatedLogNormal,
    beta_from_moments,
    conditional_moments,
    effective_width_sq,
    elliptic_disc_transmittance,
    elliptic_pdt_analytic,
    elliptic_pdt_semianalytic,
    elliptic_semianalytic_samples,
    elliptic_transmittance,
    lognormal_from_moments,
    model_summary,
    total_probability_pdt,
    total_probability_weak_wandering,
    wandering_pdt,
    weak_wandering_coefficients,
)
from atmq.sampling import SampleSet
from atmq.stats import ks_statistic


# moment matching -----------------------------------------------------------------


def test_moment_pair_validation():
    with pytest.raises(ModelInapplicableError):
        MomentPair(0.0, 0.1)
    with pytest.raises(ModelInapplicableError):
        MomentPair(0.5, 0.25)  # zero variance
    with pytest.raises(ModelInapplicableError):
        MomentPair(0.5, 0.6)
    assert MomentPair.from_samples([0.2, 0.4]).m2 == pytest.approx(0.1)


def test_lognormal_hand_values():
    ln = lognormal_from_moments(MomentPair(0.5, 0.3))
    assert ln.mu == pytest.approx(0.784308, abs=1e-6)
    assert ln.sigma**2 == pytest.approx(math.log(1.2), rel=1e-12)
    assert ln.untruncated_moment(1) == pytest.approx(0.5, rel=1e-12)
    assert ln.untruncated_moment(2) == pytest.approx(0.3, rel=1e-12)


def test_beta_hand_values():
    b = beta_from_moments(MomentPair(0.5, 1.0 / 3.0))
    assert (b.a, b.b) == (pytest.approx(1.0), pytest.approx(1.0))
    b = beta_from_moments(MomentPair(0.5, 0.3))
    assert (b.a, b.b) == (pytest.approx(2.0), pytest.approx(2.0))
    assert b.cdf(np.array([0.5]))[0] == pytest.approx(0.5)


moments = st.tuples(st.floats(0.02, 0.98), st.floats(0.01, 0.95)).map(
    lambda t: (t[0], t[0] ** 2 + t[1] * (t[0] - t[0] ** 2))
)


@given(moments)
@settings(max_examples=40, deadline=None)
def test_beta_reproduces_moments(m):
    b = beta_from_moments(MomentPair(*m))
    assert b.exact_moment(1) == pytest.approx(m[0], rel=1e-10)
    assert b.exact_moment(2) == pytest.approx(m[1], rel=1e-10)
    assert b.moment(1) == pytest.approx(m[0], rel=1e-7)
    assert b.normalization() == pytest.approx(1.0, abs=1e-8)


@given(moments)
@settings(max_examples=40, deadline=None)
def test_lognormal_truncated_moments_match_quadrature(m):
    ln = lognormal_from_moments(MomentPair(*m))
    assert ln.normalization() == pytest.approx(1.0, abs=1e-8)
    for k in (1, 2):
        assert ln.moment(k) == pytest.approx(ln.truncated_moment(k), rel=1e-7, abs=1e-14)


def test_lognormal_truncation_small_when_mass_below_one():
    ln = TruncatedLogNormal(1.0, 0.3)
    assert math.exp(ln.log_norm) > 0.999
    assert abs(ln.truncated_moment(1) / ln.untruncated_moment(1) - 1) < 1e-3


# families ------------------------------------------------------------------------

GEOM = BeamGeometry(aperture_radius=0.02, short_term_width=0.025, wandering_std=0.01)

FAMILIES = {
    "lognormal": TruncatedLogNormal(0.6, 0.4),
    "beta": BetaModel(0.7, 3.0),
    "beta_wide": BetaModel(40.0, 9.0),
    "wandering": wandering_pdt(GEOM),
    "mixture": Mixture([0.3, 0.7], [BetaModel(2, 5), TruncatedLogNormal(0.2, 0.1)]),
}


@pytest.mark.parametrize("name", sorted(FAMILIES))
def test_normalized_and_monotone(name):
    model = FAMILIES[name]
    assert model.normalization() == pytest.approx(1.0, abs=1e-7)
    grid = np.linspace(0.0, 1.0, 401)
    c = model.cdf(grid)
    assert np.all(np.diff(c) >= -1e-14)
    assert c[-1] == pytest.approx(1.0, abs=1e-12)
    assert np.all(model.pdf(grid) >= 0)


@pytest.mark.parametrize("name", sorted(FAMILIES))
def test_ppf_inverts_cdf(name):
    model = FAMILIES[name]
    u = np.linspace(0.01, 0.99, 25)
    np.testing.assert_allclose(model.cdf(model.ppf(u)), u, atol=1e-9)


@pytest.mark.parametrize("name", sorted(FAMILIES))
def test_sampling_reproduces_moments(name, rng):
    model = FAMILIES[name]
    x = model.sample(100_000, rng)
    for k in (1, 2):
        se = np.std(x**k) / math.sqrt(x.size)
        assert abs(np.mean(x**k) - model.moment(k)) < 4 * se


def test_pdf_integrates_to_cdf():
    for model in (FAMILIES["lognormal"], FAMILIES["wandering"], FAMILIES["beta"]):
        from scipy.integrate import quad

        got = quad(lambda e: float(model.pdf(np.array([e]))[0]), 0.0, 0.3, limit=200, points=[1e-6])[0]
        assert got == pytest.approx(float(model.cdf(np.array([0.3]))[0]), abs=1e-6)


def test_wandering_support_and_monte_carlo_oracle(rng):
    model = FAMILIES["wandering"]
    eta0 = GEOM.eta0
    assert model.pdf(np.array([eta0 * 1.0001, 0.999]))[:].max() == 0.0
    r = GEOM.wandering_std * np.sqrt(-2.0 * np.log(rng.random(40_000)))
    shape, scale = GEOM.weibull()
    eta = eta0 * np.exp(-((r / scale) ** shape))
    assert ks_statistic(eta, model).d < 0.02


def test_wandering_zero_std_is_point_mass():
    g = BeamGeometry(0.02, 0.025, 0.0)
    m = wandering_pdt(g)
    assert isinstance(m, PointMass) and m.family == "wandering"
    assert m.moment(1) == pytest.approx(g.eta0)
    narrow = wandering_pdt(BeamGeometry(0.02, 0.025, 1e-6))
    assert narrow.moment(1) == pytest.approx(g.eta0, rel=1e-6)


def test_beta_singular_endpoints():
    b = BetaModel(0.3, 0.4)
    assert b.normalization() == pytest.approx(1.0, abs=1e-8)
    assert b.moment(1) == pytest.approx(b.exact_moment(1), rel=1e-8)


def test_empirical_model():
    e = EmpiricalPdt([0.3, 0.1, 0.2, 0.2])
    assert list(e.cdf(np.array([0.05, 0.1, 0.2, 0.3]))) == [0.0, 0.25, 0.75, 1.0]
    assert list(e.ppf(np.array([0.0, 0.25, 0.26, 1.0]))) == [0.1, 0.1, 0.2, 0.3]
    assert e.moment(1) == pytest.approx(0.2)
    assert e.normalization() == pytest.approx(1.0)
    const = EmpiricalPdt([0.4] * 10)
    assert const.normalization() == pytest.approx(1.0)
    with pytest.raises(ValueError):
        EmpiricalPdt([])


def test_model_summary_is_canonical():
    text = model_summary(BetaModel(2.0, 2.0))
    assert text.splitlines() == ["family=beta", "param.a=2", "param.b=2", "m1=0.5", "m2=0.3", "normalization=1"]


# total probability ---------------------------------------------------------------


def _cond():
    r = np.linspace(0.0, 0.06, 31)
    m1 = 0.8 * np.exp(-((r / 0.03) ** 2))
    return ConditionalMoments(r, m1, m1**2 * 1.05)


@pytest.mark.parametrize("family", ["lognormal", "beta"])
def test_total_probability_zero_std_limit(family):
    cond = _cond()
    mix = total_probability_pdt(cond, 0.0, family)
    assert len(mix.components) == 1
    comp = mix.components[0]
    m1 = comp.untruncated_moment(1) if family == "lognormal" else comp.exact_moment(1)
    assert m1 == pytest.approx(0.8, rel=1e-10)


@pytest.mark.parametrize("family", ["lognormal", "beta"])
def test_total_probability_mixture_moments(family):
    cond = _cond()
    sigma = 0.01
    mix = total_probability_pdt(cond, sigma, family, nodes=48)
    assert mix.family == ("total_prob_LN" if family == "lognormal" else "total_prob_Beta")
    from scipy.integrate import quad

    kinks = list(cond.offsets[cond.offsets < 5 * sigma])
    ref = quad(lambda r: r / sigma**2 * math.exp(-0.5 * (r / sigma) ** 2) * cond.at(r)[0], 0, 5 * sigma, points=kinks, limit=200)[0]
    ref /= 1 - math.exp(-12.5)
    if family == "lognormal":
        got = sum(w * c.untruncated_moment(1) for w, c in zip(mix.weights, mix.components))
    else:
        got = mix.moment(1)
    # Gauss-Legendre nodes across the kinks of the interpolated moments
    assert got == pytest.approx(ref, rel=1e-4)


def test_total_probability_needs_five_sigma():
    with pytest.raises(ModelInapplicableError, match="5 sigma_bw"):
        total_probability_pdt(_cond(), 0.02, "beta")
    with pytest.raises(ValueError):
        total_probability_pdt(_cond(), 0.01, "gamma")


def test_conditional_moments_skip_error_names_offset(small_set):
    s = small_set
    count = s.cond_count.copy()
    count[0, 2] *= 0.5
    broken = SampleSet(s.config, s.radii, s.offsets, s.records, s.mean_intensity, s.centroid_intensity, s.cond_sum, count)
    with pytest.raises(ModelInapplicableError, match=r"r0="):
        conditional_moments(broken, 0)
    ok = conditional_moments(s, 0, r0_grid=[0.0, s.offsets[1]])
    assert ok.m1[0] == pytest.approx(s.eta_tracked(0).mean())


@pytest.mark.parametrize("family", ["lognormal", "beta"])
def test_weak_wandering_reproduces_input_moments(family):
    m = MomentPair(0.6, 0.38)
    g = BeamGeometry(0.02, 0.025, 0.006)
    mix = total_probability_weak_wandering(m, g, family)
    if family == "beta":
        assert mix.moment(1) == pytest.approx(m.m1, rel=1e-10)
        assert mix.moment(2) == pytest.approx(m.m2, rel=1e-10)
    else:
        # untruncated component moments carry the input exactly
        m1 = sum(w * c.untruncated_moment(1) for w, c in zip(mix.weights, mix.components))
        m2 = sum(w * c.untruncated_moment(2) for w, c in zip(mix.weights, mix.components))
        assert m1 == pytest.approx(m.m1, rel=1e-10)
        assert m2 == pytest.approx(m.m2, rel=1e-10)
    eta0, h02, _, _ = weak_wandering_coefficients(m, g)
    assert eta0 > m.m1 and h02 > m.m2


# elliptic beams ------------------------------------------------------------------

R, W0 = 0.02, 0.02


def test_elliptic_circular_limit():
    w = 0.025
    th = math.log(w * w / W0 / W0)
    eta = elliptic_transmittance(0.0, 0.0, th, th, 0.3, W0, R)
    assert float(eta) == pytest.approx(-math.expm1(-2 * R * R / w / w), rel=1e-12)
    g = BeamGeometry(R, w, 0.01)
    shape, scale = g.weibull()
    for r0 in (0.005, 0.02, 0.04):
        got = float(elliptic_transmittance(r0, 0.0, th, th, 0.0, W0, R))
        assert got == pytest.approx(g.eta0 * math.exp(-((r0 / scale) ** shape)), rel=1e-9)
    assert float(effective_width_sq(R, w * w, w * w, 0.7)) == pytest.approx(w * w, rel=1e-12)


def test_elliptic_far_offset_is_dark():
    assert float(elliptic_transmittance(1.0, 0.5, 0.1, -0.2, 0.4, W0, R)) < 1e-12


@given(st.floats(0, 2 * math.pi), st.floats(-0.4, 0.4), st.floats(-0.4, 0.4), st.floats(0, 0.03))
@settings(max_examples=50, deadline=None)
def test_elliptic_rotation_invariance(alpha, t1, t2, r0):
    phi, chi = 0.3, 1.1
    a = elliptic_transmittance(r0 * math.cos(chi), r0 * math.sin(chi), t1, t2, phi, W0, R)
    b = elliptic_transmittance(r0 * math.cos(chi + alpha), r0 * math.sin(chi + alpha), t1, t2, phi + alpha, W0, R)
    assert float(a) == pytest.approx(float(b), rel=1e-9, abs=1e-14)


def test_elliptic_closed_form_against_exact_integral():
    rng = np.random.default_rng(4)
    n = 200
    t1 = rng.normal(0.3, 0.2, n)
    t2 = rng.normal(0.2, 0.2, n)
    phi = rng.uniform(0, math.pi / 2, n)
    x0, y0 = rng.normal(0, 0.008, (2, n))
    approx = elliptic_transmittance(x0, y0, t1, t2, phi, W0, R)
    w1, w2 = W0 * W0 * np.exp(t1), W0 * W0 * np.exp(t2)
    c, s = np.cos(phi), np.sin(phi)
    sxx = w1 * c * c + w2 * s * s
    syy = w1 * s * s + w2 * c * c
    sxy = (w1 - w2) * c * s
    exact = elliptic_disc_transmittance(x0, y0, sxx, sxy, syy, R)
    assert np.max(np.abs(approx - exact)) < 0.04


def test_disc_integral_centred_circle():
    w = 0.03
    assert float(elliptic_disc_transmittance(0.0, 0.0, w * w, 0.0, w * w, R)) == pytest.approx(-math.expm1(-2 * R * R / w / w), rel=1e-12)


def test_elliptic_analytic_errors_and_point_mass(rng):
    cov = np.zeros((4, 4))
    p = EllipticParams(np.array([0.0, 0.0, 0.2, 0.1]), cov, W0, R)
    law = elliptic_pdt_analytic(p, 10_000, rng)
    assert law.family == "elliptic" and np.ptp(law.samples) < 1e-9
    with pytest.raises(ValueError):
        elliptic_pdt_analytic(p, 100, rng)
    bad = cov.copy()
    bad[2, 2] = -1.0
    with pytest.raises(ModelInapplicableError):
        elliptic_pdt_analytic(EllipticParams(p.mean, bad, W0, R), 10_000, rng)


def test_semianalytic_methods_agree(small_set):
    closed = elliptic_semianalytic_samples(small_set, 1, "closed_form")
    exact = elliptic_semianalytic_samples(small_set, 1, "integral")
    assert np.max(np.abs(closed - exact)) < 0.03
    assert elliptic_pdt_semianalytic(small_set, 1).family == "elliptic_semianalytic"
    with pytest.raises(ValueError):
        elliptic_semianalytic_samples(small_set, 1, "bogus")


@pytest.mark.slow
def test_analytic_and_semianalytic_laws_agree(weak_desk_set):
    from atmq.pdt import elliptic_params_from_samples

    law = elliptic_pdt_analytic(elliptic_params_from_samples(weak_desk_set, 1), 100_000, np.random.default_rng(1))
    semi = elliptic_pdt_semianalytic(weak_desk_set, 1)
    assert ks_statistic(semi.samples, law).d < 0.05
