import numpy as np
import pytest
from scipy.optimize import brentq

from hjplast import autodiff as ad
from hjplast.matlib import (FictitiousElastic, J2Params, LinearElastic, LinearElasticParams,
                            MCCParams, ModifiedCamClay, SyntheticSurfaceParams,
                            fictitious_eval, hardening_transform, hardening_transform_graph,
                            j2_radial_return_oracle, j2_yield_radius, linear_elastic_eval,
                            mcc_eval, smoothed_hexagon, synthetic_surface)

RNG = np.random.default_rng(11)


def test_linear_zero_strain():
    r = linear_elastic_eval(0.0, 0.0)
    assert r.psi == r.p == r.q == r.D12 == 0.0
    assert r.D11 == pytest.approx(LinearElasticParams().K)


def test_linear_moduli():
    p = LinearElasticParams(2079.9, 0.3)
    assert p.G == pytest.approx(799.9615384615, rel=1e-12)
    assert p.K == pytest.approx(1733.25, rel=1e-12)


def test_linear_quadratic_scaling():
    ev, es = RNG.uniform(-0.05, 0.05, 20), RNG.uniform(0, 0.08, 20)
    np.testing.assert_allclose(linear_elastic_eval(2 * ev, 2 * es).psi,
                               4 * linear_elastic_eval(ev, es).psi, rtol=1e-14)


@pytest.mark.parametrize("bad", [dict(E=-1.0), dict(nu=0.5), dict(nu=-1.0)])
def test_linear_params_rejected(bad):
    with pytest.raises(ValueError):
        LinearElasticParams(**bad)


def test_mcc_reference_state():
    r = mcc_eval(0.0, 0.0)
    assert r.p == pytest.approx(-100.0)
    assert r.q == 0.0
    assert r.D22 == pytest.approx(1620.0)


def test_mcc_params_rejected():
    with pytest.raises(ValueError):
        MCCParams(xi_c=0.0)
    with pytest.raises(ValueError):
        MCCParams(c_mu=-1.0)


@pytest.mark.parametrize("law", [LinearElastic(), ModifiedCamClay(), FictitiousElastic()],
                         ids=lambda l: l.name)
def test_closed_forms_equal_autodiff(law):
    for ev, es in zip(RNG.uniform(-0.02, 0.02, 25), RNG.uniform(0, 0.02, 25)):
        r = law.eval(ev, es)
        v, g, H = ad.evaluate_with_hessian(law.psi_invariant, [ev, es])
        np.testing.assert_allclose(v, r.psi, rtol=1e-10)
        np.testing.assert_allclose(g, [r.p, r.q], rtol=1e-10, atol=1e-12)
        np.testing.assert_allclose(H, r.D, rtol=1e-10, atol=1e-9)


@pytest.mark.parametrize("law", [LinearElastic(), ModifiedCamClay(), FictitiousElastic()],
                         ids=lambda l: l.name)
def test_principal_energy_matches_invariant_energy(law):
    eps = RNG.normal(0, 0.01, 3)
    ev = eps.sum()
    e = eps - ev / 3
    es = np.sqrt(2 / 3 * e @ e)
    v, _ = ad.evaluate_with_gradient(law.psi_principal, list(eps))
    assert v == pytest.approx(float(law.eval(ev, es).psi), rel=1e-12)


def test_linear_principal_response_matches_autodiff():
    law = LinearElastic()
    eps = RNG.normal(0, 0.01, 3)
    psi, sig, D = law.principal_response(eps)
    v, g, H = ad.evaluate_with_hessian(law.psi_principal, list(eps))
    assert psi == pytest.approx(v, rel=1e-12)
    np.testing.assert_allclose(sig, g, rtol=1e-11)
    np.testing.assert_allclose(D, H, rtol=1e-11, atol=1e-9)


def test_fictitious_examples():
    K, G = 1733.25, 799.96
    r = fictitious_eval(0.01, 0.0, K, G)
    assert r.q == 0.0 and r.D22 == 0.0
    a, b = fictitious_eval(0.01, 0.03, K, G), fictitious_eval(0.01, 0.06, K, G)
    assert a.p == b.p == pytest.approx(K * 0.01)
    assert b.q == pytest.approx(8 * a.q, rel=1e-14)


# ---- J2 radial return


def test_radial_return_elastic_branch():
    sig = np.diag([10.0, -5.0, 2.0])
    r = j2_radial_return_oracle(sig, 0.0)
    assert not r.plastic and r.delta_gamma == 0.0
    np.testing.assert_array_equal(r.stress, sig)


def _deviator_with_q(q, p=0.0):
    d = np.array([2.0, -1.0, -1.0]) / np.sqrt(6.0)  # unit deviator, q = sqrt(3/2) |s|
    return p + q / np.sqrt(1.5) * d


def test_radial_return_on_surface():
    r = j2_radial_return_oracle(_deviator_with_q(100.0), 0.0)
    assert r.delta_gamma == pytest.approx(0.0, abs=1e-15)


def test_radial_return_hand_example():
    el_G = 800.0
    params, el = J2Params(100.0, 208.0), LinearElasticParams(E=2 * el_G * 1.3, nu=0.3)
    r = j2_radial_return_oracle(_deviator_with_q(150.0, p=-7.0), 0.0, params, el)
    # independent scalar oracle on the consistency condition
    dg = brentq(lambda g: 150.0 - 3 * el_G * g - (100.0 + 208.0 * g), 0.0, 1.0, xtol=1e-15)
    assert r.delta_gamma == pytest.approx(50.0 / 2608.0, rel=1e-12)
    assert r.delta_gamma == pytest.approx(dg, rel=1e-10)
    s = r.stress - np.trace(r.stress) / 3 * np.eye(3)
    assert np.sqrt(1.5) * np.linalg.norm(s) == pytest.approx(100.0 + 208.0 * dg, rel=1e-12)
    assert np.trace(r.stress) / 3 == pytest.approx(-7.0)


def test_radial_return_random_trials_land_on_surface():
    p, el = J2Params(), LinearElasticParams()
    for _ in range(200):
        sig = np.diag(RNG.normal(0, 150, 3))
        ebp = RNG.uniform(0, 0.2)
        r = j2_radial_return_oracle(sig, ebp)
        s = r.stress - np.trace(r.stress) / 3 * np.eye(3)
        q = np.sqrt(1.5) * np.linalg.norm(s)
        assert q - p.yield_stress(r.eps_bar_p) <= 1e-10 * p.sigma_y0
        assert r.delta_gamma >= 0.0


def test_yield_radius_conversion():
    p = J2Params()
    assert j2_yield_radius(0.0) == pytest.approx(np.sqrt(2 / 3) * p.sigma_y0)
    assert j2_yield_radius(0.3) == pytest.approx(np.sqrt(2 / 3) * (100 + p.H * np.sqrt(2 / 3) * 0.3))


# ---- hardening transforms


@pytest.mark.parametrize("variant", ["isotropic", "mixed", "fictitious"])
def test_transform_identity_at_zero(variant):
    rho, th = RNG.uniform(1, 100, 50), RNG.uniform(0, 2 * np.pi, 50)
    r, t = hardening_transform(rho, th, 0.0, variant)
    np.testing.assert_array_equal(r, rho)
    np.testing.assert_array_equal(t, th)


def test_isotropic_shift_angle_independent():
    th = RNG.uniform(0, 2 * np.pi, 30)
    r, _ = hardening_transform(80.0, th, 0.05)
    assert np.ptp(r) == 0.0


def test_mixed_shift_doubles_at_pi_over_six():
    iso, _ = hardening_transform(80.0, np.pi / 6, 0.05, "isotropic")
    mix, _ = hardening_transform(80.0, np.pi / 6, 0.05, "mixed")
    assert 80.0 - mix == pytest.approx(2 * (80.0 - iso), rel=1e-14)


def test_fictitious_transform_rejects_collapse():
    with pytest.raises(ValueError):
        hardening_transform(50.0, 0.0, 1.0, "fictitious")
    with pytest.raises(ValueError):
        hardening_transform(50.0, 0.0, -0.1)
    with pytest.raises(ValueError):
        hardening_transform(50.0, 0.0, 0.1, "kinematic")


@pytest.mark.parametrize("variant", ["isotropic", "mixed", "fictitious"])
def test_transform_graph_twin(variant):
    rho, th, e = 70.0, 1.1, 0.3
    r, _ = hardening_transform(rho, th, e, variant)
    v, _ = ad.evaluate_with_gradient(lambda x: hardening_transform_graph(x[0], x[1], x[2], variant),
                                     [rho, th, e])
    assert v == pytest.approx(r, rel=1e-14)


# ---- synthetic surface family


def test_hexagon_unit_mean():
    t = np.linspace(0, 2 * np.pi, 20000, endpoint=False)
    assert smoothed_hexagon(t).mean() == pytest.approx(1.0, rel=1e-6)
    np.testing.assert_allclose(smoothed_hexagon(t), smoothed_hexagon(t + np.pi / 3), rtol=1e-12)


def test_synthetic_limits():
    p = SyntheticSurfaceParams()
    t = RNG.uniform(0, 2 * np.pi, 40)
    np.testing.assert_allclose(synthetic_surface(t, p.xi_star), p.R0 + p.H_s * p.xi_star)
    np.testing.assert_allclose(synthetic_surface(t, 0.0), p.R0 * smoothed_hexagon(t))
    with pytest.raises(ValueError):
        synthetic_surface(0.0, -1.0)


def test_synthetic_convex_for_all_xi():
    p = SyntheticSurfaceParams()
    n = 10_000
    t = np.linspace(0, 2 * np.pi, n, endpoint=False)
    h = 2 * np.pi / n
    for xi in np.linspace(0, 2 * p.xi_star, 9):
        r = synthetic_surface(t, xi)
        assert r.min() > 0
        r1 = (np.roll(r, -1) - np.roll(r, 1)) / (2 * h)
        r2 = (np.roll(r, -1) - 2 * r + np.roll(r, 1)) / h ** 2
        curvature_sign = r ** 2 + 2 * r1 ** 2 - r * r2
        assert curvature_sign.min() >= -1e-6 * (r ** 2).max()
