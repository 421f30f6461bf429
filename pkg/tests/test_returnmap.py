import logging

import numpy as np
import pytest

from hjplast import autodiff as ad
from hjplast.invariants import SQRT2_3
from hjplast.matlib import (FictitiousElastic, J2Params, LinearElastic, LinearElasticParams,
                            ModifiedCamClay, j2_radial_return_oracle)
from hjplast.network import Architecture, NetworkModel
from hjplast.returnmap import (GraphYield, MaterialModel, MaterialState, NetworkEnergy,
                               NetworkYield, NonConvergence, OracleEnergy, ReturnMapConfig,
                               SingularTangent, TransformedYield, analytic_j2_model,
                               integrate_step, j2_initial_yield, newton_solve, polar_from_principal,
                               synthetic_yield, trial_state, yield_check)

RNG = np.random.default_rng(21)
EL = LinearElasticParams()
K, G = EL.K, EL.G


def sym(a):
    return 0.5 * (a + a.T)


def random_strain(scale):
    return sym(RNG.normal(0, scale, (3, 3)))


def linear_stress(eps):
    return K * np.trace(eps) * np.eye(3) + 2 * G * (eps - np.trace(eps) / 3 * np.eye(3))


class ConstantYield:
    def __init__(self, c):
        self.c = c

    def value(self, rho, theta, xi):
        return self.c

    def polar(self, rho, theta, xi):
        return self.c, np.zeros(3), np.zeros((3, 3))


def fd(fun, x, h):
    out = []
    for i in range(len(x)):
        e = np.zeros(len(x))
        e[i] = h
        out.append((fun(x + e) - fun(x - e)) / (2 * h))
    return np.array(out).T


# ---- trial state and yield check


def test_zero_increment_trial_is_current_state():
    eps = random_strain(0.01)
    st = MaterialState(eps, 0.1)
    tr = trial_state(st, np.zeros((3, 3)), analytic_j2_model())
    np.testing.assert_allclose(tr.strain, eps)
    np.testing.assert_allclose((tr.directions * tr.sig) @ tr.directions.T, linear_stress(eps),
                               atol=1e-10)


def test_hydrostatic_trial_pressure():
    tr = trial_state(MaterialState(), 0.003 * np.eye(3), analytic_j2_model())
    np.testing.assert_allclose(tr.sig, K * 0.009)


def test_trial_stress_from_energy_derivative():
    law = ModifiedCamClay()
    model = MaterialModel(OracleEnergy(law), j2_initial_yield())
    eps = np.array([0.004, -0.002, 0.001])
    tr = trial_state(MaterialState(), np.diag(eps), model)
    g = fd(lambda e: np.array([ad.evaluate_with_gradient(law.psi_principal, list(e))[0]]),
           eps, 1e-7)[0]
    np.testing.assert_allclose(np.sort(tr.sig), np.sort(g), rtol=1e-6)


def test_yield_check_branches():
    tr = trial_state(MaterialState(), np.diag([0.001, -0.001, 0.0]), analytic_j2_model())
    assert yield_check(tr, analytic_j2_model()) == "elastic"
    m0 = MaterialModel(OracleEnergy(LinearElastic()), ConstantYield(0.0))
    assert yield_check(tr, m0) == "elastic"
    m1 = MaterialModel(OracleEnergy(LinearElastic()), ConstantYield(1e-9))
    assert yield_check(tr, m1) == "plastic"


# ---- J2 equivalence


def test_j2_equivalence_random_trials():
    model, p = analytic_j2_model(), J2Params()
    worst = 0.0
    for _ in range(1000):
        eps0 = random_strain(0.02)
        d_eps = random_strain(0.08)
        xi = RNG.uniform(0.0, 0.3)
        res = integrate_step(MaterialState(eps0, xi), d_eps, model)
        ref = j2_radial_return_oracle(linear_stress(eps0 + d_eps), SQRT2_3 * xi)
        worst = max(worst, np.linalg.norm(res.stress - ref.stress) / np.linalg.norm(ref.stress))
        assert res.plastic == ref.plastic
        if res.plastic:
            assert SQRT2_3 * res.delta_lambda == pytest.approx(ref.delta_gamma, rel=1e-8)
            assert abs(model.yield_value(res.principal_stress, res.xi)) <= 1e-8 * p.sigma_y0
    assert worst < 1e-8


def test_j2_uniaxial_path_matches_oracle():
    model = analytic_j2_model()
    st, sig_ref, ebp = MaterialState(), np.zeros((3, 3)), 0.0
    d = np.diag([1.0, -0.3, -0.3]) * 5e-4
    for _ in range(150):
        res = integrate_step(st, d, model)
        st = res.state
        ref = j2_radial_return_oracle(sig_ref + linear_stress(d), ebp)
        sig_ref, ebp = ref.stress, ref.eps_bar_p
        np.testing.assert_allclose(res.stress, sig_ref, rtol=1e-8, atol=1e-8 * 100)
    assert ebp > 0


def test_on_surface_trial_converges_immediately():
    model = analytic_j2_model()
    d = np.diag([2.0, -1.0, -1.0]) * 1e-2
    tr = trial_state(MaterialState(), d, model)
    scale = SQRT2_3 * J2Params().sigma_y0 / np.linalg.norm(tr.sig - tr.sig.mean())
    tr = trial_state(MaterialState(), d * scale * (1 + 1e-13), model)
    res = newton_solve(tr, model)
    assert res.iterations <= 2
    assert res.delta_lambda == pytest.approx(0.0, abs=1e-12)


def test_unloading_after_plastic_loading_is_elastic():
    model = analytic_j2_model()
    d = np.diag([1.0, -0.5, -0.5]) * 1e-3
    st = MaterialState()
    for _ in range(150):
        st = integrate_step(st, d, model).state
    before = integrate_step(st, np.zeros((3, 3)), model).stress
    res = integrate_step(st, -0.05 * d, model)
    assert not res.plastic and res.delta_lambda == 0.0
    np.testing.assert_allclose(res.stress - before, linear_stress(-0.05 * d), atol=1e-9)


def test_elastic_path_reproduces_energy():
    law = FictitiousElastic()
    model = MaterialModel(OracleEnergy(law), ConstantYield(-1.0))
    st = MaterialState()
    eps = np.zeros((3, 3))
    for _ in range(5):
        d = random_strain(0.01)
        eps = eps + d
        res = integrate_step(st, d, model)
        st = res.state
    np.testing.assert_allclose(st.elastic_strain, eps, atol=1e-15)
    assert st.xi == 0.0


# ---- tangents


def _fd_tangent(state, d_eps, model, h=1e-7):
    C = np.zeros((3, 3, 3, 3))
    for k in range(3):
        for l in range(k, 3):
            E = np.zeros((3, 3))
            E[k, l] = E[l, k] = 0.5 * h if k != l else h
            sp = integrate_step(state, d_eps + E, model).stress
            sm = integrate_step(state, d_eps - E, model).stress
            C[:, :, k, l] = C[:, :, l, k] = (sp - sm) / (2 * h)
    return C


def _sym_tangent(C):
    return 0.5 * (C + C.transpose(0, 1, 3, 2))


@pytest.mark.parametrize("kind", ["j2", "fictitious", "mixed"])
def test_consistent_tangent_matches_fd(kind):
    if kind == "j2":
        model = analytic_j2_model()
    else:
        energy = OracleEnergy(FictitiousElastic() if kind == "fictitious" else LinearElastic())
        model = MaterialModel(energy, TransformedYield(j2_initial_yield(),
                                                        "isotropic" if kind == "fictitious" else "mixed"))
    # the quartic shear energy is soft at small strain, so it needs larger steps to yield
    scale = 5.0 if kind == "fictitious" else 1.0
    state = MaterialState(scale * np.diag([0.01, -0.004, 0.002]), 0.05)
    d_eps = scale * sym(np.array([[0.06, 0.01, -0.005], [0.0, -0.03, 0.008], [0.0, 0.0, 0.01]]))
    res = integrate_step(state, d_eps, model)
    assert res.plastic
    C_fd = _fd_tangent(state, d_eps, model)
    C = _sym_tangent(res.tangent)
    assert np.linalg.norm(C - C_fd) / np.linalg.norm(C_fd) < 1e-4


def test_elastic_tangent_is_hyperelastic_hessian():
    res = integrate_step(MaterialState(), np.diag([1e-4, -2e-4, 5e-5]), analytic_j2_model())
    I = np.eye(3)
    C = (K - 2 * G / 3) * np.einsum("ij,kl->ijkl", I, I) + G * (
        np.einsum("ik,jl->ijkl", I, I) + np.einsum("il,jk->ijkl", I, I))
    np.testing.assert_allclose(_sym_tangent(res.tangent), C, atol=1e-8)


def test_repeated_eigenvalues_give_finite_tangent():
    res = integrate_step(MaterialState(), np.diag([0.05, -0.025, -0.025]), analytic_j2_model())
    assert res.plastic
    assert np.all(np.isfinite(res.tangent))
    C_fd = _fd_tangent(MaterialState(), np.diag([0.05, -0.025, -0.025]), analytic_j2_model())
    assert np.linalg.norm(_sym_tangent(res.tangent) - C_fd) / np.linalg.norm(C_fd) < 1e-4


# ---- failures


def test_singular_local_tangent_raises():
    model = MaterialModel(OracleEnergy(LinearElastic()), ConstantYield(1.0))
    with pytest.raises(SingularTangent):
        integrate_step(MaterialState(), np.diag([0.01, -0.01, 0.0]), model)


def test_nonconvergence_reports_diagnostics():
    with pytest.raises(NonConvergence) as err:
        integrate_step(MaterialState(), np.diag([0.1, -0.05, -0.05]), analytic_j2_model(),
                       ReturnMapConfig(max_iter=0))
    assert err.value.iterations == 0 and np.isfinite(err.value.residual)


# ---- thermodynamics over a driven path


def test_plastic_work_and_xi_monotone_on_synthetic_surface():
    model = MaterialModel(OracleEnergy(LinearElastic()), synthetic_yield())
    st, xi = MaterialState(), [0.0]
    for k in range(120):
        ang = 0.3 + 0.01 * k
        d = 1e-3 * np.diag([np.cos(ang), np.sin(ang), -np.cos(ang) - np.sin(ang)])
        if 60 <= k < 70:
            d = -d
        res = integrate_step(st, d, model)
        if res.plastic:
            assert res.plastic_work >= -1e-10
            assert abs(model.yield_value(res.principal_stress, res.xi)) < 1e-6
        st = res.state
        xi.append(st.xi)
    assert np.all(np.diff(xi) >= 0) and xi[-1] > 0


# ---- adapter derivative chains


def test_polar_derivatives_match_fd():
    sig = np.array([120.0, -30.0, 15.0])
    rho, theta, dr, dt, hr, ht = polar_from_principal(sig)
    f_r = lambda s: np.array([polar_from_principal(s)[0]])  # noqa: E731
    f_t = lambda s: np.array([polar_from_principal(s)[1]])  # noqa: E731
    np.testing.assert_allclose(fd(f_r, sig, 1e-4)[0], dr, atol=1e-8)
    np.testing.assert_allclose(fd(f_t, sig, 1e-4)[0], dt, atol=1e-8)
    np.testing.assert_allclose(fd(lambda s: polar_from_principal(s)[2], sig, 1e-4), hr, atol=1e-7)
    np.testing.assert_allclose(fd(lambda s: polar_from_principal(s)[3], sig, 1e-4), ht, atol=1e-7)
    with pytest.raises(ValueError):
        polar_from_principal(np.full(3, 5.0))


@pytest.mark.parametrize("n_in", [2, 3])
def test_network_energy_chain_rule(n_in):
    net = NetworkModel.create(Architecture.from_name("dmmdmd", n_in, 1, width=6), 3)
    en = NetworkEnergy(net)
    eps = np.array([0.3, -0.1, 0.25])
    psi, sig, D = en.principal(eps)
    g = fd(lambda e: np.array([en.principal(e)[0]]), eps, 1e-6)[0]
    H = fd(lambda e: en.principal(e)[1], eps, 1e-6)
    assert np.linalg.norm(sig - g) / np.linalg.norm(g) < 1e-5
    assert np.linalg.norm(D - H) / np.linalg.norm(H) < 1e-5


def test_network_yield_removes_helper_and_extrapolates(caplog):
    net = NetworkModel.create(Architecture.from_name("dmmdmd", 3, 1, width=6), 4)
    yf = NetworkYield(net, rho_bar=1.5, xi_max=0.4)
    x = np.array([0.8, 2.0, 0.2])
    f, g, h = yf.polar(*x)
    assert f == pytest.approx(net.forward(x[None])[0, 0] - 3.0 * np.cos(2.0 / 3.0), rel=1e-12)
    gfd = fd(lambda v: np.array([yf.polar(*v)[0]]), x, 1e-6)[0]
    hfd = fd(lambda v: yf.polar(*v)[1], x, 1e-6)
    np.testing.assert_allclose(g, gfd, rtol=1e-5, atol=1e-8)
    np.testing.assert_allclose(h, hfd, rtol=1e-4, atol=1e-6)
    with caplog.at_level(logging.WARNING):
        f_in, g_in, _ = yf.polar(0.8, 2.0, 0.4)
        f_out = yf.value(0.8, 2.0, 0.5)
    assert f_out == pytest.approx(f_in + 0.1 * g_in[2], rel=1e-12)
    assert "extrapolating" in caplog.text


def test_transformed_yield_derivatives_match_fd():
    yf = TransformedYield(j2_initial_yield(), "mixed")
    x = np.array([95.0, 1.1, 0.07])
    f, g, h = yf.polar(*x)
    np.testing.assert_allclose(g, fd(lambda v: np.array([yf.polar(*v)[0]]), x, 1e-6)[0],
                               rtol=1e-6, atol=1e-8)
    np.testing.assert_allclose(h, fd(lambda v: yf.polar(*v)[1], x, 1e-6), rtol=1e-5, atol=1e-6)


def test_j2_closed_form_matches_graph():
    fast = analytic_j2_model().yield_fn
    slow = GraphYield(fast.fn)
    for x in RNG.uniform([10, 0, 0], [150, 6.2, 0.3], (10, 3)):
        fa, ga, ha = fast.polar(*x)
        fb, gb, hb = slow.polar(*x)
        assert fa == pytest.approx(fb, rel=1e-13)
        np.testing.assert_allclose(ga, gb, atol=1e-13)
        np.testing.assert_allclose(ha, hb, atol=1e-13)


@pytest.mark.parametrize("xi", [0.0, 0.02, 0.049, 0.07])
def test_synthetic_closed_form_matches_graph(xi):
    fast = synthetic_yield()
    slow = GraphYield(fast.fn)
    rng = np.random.default_rng(int(xi * 1000))
    for rho, theta in zip(rng.uniform(20, 150, 25), rng.uniform(0, 2 * np.pi, 25)):
        f0, g0, h0 = slow.polar(rho, theta, xi)
        f1, g1, h1 = fast.polar(rho, theta, xi)
        assert f1 == pytest.approx(f0, abs=1e-10)
        assert fast.value(rho, theta, xi) == pytest.approx(f0, abs=1e-10)
        np.testing.assert_allclose(g1, g0, atol=1e-9)
        np.testing.assert_allclose(h1, h0, atol=1e-7 * max(1.0, np.abs(h0).max()))
