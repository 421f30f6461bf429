import numpy as np
import pytest

from hjplast import autodiff as ad
from hjplast.matlib import LinearElastic
from hjplast.network import Architecture, MinMaxScaler, NetworkModel
from hjplast.training import (EnergyLoss, EnergyLossSpec, MissingColumns, NadamConfig,
                              TrainingDiverged, YieldLoss, YieldLossSpec, eikonal_residual, fit,
                              loss_energy, loss_yield, nadam_init, nadam_step, penalty_terms,
                              rotation_distance, split_indices)


class JetStub:
    """Stands in for a network: returns prescribed values and input derivatives."""

    def __init__(self, fn):
        self.fn = fn

    def jet(self, x, order=2, params=None):
        val, g, h = self.fn(np.asarray(x, dtype=float))
        return val, g, h


def value(x):
    return float(ad.value_of(x))


def _energy_batch():
    return {"ev": np.array([0.01]), "es": np.array([0.02]), "psi": np.array([1.0]),
            "p": np.array([2.0]), "q": np.array([3.0]), "D11": np.array([4.0]),
            "D22": np.array([5.0]), "D12": np.array([6.0])}


def _energy_stub(d_psi=0.0, d_p=0.0, d_q=0.0, d_h=(0.0, 0.0, 0.0)):
    def fn(x):
        n = len(x)
        val = np.full((n, 1), 1.0 + d_psi)
        g = np.array([np.full((n, 1), 2.0 + d_p), np.full((n, 1), 3.0 + d_q)])
        h = np.array([np.full((n, 1), 4.0 + d_h[0]), np.full((n, 1), 6.0 + d_h[1]),
                      np.full((n, 1), 5.0 + d_h[2])])
        return val, g, h
    return JetStub(fn)


# ---- energy loss


@pytest.mark.parametrize("mode", ["L2", "H1", "H2"])
def test_energy_loss_zero_for_exact_predictions(mode):
    total, comps = loss_energy(_energy_stub(), _energy_batch(), EnergyLossSpec(mode))
    assert value(total) == 0.0


def test_energy_loss_hand_example():
    total, comps = loss_energy(_energy_stub(d_psi=0.1, d_p=0.2), _energy_batch(),
                               EnergyLossSpec("H1"))
    assert value(total) == pytest.approx(0.05, rel=1e-12)
    assert value(comps["value"]) == pytest.approx(0.01, rel=1e-12)
    assert value(comps["gradient"]) == pytest.approx(0.04, rel=1e-12)


def test_l2_ignores_derivatives():
    a, _ = loss_energy(_energy_stub(d_psi=0.3), _energy_batch(), EnergyLossSpec("L2"))
    b, _ = loss_energy(_energy_stub(d_psi=0.3, d_p=5.0, d_h=(1, 2, 3)), _energy_batch(),
                       EnergyLossSpec("L2"))
    assert value(a) == value(b)


def test_mode_reduction_identities():
    stub = _energy_stub(d_psi=0.1, d_p=-0.4, d_q=0.7, d_h=(0.5, 0.2, -1.0))
    b = _energy_batch()
    h2_no_hess, _ = loss_energy(stub, b, EnergyLossSpec("H2", (1, 1, 1, 1, 1, 0)))
    h1, _ = loss_energy(stub, b, EnergyLossSpec("H1"))
    assert value(h2_no_hess) == value(h1)
    h1_no_grad, _ = loss_energy(stub, b, EnergyLossSpec("H1", (1, 1, 1, 0, 0, 1)))
    l2, _ = loss_energy(stub, b, EnergyLossSpec("L2"))
    assert value(h1_no_grad) == value(l2)


def test_off_diagonal_counted_twice():
    _, c = loss_energy(_energy_stub(d_h=(0.0, 0.5, 0.0)), _energy_batch(), EnergyLossSpec("H2"))
    assert value(c["hessian"]) == pytest.approx(0.5, rel=1e-12)


def test_missing_columns_rejected():
    b = _energy_batch()
    del b["D12"]
    with pytest.raises(MissingColumns):
        loss_energy(_energy_stub(), b, EnergyLossSpec("H2"))
    with pytest.raises(ValueError):
        EnergyLossSpec("H3")


def test_normalized_space_scales():
    table = {"ev": np.array([0.0, 0.1]), "es": np.array([0.0, 0.2]),
             "psi": np.array([0.0, 4.0])}
    for c in ("p", "q", "D11", "D22", "D12"):
        table[c] = np.zeros(2)
    loss = EnergyLoss(EnergyLossSpec("H2"))
    loss.prepare(table)
    assert loss.scales["psi"] == pytest.approx(4.0)
    assert loss.scales["p"] == pytest.approx(40.0)
    assert loss.scales["q"] == pytest.approx(20.0)
    assert loss.scales["D12"] == pytest.approx(200.0)


# ---- yield loss terms


@pytest.mark.parametrize("delta, expected", [(0.0, 0.0), (np.pi, 2 * np.sqrt(2)),
                                             (np.pi / 2, 2.0), (-np.pi / 2, 2.0),
                                             (2 * np.pi, 0.0)])
def test_rotation_distance(delta, expected):
    assert value(rotation_distance(0.3, 0.3 + delta)) == pytest.approx(expected, abs=1e-12)


def test_rotation_distance_symmetric():
    rng = np.random.default_rng(3)
    a, b = rng.uniform(0, 7, 50), rng.uniform(0, 7, 50)
    np.testing.assert_allclose(ad.value_of(rotation_distance(a, b)),
                               ad.value_of(rotation_distance(b, a)), atol=1e-14)


def test_penalty_limits():
    w = 2.5
    assert value(penalty_terms(np.array([0.0]), w)) == pytest.approx(w / 2)
    assert value(penalty_terms(np.array([10.0]), w)) < 1e-6 * w
    assert value(penalty_terms(np.array([-10.0]), w)) == pytest.approx(w, rel=1e-12)


def test_penalty_monotone():
    s = np.linspace(-1, 1, 401)
    vals = [value(penalty_terms(np.array([v]), 1.0)) for v in s]
    assert np.all(np.diff(vals) <= 0)


def _yield_stub(rho_bar, slope=1.0, offset=0.0):
    """phi_zeta = slope * rho + offset + 2 rho_bar cos(theta/3) with exact derivatives."""
    def fn(x):
        rho, th = x[:, 0], x[:, 1]
        val = (slope * rho + offset + 2 * rho_bar * np.cos(th / 3))[:, None]
        g = np.array([np.full_like(rho, slope), -(2 * rho_bar / 3) * np.sin(th / 3),
                      np.zeros_like(rho)])[..., None]
        return val, g, None
    return JetStub(fn)


def _yield_batch(rho_bar, R=2.0):
    rho = np.array([1.0, 2.0, 3.0])
    th = np.array([0.2, 1.5, 4.0])
    return {"rho": rho, "theta": th, "xi": np.zeros(3),
            "phi_zeta": rho - R + 2 * rho_bar * np.cos(th / 3), "flow_theta": th.copy()}


def test_yield_loss_zero_for_exact_level_set():
    spec = YieldLossSpec(gamma_rotation=1.0, gamma_eikonal=1.0, rho_bar=1.5)
    total, _ = loss_yield(_yield_stub(1.5, offset=-2.0), _yield_batch(1.5), spec)
    assert value(total) == pytest.approx(0.0, abs=1e-14)


def test_yield_value_term_is_plain_mse():
    b = _yield_batch(1.0)
    b["phi_zeta"] = b["phi_zeta"] + np.array([0.1, -0.2, 0.3])
    total, _ = loss_yield(_yield_stub(1.0, offset=-2.0), b, YieldLossSpec(rho_bar=1.0))
    assert value(total) == pytest.approx((0.01 + 0.04 + 0.09) / 3, rel=1e-12)


def test_yield_rotation_quarter_turn():
    b = {k: v[:1] for k, v in _yield_batch(1.0).items()}
    b["flow_theta"] = b["theta"] + np.pi / 2
    spec = YieldLossSpec(gamma_rotation=0.7, rho_bar=1.0)
    total, comps = loss_yield(_yield_stub(1.0, offset=-2.0), b, spec)
    assert value(comps["rotation"]) == pytest.approx(0.7 * 2.0, rel=1e-12)


def test_yield_rotation_needs_targets():
    b = _yield_batch(1.0)
    del b["flow_theta"]
    with pytest.raises(MissingColumns):
        loss_yield(_yield_stub(1.0), b, YieldLossSpec(gamma_rotation=1.0))


def test_eikonal_examples():
    b = _yield_batch(0.0)
    assert value(eikonal_residual(_yield_stub(0.0, offset=-2.0), b)) == pytest.approx(0.0, abs=1e-14)
    assert value(eikonal_residual(_yield_stub(0.0, slope=2.0), b)) == pytest.approx(9.0)
    a = value(eikonal_residual(_yield_stub(0.0, slope=1.3, offset=0.0), b))
    c = value(eikonal_residual(_yield_stub(0.0, slope=1.3, offset=5.0), b))
    assert a == c


def test_eikonal_with_helper_shift_removed():
    assert value(eikonal_residual(_yield_stub(1.7, offset=-2.0), _yield_batch(1.7), 1.7)) == \
        pytest.approx(0.0, abs=1e-14)


def test_eikonal_rejects_origin():
    b = _yield_batch(0.0)
    b["rho"] = np.array([0.0, 1.0, 2.0])
    with pytest.raises(ValueError):
        eikonal_residual(_yield_stub(0.0), b)


# ---- optimizer


def test_nadam_hand_step():
    p, _ = nadam_step([np.array([1.0])], [np.array([2.0])], nadam_init([np.array([1.0])]))
    assert p[0][0] == pytest.approx(0.9978870965489344, rel=1e-12)


def test_nadam_zero_gradient():
    x = [np.array([1.0, -2.0])]
    p, st = nadam_step(x, [np.zeros(2)], nadam_init(x))
    np.testing.assert_array_equal(p[0], x[0])
    assert st.t == 1 and st.m_schedule != 1.0


def test_nadam_descends_quadratic():
    x, st = [np.array([1.0])], nadam_init([np.array([1.0])])
    losses = []
    for _ in range(100):
        losses.append(float(x[0][0] ** 2))
        x, st = nadam_step(x, [2 * x[0]], st)
    assert np.all(np.diff(losses) < 0)


def test_nadam_rejects_nan():
    x = [np.array([1.0])]
    with pytest.raises(FloatingPointError):
        nadam_step(x, [np.array([np.nan])], nadam_init(x))


# ---- fit


def _linear_table(n=60, seed=0):
    rng = np.random.default_rng(seed)
    ev, es = rng.uniform(-0.05, 0.05, n), rng.uniform(0, 0.08, n)
    r = LinearElastic().eval(ev, es)
    return dict(ev=ev, es=es, psi=r.psi, p=r.p, q=r.q, D11=r.D11, D22=r.D22, D12=r.D12)


def _net(table, seed=0, name="dmdd"):
    x = np.column_stack([table["ev"], table["es"]])
    return NetworkModel.create(Architecture.from_name(name, 2, 1, width=8), seed,
                               MinMaxScaler.fit(x), MinMaxScaler.fit(table["psi"][:, None]))


def test_split_is_seeded_partition():
    tr, va = split_indices(50, 0.1, 4)
    assert len(va) == 5 and len(np.intersect1d(tr, va)) == 0
    assert np.array_equal(np.union1d(tr, va), np.arange(50))
    np.testing.assert_array_equal(split_indices(50, 0.1, 4)[0], tr)


def test_fit_exact_model_stays_exact():
    table = _linear_table()
    net = _net(table)
    table["psi"] = net.forward(np.column_stack([table["ev"], table["es"]]))[:, 0]
    rep = fit(net, table, EnergyLoss(EnergyLossSpec("L2")), NadamConfig(epochs=3, batch_size=16))
    assert max(rep.column("total")) < 1e-20


def test_fit_deterministic_and_decomposed():
    table = _linear_table()
    cfg = NadamConfig(epochs=4, batch_size=16, seed=5)
    reps, params = [], []
    for _ in range(2):
        net = _net(table, seed=5)
        reps.append(fit(net, table, EnergyLoss(EnergyLossSpec("H2")), cfg))
        params.append(net.params())
    assert reps[0].history == reps[1].history
    for a, b in zip(*params):
        np.testing.assert_array_equal(a, b)
    for row in reps[0].history:
        assert row["total"] == pytest.approx(row["value"] + row["gradient"] + row["hessian"],
                                             rel=1e-12)
    assert reps[0].history[-1]["total"] < reps[0].history[0]["total"]
    assert len(reps[0].history) == 5


def test_fit_divergence_guard():
    table = _linear_table()
    net = _net(table)
    with pytest.raises(TrainingDiverged):
        fit(net, table, EnergyLoss(EnergyLossSpec("L2")),
            NadamConfig(epochs=5, batch_size=8, lr=1e6))


def test_fit_rejects_empty_table():
    table = {k: np.array([]) for k in _linear_table()}
    with pytest.raises(ValueError):
        fit(_net(_linear_table()), table, EnergyLoss(), NadamConfig(epochs=1))


def test_yield_loss_penalty_sign():
    # phi increasing in rho: sum sigma_A df/dsigma_A = rho df/drho > 0, penalty ~ 0
    spec = YieldLossSpec(w_nnp=1.0, rho_bar=1.0)
    _, c = YieldLoss(spec)(_yield_stub(1.0, offset=-2.0), _yield_batch(1.0))
    assert value(c["penalty"]) < 1e-6
    _, c = YieldLoss(spec)(_yield_stub(1.0, slope=-1.0), _yield_batch(1.0))
    assert value(c["penalty"]) > 0.99
