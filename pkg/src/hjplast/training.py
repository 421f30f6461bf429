"""Sobolev losses, plasticity losses, the Nadam optimizer and the training loop."""
from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .network import pair_index

log = logging.getLogger(__name__)

ENERGY_MODES = ("L2", "H1", "H2")


class MissingColumns(KeyError):
    pass


class TrainingDiverged(RuntimeError):
    pass


# --------------------------------------------------------------------------
# specs


@dataclass
class EnergyLossSpec:
    mode: str = "H2"
    gammas: tuple = (1.0, 1.0, 1.0, 1.0, 1.0, 1.0)
    space: str = "invariant"  # or "principal"

    def __post_init__(self):
        if self.mode not in ENERGY_MODES:
            raise ValueError(f"mode must be one of {ENERGY_MODES}")
        if self.space not in ("invariant", "principal"):
            raise ValueError("space must be 'invariant' or 'principal'")
        self.gammas = tuple(float(g) for g in self.gammas)
        if len(self.gammas) != 6:
            raise ValueError("six loss weights are expected")

    @property
    def order(self):
        return ENERGY_MODES.index(self.mode)


@dataclass
class YieldLossSpec:
    gamma_value: float = 1.0
    gamma_grad: float = 0.0  # principal-gradient term
    gamma_rotation: float = 0.0
    gamma_flow: float = 1.0
    w_nnp: float = 0.0
    k: float = 50.0
    gamma_eikonal: float = 0.0
    boundary_weight: float = 5.0
    rho_bar: float = 1.0
    rho_tol: float = 1e-8


@dataclass
class NadamConfig:
    lr: float = 0.002
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-7
    schedule_decay: float = 0.004
    batch_size: int = 32
    epochs: int = 1000
    seed: int = 0
    val_fraction: float = 0.1


# --------------------------------------------------------------------------
# elementary terms


def rotation_distance(theta_true, theta_pred):
    """Frobenius distance between two in-plane rotations, 2 sqrt(2) |sin(delta / 2)|.

    Written through atan2 of the wrapped difference so the derivative stays
    bounded where the two angles coincide.
    """
    d = ad.sub(theta_pred, theta_true)
    wrapped = ad.atan2(ad.sin(d), ad.cos(d))
    return ad.mul(ad.abs(ad.sin(ad.mul(wrapped, 0.5))), 2.0 * np.sqrt(2.0))


def penalty_terms(s, w_nnp, k=50.0):
    """w_nnp * mean(1/2 + tanh(-k s) / 2) for per-sample products s = sum_A sigma_A v_A."""
    h = ad.add(ad.mul(ad.tanh(ad.mul(s, -float(k))), 0.5), 0.5)
    return ad.mul(ad.sum(h), float(w_nnp) / max(1, np.size(ad.value_of(s))))


def _eikonal_terms(rho, theta, g_rho, g_theta, rho_bar):
    # phi = network - zeta, so d(phi)/d(theta) picks up 2 rho_bar sin(theta/3) / 3
    phi_t = ad.add(g_theta, (2.0 * rho_bar / 3.0) * np.sin(theta / 3.0))
    res = ad.sub(ad.add(ad.square(g_rho), ad.div(ad.square(phi_t), rho ** 2)), 1.0)
    return ad.square(res)


def eikonal_residual(model, batch, rho_bar=None, params=None):
    """Mean squared polar Eikonal residual of the level set encoded by ``model``.

    ``batch`` carries rho, theta, xi. When ``rho_bar`` is given the model output
    is a helper-shifted value and the shift is removed before differentiating.
    """
    rho = np.asarray(batch["rho"], dtype=float)
    if np.any(rho <= YieldLossSpec.rho_tol):
        raise ValueError("Eikonal residual is undefined at the polar origin")
    theta = np.asarray(batch["theta"], dtype=float)
    x = np.column_stack([rho, theta, batch["xi"]])
    _, g, _ = model.jet(x, order=1, params=params)
    g_rho = ad.getitem(g, (0, slice(None), 0))
    g_th = ad.getitem(g, (1, slice(None), 0))
    if rho_bar is None:
        terms = ad.square(ad.sub(ad.add(ad.square(g_rho), ad.div(ad.square(g_th), rho ** 2)), 1.0))
    else:
        terms = _eikonal_terms(rho, theta, g_rho, g_th, rho_bar)
    return ad.mul(ad.sum(terms), 1.0 / len(rho))


# --------------------------------------------------------------------------
# column scaling


def column_scales(table, columns):
    """Min-max range per column; |value| and then 1 stand in for a zero range."""
    out = {}
    for c in columns:
        v = np.asarray(table[c], dtype=float)
        r = float(v.max() - v.min()) if v.size else 0.0
        if r <= 0.0:
            r = float(np.abs(v).max()) if v.size else 0.0
        out[c] = r if r > 0.0 else 1.0
    return out


# --------------------------------------------------------------------------
# losses


def _require(batch, cols):
    missing = [c for c in cols if c not in batch]
    if missing:
        raise MissingColumns(f"batch lacks supervision columns {missing}")


def _mse(pred, target, scale):
    err = ad.mul(ad.sub(pred, target), 1.0 / scale)
    return ad.mul(ad.sum(ad.square(err)), 1.0 / max(1, np.size(target)))


class EnergyLoss:
    """Sobolev loss of an energy network in invariant or principal strains."""

    def __init__(self, spec=None):
        self.spec = spec or EnergyLossSpec()
        self.scales = None

    @property
    def inputs(self):
        return ("ev", "es") if self.spec.space == "invariant" else ("eps1", "eps2", "eps3")

    @property
    def columns(self):
        if self.spec.space == "invariant":
            cols = [["psi"], ["p", "q"], ["D11", "D22", "D12"]]
        else:
            cols = [["psi"], ["sig1", "sig2", "sig3"],
                    [f"D{i + 1}{j + 1}" for i, j in pair_index(3)]]
        return [c for grp in cols[: self.spec.order + 1] for c in grp]

    def prepare(self, table):
        """Scales equal to the derivatives' units in min-max normalized space.

        With psi and every input mapped to [0, 1], d psi / d x_i is measured in
        units of R_psi / R_i and D_ij in R_psi / (R_i R_j), R being ranges.
        """
        base = column_scales(table, ["psi"] + list(self.inputs))
        r_psi = base["psi"]
        r_in = [base[c] for c in self.inputs]
        grads = self.columns[1:1 + len(r_in)] if self.spec.order >= 1 else []
        sc = {"psi": r_psi}
        for c, r in zip(grads, r_in):
            sc[c] = r_psi / r
        if self.spec.order >= 2:
            for i, j in pair_index(len(r_in)):
                sc[f"D{i + 1}{j + 1}"] = r_psi / (r_in[i] * r_in[j])
        self.scales = sc

    def __call__(self, model, batch, params=None):
        spec = self.spec
        _require(batch, list(self.inputs) + self.columns)
        sc = self.scales or {}
        s = lambda c: sc.get(c, 1.0)  # noqa: E731
        x = np.column_stack([batch[c] for c in self.inputs])
        val, g, h = model.jet(x, order=spec.order, params=params)
        g1, g2, g3, g4, g5, g6 = spec.gammas
        comps = {"value": ad.mul(_mse(ad.getitem(val, (slice(None), 0)), batch["psi"], s("psi")), g1)}
        zero = 0.0
        comps["gradient"] = zero
        comps["hessian"] = zero
        if spec.order >= 1:
            if spec.space == "invariant":
                gp = _mse(ad.getitem(g, (0, slice(None), 0)), batch["p"], s("p"))
                gq = _mse(ad.getitem(g, (1, slice(None), 0)), batch["q"], s("q"))
                comps["gradient"] = ad.add(ad.mul(gp, g4), ad.mul(gq, g5))
            else:
                acc = zero
                for a in range(3):
                    c = f"sig{a + 1}"
                    acc = ad.add(acc, _mse(ad.getitem(g, (a, slice(None), 0)), batch[c], s(c)))
                comps["gradient"] = ad.mul(acc, g2)
        if spec.order >= 2:
            d = len(self.inputs)
            acc = zero
            for k, (i, j) in enumerate(pair_index(d)):
                c = f"D{i + 1}{j + 1}"
                term = _mse(ad.getitem(h, (k, slice(None), 0)), batch[c], s(c))
                acc = ad.add(acc, ad.mul(term, 1.0 if i == j else 2.0))
            comps["hessian"] = ad.mul(acc, g6 if spec.space == "invariant" else g3)
        total = ad.add(ad.add(comps["value"], comps["gradient"]), comps["hessian"])
        return total, comps


def loss_energy(model, batch, spec=None, scales=None, params=None):
    loss = EnergyLoss(spec)
    loss.scales = scales
    return loss(model, batch, params)


class YieldLoss:
    """Level-set value loss with optional flow-angle, Eikonal and convexity terms.

    The model maps (rho, theta, xi) to the helper-shifted level set phi_zeta.
    """

    def __init__(self, spec=None):
        self.spec = spec or YieldLossSpec()
        self.scales = None

    inputs = ("rho", "theta", "xi")
    columns = ["phi_zeta"]

    def prepare(self, table):
        self.scales = column_scales(table, self.columns)

    def needs_gradient(self):
        s = self.spec
        return s.gamma_rotation > 0 or s.gamma_eikonal > 0 or s.w_nnp > 0

    def __call__(self, model, batch, params=None):
        spec = self.spec
        _require(batch, list(self.inputs) + self.columns)
        rho = np.asarray(batch["rho"], dtype=float)
        theta = np.asarray(batch["theta"], dtype=float)
        x = np.column_stack([rho, theta, batch["xi"]])
        order = 1 if self.needs_gradient() else 0
        val, g, _ = model.jet(x, order=order, params=params)
        scale = (self.scales or {}).get("phi_zeta", 1.0)
        err = ad.mul(ad.sub(ad.getitem(val, (slice(None), 0)), batch["phi_zeta"]), 1.0 / scale)
        w = np.ones(len(rho))
        if "boundary" in batch:
            w = np.where(np.asarray(batch["boundary"], dtype=bool), spec.boundary_weight, 1.0)
        comps = {"value": ad.mul(ad.sum(ad.mul(ad.square(err), w)), spec.gamma_value / len(rho)),
                 "rotation": 0.0, "eikonal": 0.0, "penalty": 0.0}
        if order:
            g_rho = ad.getitem(g, (0, slice(None), 0))
            g_th = ad.getitem(g, (1, slice(None), 0))
            f_th = ad.add(g_th, (2.0 * spec.rho_bar / 3.0) * np.sin(theta / 3.0))
        if spec.gamma_rotation > 0:
            if "flow_theta" not in batch:
                raise MissingColumns("rotation term requested without flow targets")
            ft = np.asarray(batch["flow_theta"], dtype=float)
            sel = np.flatnonzero(np.isfinite(ft))
            if sel.size:
                ang = ad.add(ad.atan2(ad.div(ad.getitem(f_th, sel), rho[sel]),
                                      ad.getitem(g_rho, sel)), theta[sel])
                phi = rotation_distance(ft[sel], ang)
                comps["rotation"] = ad.mul(ad.sum(phi), spec.gamma_rotation / sel.size)
        if spec.gamma_eikonal > 0:
            if np.any(rho <= spec.rho_tol):
                raise ValueError("Eikonal term is undefined at the polar origin")
            terms = _eikonal_terms(rho, theta, g_rho, g_th, spec.rho_bar)
            comps["eikonal"] = ad.mul(ad.sum(terms), spec.gamma_eikonal / len(rho))
        if spec.w_nnp > 0:
            # sum_A sigma_A df/dsigma_A = rho df/drho for a pressure-insensitive f
            s = ad.mul(g_rho, rho / spec.rho_bar)
            comps["penalty"] = penalty_terms(s, spec.w_nnp, spec.k)
        total = comps["value"]
        for key in ("rotation", "eikonal", "penalty"):
            total = ad.add(total, comps[key])
        return total, comps


def loss_yield(model, batch, spec=None, scales=None, params=None):
    loss = YieldLoss(spec)
    loss.scales = scales
    return loss(model, batch, params)


class FlowLoss:
    """Supervised plastic-flow directions with an optional plastic-work penalty.

    The model maps (sigma1, sigma2, sigma3, xi) to (g1, g2, g3).
    """

    def __init__(self, spec=None):
        self.spec = spec or YieldLossSpec()
        self.scales = None

    inputs = ("sig1", "sig2", "sig3", "xi")
    columns = ["g1", "g2", "g3"]

    def prepare(self, table):
        self.scales = column_scales(table, self.columns)

    def __call__(self, model, batch, params=None):
        spec = self.spec
        _require(batch, list(self.inputs) + self.columns)
        x = np.column_stack([batch[c] for c in self.inputs])
        val, _, _ = model.jet(x, order=0, params=params)
        sc = self.scales or {}
        acc = 0.0
        for a, c in enumerate(self.columns):
            acc = ad.add(acc, _mse(ad.getitem(val, (slice(None), a)), batch[c], sc.get(c, 1.0)))
        comps = {"value": ad.mul(acc, spec.gamma_flow), "penalty": 0.0}
        if spec.w_nnp > 0:
            s = 0.0
            for a in range(3):
                s = ad.add(s, ad.mul(ad.getitem(val, (slice(None), a)), x[:, a] / spec.rho_bar))
            comps["penalty"] = penalty_terms(s, spec.w_nnp, spec.k)
        return ad.add(comps["value"], comps["penalty"]), comps


# --------------------------------------------------------------------------
# optimizer


@dataclass
class NadamState:
    m: list
    v: list
    t: int = 0
    m_schedule: float = 1.0


def nadam_init(params):
    return NadamState([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


def nadam_step(params, grads, state, config=None):
    """One Nesterov-accelerated Adam update with the 0.96-based momentum schedule."""
    c = config or NadamConfig()
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise FloatingPointError("non-finite gradient")
    t = state.t + 1
    mu_t = c.beta1 * (1.0 - 0.5 * 0.96 ** (t * c.schedule_decay))
    mu_t1 = c.beta1 * (1.0 - 0.5 * 0.96 ** ((t + 1) * c.schedule_decay))
    m_sched = state.m_schedule * mu_t
    m_sched_next = m_sched * mu_t1
    new_p, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        g_prime = g / (1.0 - m_sched)
        m_t = c.beta1 * m + (1.0 - c.beta1) * g
        m_prime = m_t / (1.0 - m_sched_next)
        v_t = c.beta2 * v + (1.0 - c.beta2) * g * g
        v_prime = v_t / (1.0 - c.beta2 ** t)
        m_bar = (1.0 - mu_t) * g_prime + mu_t1 * m_prime
        new_p.append(p - c.lr * m_bar / (np.sqrt(v_prime) + c.eps))
        new_m.append(m_t)
        new_v.append(v_t)
    return new_p, NadamState(new_m, new_v, t, m_sched)


# --------------------------------------------------------------------------
# training loop


@dataclass
class TrainReport:
    components: list
    history: list = field(default_factory=list)
    wall_time: float = 0.0
    params: list | None = None
    n_train: int = 0
    n_val: int = 0

    def column(self, key):
        return np.array([row[key] for row in self.history])

    def to_csv(self, path, meta=None):
        keys = ["epoch", "total"] + self.components + ["val_total"] + \
            [f"val_{c}" for c in self.components]
        with open(path, "w", newline="") as fh:
            if meta:
                fh.write("# meta: " + "; ".join(f"{k}={v}" for k, v in meta.items()) + "\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(keys)
            for row in self.history:
                w.writerow([row["epoch"]] + [format(float(row[k]), ".17g") for k in keys[1:]])
        return path


def split_indices(n, fraction, seed):
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    n_val = int(round(fraction * n)) if n > 1 else 0
    return np.sort(perm[n_val:]), np.sort(perm[:n_val])


def take(table, idx):
    return {k: np.asarray(v)[idx] for k, v in table.items()}


def evaluate(loss, model, table):
    total, comps = loss(model, table)
    return float(ad.value_of(total)), {k: float(ad.value_of(v)) for k, v in comps.items()}


def fit(model, table, loss, config=None, progress=None):
    """Mini-batch Nadam training; mutates ``model`` and returns a TrainReport.

    Row 0 of the history is the untrained model. Each later row evaluates the
    whole training and validation splits after the epoch's last update.
    """
    cfg = config or NadamConfig()
    n = len(next(iter(table.values())))
    if n == 0:
        raise ValueError("empty dataset")
    tr_idx, va_idx = split_indices(n, cfg.val_fraction, cfg.seed)
    train, val = take(table, tr_idx), take(table, va_idx)
    loss.prepare(train)
    rng = np.random.default_rng(cfg.seed + 1)
    params = [p.copy() for p in model.params()]
    state = nadam_init(params)

    def snapshot(epoch):
        model.set_params(params)
        tot, comps = evaluate(loss, model, train)
        row = {"epoch": epoch, "total": tot, **comps}
        if len(va_idx):
            vt, vc = evaluate(loss, model, val)
        else:
            vt, vc = float("nan"), {k: float("nan") for k in comps}
        row["val_total"] = vt
        row.update({f"val_{k}": v for k, v in vc.items()})
        return row

    t0 = time.perf_counter()
    first = snapshot(0)
    report = TrainReport([k for k in first if k not in ("epoch", "total") and not k.startswith("val_")],
                         [first], n_train=len(tr_idx), n_val=len(va_idx))
    limit = 1e6 * max(first["total"], 1e-300)
    nt = len(tr_idx)
    for epoch in range(1, cfg.epochs + 1):
        perm = rng.permutation(nt)
        for start in range(0, nt, cfg.batch_size):
            bi = perm[start:start + cfg.batch_size]
            batch = take(train, bi)
            pv = [ad.Var(p) for p in params]
            total, _ = loss(model, batch, params=pv)
            lv = float(ad.value_of(total))
            if not np.isfinite(lv) or lv > limit:
                raise TrainingDiverged(f"loss {lv:.3e} at epoch {epoch} exceeds guard "
                                       f"(initial {first['total']:.3e})")
            grads = ad.grad(total, pv)
            params, state = nadam_step(params, grads, state, cfg)
        row = snapshot(epoch)
        report.history.append(row)
        if not np.isfinite(row["total"]) or row["total"] > limit:
            raise TrainingDiverged(f"training loss {row['total']:.3e} after epoch {epoch}")
        if progress:
            progress(row)
    model.set_params(params)
    report.wall_time = time.perf_counter() - t0
    report.params = params
    return report
