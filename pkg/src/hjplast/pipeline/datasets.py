"""Training data: elastic invariant grids and radial yield-surface exploration."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from ..invariants import PI_TO_PRINCIPAL, TWO_PI, direction_in_pi_plane
from ..levelset import LevelSetDataset, YieldSurfaceSnapshot, build_level_set_dataset
from ..returnmap import MaterialState, ReturnMapConfig, integrate_step
from .io import read_table

ELASTIC_COLUMNS = ("ev", "es", "psi", "p", "q", "D11", "D22", "D12")

# invariant-space sampling boxes per material
ELASTIC_BOUNDS = {
    "linear": ((-0.05, 0.05), (0.0, 0.08)),
    "mcc": ((-0.02, 0.02), (0.0, 0.02)),
    "fictitious": ((-0.05, 0.05), (0.0, 0.08)),
}

# sigma1, sigma2, sigma3 axes on the pi-plane
AXIS_ANGLES = (11.0 * np.pi / 6.0, np.pi / 2.0, 7.0 * np.pi / 6.0)


class NoYield(RuntimeError):
    pass


@dataclass(frozen=True)
class ElasticDatasetSpec:
    ev_bounds: tuple = (-0.05, 0.05)
    es_bounds: tuple = (0.0, 0.08)
    resolution: int = 50

    @classmethod
    def for_material(cls, name, resolution=50):
        ev, es = ELASTIC_BOUNDS[name]
        return cls(ev, es, resolution)


def gen_elastic_dataset(spec, oracle):
    """Uniform (ev, es) grid, ev-major ordering, with the oracle's response."""
    if not all(np.isfinite(spec.ev_bounds)) or not all(np.isfinite(spec.es_bounds)):
        raise ValueError("bounds must be finite")
    ev, es = np.meshgrid(np.linspace(*spec.ev_bounds, spec.resolution),
                         np.linspace(*spec.es_bounds, spec.resolution), indexing="ij")
    ev, es = ev.ravel(), es.ravel()
    r = oracle.eval(ev, es)
    return dict(ev=ev, es=es, psi=r.psi, p=r.p, q=r.q, D11=r.D11, D22=r.D22, D12=r.D12)


# --------------------------------------------------------------------------
# initial yield detection


def detect_initial_yield(stress, strain=None, elastic=None, plastic_strain=None, tol_rel=1e-3):
    """First index at which a path leaves the elastic response.

    With ``plastic_strain`` (known for oracle paths) the criterion is an
    accumulated plastic strain above 1e-8; otherwise the stress is compared to
    ``elastic(strain)``, the response assuming no plastic deformation.
    Returns (index, stress at that index).
    """
    stress = np.asarray(stress, dtype=float)
    if plastic_strain is not None:
        hit = np.flatnonzero(np.asarray(plastic_strain, dtype=float) > 1e-8)
    else:
        if strain is None or elastic is None:
            raise ValueError("need either plastic_strain or (strain, elastic)")
        pred = np.array([elastic(e) for e in np.asarray(strain, dtype=float)])
        gap = np.linalg.norm(stress - pred, axis=1)
        hit = np.flatnonzero(gap > tol_rel * np.linalg.norm(stress, axis=1))
    if hit.size == 0:
        raise NoYield("path never departs from the elastic response")
    return int(hit[0]), stress[hit[0]]


# --------------------------------------------------------------------------
# radial exploration


@dataclass
class YieldExploration:
    dataset: LevelSetDataset
    flow: dict  # per plastic step: sig1..3, xi, g1..3, flow_theta
    rays: dict  # every step of every ray with a ray index
    probes: np.ndarray  # initial yield radius along the three principal axes
    meta: dict = field(default_factory=dict)


def _ray_radius(model, d, a):
    return float(np.linalg.norm(PI_TO_PRINCIPAL[:, :2].T @ model.stress(a * d)))


def _elastic_amplitude(model, d, rho_target):
    """Strain amplitude along d whose elastic stress has pi-plane radius rho_target."""
    hi = 1e-3
    while _ray_radius(model, d, hi) < rho_target:
        hi *= 2.0
        if hi > 10.0:
            raise NoYield("elastic response never reaches the target radius")
    return brentq(lambda a: _ray_radius(model, d, a) - rho_target, 0.0, hi, xtol=1e-14)


def _run_ray(model, theta, a_start, da, xi_target, max_steps, cfg):
    d = direction_in_pi_plane(theta)
    st = MaterialState()
    rows = {k: [] for k in ("s", "sig", "sig_tr", "eps", "eps_tr", "xi", "dlam", "plastic")}
    a_prev = 0.0
    for a in np.concatenate([[a_start], a_start + da * np.arange(1, max_steps + 1)]):
        eps_tr = np.diag(st.elastic_strain) + (a - a_prev) * d
        res = integrate_step(st, np.diag((a - a_prev) * d), model, cfg)
        st, a_prev = res.state, a
        rows["s"].append(a)
        rows["sig"].append(np.diag(res.stress))
        rows["sig_tr"].append(model.stress(eps_tr))
        rows["eps"].append(np.diag(res.elastic_strain))
        rows["eps_tr"].append(eps_tr)
        rows["xi"].append(res.xi)
        rows["dlam"].append(res.delta_lambda)
        rows["plastic"].append(res.plastic)
        if res.xi >= xi_target:
            break
    out = {k: np.array(v) for k, v in rows.items()}
    if not out["plastic"].any():
        raise NoYield(f"ray at theta={theta:.4f} did not yield")
    if out["xi"][-1] < xi_target:
        raise NoYield(f"ray at theta={theta:.4f} stopped at xi={out['xi'][-1]:.4g}")
    return out


def _flow_angle(sig, sig_tr):
    """Lode angle of the return direction sigma_tr - sigma."""
    c = (np.asarray(sig_tr) - np.asarray(sig)) @ PI_TO_PRINCIPAL[:, :2]
    return np.mod(np.arctan2(c[..., 1], c[..., 0]), TWO_PI)


def _snapshots(ray, xi_levels):
    """Interface points at each xi level, interpolated between plastic steps."""
    pl = np.flatnonzero(ray["plastic"])
    if pl.size < 2:
        raise NoYield("need two plastic steps to place the initial surface")
    xi, c = ray["xi"], ray["sig"] @ PI_TO_PRINCIPAL[:, :2]
    out = []
    for lev in xi_levels:
        k = int(np.clip(np.searchsorted(xi[pl], lev), 1, pl.size - 1))
        i, j = pl[k - 1], pl[k]
        t = (lev - xi[i]) / (xi[j] - xi[i])
        p = c[i] + t * (c[j] - c[i])
        out.append((np.hypot(*p), np.mod(np.arctan2(p[1], p[0]), TWO_PI), lev,
                    _flow_angle(ray["sig"][j], ray["sig_tr"][j])))
    return out


def gen_yield_dataset(model, n_angles=140, n_snapshots=10, xi_max=0.2, n_steps=300,
                      config=None, rho_bar=None, meta=None):
    """Radial strain-driven exploration of a material's yield surfaces.

    Three probes along the principal stress axes bound the elastic region by
    a triangle (a convex surface contains it). Each of the ``n_angles`` rays
    starts with one elastic jump to 95 % of that bound and then advances in
    uniform increments until xi passes ``xi_max``. Interface points are
    recorded at ``n_snapshots`` uniform xi levels from 0 to ``xi_max``.
    """
    if n_snapshots < 2:
        raise ValueError("need the initial surface and at least one hardened snapshot")
    cfg = config or ReturnMapConfig()
    probes = []
    for th in AXIS_ANGLES:
        d = direction_in_pi_plane(th)
        a, da = 0.0, 1e-3
        while True:
            a += da
            if model.yield_value(model.stress(a * d), 0.0) > 0.0:
                break
            if a > 10.0:
                raise NoYield(f"probe at theta={th:.4f} did not yield")
        a_y = brentq(lambda s: model.yield_value(model.stress(s * d), 0.0), a - da, a, xtol=1e-14)
        probes.append(_ray_radius(model, d, a_y))
    probes = np.array(probes)
    order = np.argsort(AXIS_ANGLES)
    tri = YieldSurfaceSnapshot(0.0, np.array(AXIS_ANGLES)[order], probes[order])
    a_y_mean = _elastic_amplitude(model, direction_in_pi_plane(0.0), probes.mean())
    a_end = a_y_mean + 1.25 * xi_max
    da = a_end / n_steps
    levels = np.linspace(0.0, xi_max, n_snapshots)
    thetas = np.arange(n_angles) * TWO_PI / n_angles
    samples = {"rho": [], "theta": [], "xi": [], "flow_theta": []}
    flow = {k: [] for k in ("sig1", "sig2", "sig3", "xi", "g1", "g2", "g3", "flow_theta")}
    rays = {k: [] for k in ("ray", "ray_theta", "s", "eps1", "eps2", "eps3", "sig1", "sig2",
                            "sig3", "xi", "dlam", "plastic")}
    for r, th in enumerate(thetas):
        d = direction_in_pi_plane(th)
        a0 = _elastic_amplitude(model, d, 0.95 * float(tri.radius_at(th)[0]))
        ray = _run_ray(model, th, a0, da, xi_max, 4 * n_steps, cfg)
        for rho, t, lev, ft in _snapshots(ray, levels):
            samples["rho"].append(rho)
            samples["theta"].append(t)
            samples["xi"].append(lev)
            samples["flow_theta"].append(ft)
        pl = np.flatnonzero(ray["plastic"])
        g = (ray["eps_tr"][pl] - ray["eps"][pl]) / ray["dlam"][pl, None]
        for a in range(3):
            flow[f"sig{a + 1}"].append(ray["sig"][pl, a])
            flow[f"g{a + 1}"].append(g[:, a])
        flow["xi"].append(ray["xi"][pl])
        flow["flow_theta"].append(_flow_angle(ray["sig"][pl], ray["sig_tr"][pl]))
        n = len(ray["s"])
        rays["ray"].append(np.full(n, r))
        rays["ray_theta"].append(np.full(n, th))
        rays["s"].append(ray["s"])
        for a in range(3):
            rays[f"eps{a + 1}"].append(ray["s"] * d[a])
            rays[f"sig{a + 1}"].append(ray["sig"][:, a])
        rays["xi"].append(ray["xi"])
        rays["dlam"].append(ray["dlam"])
        rays["plastic"].append(ray["plastic"])
    samples = {k: np.array(v) for k, v in samples.items()}
    info = {"n_angles": n_angles, "n_snapshots": n_snapshots, "xi_max": xi_max,
            "n_steps": n_steps, "model": getattr(model, "name", "model"), **(meta or {})}
    ds = build_level_set_dataset(samples, rho_bar, info)
    return YieldExploration(ds, {k: np.concatenate(v) for k, v in flow.items()},
                            {k: np.concatenate(v) for k, v in rays.items()}, probes, info)


def ray_paths(rays):
    """Split a concatenated rays table into per-ray (strains, stresses) pairs."""
    idx = np.asarray(rays["ray"]).astype(int)
    out = []
    for r in np.unique(idx):
        sel = idx == r
        eps = np.column_stack([rays[f"eps{a}"][sel] for a in (1, 2, 3)])
        sig = np.column_stack([rays[f"sig{a}"][sel] for a in (1, 2, 3)])
        out.append((np.vstack([np.zeros(3), eps]), np.vstack([np.zeros(3), sig])))
    return out


def import_yield_csv(path, rho_bar=None):
    """Interface samples from an external source (e.g. polycrystal simulations).

    The file needs the columns rho, theta, xi and optionally flow_theta, one
    row per interface point; auxiliary rows are generated here.
    """
    cols, meta = read_table(path)
    missing = {"rho", "theta", "xi"} - set(cols)
    if missing:
        raise KeyError(f"{path}: missing columns {sorted(missing)}")
    samples = {k: cols[k] for k in ("rho", "theta", "xi", "flow_theta") if k in cols}
    return build_level_set_dataset(samples, rho_bar, {"source": str(path), **meta})
