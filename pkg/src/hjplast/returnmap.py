"""Implicit return mapping in principal axes for learned or analytic materials.

A :class:`MaterialModel` couples an energy (stresses and elastic moduli in
principal strains), a yield function of (rho, theta, xi) and, optionally, an
independent flow direction. Every adapter reports exact first and second
derivatives, so the local Newton system and the consistent tangent are exact.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .invariants import PI_TO_PRINCIPAL, SQRT2_3, TWO_PI, spectral_decompose
from .levelset import helper_shift
from .matlib import (J2Params, SyntheticSurfaceParams, hardening_transform_graph,
                     smoothed_hexagon_derivatives, synthetic_surface, synthetic_surface_graph)
from .network import pair_index

log = logging.getLogger(__name__)

_P = PI_TO_PRINCIPAL[:, :2]  # principal values -> in-plane pi coordinates via P.T


class NonConvergence(RuntimeError):
    def __init__(self, msg, iterations=0, residual=np.inf, history=()):
        super().__init__(msg)
        self.iterations = iterations
        self.residual = residual
        self.history = list(history)


class SingularTangent(np.linalg.LinAlgError):
    pass


# --------------------------------------------------------------------------
# energy adapters


class OracleEnergy:
    """Analytic energy differentiated by the autodiff engine in principal strains."""

    def __init__(self, law):
        self.law = law

    def principal(self, eps):
        if hasattr(self.law, "principal_response"):
            return self.law.principal_response(eps)
        return ad.evaluate_with_hessian(self.law.psi_principal, eps)


class NetworkEnergy:
    """Energy network of (ev, es) or of the three principal strains."""

    def __init__(self, net, es_floor=1e-10):
        if net.arch.n_in not in (2, 3):
            raise ValueError("energy network must take 2 invariants or 3 principal strains")
        self.net = net
        self.es_floor = es_floor

    def principal(self, eps):
        eps = np.asarray(eps, dtype=float)
        if self.net.arch.n_in == 3:
            v, g, h = self.net.jet(eps[None], order=2)
            D = np.empty((3, 3))
            for k, (i, j) in enumerate(pair_index(3)):
                D[i, j] = D[j, i] = h[k, 0, 0]
            return float(v[0, 0]), g[:, 0, 0].copy(), D
        ev = eps.sum()
        e = eps - ev / 3.0
        es = float(np.sqrt(2.0 / 3.0 * e @ e))
        v, g, h = self.net.jet(np.array([[ev, es]]), order=2)
        pv, ps = g[0, 0, 0], g[1, 0, 0]
        dvv, dvs, dss = h[0, 0, 0], h[1, 0, 0], h[2, 0, 0]
        dev = np.eye(3) - 1.0 / 3.0
        if es < self.es_floor:
            # zero-shear limit of ps / es is dss
            sig = pv * np.ones(3)
            D = dvv * np.ones((3, 3)) + (2.0 / 3.0) * dss * dev
            return float(v[0, 0]), sig, D
        n = (2.0 / 3.0) * e / es
        sig = pv + ps * n
        d2es = ((2.0 / 3.0) * dev - np.outer(n, n)) / es
        D = (dvv + dvs * (n[:, None] + n[None, :]) + dss * np.outer(n, n) + ps * d2es)
        return float(v[0, 0]), sig, D


# --------------------------------------------------------------------------
# yield-function adapters: polar(rho, theta, xi) -> (f, grad[3], hess[3, 3])


class GraphYield:
    """Yield function given as an autodiff graph of x = (rho, theta, xi)."""

    def __init__(self, fn, name="analytic"):
        self.fn = fn
        self.name = name

    def value(self, rho, theta, xi):
        return float(ad.value_of(self.fn(np.array([rho, theta, xi], dtype=float))))

    def polar(self, rho, theta, xi):
        return ad.evaluate_with_hessian(self.fn, [rho, theta, xi])


class J2Yield(GraphYield):
    """f = rho - sqrt(2/3) (sigma_y0 + H sqrt(2/3) xi), a signed distance in rho."""

    def __init__(self, params=None):
        self.params = params or J2Params()

        def fn(x):
            r = ad.add(ad.mul(x[2], (2.0 / 3.0) * self.params.H), SQRT2_3 * self.params.sigma_y0)
            return ad.sub(x[0], r)

        super().__init__(fn, "j2")

    def value(self, rho, theta, xi):
        return rho - SQRT2_3 * self.params.sigma_y0 - (2.0 / 3.0) * self.params.H * xi

    def polar(self, rho, theta, xi):
        grad = np.array([1.0, 0.0, -(2.0 / 3.0) * self.params.H])
        return self.value(rho, theta, xi), grad, np.zeros((3, 3))


def j2_yield(params=None):
    return J2Yield(params)


class SyntheticYield(GraphYield):
    """f = rho - rho_y(theta, xi) for the hexagon-to-circle family."""

    def __init__(self, params=None):
        self.params = params or SyntheticSurfaceParams()

        def fn(x):
            return ad.sub(x[0], synthetic_surface_graph(x[1], x[2], self.params))

        super().__init__(fn, "synthetic")

    def value(self, rho, theta, xi):
        return rho - float(synthetic_surface(theta, xi, self.params))

    def polar(self, rho, theta, xi):
        p = self.params
        h, h1, h2 = smoothed_hexagon_derivatives(theta, p.m)
        a = p.R0 + p.H_s * xi
        w, dw = (xi / p.xi_star, 1.0 / p.xi_star) if xi < p.xi_star else (1.0, 0.0)
        b = (1.0 - w) * h + w
        db = (1.0 - h) * dw
        grad = np.array([1.0, -a * (1.0 - w) * h1, -(p.H_s * b + a * db)])
        hess = np.zeros((3, 3))
        hess[1, 1] = -a * (1.0 - w) * h2
        hess[1, 2] = hess[2, 1] = -h1 * (p.H_s * (1.0 - w) - a * dw)
        hess[2, 2] = -2.0 * p.H_s * db
        return rho - a * b, grad, hess


def synthetic_yield(params=None):
    return SyntheticYield(params)


class NetworkYield:
    """Level-set network of (rho, theta, xi) trained on helper-shifted targets.

    Beyond the largest xi seen in training the function is continued linearly
    in xi from the boundary, with a one-time warning.
    """

    def __init__(self, net, rho_bar, xi_max=None):
        self.net = net
        self.rho_bar = float(rho_bar)
        self.xi_max = xi_max
        self._warned = False
        self.name = "network"

    def _clip(self, xi):
        if self.xi_max is not None and xi > self.xi_max:
            if not self._warned:
                log.warning("yield network queried at xi=%.4g beyond training range %.4g; "
                            "extrapolating linearly", xi, self.xi_max)
                self._warned = True
            return self.xi_max, xi - self.xi_max
        return xi, 0.0

    def value(self, rho, theta, xi):
        return self.polar(rho, theta, xi, order=0)[0]

    def polar(self, rho, theta, xi, order=2):
        xq, dx = self._clip(float(xi))
        x = np.array([[rho, theta, xq]])
        zeta = helper_shift(theta, self.rho_bar)
        if order == 0 and dx == 0.0:
            return float(self.net.forward(x)[0, 0] - zeta), None, None
        v, g, h = self.net.jet(x, order=2)
        grad = g[:, 0, 0].copy()
        hess = np.empty((3, 3))
        for k, (i, j) in enumerate(pair_index(3)):
            hess[i, j] = hess[j, i] = h[k, 0, 0]
        # remove the helper shift 2 rho_bar cos(theta / 3)
        f = float(v[0, 0]) - zeta
        grad[1] += (2.0 * self.rho_bar / 3.0) * np.sin(theta / 3.0)
        hess[1, 1] += (2.0 * self.rho_bar / 9.0) * np.cos(theta / 3.0)
        if dx:
            f += grad[2] * dx
            grad[:2] += hess[:2, 2] * dx
            hess[2, 2] = 0.0
        return f, grad, hess


class InitialYieldNetwork:
    """Network of (rho, theta) alone, trained on the initial surface."""

    def __init__(self, net, rho_bar):
        self.net = net
        self.rho_bar = float(rho_bar)

    def polar2(self, rho, theta):
        v, g, h = self.net.jet(np.array([[rho, theta]]), order=2)
        f = float(v[0, 0]) - helper_shift(theta, self.rho_bar)
        grad = g[:, 0, 0].copy()
        grad[1] += (2.0 * self.rho_bar / 3.0) * np.sin(theta / 3.0)
        hess = np.array([[h[0, 0, 0], h[1, 0, 0]], [h[1, 0, 0], h[2, 0, 0]]])
        hess[1, 1] += (2.0 * self.rho_bar / 9.0) * np.cos(theta / 3.0)
        return f, grad, hess


class AnalyticInitialYield:
    """Initial surface as an autodiff graph of (rho, theta)."""

    def __init__(self, fn):
        self.fn = fn

    def polar2(self, rho, theta):
        return ad.evaluate_with_hessian(self.fn, [rho, theta])


def j2_initial_yield(params=None):
    params = params or J2Params()
    return AnalyticInitialYield(lambda x: ad.sub(x[0], SQRT2_3 * params.sigma_y0))


class TransformedYield:
    """Initial-yield function evaluated at hardening-transformed Lode coordinates.

    The transform is stated in the equivalent plastic strain; with a
    unit-gradient yield function that strain is sqrt(2/3) times xi.
    """

    def __init__(self, base, variant="isotropic", H=J2Params().H, strain_factor=SQRT2_3):
        self.base = base
        self.variant = variant
        self.H = H
        self.strain_factor = strain_factor
        self.name = f"transformed-{variant}"

    def _inner(self, x):
        return hardening_transform_graph(x[0], x[1], ad.mul(x[2], self.strain_factor),
                                         self.variant, self.H)

    def value(self, rho, theta, xi):
        return self.polar(rho, theta, xi)[0]

    def polar(self, rho, theta, xi):
        rl, grl, hrl = ad.evaluate_with_hessian(self._inner, [rho, theta, xi])
        f, fu, fuu = self.base.polar2(rl, theta)
        J = np.array([grl, [0.0, 1.0, 0.0]])  # d(rho_L, theta) / d(rho, theta, xi)
        grad = J.T @ fu
        hess = J.T @ fuu @ J + fu[0] * hrl
        return f, grad, hess


# --------------------------------------------------------------------------
# material model


def polar_from_principal(sig):
    """(rho, theta) with first and second derivatives w.r.t. the principal values."""
    c = _P.T @ sig
    rho = float(np.hypot(c[0], c[1]))
    if rho <= 1e-12 * (1.0 + np.linalg.norm(sig)):
        raise ValueError("Lode angle undefined at a hydrostatic state")
    u = c / rho
    theta = float(np.arctan2(c[1], c[0]) % TWO_PI)
    d_rho = _P @ u
    d_theta = _P @ np.array([-c[1], c[0]]) / rho ** 2
    h_rho = _P @ ((np.eye(2) - np.outer(u, u)) / rho) @ _P.T
    a, b = c
    h_th_c = np.array([[2 * a * b, b * b - a * a], [b * b - a * a, -2 * a * b]]) / rho ** 4
    h_theta = _P @ h_th_c @ _P.T
    return rho, theta, d_rho, d_theta, h_rho, h_theta


@dataclass
class MaterialModel:
    energy: object
    yield_fn: object
    flow: object = None  # network of (sig1, sig2, sig3, xi) -> (g1, g2, g3)
    name: str = "model"

    def stress(self, eps):
        return self.energy.principal(eps)[1]

    def yield_value(self, sig, xi):
        c = _P.T @ np.asarray(sig, dtype=float)
        rho = float(np.hypot(c[0], c[1]))
        theta = float(np.arctan2(c[1], c[0]) % TWO_PI)
        return float(self.yield_fn.value(rho, theta, xi))

    def yield_derivatives(self, sig, xi):
        """f, df/d(sig1, sig2, sig3, xi) and the 4x4 Hessian."""
        rho, theta, dr, dt, hr, ht = polar_from_principal(np.asarray(sig, dtype=float))
        f, g, h = self.yield_fn.polar(rho, theta, xi)
        J = np.zeros((3, 4))
        J[0, :3], J[1, :3], J[2, 3] = dr, dt, 1.0
        grad = J.T @ g
        hess = J.T @ h @ J
        hess[:3, :3] += g[0] * hr + g[1] * ht
        return float(f), grad, hess

    def flow_derivatives(self, sig, xi, yield_grad=None, yield_hess=None):
        """Flow direction g_A and its derivatives w.r.t. (sig1, sig2, sig3, xi)."""
        if self.flow is None:
            return yield_grad[:3], yield_hess[:3, :]
        x = np.append(np.asarray(sig, dtype=float), xi)
        g = self.flow.forward(x)
        return g, self.flow.input_jacobian(x)


def analytic_j2_model(elastic=None, j2=None):
    from .matlib import LinearElastic

    return MaterialModel(OracleEnergy(LinearElastic(elastic)), j2_yield(j2), name="j2-analytic")


# --------------------------------------------------------------------------
# integration


@dataclass
class ReturnMapConfig:
    tol: float = 1e-10
    max_iter: int = 50
    singular_cond: float = 1e13
    max_halvings: int = 40


@dataclass
class MaterialState:
    elastic_strain: np.ndarray = field(default_factory=lambda: np.zeros((3, 3)))
    xi: float = 0.0


@dataclass
class TrialState:
    strain: np.ndarray  # 3x3 trial elastic strain
    eps: np.ndarray  # principal trial strains
    directions: np.ndarray
    sig: np.ndarray  # principal trial stresses
    D: np.ndarray  # principal moduli at the trial strain
    xi: float


@dataclass
class NewtonResult:
    eps: np.ndarray
    delta_lambda: float
    xi: float
    sig: np.ndarray
    D: np.ndarray
    A: np.ndarray
    iterations: int
    residual: float
    f: float
    flow: np.ndarray


@dataclass
class ReturnMapResult:
    stress: np.ndarray
    elastic_strain: np.ndarray
    delta_lambda: float
    xi: float
    tangent: np.ndarray
    iterations: int
    residual: float
    plastic: bool
    principal_stress: np.ndarray
    flow: np.ndarray | None = None

    @property
    def state(self):
        return MaterialState(self.elastic_strain, self.xi)

    @property
    def plastic_work(self):
        if not self.plastic:
            return 0.0
        return float(self.delta_lambda * self.principal_stress @ self.flow)


def _as_matrix(t):
    t = np.asarray(t, dtype=float)
    if t.shape == (6,):
        from .invariants import from_voigt

        return from_voigt(t)
    return t


def trial_state(state, d_eps, model):
    strain = _as_matrix(state.elastic_strain) + _as_matrix(d_eps)
    sd = spectral_decompose(strain)
    _, sig, D = model.energy.principal(sd.values)
    return TrialState(strain, sd.values, sd.directions, sig, D, float(state.xi))


def yield_check(trial, model):
    """'elastic' when f(trial) <= 0, otherwise 'plastic'."""
    f = model.yield_value(trial.sig, trial.xi)
    return "elastic" if f <= 0.0 else "plastic"


def _local_system(model, eps, eps_tr, dlam, xi_n):
    _, sig, D = model.energy.principal(eps)
    xi = xi_n + dlam
    f, fg, fh = model.yield_derivatives(sig, xi)
    g, dg = model.flow_derivatives(sig, xi, fg, fh)
    r = np.append(eps - eps_tr + dlam * g, f)
    A = np.empty((4, 4))
    A[:3, :3] = np.eye(3) + dlam * dg[:, :3] @ D
    A[:3, 3] = g + dlam * dg[:, 3]
    A[3, :3] = fg[:3] @ D
    A[3, 3] = fg[3]
    return r, A, sig, D, f, g


def newton_solve(trial, model, config=None):
    """Solve the four-equation local problem for (eps1, eps2, eps3, delta_lambda)."""
    cfg = config or ReturnMapConfig()
    eps_tr = trial.eps
    e_ref = max(float(np.linalg.norm(eps_tr)), 1e-8)
    s_ref = max(float(np.linalg.norm(trial.sig)), 1.0)
    scale = np.array([1 / e_ref, 1 / e_ref, 1 / e_ref, 1 / s_ref])
    x = np.append(eps_tr, 0.0)
    history = []
    for it in range(cfg.max_iter + 1):
        r, A, sig, D, f, g = _local_system(model, x[:3], eps_tr, x[3], trial.xi)
        res = float(np.linalg.norm(r * scale))
        history.append(res)
        if res < cfg.tol:
            return NewtonResult(x[:3].copy(), float(x[3]), trial.xi + float(x[3]), sig, D, A,
                                it, res, f, g)
        if it == cfg.max_iter:
            break
        As = A * scale[:, None]
        if not np.all(np.isfinite(As)) or np.linalg.cond(As) > cfg.singular_cond:
            raise SingularTangent(f"local tangent is singular at iteration {it}")
        dx = -np.linalg.solve(A, r)
        step = 1.0
        for _ in range(cfg.max_halvings):
            if x[3] + step * dx[3] >= 0.0:
                break
            step *= 0.5
        else:
            step = 0.0
            dx[3] = -x[3]
        x = x + step * dx
        x[3] = max(x[3], 0.0)
    raise NonConvergence(f"return mapping did not converge in {cfg.max_iter} iterations "
                         f"(scaled residual {history[-1]:.3e})", cfg.max_iter, history[-1], history)


def spectral_tangent(a, sig, eps_tr, directions):
    """Rank-4 tangent from principal moduli a_AB and the trial eigenframe."""
    n = directions
    m = np.einsum("ia,jb->abij", n, n)  # m[A, B] = n_A (x) n_B
    c = np.einsum("ab,aij,bkl->ijkl", a, m[np.arange(3), np.arange(3)], m[np.arange(3), np.arange(3)])
    tol = 1e-8 * (1.0 + float(np.linalg.norm(eps_tr)))
    for A in range(3):
        for B in range(3):
            if A == B:
                continue
            de = eps_tr[B] - eps_tr[A]
            if abs(de) < tol:
                coef = a[B, B] - a[A, B]
            else:
                coef = (sig[B] - sig[A]) / de
            c += 0.5 * coef * (np.einsum("ij,kl->ijkl", m[A, B], m[A, B]) +
                               np.einsum("ij,kl->ijkl", m[A, B], m[B, A]))
    return c


def consistent_tangent(newton, trial):
    """d(sigma)/d(eps) for a converged plastic step."""
    inv = np.linalg.inv(newton.A)
    a = newton.D @ inv[:3, :3]
    return spectral_tangent(a, newton.sig, trial.eps, trial.directions)


def integrate_step(state, d_eps, model, config=None):
    trial = trial_state(state, d_eps, model)
    n = trial.directions
    if yield_check(trial, model) == "elastic":
        stress = (n * trial.sig) @ n.T
        tangent = spectral_tangent(trial.D, trial.sig, trial.eps, n)
        return ReturnMapResult(stress, trial.strain, 0.0, trial.xi, tangent, 0, 0.0, False,
                               trial.sig.copy())
    res = newton_solve(trial, model, config)
    stress = (n * res.sig) @ n.T
    strain = (n * res.eps) @ n.T
    return ReturnMapResult(stress, strain, res.delta_lambda, res.xi,
                           consistent_tangent(res, trial), res.iterations, res.residual,
                           True, res.sig.copy(), res.flow.copy())
