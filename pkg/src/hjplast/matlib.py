"""Analytic material laws: energies, J2 radial return, hardening transforms and a
synthetic deforming yield-surface family.

Energies are written in the strain invariants (ev, es) for data generation and
in principal strains for return mapping. The principal forms use the identity
``es**2 = (2/3) |e|**2`` so the analytic laws stay smooth at zero shear.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .invariants import SQRT2_3, TWO_PI

# --------------------------------------------------------------------------
# parameters


@dataclass(frozen=True)
class LinearElasticParams:
    E: float = 2079.9  # kPa
    nu: float = 0.3

    def __post_init__(self):
        if self.E <= 0 or not -1.0 < self.nu < 0.5:
            raise ValueError("need E > 0 and -1 < nu < 0.5")

    @property
    def K(self):
        return self.E / (3.0 * (1.0 - 2.0 * self.nu))

    @property
    def G(self):
        return self.E / (2.0 * (1.0 + self.nu))


@dataclass(frozen=True)
class MCCParams:
    p0: float = -100.0  # kPa
    ev0: float = 0.0
    c_mu: float = 5.4
    xi_c: float = 0.018

    def __post_init__(self):
        if self.xi_c <= 0 or self.c_mu <= 0:
            raise ValueError("need xi_c > 0 and c_mu > 0")


@dataclass(frozen=True)
class J2Params:
    sigma_y0: float = 100.0  # kPa
    H: float = 207.99  # kPa, 0.1 E

    def yield_stress(self, eps_bar_p):
        return self.sigma_y0 + self.H * eps_bar_p


@dataclass(frozen=True)
class SyntheticSurfaceParams:
    R0: float = 100.0 * SQRT2_3  # kPa
    H_s: float = 100.0  # kPa per unit xi
    xi_star: float = 0.05
    m: float = 8.0


@dataclass(frozen=True)
class EnergyResponse:
    """psi, p = dpsi/dev, q = dpsi/des and the invariant stiffness entries."""

    psi: np.ndarray
    p: np.ndarray
    q: np.ndarray
    D11: np.ndarray
    D22: np.ndarray
    D12: np.ndarray

    @property
    def D(self):
        return np.array([[self.D11, self.D12], [self.D12, self.D22]])


# --------------------------------------------------------------------------
# energies


def _dev_sq(eps):
    ev = ad.sum(eps)
    e = ad.sub(eps, ad.mul(ev, 1.0 / 3.0))
    return ev, ad.mul(ad.sum(ad.square(e)), 2.0 / 3.0)


class LinearElastic:
    """psi = K ev^2 / 2 + 3 G es^2 / 2."""

    name = "linear"

    def __init__(self, params=None):
        self.params = params or LinearElasticParams()

    def eval(self, ev, es):
        K, G = self.params.K, self.params.G
        ev, es = np.asarray(ev, dtype=float), np.asarray(es, dtype=float)
        one = np.ones(np.broadcast(ev, es).shape)
        return EnergyResponse(0.5 * K * ev ** 2 + 1.5 * G * es ** 2, K * ev, 3.0 * G * es,
                              K * one, 3.0 * G * one, 0.0 * one)

    def psi_invariant(self, x):
        K, G = self.params.K, self.params.G
        return ad.add(ad.mul(ad.square(x[0]), 0.5 * K), ad.mul(ad.square(x[1]), 1.5 * G))

    def psi_principal(self, eps):
        K, G = self.params.K, self.params.G
        ev, es2 = _dev_sq(eps)
        return ad.add(ad.mul(ad.square(ev), 0.5 * K), ad.mul(es2, 1.5 * G))

    def principal_response(self, eps):
        """Closed-form (psi, stress, moduli) in principal strains."""
        K, G = self.params.K, self.params.G
        eps = np.asarray(eps, dtype=float)
        ev = eps.sum()
        e = eps - ev / 3.0
        D = (K - 2.0 * G / 3.0) * np.ones((3, 3)) + 2.0 * G * np.eye(3)
        return 0.5 * K * ev ** 2 + G * e @ e, K * ev + 2.0 * G * e, D


class ModifiedCamClay:
    """Pressure-dependent hyperelasticity with exponential volumetric stiffness.

    The compression index in the stiffness expressions is identified with the
    one in the exponent (c_r = xi_c); that is the only reading under which the
    stated stresses are derivatives of the energy.
    """

    name = "mcc"

    def __init__(self, params=None):
        self.params = params or MCCParams()

    def eval(self, ev, es):
        p0, ev0, cm, xc = (self.params.p0, self.params.ev0, self.params.c_mu, self.params.xi_c)
        ev, es = np.asarray(ev, dtype=float), np.asarray(es, dtype=float)
        e = np.exp((ev0 - ev) / xc)
        psi = -p0 * xc * e - 1.5 * cm * p0 * e * es ** 2
        p = p0 * (1.0 + 1.5 * cm / xc * es ** 2) * e
        q = -3.0 * cm * p0 * e * es
        D11 = -p0 / xc * (1.0 + 1.5 * cm / xc * es ** 2) * e
        D22 = -3.0 * cm * p0 * e
        D12 = 3.0 * p0 * cm * es / xc * e
        return EnergyResponse(psi, p, q, D11, D22, D12)

    def _psi(self, ev, es2):
        p0, ev0, cm, xc = (self.params.p0, self.params.ev0, self.params.c_mu, self.params.xi_c)
        e = ad.exp(ad.mul(ad.sub(ev0, ev), 1.0 / xc))
        return ad.mul(ad.add(ad.mul(es2, 1.5 * cm), xc), ad.mul(e, -p0))

    def psi_invariant(self, x):
        return self._psi(x[0], ad.square(x[1]))

    def psi_principal(self, eps):
        return self._psi(*_dev_sq(eps))


class FictitiousElastic:
    """Linear volumetric part with a quartic shear term, psi = K ev^2/2 + 3 G es^4/2."""

    name = "fictitious"

    def __init__(self, K=None, G=None):
        base = LinearElasticParams()
        self.K = base.K if K is None else float(K)
        self.G = base.G if G is None else float(G)

    def eval(self, ev, es):
        K, G = self.K, self.G
        ev, es = np.asarray(ev, dtype=float), np.asarray(es, dtype=float)
        one = np.ones(np.broadcast(ev, es).shape)
        return EnergyResponse(0.5 * K * ev ** 2 + 1.5 * G * es ** 4, K * ev, 6.0 * G * es ** 3,
                              K * one, 18.0 * G * es ** 2 * one, 0.0 * one)

    def psi_invariant(self, x):
        return ad.add(ad.mul(ad.square(x[0]), 0.5 * self.K),
                      ad.mul(ad.square(ad.square(x[1])), 1.5 * self.G))

    def psi_principal(self, eps):
        ev, es2 = _dev_sq(eps)
        return ad.add(ad.mul(ad.square(ev), 0.5 * self.K), ad.mul(ad.square(es2), 1.5 * self.G))


def linear_elastic_eval(ev, es, params=None):
    return LinearElastic(params).eval(ev, es)


def mcc_eval(ev, es, params=None):
    return ModifiedCamClay(params).eval(ev, es)


def fictitious_eval(ev, es, K, G):
    return FictitiousElastic(K, G).eval(ev, es)


ENERGIES = {"linear": LinearElastic, "mcc": ModifiedCamClay, "fictitious": FictitiousElastic}


# --------------------------------------------------------------------------
# J2 radial return


@dataclass(frozen=True)
class RadialReturnResult:
    stress: np.ndarray  # 3x3
    delta_gamma: float  # equivalent plastic strain increment
    eps_bar_p: float
    plastic: bool


def j2_radial_return_oracle(trial_stress, eps_bar_p, params=None, elastic=None):
    """Closed-form return of a trial stress onto the hardening von Mises surface.

    ``eps_bar_p`` is the accumulated equivalent plastic strain; the returned
    ``delta_gamma`` uses the same measure, so q = q_tr - 3 G delta_gamma.
    """
    params = params or J2Params()
    elastic = elastic or LinearElasticParams()
    sig = np.asarray(trial_stress, dtype=float)
    if sig.shape == (3,):
        sig = np.diag(sig)
    p = np.trace(sig) / 3.0
    s = sig - p * np.eye(3)
    q_tr = np.sqrt(1.5) * np.linalg.norm(s)
    sy = params.yield_stress(eps_bar_p)
    if q_tr <= sy:
        return RadialReturnResult(sig.copy(), 0.0, float(eps_bar_p), False)
    dg = (q_tr - sy) / (3.0 * elastic.G + params.H)
    q = q_tr - 3.0 * elastic.G * dg
    return RadialReturnResult(p * np.eye(3) + s * (q / q_tr), float(dg), float(eps_bar_p + dg), True)


def j2_yield_radius(xi, params=None):
    """pi-plane yield radius after accumulated multiplier xi of a unit-gradient f."""
    params = params or J2Params()
    return SQRT2_3 * params.yield_stress(SQRT2_3 * np.asarray(xi, dtype=float))


# --------------------------------------------------------------------------
# hardening transforms

HARDENING_VARIANTS = ("isotropic", "mixed", "fictitious")


def hardening_transform(rho, theta, eps_bar_p, variant="isotropic", H=J2Params().H):
    """Map Lode coordinates to the transformed input of an initial-yield function."""
    if np.any(np.asarray(eps_bar_p) < 0):
        raise ValueError("internal variable must be non-negative")
    if variant == "isotropic":
        return rho - SQRT2_3 * H * eps_bar_p, theta
    if variant == "mixed":
        return rho - SQRT2_3 * H * eps_bar_p * (1.0 + np.cos(theta - np.pi / 6.0) ** 2), theta
    if variant == "fictitious":
        if np.any(np.asarray(eps_bar_p) >= 1.0):
            raise ValueError("fictitious transform collapses for eps_bar_p >= 1")
        return rho * (1.0 - eps_bar_p ** 2) ** 6, theta
    raise ValueError(f"unknown hardening variant {variant!r}")


def hardening_transform_graph(rho, theta, eps_bar_p, variant="isotropic", H=J2Params().H):
    """Autodiff twin of :func:`hardening_transform` (returns the transformed radius)."""
    if variant == "isotropic":
        return ad.sub(rho, ad.mul(eps_bar_p, SQRT2_3 * H))
    if variant == "mixed":
        c2 = ad.square(ad.cos(ad.sub(theta, np.pi / 6.0)))
        return ad.sub(rho, ad.mul(ad.mul(eps_bar_p, SQRT2_3 * H), ad.add(c2, 1.0)))
    if variant == "fictitious":
        if np.any(ad.value_of(eps_bar_p) >= 1.0):
            raise ValueError("fictitious transform collapses for eps_bar_p >= 1")
        return ad.mul(rho, ad.power(ad.sub(1.0, ad.square(eps_bar_p)), 6.0))
    raise ValueError(f"unknown hardening variant {variant!r}")


# --------------------------------------------------------------------------
# synthetic surface family


_HEX_NORMALS = np.array([0.0, np.pi / 3.0, 2.0 * np.pi / 3.0])


def _hex_raw(theta, m):
    c = np.abs(np.cos(np.asarray(theta, dtype=float)[..., None] - _HEX_NORMALS))
    return 1.0 / np.sum(c ** m, axis=-1) ** (1.0 / m)


_HEX_MEAN = {}


def smoothed_hexagon(theta, m=8.0):
    """Unit-mean radius of a p-norm rounded hexagon with flats at k * 60 degrees."""
    if m not in _HEX_MEAN:
        t = np.linspace(0.0, TWO_PI, 4096, endpoint=False)
        _HEX_MEAN[m] = float(_hex_raw(t, m).mean())
    return _hex_raw(theta, m) / _HEX_MEAN[m]


def smoothed_hexagon_derivatives(theta, m=8.0):
    """h, dh/dtheta and d2h/dtheta2 of :func:`smoothed_hexagon` in closed form."""
    smoothed_hexagon(0.0, m)
    d = float(theta) - _HEX_NORMALS
    c2, cs, s2 = np.cos(d) ** 2, np.cos(d) * np.sin(d), np.sin(d) ** 2
    pw = c2 ** (m / 2.0 - 1.0)
    S = np.sum(pw * c2)
    S1 = -m * np.sum(pw * cs)
    S2 = m * np.sum(pw * ((m - 2.0) * s2 - (c2 - s2)))
    k = 1.0 / m
    h = S ** -k
    h1 = -k * S ** (-k - 1.0) * S1
    h2 = k * (k + 1.0) * S ** (-k - 2.0) * S1 ** 2 - k * S ** (-k - 1.0) * S2
    return h / _HEX_MEAN[m], h1 / _HEX_MEAN[m], h2 / _HEX_MEAN[m]


def smoothed_hexagon_graph(theta, m=8.0):
    smoothed_hexagon(0.0, m)
    acc = 0.0
    for a in _HEX_NORMALS:
        c2 = ad.square(ad.cos(ad.sub(theta, a)))
        acc = ad.add(acc, ad.power(c2, m / 2.0))
    return ad.mul(ad.power(acc, -1.0 / m), 1.0 / _HEX_MEAN[m])


def synthetic_surface(theta, xi, params=None):
    """Yield radius of a hexagon that hardens and rounds into a circle."""
    params = params or SyntheticSurfaceParams()
    xi = np.asarray(xi, dtype=float)
    if np.any(xi < 0):
        raise ValueError("xi must be non-negative")
    w = np.minimum(1.0, xi / params.xi_star)
    h = smoothed_hexagon(theta, params.m)
    return (params.R0 + params.H_s * xi) * ((1.0 - w) * h + w)


def synthetic_surface_graph(theta, xi, params=None):
    params = params or SyntheticSurfaceParams()
    w_val = ad.value_of(xi) / params.xi_star
    w = 1.0 if w_val >= 1.0 else ad.mul(xi, 1.0 / params.xi_star)
    h = smoothed_hexagon_graph(theta, params.m)
    shape = ad.add(ad.mul(ad.sub(1.0, w), h), w)
    return ad.mul(ad.add(ad.mul(xi, params.H_s), params.R0), shape)
