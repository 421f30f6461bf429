"""Stress/strain tensor algebra and the coordinate systems used by the models.

Conventions
-----------
* Tension and dilative pressure are positive.
* Symmetric tensors are stored as six components ordered (11, 22, 33, 12, 23, 13);
  plain 3x3 arrays are accepted wherever a tensor is expected.
* The pi-plane radius is the Euclidean norm of the deviatoric principal vector,
  ``rho = sqrt(s1''**2 + s2''**2) = sqrt(2 J2)``, and the Lode angle is the
  full-quadrant angle ``atan2(s2'', s1'')`` in [0, 2*pi). With this choice the
  forward and inverse maps compose exactly.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad

SQRT2_3 = np.sqrt(2.0 / 3.0)
SQRT3_2 = np.sqrt(1.5)
TWO_PI = 2.0 * np.pi

_R1 = np.array([[np.sqrt(2) / 2, 0.0, np.sqrt(2) / 2],
                [0.0, 1.0, 0.0],
                [-np.sqrt(2) / 2, 0.0, np.sqrt(2) / 2]])
_R2 = np.array([[1.0, 0.0, 0.0],
                [0.0, SQRT2_3, 1.0 / np.sqrt(3.0)],
                [0.0, -1.0 / np.sqrt(3.0), SQRT2_3]])
#: maps pi-plane coordinates (s1'', s2'', s3'') to principal values
PI_TO_PRINCIPAL = _R1 @ _R2

_VOIGT = ((0, 0), (1, 1), (2, 2), (0, 1), (1, 2), (0, 2))


@dataclass(frozen=True)
class SymTensor3:
    """Symmetric rank-2 tensor stored by its six independent components."""

    components: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.components, dtype=float).reshape(6)
        object.__setattr__(self, "components", c)

    @classmethod
    def from_matrix(cls, m):
        m = np.asarray(m, dtype=float)
        return cls(np.array([m[i, j] for i, j in _VOIGT]))

    def matrix(self):
        return from_voigt(self.components)

    def trace(self):
        return float(self.components[:3].sum())

    def deviator(self):
        c = self.components.copy()
        c[:3] -= self.trace() / 3.0
        return SymTensor3(c)

    def ddot(self, other):
        """Double contraction a : b."""
        a, b = self.components, as_sym(other).components
        return float(a[:3] @ b[:3] + 2.0 * a[3:] @ b[3:])


def as_sym(t):
    if isinstance(t, SymTensor3):
        return t
    t = np.asarray(t, dtype=float)
    if t.shape == (6,):
        return SymTensor3(t)
    return SymTensor3.from_matrix(t)


def as_matrix(t):
    if isinstance(t, SymTensor3):
        return t.matrix()
    t = np.asarray(t, dtype=float)
    return from_voigt(t) if t.shape == (6,) else t


def to_voigt(m):
    m = as_matrix(m)
    return np.array([m[i, j] for i, j in _VOIGT])


def from_voigt(v):
    v = np.asarray(v, dtype=float)
    m = np.empty((3, 3))
    for k, (i, j) in enumerate(_VOIGT):
        m[i, j] = m[j, i] = v[k]
    return m


def deviator(t):
    m = as_matrix(t)
    return m - np.trace(m) / 3.0 * np.eye(3)


# --------------------------------------------------------------------------
# spectral form

@dataclass(frozen=True)
class SpectralDecomposition:
    """Principal values (descending) and unit principal directions (columns)."""

    values: np.ndarray
    directions: np.ndarray

    def reconstruct(self, values=None):
        lam = self.values if values is None else np.asarray(values, dtype=float)
        n = self.directions
        return (n * lam) @ n.T


def spectral_decompose(t):
    m = as_matrix(t)
    if not np.all(np.isfinite(m)):
        raise ValueError("tensor has non-finite components")
    lam, vec = np.linalg.eigh(0.5 * (m + m.T))
    order = np.argsort(lam)[::-1]
    return SpectralDecomposition(lam[order], vec[:, order])


# --------------------------------------------------------------------------
# two-invariant space

@dataclass(frozen=True)
class StrainInvariants:
    ev: float
    es: float


@dataclass(frozen=True)
class StressInvariants:
    p: float
    q: float


def strain_invariants(eps):
    m = as_matrix(eps)
    e = deviator(m)
    return StrainInvariants(float(np.trace(m)), float(SQRT2_3 * np.linalg.norm(e)))


def stress_invariants(sig):
    m = as_matrix(sig)
    s = deviator(m)
    return StressInvariants(float(np.trace(m) / 3.0), float(SQRT3_2 * np.linalg.norm(s)))


def stress_from_invariants(p, q, n_hat=None, tol=1e-10):
    """sigma = p 1 + sqrt(2/3) q n_hat, with n_hat a unit deviatoric direction."""
    out = p * np.eye(3)
    if q == 0.0:
        return out
    n = _unit_deviatoric(n_hat, tol)
    return out + SQRT2_3 * q * n


def strain_from_invariants(ev, es, n_hat=None, tol=1e-10):
    """eps = (ev / 3) 1 + sqrt(3/2) es n_hat; inverse of :func:`strain_invariants`."""
    out = ev / 3.0 * np.eye(3)
    if es == 0.0:
        return out
    n = _unit_deviatoric(n_hat, tol)
    return out + SQRT3_2 * es * n


def _unit_deviatoric(n_hat, tol):
    if n_hat is None:
        raise ValueError("a deviatoric direction is required when q > 0")
    n = as_matrix(n_hat)
    if abs(np.linalg.norm(n) - 1.0) > tol or abs(np.trace(n)) > tol:
        raise ValueError("n_hat must be a unit-norm deviatoric tensor")
    return n


def j2_j3(principal):
    s = np.asarray(principal, dtype=float)
    s = s - s.mean()
    return 0.5 * float(s @ s), float((s ** 3).sum() / 3.0)


def lode_cos3theta(j2, j3):
    """cos(3 theta) from the deviatoric characteristic equation.

    This angle is measured from the sigma_1 axis projection, which sits at
    -pi/6 in the atan2 convention, so ``cos3theta == -sin(3 * theta_atan2)``.
    """
    return 3.0 * np.sqrt(3.0) * j3 / (2.0 * j2 ** 1.5)


# --------------------------------------------------------------------------
# pi-plane and Lode coordinates

@dataclass(frozen=True)
class PiPlaneCoords:
    s1: float
    s2: float
    s3: float = 0.0

    def as_array(self):
        return np.array([self.s1, self.s2, self.s3])


@dataclass(frozen=True)
class LodePoint:
    rho: float
    theta: float

    @property
    def defined(self):
        return not np.isnan(self.theta)


def principal_from_pi_plane(c):
    v = c.as_array() if isinstance(c, PiPlaneCoords) else np.asarray(c, dtype=float)
    return PI_TO_PRINCIPAL @ v


def pi_plane_from_principal(principal):
    s = np.asarray(principal, dtype=float)
    return PiPlaneCoords(*(PI_TO_PRINCIPAL.T @ s))


def pi_plane_from_lode(l):
    if l.rho < 0:
        raise ValueError("rho must be non-negative")
    if l.rho == 0.0:
        return PiPlaneCoords(0.0, 0.0, 0.0)
    return PiPlaneCoords(l.rho * np.cos(l.theta), l.rho * np.sin(l.theta), 0.0)


def normalize_angle(theta):
    th = np.mod(theta, TWO_PI)
    th = np.where(th >= TWO_PI, th - TWO_PI, th)
    return float(th) if np.ndim(th) == 0 else th


def lode_from_principal(s1, s2, s3):
    """Lode polar coordinates; theta is NaN for a hydrostatic state."""
    c = pi_plane_from_principal([s1, s2, s3])
    rho = float(np.hypot(c.s1, c.s2))
    scale = 1.0 + float(np.linalg.norm([s1, s2, s3]))
    if rho < 1e-12 * scale:
        return LodePoint(rho, float("nan"))
    return LodePoint(rho, normalize_angle(np.arctan2(c.s2, c.s1)))


def principal_from_lode(rho, theta, mean=0.0):
    """Principal values with the given Lode coordinates and mean value."""
    c = np.array([rho * np.cos(theta), rho * np.sin(theta), np.sqrt(3.0) * mean])
    return PI_TO_PRINCIPAL @ c


def lode_arrays(principal):
    """Vectorised (rho, theta) for an (N, 3) array of principal values."""
    s = np.atleast_2d(np.asarray(principal, dtype=float))
    c = s @ PI_TO_PRINCIPAL
    rho = np.hypot(c[:, 0], c[:, 1])
    theta = normalize_angle(np.arctan2(c[:, 1], c[:, 0]))
    return rho, theta


def direction_in_pi_plane(theta):
    """Unit deviatoric principal vector pointing at Lode angle ``theta``."""
    return PI_TO_PRINCIPAL @ np.array([np.cos(theta), np.sin(theta), 0.0])


def lode_graph(sig):
    """(rho, theta) of a principal-value Var of shape (3,), built for autodiff.

    theta is shifted into [0, 2 pi); the shift is piecewise constant so it does
    not affect derivatives.
    """
    m = PI_TO_PRINCIPAL
    x = ad.sum(ad.mul(sig, m[:, 0]))
    y = ad.sum(ad.mul(sig, m[:, 1]))
    rho = ad.sqrt(ad.add(ad.square(x), ad.square(y)))
    theta = ad.atan2(y, x)
    if ad.value_of(theta) < 0:
        theta = ad.add(theta, TWO_PI)
    return rho, theta


def strain_invariants_graph(eps):
    """(ev, es) of a principal-strain Var of shape (3,), built for autodiff."""
    ev = ad.sum(eps)
    e = ad.sub(eps, ad.mul(ev, 1.0 / 3.0))
    es = ad.sqrt(ad.mul(ad.sum(ad.square(e)), 2.0 / 3.0))
    return ev, es
