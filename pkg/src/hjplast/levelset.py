"""Level sets of yield surfaces on the pi-plane.

Snapshots of a yield surface are closed star-shaped curves given in Lode polar
coordinates. They are turned into signed-distance data either per ray (the
training default) or on a polar grid by fast marching, and consecutive
snapshots give the Hamilton-Jacobi hardening velocity.
"""
from __future__ import annotations

import heapq
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .invariants import TWO_PI, normalize_angle
from .pipeline.io import read_table, write_table

N_AUX = 14
DENSIFY = 4096


@dataclass(frozen=True)
class YieldSurfaceSnapshot:
    xi: float
    theta: np.ndarray
    rho: np.ndarray

    def __post_init__(self):
        th = np.asarray(self.theta, dtype=float)
        r = np.asarray(self.rho, dtype=float)
        if th.shape != r.shape or th.ndim != 1 or len(th) < 3:
            raise ValueError("need at least three interface points")
        if np.any(r <= 0) or not np.all(np.isfinite(r)):
            raise ValueError("interface radii must be positive")
        if np.any(np.diff(th) <= 0) or th[0] < 0 or th[-1] >= TWO_PI:
            raise ValueError("angles must increase strictly within [0, 2 pi)")
        object.__setattr__(self, "theta", th)
        object.__setattr__(self, "rho", r)

    @classmethod
    def from_function(cls, radius, xi=0.0, n=360):
        th = np.linspace(0.0, TWO_PI, n, endpoint=False)
        return cls(float(xi), th, np.asarray(radius(th), dtype=float))

    def vertices(self):
        return np.column_stack([self.rho * np.cos(self.theta), self.rho * np.sin(self.theta)])

    def radius_at(self, theta):
        """Radius of the closed polyline along the ray at ``theta``."""
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        v = self.vertices()
        a, b = v, np.roll(v, -1, axis=0)
        d = np.column_stack([np.cos(theta), np.sin(theta)])
        # ray t*d meets segment a + s (b - a): solve per segment, keep s in [0, 1]
        e = b - a
        den = d[:, None, 0] * e[None, :, 1] - d[:, None, 1] * e[None, :, 0]
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (a[None, :, 0] * e[None, :, 1] - a[None, :, 1] * e[None, :, 0]) / den
            s = (a[None, :, 0] * d[:, None, 1] - a[None, :, 1] * d[:, None, 0]) / den
        ok = (np.abs(den) > 0) & (s >= -1e-12) & (s <= 1 + 1e-12) & (t > 0)
        t = np.where(ok, t, np.inf)
        return t.min(axis=1)


def densify(snapshot, n=DENSIFY):
    """Points along the closed interface polyline, about ``n`` in total."""
    v = snapshot.vertices()
    w = np.roll(v, -1, axis=0)
    seg = np.linalg.norm(w - v, axis=1)
    counts = np.maximum(1, np.round(n * seg / seg.sum()).astype(int))
    pts = [v[i] + np.outer(np.arange(c) / c, w[i] - v[i]) for i, c in enumerate(counts)]
    return np.vstack(pts)


def _segment_distance(p, a, b):
    """Distance from points p (N, 2) to the closed polyline through a -> b segments."""
    e = b - a
    ee = np.einsum("ij,ij->i", e, e)
    out = np.empty(len(p))
    for s in range(0, len(p), 256):
        q = p[s:s + 256]
        rel = q[:, None, :] - a[None, :, :]
        t = np.clip(np.einsum("nij,ij->ni", rel, e) / np.where(ee > 0, ee, 1.0), 0.0, 1.0)
        diff = rel - t[..., None] * e[None]
        out[s:s + 256] = np.sqrt(np.min(np.einsum("nij,nij->ni", diff, diff), axis=1))
    return out


def signed_distance(snapshot, rho, theta, rho_tol=1e-12):
    """Signed Euclidean distance to the interface, negative inside (elastic side)."""
    rho = np.asarray(rho, dtype=float)
    theta = np.asarray(theta, dtype=float)
    scalar = rho.ndim == 0
    rho, theta = np.atleast_1d(rho), np.atleast_1d(theta)
    if np.any(rho < rho_tol):
        raise ValueError("query at the polar origin")
    pts = densify(snapshot)
    p = np.column_stack([rho * np.cos(theta), rho * np.sin(theta)])
    dist = _segment_distance(p, pts, np.roll(pts, -1, axis=0))
    inside = rho < snapshot.radius_at(theta)
    out = np.where(inside, -dist, dist)
    return float(out[0]) if scalar else out


# --------------------------------------------------------------------------
# polar grid and fast marching


@dataclass
class SignedDistanceField:
    rho: np.ndarray  # (n_rho,)
    theta: np.ndarray  # (n_theta,)
    phi: np.ndarray  # (n_rho, n_theta)
    xi: float = 0.0

    @property
    def h_rho(self):
        return float(self.rho[1] - self.rho[0])

    @property
    def h_theta(self):
        return float(self.theta[1] - self.theta[0])

    def gradient_norm(self):
        """|grad phi| in polar form by central differences (one-sided at rho ends)."""
        pr = np.gradient(self.phi, self.h_rho, axis=0)
        pt = (np.roll(self.phi, -1, axis=1) - np.roll(self.phi, 1, axis=1)) / (2 * self.h_theta)
        return np.sqrt(pr ** 2 + (pt / self.rho[:, None]) ** 2)

    def eikonal_residual(self):
        return np.abs(self.gradient_norm() - 1.0)


def polar_grid(rho_max, n_rho=128, n_theta=256):
    h = rho_max / n_rho
    return h * np.arange(1, n_rho + 1), np.linspace(0.0, TWO_PI, n_theta, endpoint=False)


def _solve_update(a, ha, b, hb):
    """Upwind solution of ((u-a)/ha)^2 + ((u-b)/hb)^2 = 1 with u >= max(a, b)."""
    if not np.isfinite(b):
        return a + ha
    if not np.isfinite(a):
        return b + hb
    if abs(a - b) >= max(ha, hb) and (a + ha <= b or b + hb <= a):
        return min(a + ha, b + hb)
    wa, wb = 1.0 / ha ** 2, 1.0 / hb ** 2
    A = wa + wb
    B = -2.0 * (a * wa + b * wb)
    C = a * a * wa + b * b * wb - 1.0
    disc = B * B - 4 * A * C
    if disc < 0:
        return min(a + ha, b + hb)
    u = (-B + np.sqrt(disc)) / (2 * A)
    if u < max(a, b):
        return min(a + ha, b + hb)
    return u


def fast_march_reinitialize(snapshot, rho_max=None, n_rho=128, n_theta=256):
    """Signed-distance field of the interface on a polar grid by fast marching.

    Nodes next to the interface are frozen at their exact signed distance and
    the unsigned distance is then marched outward on both sides with the polar
    upwind Eikonal update.
    """
    if rho_max is None:
        rho_max = 2.0 * float(snapshot.rho.max())
    rr, tt = polar_grid(rho_max, n_rho, n_theta)
    r_if = snapshot.radius_at(tt)
    if np.any(r_if >= rr[-1]) or np.any(r_if <= rr[0]):
        raise ValueError("interface lies outside the grid extent")
    inside = rr[:, None] < r_if[None, :]
    sign = np.where(inside, -1.0, 1.0)
    dist = np.full((n_rho, n_theta), np.inf)
    frozen = np.zeros((n_rho, n_theta), dtype=bool)
    # interface-adjacent nodes: a neighbour across the interface
    adj = np.zeros_like(frozen)
    adj[:-1] |= inside[:-1] != inside[1:]
    adj[1:] |= inside[:-1] != inside[1:]
    adj |= inside != np.roll(inside, 1, axis=1)
    adj |= inside != np.roll(inside, -1, axis=1)
    ii, jj = np.nonzero(adj)
    d0 = np.abs(signed_distance(snapshot, rr[ii], tt[jj]))
    dist[ii, jj] = d0
    frozen[ii, jj] = True
    hr, ht = rr[1] - rr[0], tt[1] - tt[0]
    heap = []

    def push_neighbours(i, j):
        for (p, q) in ((i - 1, j), (i + 1, j), (i, (j - 1) % n_theta), (i, (j + 1) % n_theta)):
            if 0 <= p < n_rho and not frozen[p, q]:
                a = min(dist[p - 1, q] if p > 0 and frozen[p - 1, q] else np.inf,
                        dist[p + 1, q] if p + 1 < n_rho and frozen[p + 1, q] else np.inf)
                b = min(dist[p, (q - 1) % n_theta] if frozen[p, (q - 1) % n_theta] else np.inf,
                        dist[p, (q + 1) % n_theta] if frozen[p, (q + 1) % n_theta] else np.inf)
                u = _solve_update(a, hr, b, rr[p] * ht)
                if u < dist[p, q]:
                    dist[p, q] = u
                    heapq.heappush(heap, (u, p, q))

    for i, j in zip(ii, jj):
        push_neighbours(i, j)
    while heap:
        u, i, j = heapq.heappop(heap)
        if frozen[i, j] or u > dist[i, j]:
            continue
        frozen[i, j] = True
        push_neighbours(i, j)
    return SignedDistanceField(rr, tt, sign * dist, float(snapshot.xi))


def hardening_velocity(field_i, field_next, dxi):
    """F = (phi_i - phi_{i+1}) / dxi; positive where the surface expands."""
    if not dxi > 0:
        raise ValueError("dxi must be positive")
    if field_i.phi.shape != field_next.phi.shape:
        raise ValueError("fields are on different grids")
    return (field_i.phi - field_next.phi) / dxi


# --------------------------------------------------------------------------
# training rows


def helper_shift(theta, rho_bar):
    return 2.0 * rho_bar * np.cos(np.asarray(theta, dtype=float) / 3.0)


def helper_apply(phi, rho, theta, rho_bar):
    return np.asarray(phi, dtype=float) + helper_shift(theta, rho_bar)


def helper_remove(phi_zeta, rho, theta, rho_bar):
    return np.asarray(phi_zeta, dtype=float) - helper_shift(theta, rho_bar)


def generate_auxiliary_points(rho_o, theta_o, xi_o, rho_bar=None):
    """Fourteen rows along the ray through an interface sample.

    Radii are 2 rho_o k / 14 for k = 1..14 (origin excluded, 2 rho_o included),
    so k = 7 is the interface point itself. The value is the radial signed
    distance rho - rho_o, helper-shifted when ``rho_bar`` is given.
    """
    if not rho_o > 0:
        raise ValueError("interface radius must be positive")
    k = np.arange(1, N_AUX + 1)
    rho = 2.0 * rho_o * k / N_AUX
    rho[N_AUX // 2 - 1] = rho_o
    phi = rho - rho_o
    theta = np.full(N_AUX, float(theta_o))
    out = {"rho": rho, "theta": theta, "xi": np.full(N_AUX, float(xi_o)), "phi": phi,
           "boundary": k == N_AUX // 2}
    if rho_bar is not None:
        out["phi_zeta"] = helper_apply(phi, rho, theta, rho_bar)
    return out


@dataclass
class LevelSetDataset:
    rows: dict
    rho_bar: float
    meta: dict = field(default_factory=dict)

    COLUMNS = ("rho", "theta", "xi", "phi_zeta", "boundary", "flow_theta")

    def __len__(self):
        return len(self.rows["rho"])

    @property
    def phi(self):
        return helper_remove(self.rows["phi_zeta"], self.rows["rho"], self.rows["theta"], self.rho_bar)

    @property
    def xi_max(self):
        return float(np.max(self.rows["xi"]))

    def table(self):
        return {k: self.rows[k] for k in self.COLUMNS if k in self.rows}

    def save(self, path, meta=None):
        path = Path(path)
        info = {"rho_bar": self.rho_bar, **self.meta, **(meta or {})}
        write_table(path, self.table(), {"units": "kPa,rad,-,kPa", **(meta or {})})
        side = path.with_suffix(".json")
        side.write_text(json.dumps(info, indent=2, sort_keys=True) + "\n")
        return path

    @classmethod
    def load(cls, path):
        path = Path(path)
        cols, _ = read_table(path)
        info = json.loads(path.with_suffix(".json").read_text())
        if "boundary" in cols:
            cols["boundary"] = cols["boundary"].astype(bool)
        rho_bar = float(info.pop("rho_bar"))
        return cls(cols, rho_bar, info)


def build_level_set_dataset(samples, rho_bar=None, meta=None):
    """Rows for every interface sample (rho_o, theta_o, xi_o[, flow_theta]).

    ``samples`` is a dict of arrays. The flow angle is attached to the
    interface row only; the other rows carry NaN.
    """
    rho_o = np.asarray(samples["rho"], dtype=float)
    if rho_bar is None:
        rho_bar = float(rho_o.mean())
    flow = samples.get("flow_theta")
    parts = []
    for i in range(len(rho_o)):
        r = generate_auxiliary_points(rho_o[i], normalize_angle(samples["theta"][i]),
                                      samples["xi"][i], rho_bar)
        ft = np.full(N_AUX, np.nan)
        if flow is not None:
            ft[r["boundary"]] = flow[i]
        r["flow_theta"] = ft
        parts.append(r)
    rows = {k: np.concatenate([p[k] for p in parts]) for k in parts[0]}
    rows.pop("phi")
    m = {"aux_points": N_AUX, "aux_radii": "2*rho_o*k/14, k=1..14", **(meta or {})}
    return LevelSetDataset(rows, rho_bar, m)
