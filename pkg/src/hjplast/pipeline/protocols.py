"""Strain-controlled loading protocols and the material-point driver.

Every protocol moves along a fixed deviatoric direction d(theta) of the
principal strain space, so a path is a sequence of signed amplitudes s with
strain = s d(theta) (+ an optional volumetric offset). Paths stay coaxial with
the lab axes, which keeps the principal ordering of every column stable.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..invariants import SQRT2_3, SQRT3_2, direction_in_pi_plane, lode_arrays
from ..returnmap import MaterialState, NonConvergence, ReturnMapConfig, integrate_step

KINDS = ("monotonic", "load-unload", "cyclic")


@dataclass
class StressPathProtocol:
    kind: str
    theta: float
    amplitude: float = 0.2
    n_steps: int = 300
    schedule: tuple = ()  # cyclic amplitudes
    n_unload: int | None = None  # None draws 1-3 from the seed
    unload_depth: tuple = (0.1, 0.3)  # fraction of the current peak
    seed: int = 0
    volumetric: float = 0.0
    name: str = ""
    waypoints: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown protocol kind {self.kind!r}")
        if not 2 <= self.n_steps:
            raise ValueError("a path needs at least two increments")
        self.waypoints = self._waypoints()
        if not self.name:
            self.name = f"{self.kind}-{np.degrees(self.theta):.0f}"

    def _waypoints(self):
        if self.kind == "monotonic":
            return np.array([0.0, self.amplitude])
        if self.kind == "cyclic":
            amps = self.schedule or (self.amplitude,)
            pts = [0.0]
            for a in amps:
                pts += [a, -a]
            return np.array(pts)
        rng = np.random.default_rng(self.seed)
        n = self.n_unload if self.n_unload is not None else int(rng.integers(1, 4))
        peaks = np.sort(rng.uniform(0.3, 0.9, n)) * self.amplitude
        depth = rng.uniform(*self.unload_depth, n)
        pts = [0.0]
        for pk, dp in zip(peaks, depth):
            pts += [pk, pk * (1.0 - dp)]
        pts.append(self.amplitude)
        return np.array(pts)

    @property
    def direction(self):
        return direction_in_pi_plane(self.theta)

    def amplitudes(self):
        """Signed amplitude at every step, endpoints and waypoints included."""
        w = self.waypoints
        legs = np.abs(np.diff(w))
        ds = legs.sum() / self.n_steps
        out = [w[:1]]
        for a, b, L in zip(w[:-1], w[1:], legs):
            k = max(1, int(round(L / ds)))
            out.append(np.linspace(a, b, k + 1)[1:])
        return np.concatenate(out)

    def strains(self):
        """(N + 1, 3) principal strains along the path."""
        s = self.amplitudes()
        return s[:, None] * self.direction[None, :] + self.volumetric / 3.0

    def reversals(self):
        """Step indices of the peaks where unloading starts (|s| begins to fall)."""
        s = self.amplitudes()
        ds = np.diff(s)
        return [i + 1 for i in range(len(ds) - 1)
                if ds[i] * ds[i + 1] < 0 and abs(s[i + 1]) > abs(s[i])]


def monotonic(theta, amplitude=0.2, n_steps=300, **kw):
    return StressPathProtocol("monotonic", theta, amplitude, n_steps, **kw)


def load_unload(theta, amplitude=0.2, n_steps=300, seed=0, **kw):
    return StressPathProtocol("load-unload", theta, amplitude, n_steps, seed=seed, **kw)


def cyclic(theta, schedule=(0.06, 0.07, 0.08), n_steps=400, **kw):
    return StressPathProtocol("cyclic", theta, max(schedule), n_steps, schedule=tuple(schedule), **kw)


# --------------------------------------------------------------------------
# driver

PATH_COLUMNS = ("step", "s", "eps1", "eps2", "eps3", "sig1", "sig2", "sig3", "p", "q", "rho",
                "theta", "pi_x", "pi_y", "es_signed", "q_signed", "xi", "dlam", "plastic",
                "iterations", "residual", "plastic_work")


def path_columns(strains, stresses, direction, extra=None):
    """Invariant and pi-plane columns shared by every stress-path table."""
    eps = np.asarray(strains, dtype=float)
    sig = np.asarray(stresses, dtype=float)
    rho, theta = lode_arrays(sig)
    theta = np.where(rho > 1e-12 * (1.0 + np.abs(sig).max(axis=1)), theta, 0.0)
    out = {
        "step": np.arange(len(eps)),
        "eps1": eps[:, 0], "eps2": eps[:, 1], "eps3": eps[:, 2],
        "sig1": sig[:, 0], "sig2": sig[:, 1], "sig3": sig[:, 2],
        "p": sig.mean(axis=1), "q": SQRT3_2 * rho, "rho": rho, "theta": theta,
        "pi_x": rho * np.cos(theta), "pi_y": rho * np.sin(theta),
        "es_signed": SQRT2_3 * eps @ direction, "q_signed": SQRT3_2 * sig @ direction,
    }
    out.update(extra or {})
    return out


def run_path_driver(model, protocol, config=None, state=None):
    """Integrate a strain-controlled protocol; returns a dict of columns."""
    cfg = config or ReturnMapConfig()
    strains = protocol.strains() if isinstance(protocol, StressPathProtocol) else np.asarray(protocol)
    direction = protocol.direction if isinstance(protocol, StressPathProtocol) else \
        direction_in_pi_plane(0.0)
    st = state or MaterialState()
    n = len(strains)
    sig = np.zeros((n, 3))
    sig[0] = np.diag(integrate_step(st, np.zeros((3, 3)), model, cfg).stress)
    xi, dlam, plastic, iters, resid, work = (np.zeros(n) for _ in range(6))
    xi[0] = st.xi
    for i in range(1, n):
        d_eps = np.diag(strains[i] - strains[i - 1])
        try:
            res = integrate_step(st, d_eps, model, cfg)
        except NonConvergence as exc:
            raise NonConvergence(f"step {i}: {exc}", exc.iterations, exc.residual,
                                 exc.history) from exc
        st = res.state
        sig[i] = np.diag(res.stress)
        xi[i], dlam[i], plastic[i] = res.xi, res.delta_lambda, float(res.plastic)
        iters[i], resid[i], work[i] = res.iterations, res.residual, res.plastic_work
    s = strains @ direction
    return path_columns(strains, sig, direction, {
        "s": s, "xi": xi, "dlam": dlam, "plastic": plastic.astype(bool),
        "iterations": iters.astype(int), "residual": resid, "plastic_work": work})


# --------------------------------------------------------------------------
# path metrics


def rms(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.sqrt(np.mean((a - b) ** 2)))


def unloading_slopes(table, reversals, window=0.05):
    """Least-squares dq/d(es) over the first ``window`` of strain after each reversal.

    Both axes are signed projections on the loading direction, so an elastic
    branch of a linear material has slope 3G.
    """
    s = np.asarray(table["s"])
    es, q = np.asarray(table["es_signed"]), np.asarray(table["q_signed"])
    out = []
    for r in reversals:
        sel = [r]
        for j in range(r + 1, len(s)):
            if abs(s[j] - s[r]) > window + 1e-12:
                break
            if j > r + 1 and (s[j] - s[j - 1]) * (s[r + 1] - s[r]) <= 0:
                break
            sel.append(j)
        if len(sel) < 3:
            continue
        out.append(float(np.polyfit(es[sel], q[sel], 1)[0]))
    return out
