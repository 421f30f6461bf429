"""stepDense: a feed-forward black box mapping (eps_n, sigma_{n-1}) to sigma_n."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import autodiff as ad
from ..invariants import to_voigt
from ..network import Architecture, MinMaxScaler, NetworkModel
from ..training import NadamConfig, column_scales, fit

EPS_COLS = tuple(f"eps_v{i}" for i in range(6))
PREV_COLS = tuple(f"sig_prev_v{i}" for i in range(6))
OUT_COLS = tuple(f"sig_v{i}" for i in range(6))


def _voigt_rows(principal):
    return np.array([to_voigt(np.diag(p)) for p in np.asarray(principal, dtype=float)])


def teacher_forcing_table(paths):
    """Rows (eps_n, sigma_{n-1}) -> sigma_n from (strain, stress) path pairs."""
    cols = {c: [] for c in EPS_COLS + PREV_COLS + OUT_COLS}
    for eps, sig in paths:
        ev, sv = _voigt_rows(eps), _voigt_rows(sig)
        for i in range(6):
            cols[EPS_COLS[i]].append(ev[1:, i])
            cols[PREV_COLS[i]].append(sv[:-1, i])
            cols[OUT_COLS[i]].append(sv[1:, i])
    return {k: np.concatenate(v) for k, v in cols.items()}


class StepLoss:
    """Plain regression MSE in normalized output units."""

    inputs = EPS_COLS + PREV_COLS
    columns = list(OUT_COLS)

    def __init__(self):
        self.scales = None

    def prepare(self, table):
        self.scales = column_scales(table, self.columns)

    def __call__(self, model, batch, params=None):
        x = np.column_stack([batch[c] for c in self.inputs])
        val, _, _ = model.jet(x, order=0, params=params)
        acc = 0.0
        for a, c in enumerate(self.columns):
            err = ad.mul(ad.sub(ad.getitem(val, (slice(None), a)), batch[c]), 1.0 / self.scales[c])
            acc = ad.add(acc, ad.mul(ad.sum(ad.square(err)), 1.0 / len(x)))
        return acc, {"value": acc}


@dataclass
class StepDenseBaseline:
    model: NetworkModel

    def predict(self, eps_voigt, sig_prev_voigt):
        x = np.concatenate([eps_voigt, sig_prev_voigt], axis=-1)
        return self.model.forward(np.atleast_2d(x))

    def rollout(self, strains, sigma0=None):
        """Closed-loop prediction: each step consumes the previous prediction."""
        ev = _voigt_rows(strains)
        out = np.zeros((len(ev), 6))
        out[0] = 0.0 if sigma0 is None else to_voigt(np.diag(sigma0))
        for n in range(1, len(ev)):
            out[n] = self.predict(ev[n], out[n - 1])[0]
        return out[:, :3]

    def teacher_forced(self, strains, stresses):
        ev, sv = _voigt_rows(strains), _voigt_rows(stresses)
        pred = self.model.forward(np.hstack([ev[1:], sv[:-1]]))
        return np.vstack([sv[:1], pred])[:, :3]


def train_baseline_stepdense(paths, config=None, seed=0, width=100):
    """Teacher-forced training on (strain, stress) path pairs."""
    cfg = config or NadamConfig(batch_size=64, epochs=500, seed=seed)
    table = teacher_forcing_table(paths)
    x = np.column_stack([table[c] for c in StepLoss.inputs])
    y = np.column_stack([table[c] for c in OUT_COLS])
    arch = Architecture.from_name("dddd", 12, 6, width=width)
    net = NetworkModel.create(arch, seed, MinMaxScaler.fit(x), MinMaxScaler.fit(y))
    net.meta.update({"role": "stepDense", "seed": seed})
    report = fit(net, table, StepLoss(), cfg)
    return StepDenseBaseline(net), report


def rollout_stepdense(baseline, strains, sigma0=None):
    return baseline.rollout(strains, sigma0)
