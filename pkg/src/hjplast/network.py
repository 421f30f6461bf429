"""Feed-forward networks built from Dense and Multiply layers.

Architectures are named by their layer letters, ``d`` for Dense and ``m`` for
Multiply (``dmmdmd`` is Dense, Multiply, Multiply, Dense, Multiply, Dense). The
final Dense layer is a linear regression head; hidden Dense layers use the
configured activation (ReLU by default). A Multiply layer squares its input
element-wise and has no parameters.

Input derivatives are propagated forward as second-order jets (value, input
gradient, unique input-Hessian entries) using the differentiable primitives of
:mod:`hjplast.autodiff`, so parameter gradients of Sobolev losses come out of
the same reverse pass as the value loss.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad

FORMAT_VERSION = 1
ACTIVATIONS = ("relu", "linear", "tanh")


class CheckpointError(ValueError):
    pass


@dataclass(frozen=True)
class LayerSpec:
    kind: str  # "dense" or "multiply"
    width: int | None = None
    activation: str = "linear"

    def __post_init__(self):
        if self.kind not in ("dense", "multiply"):
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.kind == "dense" and self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")


@dataclass(frozen=True)
class Architecture:
    name: str
    layers: tuple
    n_in: int
    n_out: int

    @classmethod
    def from_name(cls, name, n_in, n_out=1, width=100, activation="relu"):
        if not name or set(name) - {"d", "m"}:
            raise ValueError(f"architecture name must use letters d/m, got {name!r}")
        if name[-1] != "d":
            raise ValueError("last layer must be Dense")
        if name[0] != "d":
            raise ValueError("first layer must be Dense")
        layers = []
        for i, ch in enumerate(name):
            if ch == "m":
                layers.append(LayerSpec("multiply"))
            elif i == len(name) - 1:
                layers.append(LayerSpec("dense", n_out, "linear"))
            else:
                layers.append(LayerSpec("dense", width, activation))
        return cls(name, tuple(layers), n_in, n_out)

    @property
    def dense_shapes(self):
        shapes, w = [], self.n_in
        for layer in self.layers:
            if layer.kind == "dense":
                shapes.append((w, layer.width))
                w = layer.width
        return shapes

    @property
    def n_params(self):
        return int(sum(a * b + b for a, b in self.dense_shapes))


@dataclass
class MinMaxScaler:
    """Per-feature affine map of the fitted range onto [0, 1].

    Constant features get unit scale so the map stays invertible. Values outside
    the fitted range are extrapolated linearly.
    """

    lo: np.ndarray
    hi: np.ndarray

    @classmethod
    def fit(cls, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return cls(x.min(axis=0), x.max(axis=0))

    @classmethod
    def identity(cls, n):
        return cls(np.zeros(n), np.ones(n))

    @property
    def scale(self):
        s = np.asarray(self.hi - self.lo, dtype=float)
        return np.where(s > 0, s, 1.0)

    def transform(self, x):
        return (np.asarray(x, dtype=float) - self.lo) / self.scale

    def inverse(self, x):
        return np.asarray(x, dtype=float) * self.scale + self.lo


@dataclass
class NetworkModel:
    arch: Architecture
    weights: list
    biases: list
    in_scaler: MinMaxScaler
    out_scaler: MinMaxScaler
    meta: dict = field(default_factory=dict)

    @classmethod
    def create(cls, arch, seed=0, in_scaler=None, out_scaler=None):
        """Glorot-uniform weights, zero biases."""
        rng = np.random.default_rng(seed)
        weights, biases = [], []
        for fan_in, fan_out in arch.dense_shapes:
            lim = np.sqrt(6.0 / (fan_in + fan_out))
            weights.append(rng.uniform(-lim, lim, size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        return cls(arch, weights, biases,
                   in_scaler or MinMaxScaler.identity(arch.n_in),
                   out_scaler or MinMaxScaler.identity(arch.n_out))

    # -- parameters --------------------------------------------------------
    def params(self):
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def set_params(self, params):
        params = list(params)
        self.weights = [np.array(p, dtype=float) for p in params[0::2]]
        self.biases = [np.array(p, dtype=float) for p in params[1::2]]

    def copy(self):
        return NetworkModel(self.arch, [w.copy() for w in self.weights],
                            [b.copy() for b in self.biases],
                            MinMaxScaler(self.in_scaler.lo.copy(), self.in_scaler.hi.copy()),
                            MinMaxScaler(self.out_scaler.lo.copy(), self.out_scaler.hi.copy()),
                            dict(self.meta))

    # -- evaluation --------------------------------------------------------
    def _check(self, x):
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        x2 = np.atleast_2d(x)
        if x2.shape[1] != self.arch.n_in:
            raise ValueError(f"expected {self.arch.n_in} input features, got {x2.shape[1]}")
        return x2, single

    def forward(self, x):
        x2, single = self._check(x)
        h = self.in_scaler.transform(x2)
        wi = 0
        for layer in self.arch.layers:
            if layer.kind == "multiply":
                h = h * h
                continue
            h = h @ self.weights[wi] + self.biases[wi]
            wi += 1
            h = _activate_np(h, layer.activation)
        y = self.out_scaler.inverse(h)
        return y[0] if single else y

    __call__ = forward

    def graph(self, x, params=None):
        """Unscaled output as an autodiff graph of ``x`` (shape (n_in,) or (N, n_in))."""
        params = self.params() if params is None else params
        single = len(ad.value_of(x).shape) == 1 if ad.is_var(x) else np.ndim(x) == 1
        h = ad.reshape(x, (1, self.arch.n_in)) if single else x
        h = ad.div(ad.sub(h, self.in_scaler.lo), self.in_scaler.scale)
        wi = 0
        for layer in self.arch.layers:
            if layer.kind == "multiply":
                h = ad.square(h)
                continue
            h = ad.add(ad.matmul(h, params[2 * wi]), params[2 * wi + 1])
            wi += 1
            if layer.activation == "relu":
                h = ad.relu(h)
            elif layer.activation == "tanh":
                h = ad.tanh(h)
        y = ad.add(ad.mul(h, self.out_scaler.scale), self.out_scaler.lo)
        return ad.reshape(y, (self.arch.n_out,)) if single else y

    def jet(self, x, order=2, params=None):
        """Propagate value and input derivatives of the unscaled output.

        Returns ``(value, grad, hess)`` where value is (N, n_out), grad is
        (n_in, N, n_out) and hess holds the unique (i <= j) second derivatives
        as (n_pairs, N, n_out); missing orders are None. Entries are Vars when
        ``params`` are Vars.
        """
        x2 = np.atleast_2d(np.asarray(x, dtype=float))
        n, d = x2.shape
        params = self.params() if params is None else params
        pairs = pair_index(d)
        xs = self.in_scaler.transform(x2)
        chans = [xs[None]]
        if order >= 1:
            g = np.zeros((d, n, d))
            for i in range(d):
                g[i, :, i] = 1.0 / self.in_scaler.scale[i]
            chans.append(g)
        if order >= 2:
            chans.append(np.zeros((len(pairs), n, d)))
        z = np.concatenate(chans, axis=0)
        wi = 0
        for layer in self.arch.layers:
            if layer.kind == "multiply":
                z = _jet_square(z, d, order, pairs)
                continue
            z = _jet_dense(z, params[2 * wi], params[2 * wi + 1])
            wi += 1
            z = _jet_activate(z, layer.activation, d, order, pairs)
        so, lo = self.out_scaler.scale, self.out_scaler.lo
        val = ad.add(ad.mul(ad.getitem(z, 0), so), lo)
        grad = ad.mul(ad.getitem(z, slice(1, 1 + d)), so) if order >= 1 else None
        hess = ad.mul(ad.getitem(z, slice(1 + d, None)), so) if order >= 2 else None
        return val, grad, hess

    def input_jacobian(self, x):
        """d(output)/d(input); (n_out, n_in) for one point or (N, n_out, n_in)."""
        x2, single = self._check(x)
        _, g, _ = self.jet(x2, order=1)
        jac = np.transpose(g, (1, 2, 0))
        return jac[0] if single else jac

    def input_hessian(self, x):
        """Second input derivatives; (n_out, n_in, n_in) or (N, n_out, n_in, n_in)."""
        x2, single = self._check(x)
        _, _, h = self.jet(x2, order=2)
        d = self.arch.n_in
        full = np.empty((x2.shape[0], self.arch.n_out, d, d))
        for k, (i, j) in enumerate(pair_index(d)):
            full[:, :, i, j] = h[k]
            full[:, :, j, i] = h[k]
        return full[0] if single else full

    # -- persistence -------------------------------------------------------
    def save(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(checkpoint_text(self))
        return path

    @classmethod
    def load(cls, path):
        return checkpoint_from_text(Path(path).read_text())


def pair_index(d):
    return [(i, j) for i in range(d) for j in range(i, d)]


def _activate_np(h, act):
    if act == "relu":
        return np.maximum(h, 0.0)
    if act == "tanh":
        return np.tanh(h)
    return h


def _jet_dense(z, w, b):
    c, n, width = ad.value_of(z).shape
    out = ad.reshape(ad.matmul(ad.reshape(z, (c * n, width)), w), (c, n, -1))
    wout = ad.value_of(out).shape[-1]
    if c == 1:
        return ad.add(out, ad.reshape(b, (1, 1, wout)))
    bias = ad.concat([ad.reshape(b, (1, 1, wout)), np.zeros((c - 1, 1, wout))], axis=0)
    return ad.add(out, bias)


def _jet_activate(z, act, d, order, pairs):
    if act == "linear":
        return z
    if act == "relu":
        mask = (ad.value_of(z)[0] > 0.0).astype(float)
        return ad.mul(z, mask)
    # tanh
    z0 = ad.getitem(z, 0)
    t = ad.tanh(z0)
    if order == 0:
        return ad.reshape(t, (1,) + ad.value_of(t).shape)
    f1 = ad.sub(1.0, ad.square(t))
    parts = [ad.reshape(t, (1,) + ad.value_of(t).shape)]
    jz = ad.getitem(z, slice(1, 1 + d))
    parts.append(ad.mul(jz, f1))
    if order >= 2:
        f2 = ad.mul(ad.mul(t, f1), -2.0)
        ii = np.array([p[0] for p in pairs])
        jj = np.array([p[1] for p in pairs])
        hz = ad.getitem(z, slice(1 + d, None))
        cross = ad.mul(ad.getitem(jz, ii), ad.getitem(jz, jj))
        parts.append(ad.add(ad.mul(hz, f1), ad.mul(cross, f2)))
    return ad.concat(parts, axis=0)


def _jet_square(z, d, order, pairs):
    z0 = ad.getitem(z, 0)
    v = ad.square(z0)
    parts = [ad.reshape(v, (1,) + ad.value_of(v).shape)]
    if order >= 1:
        jz = ad.getitem(z, slice(1, 1 + d))
        two_z0 = ad.mul(z0, 2.0)
        parts.append(ad.mul(jz, two_z0))
    if order >= 2:
        ii = np.array([p[0] for p in pairs])
        jj = np.array([p[1] for p in pairs])
        hz = ad.getitem(z, slice(1 + d, None))
        cross = ad.mul(ad.getitem(jz, ii), ad.getitem(jz, jj))
        parts.append(ad.mul(ad.add(ad.mul(hz, z0), cross), 2.0))
    return ad.concat(parts, axis=0)


# --------------------------------------------------------------------------
# checkpoint format

def _fmt(x):
    if isinstance(x, bool) or x is None:
        return json.dumps(x)
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        xf = float(x)
        if not np.isfinite(xf):
            raise CheckpointError("cannot serialise non-finite numbers")
        return format(xf, ".17g")
    if isinstance(x, str):
        return json.dumps(x)
    if isinstance(x, np.ndarray):
        return _fmt(x.tolist())
    if isinstance(x, (list, tuple)):
        return "[" + ", ".join(_fmt(v) for v in x) + "]"
    if isinstance(x, dict):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {_fmt(v)}" for k, v in x.items()) + "}"
    raise TypeError(f"cannot serialise {type(x).__name__}")


def checkpoint_text(model):
    arch = model.arch
    hidden = [l for l in arch.layers if l.kind == "dense"][:-1]
    doc = {
        "format_version": FORMAT_VERSION,
        "architecture": arch.name,
        "n_in": arch.n_in,
        "n_out": arch.n_out,
        "width": hidden[0].width if hidden else arch.n_out,
        "activation": hidden[0].activation if hidden else "linear",
        "shapes": [list(s) for s in arch.dense_shapes],
        "weights": [w.ravel(order="C") for w in model.weights],
        "biases": list(model.biases),
        "input_scaler": {"min": model.in_scaler.lo, "max": model.in_scaler.hi},
        "output_scaler": {"min": model.out_scaler.lo, "max": model.out_scaler.hi},
        "meta": model.meta,
    }
    return "{\n" + ",\n".join(f"  {json.dumps(k)}: {_fmt(v)}" for k, v in doc.items()) + "\n}\n"


def checkpoint_from_text(text):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"corrupt checkpoint: {exc}") from exc
    if doc.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {doc.get('format_version')!r}")
    try:
        arch = Architecture.from_name(doc["architecture"], doc["n_in"], doc["n_out"],
                                      width=doc["width"], activation=doc["activation"])
        shapes = [tuple(s) for s in doc["shapes"]]
        if shapes != arch.dense_shapes:
            raise CheckpointError("layer shapes do not match the architecture")
        weights = [np.array(w, dtype=float).reshape(s) for w, s in zip(doc["weights"], shapes)]
        biases = [np.array(b, dtype=float) for b in doc["biases"]]
        ins = MinMaxScaler(np.array(doc["input_scaler"]["min"], dtype=float),
                           np.array(doc["input_scaler"]["max"], dtype=float))
        outs = MinMaxScaler(np.array(doc["output_scaler"]["min"], dtype=float),
                            np.array(doc["output_scaler"]["max"], dtype=float))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, CheckpointError):
            raise
        raise CheckpointError(f"corrupt checkpoint: {exc}") from exc
    return NetworkModel(arch, weights, biases, ins, outs, doc.get("meta", {}))
