"""Reverse-mode automatic differentiation on numpy arrays.

Every primitive's adjoint rule is written with the same primitives, so running
``grad(..., create_graph=True)`` records the gradient computation itself and it
can be differentiated again. Second derivatives are therefore exact (no finite
differences anywhere), and parameter gradients of losses that contain input
gradients or Hessians come out of the same machinery.

Supported primitives: add, sub, neg, mul, div, matmul (2-D), transpose,
reshape, sum, broadcast_to, sum_to, getitem/scatter, concat, stack, exp, log,
tanh, sin, cos, sqrt, power (constant exponent), square, relu, abs, atan2.

Conventions at non-smooth points: relu'(0) = 0, abs'(0) = 0, sqrt'(0) = 0.
"""
from __future__ import annotations

import numpy as np

__all__ = [
    "ADDomainError", "Var", "grad", "evaluate_with_gradient",
    "evaluate_with_hessian", "parameter_gradient", "jacobian",
    "add", "sub", "neg", "mul", "div", "matmul", "transpose", "reshape",
    "sum", "broadcast_to", "sum_to", "getitem", "scatter", "concat", "stack",
    "exp", "log", "tanh", "sin", "cos", "sqrt", "power", "square", "relu",
    "abs", "atan2", "value_of", "is_var",
]


class ADDomainError(ArithmeticError):
    """Raised when a primitive leaves its real domain (overflow, log of <= 0)."""


class Var:
    """A node of the computation graph holding a float array value."""

    __slots__ = ("value", "parents", "rule")
    __array_priority__ = 1000

    def __init__(self, value, parents=(), rule=None):
        self.value = np.asarray(value, dtype=float)
        self.parents = parents
        self.rule = rule

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    @property
    def T(self):
        return transpose(self)

    def __repr__(self):
        return f"Var({self.value!r})"

    def __len__(self):
        return len(self.value)

    def __add__(self, o):
        return add(self, o)

    def __radd__(self, o):
        return add(o, self)

    def __sub__(self, o):
        return sub(self, o)

    def __rsub__(self, o):
        return sub(o, self)

    def __mul__(self, o):
        return mul(self, o)

    def __rmul__(self, o):
        return mul(o, self)

    def __truediv__(self, o):
        return div(self, o)

    def __rtruediv__(self, o):
        return div(o, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, c):
        return power(self, c)

    def __matmul__(self, o):
        return matmul(self, o)

    def __rmatmul__(self, o):
        return matmul(o, self)

    def __getitem__(self, key):
        return getitem(self, key)


def is_var(a):
    return type(a) is Var


def value_of(a):
    return a.value if type(a) is Var else a


def _shape(a):
    return np.shape(a.value if type(a) is Var else a)


def _any_var(*args):
    for a in args:
        if type(a) is Var:
            return True
    return False


def _check_finite(out, name):
    if not np.all(np.isfinite(out)):
        raise ADDomainError(f"{name} produced a non-finite value")
    return out


# --------------------------------------------------------------------------
# shape plumbing

def sum_to(a, shape):
    """Sum ``a`` down to ``shape`` (adjoint of numpy broadcasting)."""
    shape = tuple(shape)
    if _shape(a) == shape:
        return a
    if type(a) is not Var:
        return _sum_to_np(a, shape)
    src = a.shape
    return Var(_sum_to_np(a.value, shape), (a,),
               lambda g, args, out: (broadcast_to(g, src),))


def _sum_to_np(x, shape):
    x = np.asarray(x)
    lead = x.ndim - len(shape)
    if lead > 0:
        x = x.sum(axis=tuple(range(lead)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and x.shape[i] != 1)
    if axes:
        x = x.sum(axis=axes, keepdims=True)
    return x.reshape(shape)


def broadcast_to(a, shape):
    shape = tuple(shape)
    if _shape(a) == shape:
        return a
    if type(a) is not Var:
        return np.broadcast_to(a, shape).copy()
    src = a.shape
    return Var(np.broadcast_to(a.value, shape), (a,),
               lambda g, args, out: (sum_to(g, src),))


def reshape(a, shape):
    if type(a) is not Var:
        return np.reshape(a, shape)
    src = a.shape
    return Var(a.value.reshape(shape), (a,),
               lambda g, args, out: (reshape(g, src),))


def transpose(a):
    if type(a) is not Var:
        return np.transpose(a)
    return Var(a.value.T, (a,), lambda g, args, out: (transpose(g),))


def sum(a, axis=None, keepdims=False):  # noqa: A001 - mirrors numpy
    if type(a) is not Var:
        return np.sum(a, axis=axis, keepdims=keepdims)
    src = a.shape

    def rule(g, args, out):
        if axis is not None and not keepdims:
            axes = (axis,) if np.isscalar(axis) else tuple(axis)
            axes = tuple(ax % len(src) for ax in axes)
            kshape = tuple(1 if i in axes else n for i, n in enumerate(src))
            g = reshape(g, kshape)
        return (broadcast_to(g, src),)

    return Var(np.sum(a.value, axis=axis, keepdims=keepdims), (a,), rule)


def getitem(a, key):
    if type(a) is not Var:
        return np.asarray(a)[key]
    src = a.shape
    return Var(a.value[key], (a,), lambda g, args, out: (scatter(g, key, src),))


def scatter(a, key, shape):
    """Zeros of ``shape`` with ``a`` added at ``key`` (adjoint of getitem)."""
    out = np.zeros(shape)
    if _no_repeats(key):
        out[key] = value_of(a)
    else:
        np.add.at(out, key, value_of(a))
    if type(a) is not Var:
        return out
    return Var(out, (a,), lambda g, args, o: (getitem(g, key),))


def _no_repeats(key):
    parts = key if isinstance(key, tuple) else (key,)
    n_adv = 0
    for k in parts:
        if isinstance(k, (slice, int, np.integer)) or k is None or k is Ellipsis:
            continue
        k = np.asarray(k)
        if k.dtype == bool:
            n_adv += 1
            continue
        if k.ndim != 1 or len(np.unique(k)) != len(k):
            return False
        n_adv += 1
    return n_adv <= 1


def concat(items, axis=0):
    items = list(items)
    if not _any_var(*items):
        return np.concatenate([np.asarray(x, dtype=float) for x in items], axis=axis)
    vals = [value_of(x) for x in items]
    ax = axis % vals[0].ndim
    bounds = np.cumsum([0] + [v.shape[ax] for v in vals])

    def rule(g, args, out):
        res = []
        for i in range(len(vals)):
            key = (slice(None),) * ax + (slice(bounds[i], bounds[i + 1]),)
            res.append(getitem(g, key))
        return tuple(res)

    return Var(np.concatenate(vals, axis=axis), tuple(items), rule)


def stack(items, axis=0):
    items = list(items)
    expanded = [reshape(x, _expand_shape(_shape(x), axis)) for x in items]
    return concat(expanded, axis=axis)


def _expand_shape(shape, axis):
    shape = list(shape)
    ax = axis if axis >= 0 else len(shape) + 1 + axis
    shape.insert(ax, 1)
    return tuple(shape)


# --------------------------------------------------------------------------
# arithmetic

def add(a, b):
    if not _any_var(a, b):
        return np.add(a, b)
    sa, sb = _shape(a), _shape(b)
    return Var(value_of(a) + value_of(b), (a, b),
               lambda g, args, out: (sum_to(g, sa), sum_to(g, sb)))


def sub(a, b):
    if not _any_var(a, b):
        return np.subtract(a, b)
    sa, sb = _shape(a), _shape(b)
    return Var(value_of(a) - value_of(b), (a, b),
               lambda g, args, out: (sum_to(g, sa), sum_to(neg(g), sb)))


def neg(a):
    if type(a) is not Var:
        return np.negative(a)
    return Var(-a.value, (a,), lambda g, args, out: (neg(g),))


def mul(a, b):
    if not _any_var(a, b):
        return np.multiply(a, b)
    sa, sb = _shape(a), _shape(b)

    def rule(g, args, out):
        x, y = args
        return (sum_to(mul(g, y), sa) if type(a) is Var else None,
                sum_to(mul(g, x), sb) if type(b) is Var else None)

    return Var(value_of(a) * value_of(b), (a, b), rule)


def div(a, b):
    if not _any_var(a, b):
        return np.divide(a, b)
    sa, sb = _shape(a), _shape(b)

    def rule(g, args, out):
        x, y = args
        ga = div(g, y)
        return (sum_to(ga, sa) if type(a) is Var else None,
                sum_to(neg(mul(ga, out)), sb) if type(b) is Var else None)

    return Var(value_of(a) / value_of(b), (a, b), rule)


def matmul(a, b):
    if not _any_var(a, b):
        return np.matmul(a, b)

    def rule(g, args, out):
        x, y = args
        return (matmul(g, transpose(y)) if type(a) is Var else None,
                matmul(transpose(x), g) if type(b) is Var else None)

    return Var(value_of(a) @ value_of(b), (a, b), rule)


def power(a, c):
    """``a ** c`` for a constant exponent ``c``."""
    c = float(c)
    if c == 2.0:
        return square(a)
    if type(a) is not Var:
        return np.power(a, c)
    return Var(np.power(a.value, c), (a,),
               lambda g, args, out: (mul(g, mul(c, power(args[0], c - 1.0))),))


def square(a):
    if type(a) is not Var:
        return np.square(a)
    return Var(np.square(a.value), (a,),
               lambda g, args, out: (mul(g, mul(2.0, args[0])),))


# --------------------------------------------------------------------------
# elementwise functions

def exp(a):
    if type(a) is not Var:
        with np.errstate(over="ignore"):
            return _check_finite(np.exp(a), "exp")
    with np.errstate(over="ignore"):
        out = _check_finite(np.exp(a.value), "exp")
    return Var(out, (a,), lambda g, args, o: (mul(g, o),))


def log(a):
    if np.any(np.asarray(value_of(a)) <= 0):
        raise ADDomainError("log of a non-positive value")
    if type(a) is not Var:
        return np.log(a)
    return Var(np.log(a.value), (a,), lambda g, args, out: (div(g, args[0]),))


def tanh(a):
    if type(a) is not Var:
        return np.tanh(a)
    return Var(np.tanh(a.value), (a,),
               lambda g, args, o: (mul(g, sub(1.0, square(o))),))


def sin(a):
    if type(a) is not Var:
        return np.sin(a)
    return Var(np.sin(a.value), (a,), lambda g, args, out: (mul(g, cos(args[0])),))


def cos(a):
    if type(a) is not Var:
        return np.cos(a)
    return Var(np.cos(a.value), (a,),
               lambda g, args, out: (neg(mul(g, sin(args[0]))),))


def sqrt(a):
    if np.any(np.asarray(value_of(a)) < 0):
        raise ADDomainError("sqrt of a negative value")
    if type(a) is not Var:
        return np.sqrt(a)

    def rule(g, args, o):
        ov = value_of(o)
        zero = ov == 0.0
        # derivative defined as 0 at the origin
        safe = add(o, zero.astype(float))
        return (mul(div(mul(g, 0.5), safe), (~zero).astype(float)),)

    return Var(np.sqrt(a.value), (a,), rule)


def relu(a):
    if type(a) is not Var:
        return np.maximum(a, 0.0)
    mask = (a.value > 0.0).astype(float)
    return Var(a.value * mask, (a,), lambda g, args, out: (mul(g, mask),))


def abs(a):  # noqa: A001 - mirrors numpy
    if type(a) is not Var:
        return np.abs(a)
    sgn = np.sign(a.value)
    return Var(np.abs(a.value), (a,), lambda g, args, out: (mul(g, sgn),))


def atan2(y, x):
    if not _any_var(y, x):
        return np.arctan2(y, x)
    sy, sx = _shape(y), _shape(x)

    def rule(g, args, out):
        yy, xx = args
        r2 = add(square(xx), square(yy))
        gr = div(g, r2)
        return (sum_to(mul(gr, xx), sy) if type(y) is Var else None,
                sum_to(neg(mul(gr, yy)), sx) if type(x) is Var else None)

    return Var(np.arctan2(value_of(y), value_of(x)), (y, x), rule)


# --------------------------------------------------------------------------
# reverse accumulation

def _toposort(root):
    order, seen = [], set()
    stack_ = [(root, False)]
    while stack_:
        node, done = stack_.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack_.append((node, True))
        for p in node.parents:
            if type(p) is Var and id(p) not in seen:
                stack_.append((p, False))
    return order


def grad(y, wrt, seed=None, create_graph=False):
    """Gradient of ``y`` (seeded by ``seed``, default ones) w.r.t. ``wrt``.

    ``wrt`` may be a single Var or a sequence. With ``create_graph`` the result
    is a Var (or list of Vars) that can be differentiated again; otherwise plain
    arrays are returned.
    """
    single = type(wrt) is Var
    targets = [wrt] if single else list(wrt)
    if type(y) is not Var:
        res = [np.zeros(t.shape) for t in targets]
        return res[0] if single else res
    if seed is None:
        seed = np.ones(y.shape)
    cot = {id(y): Var(seed) if create_graph and type(seed) is not Var else seed}
    want = {id(t) for t in targets}
    found = {}
    for node in reversed(_toposort(y)):
        nid = id(node)
        g = cot.get(nid)
        if g is None:
            continue
        if nid in want:
            found[nid] = g
        if node.rule is None:
            continue
        del cot[nid]
        if create_graph:
            contribs = node.rule(g, node.parents, node)
        else:
            args = tuple(value_of(p) for p in node.parents)
            contribs = node.rule(value_of(g), args, node.value)
        for p, c in zip(node.parents, contribs):
            if c is None or type(p) is not Var:
                continue
            pid = id(p)
            prev = cot.get(pid)
            cot[pid] = c if prev is None else add(prev, c)
    res = []
    for t in targets:
        g = found.get(id(t))
        if g is None:
            g = Var(np.zeros(t.shape)) if create_graph else np.zeros(t.shape)
        elif not create_graph:
            g = np.array(value_of(g), dtype=float)
        else:
            g = broadcast_to(g, t.shape) if _shape(g) != t.shape else g
            if type(g) is not Var:
                g = Var(g)
        res.append(g)
    return res[0] if single else res


def evaluate_with_gradient(fn, inputs):
    """Value and gradient of the scalar function ``fn`` at ``inputs``.

    ``fn`` receives a single Var holding the input vector and must build its
    result from the primitives of this module.
    """
    x = Var(np.array(inputs, dtype=float))
    y = fn(x)
    if y.shape not in ((), (1,)):
        raise ValueError("fn must be scalar-valued")
    return float(value_of(y).reshape(())), grad(y, x)


def evaluate_with_hessian(fn, inputs):
    """Value, gradient and dense Hessian of ``fn`` at ``inputs``.

    The Hessian is obtained by differentiating the recorded gradient program
    once per input component, then symmetrised (the asymmetry is round-off).
    """
    x = Var(np.array(inputs, dtype=float))
    y = fn(x)
    if y.shape not in ((), (1,)):
        raise ValueError("fn must be scalar-valued")
    g = grad(y, x, create_graph=True)
    n = x.shape[0]
    hess = np.empty((n, n))
    for i in range(n):
        hess[i] = grad(g[i], x)
    hess = 0.5 * (hess + hess.T)
    return float(value_of(y).reshape(())), g.value.copy(), hess


def jacobian(fn, inputs):
    """Value and Jacobian of a vector-valued ``fn`` (one reverse pass per output)."""
    x = Var(np.array(inputs, dtype=float))
    y = fn(x)
    m = y.shape[0]
    jac = np.empty((m, x.shape[0]))
    for i in range(m):
        jac[i] = grad(y[i], x)
    return y.value.copy(), jac


def parameter_gradient(loss_fn, params):
    """Gradient of ``loss_fn(*param_vars)`` w.r.t. every array in ``params``."""
    pv = [Var(p) for p in params]
    loss = loss_fn(*pv)
    return float(value_of(loss)), grad(loss, pv)
