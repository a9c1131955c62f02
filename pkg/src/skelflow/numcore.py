"""Dense float64 numerics: a tiny reverse-mode tape, gradient checking,
log-determinants and Adam.

Everything runs on plain ``numpy`` float64 arrays.  Layers elsewhere in the
package are written against the dispatching ops below, so the same forward
code runs with or without gradient recording: pass ndarrays for a plain
evaluation, or wrap the leaves in :class:`Var` to record a tape and call
:func:`grad`.

No global state.  A tape is just the implicit DAG hanging off the output
Var; replaying it (calling :func:`grad` twice on the same output) gives
bit-identical gradients.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

LOGDET_FLOOR = float(np.log(1e-300))


class SingularMatrixError(ArithmeticError):
    """Determinant is zero or |det| underflows below 1e-300."""


class NonFiniteError(ArithmeticError):
    """A value that must be finite came out NaN or infinite."""


class NonFiniteGradientError(NonFiniteError):
    """A gradient came out NaN or infinite."""


def _data(x):
    if isinstance(x, Var):
        return x.data
    return np.asarray(x, dtype=np.float64)


def _unbroadcast(g, shape):
    """Sum a broadcast gradient back down to `shape`."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


class Var:
    """A float64 array plus the tape node that produced it."""

    __slots__ = ("data", "grad", "_parents", "_bw")

    # keep numpy from absorbing Vars in mixed expressions like ndarray + Var;
    # with this numpy returns NotImplemented and Python uses our __r*__ ops
    __array_ufunc__ = None

    def __init__(self, data, _parents=(), _bw=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self._parents = _parents
        self._bw = _bw

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def _accum(self, g):
        if self.grad is None:
            self.grad = np.zeros(self.data.shape, dtype=np.float64)
        self.grad += g

    # arithmetic sugar; all dispatch through the module-level ops
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, key):
        return getitem(self, key)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 and isinstance(shape[0], (tuple, list)) else shape)

    def __repr__(self):
        return f"Var(shape={self.data.shape})"


def _any_var(*xs):
    return any(isinstance(x, Var) for x in xs)


def add(a, b):
    if not _any_var(a, b):
        return _data(a) + _data(b)
    ad, bd = _data(a), _data(b)
    out = Var(ad + bd, tuple(x for x in (a, b) if isinstance(x, Var)))

    def bw(g):
        if isinstance(a, Var):
            a._accum(_unbroadcast(g, ad.shape))
        if isinstance(b, Var):
            b._accum(_unbroadcast(g, bd.shape))

    out._bw = bw
    return out


def sub(a, b):
    if not _any_var(a, b):
        return _data(a) - _data(b)
    ad, bd = _data(a), _data(b)
    out = Var(ad - bd, tuple(x for x in (a, b) if isinstance(x, Var)))

    def bw(g):
        if isinstance(a, Var):
            a._accum(_unbroadcast(g, ad.shape))
        if isinstance(b, Var):
            b._accum(_unbroadcast(-g, bd.shape))

    out._bw = bw
    return out


def mul(a, b):
    if not _any_var(a, b):
        return _data(a) * _data(b)
    ad, bd = _data(a), _data(b)
    out = Var(ad * bd, tuple(x for x in (a, b) if isinstance(x, Var)))

    def bw(g):
        if isinstance(a, Var):
            a._accum(_unbroadcast(g * bd, ad.shape))
        if isinstance(b, Var):
            b._accum(_unbroadcast(g * ad, bd.shape))

    out._bw = bw
    return out


def div(a, b):
    if not _any_var(a, b):
        return _data(a) / _data(b)
    ad, bd = _data(a), _data(b)
    out = Var(ad / bd, tuple(x for x in (a, b) if isinstance(x, Var)))

    def bw(g):
        if isinstance(a, Var):
            a._accum(_unbroadcast(g / bd, ad.shape))
        if isinstance(b, Var):
            b._accum(_unbroadcast(-g * ad / (bd * bd), bd.shape))

    out._bw = bw
    return out


def neg(a):
    if not isinstance(a, Var):
        return -_data(a)
    out = Var(-a.data, (a,))
    out._bw = lambda g: a._accum(-g)
    return out


def matmul(a, b):
    """Matrix product; operands must be at least 2-d (batch dims broadcast)."""
    ad, bd = _data(a), _data(b)
    if ad.ndim < 2 or bd.ndim < 2:
        raise ValueError("matmul operands must be at least 2-d")
    if not _any_var(a, b):
        return ad @ bd
    out = Var(ad @ bd, tuple(x for x in (a, b) if isinstance(x, Var)))

    def bw(g):
        if isinstance(a, Var):
            a._accum(_unbroadcast(g @ np.swapaxes(bd, -1, -2), ad.shape))
        if isinstance(b, Var):
            b._accum(_unbroadcast(np.swapaxes(ad, -1, -2) @ g, bd.shape))

    out._bw = bw
    return out


def vsum(a, axis=None, keepdims=False):
    if not isinstance(a, Var):
        return np.sum(_data(a), axis=axis, keepdims=keepdims)
    out = Var(np.sum(a.data, axis=axis, keepdims=keepdims), (a,))

    def bw(g):
        gg = g
        if not keepdims and axis is not None:
            gg = np.expand_dims(g, axis)
        a._accum(np.broadcast_to(gg, a.data.shape).copy() if np.shape(gg) != a.data.shape else gg)

    out._bw = bw
    return out


def vmean(a, axis=None, keepdims=False):
    ad = _data(a)
    if axis is None:
        n = ad.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        n = 1
        for ax in axes:
            n *= ad.shape[ax]
    return mul(vsum(a, axis=axis, keepdims=keepdims), 1.0 / n)


def reshape(a, shape):
    if not isinstance(a, Var):
        return np.reshape(_data(a), shape)
    out = Var(np.reshape(a.data, shape), (a,))
    out._bw = lambda g: a._accum(np.reshape(g, a.data.shape))
    return out


def transpose(a, axes):
    if not isinstance(a, Var):
        return np.transpose(_data(a), axes)
    out = Var(np.transpose(a.data, axes), (a,))
    inv = np.argsort(axes)
    out._bw = lambda g: a._accum(np.transpose(g, inv))
    return out


def getitem(a, key):
    if not isinstance(a, Var):
        return _data(a)[key]
    out = Var(a.data[key], (a,))

    def bw(g):
        z = np.zeros(a.data.shape, dtype=np.float64)
        z[key] += g
        a._accum(z)

    out._bw = bw
    return out


def concat(parts, axis):
    if not any(isinstance(p, Var) for p in parts):
        return np.concatenate([_data(p) for p in parts], axis=axis)
    datas = [_data(p) for p in parts]
    out = Var(np.concatenate(datas, axis=axis), tuple(p for p in parts if isinstance(p, Var)))
    sizes = [d.shape[axis] for d in datas]

    def bw(g):
        offset = 0
        for p, n in zip(parts, sizes):
            if isinstance(p, Var):
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(offset, offset + n)
                p._accum(g[tuple(idx)])
            offset += n

    out._bw = bw
    return out


def flip(a, axis):
    if not isinstance(a, Var):
        return np.flip(_data(a), axis=axis)
    out = Var(np.flip(a.data, axis=axis), (a,))
    out._bw = lambda g: a._accum(np.flip(g, axis=axis))
    return out


def exp(a):
    if not isinstance(a, Var):
        return np.exp(_data(a))
    ed = np.exp(a.data)
    out = Var(ed, (a,))
    out._bw = lambda g: a._accum(g * ed)
    return out


def log(a):
    if not isinstance(a, Var):
        return np.log(_data(a))
    out = Var(np.log(a.data), (a,))
    out._bw = lambda g: a._accum(g / a.data)
    return out


def tanh(a):
    if not isinstance(a, Var):
        return np.tanh(_data(a))
    td = np.tanh(a.data)
    out = Var(td, (a,))
    out._bw = lambda g: a._accum(g * (1.0 - td * td))
    return out


def sigmoid(a):
    if not isinstance(a, Var):
        return expit(_data(a))
    sd = expit(a.data)
    out = Var(sd, (a,))
    out._bw = lambda g: a._accum(g * sd * (1.0 - sd))
    return out


def relu(a):
    if not isinstance(a, Var):
        ad = _data(a)
        return np.maximum(ad, 0.0)
    # np.maximum (not where) so non-finite inputs stay visible in the output
    mask = a.data > 0.0
    out = Var(np.maximum(a.data, 0.0), (a,))
    out._bw = lambda g: a._accum(g * mask)
    return out


def absolute(a):
    if not isinstance(a, Var):
        return np.abs(_data(a))
    sgn = np.sign(a.data)
    out = Var(np.abs(a.data), (a,))
    out._bw = lambda g: a._accum(g * sgn)
    return out


def logabsdet(a):
    """log|det A| for a square matrix.

    Raises SingularMatrixError when the determinant is exactly zero or its
    magnitude underflows below 1e-300.  Gradient is inv(A).T.
    """
    ad = _data(a)
    if ad.ndim != 2 or ad.shape[0] != ad.shape[1]:
        raise ValueError(f"logabsdet expects a square matrix, got shape {ad.shape}")
    sign, ld = np.linalg.slogdet(ad)
    if sign == 0.0 or not np.isfinite(ld) or ld < LOGDET_FLOOR:
        raise SingularMatrixError(f"matrix is singular to working precision (log|det|={ld:.3g})")
    if not isinstance(a, Var):
        return float(ld)
    out = Var(ld, (a,))
    inv_t = np.linalg.inv(ad).T

    def bw(g):
        a._accum(g * inv_t)

    out._bw = bw
    return out


def backward(loss):
    """Run reverse accumulation from a scalar Var.

    Grads of every node reachable from `loss` are reset first, so calling
    this twice on the same tape yields identical results.
    """
    if not isinstance(loss, Var):
        raise TypeError("backward expects a Var")
    if loss.data.size != 1:
        raise ValueError("backward expects a scalar loss")
    order = []
    seen = set()
    stack = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            stack.append((p, False))
    for node in order:
        node.grad = None
    loss.grad = np.ones(loss.data.shape, dtype=np.float64)
    for node in reversed(order):
        if node._bw is not None and node.grad is not None:
            node._bw(node.grad)


def grad(loss, leaves):
    """Gradients of scalar `loss` w.r.t. a list of leaf Vars.

    Leaves that do not influence the loss get exact zeros.
    """
    backward(loss)
    out = []
    for v in leaves:
        if v.grad is None:
            out.append(np.zeros(v.data.shape, dtype=np.float64))
        else:
            out.append(v.grad.copy())
    return out


def _scalar(x):
    if isinstance(x, Var):
        return float(x.data)
    return float(np.asarray(x))


def grad_check(fn, params, step=1e-5):
    """Compare reverse-mode gradients of fn against central differences.

    fn maps one array-like argument to a scalar; it is called with a Var for
    the analytic pass and with plain ndarrays for the numeric probes.  Returns
    max over entries of |analytic - central| / (|central| + 1e-8).
    """
    if not (0.0 < step <= 1e-2):
        raise ValueError(f"step must be in (0, 1e-2], got {step}")
    base = np.array(params, dtype=np.float64)
    v = Var(base.copy())
    out = fn(v)
    if not np.isfinite(_scalar(out)):
        raise NonFiniteError("loss is not finite at the evaluation point")
    if isinstance(out, Var):
        analytic = grad(out, [v])[0]
    else:
        analytic = np.zeros_like(base)
    numeric = np.zeros_like(base)
    flat_num = numeric.reshape(-1)
    for i in range(base.size):
        probe = base.copy()
        probe.reshape(-1)[i] += step
        f_plus = _scalar(fn(probe))
        probe = base.copy()
        probe.reshape(-1)[i] -= step
        f_minus = _scalar(fn(probe))
        if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
            raise NonFiniteError(f"loss is not finite near entry {i}")
        flat_num[i] = (f_plus - f_minus) / (2.0 * step)
    err = np.abs(analytic - numeric) / (np.abs(numeric) + 1e-8)
    return float(err.max())


@dataclass
class AdamState:
    """First/second moment accumulators, keyed like the parameter dict."""

    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_init(params):
    state = AdamState()
    for k, p in params.items():
        state.m[k] = np.zeros_like(_data(p))
        state.v[k] = np.zeros_like(_data(p))
    return state


def adam_step(params, grads, state, step_size, beta1=0.9, beta2=0.999, eps=1e-8):
    """One Adam update.  Returns (new params dict, state); state mutated in place.

    Raises NonFiniteGradientError if any gradient entry is NaN/inf; params are
    left untouched in that case.
    """
    for k in params:
        if not np.all(np.isfinite(grads[k])):
            raise NonFiniteGradientError(f"non-finite gradient for '{k}'")
    t = state.step + 1
    b1t = 1.0 - beta1 ** t
    b2t = 1.0 - beta2 ** t
    new_params = {}
    for k, p in params.items():
        g = grads[k]
        state.m[k] = beta1 * state.m[k] + (1.0 - beta1) * g
        state.v[k] = beta2 * state.v[k] + (1.0 - beta2) * (g * g)
        m_hat = state.m[k] / b1t
        v_hat = state.v[k] / b2t
        new_params[k] = _data(p) - step_size * m_hat / (np.sqrt(v_hat) + eps)
    state.step = t
    return new_params, state


def clip_grad_norm(grads, max_norm):
    """Scale the whole gradient dict so its global L2 norm is <= max_norm."""
    sq = 0.0
    for g in grads.values():
        sq += float(np.sum(g * g))
    norm = np.sqrt(sq)
    if norm > max_norm and norm > 0.0:
        scale = max_norm / norm
        grads = {k: g * scale for k, g in grads.items()}
    return grads, float(norm)


def make_rng(seed):
    """Seeded PCG64 generator; passes Generators through unchanged."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


class Module:
    """Base for parameterized layers.

    Subclasses declare `param_attrs` (names of ndarray attributes) and
    `child_attrs` (names of Module or list-of-Module attributes).  Parameter
    paths are dotted, with list children indexed numerically, e.g.
    "steps.3.actnorm.scale".
    """

    param_attrs = ()
    child_attrs = ()

    def named_parameters(self, prefix=""):
        for name in self.param_attrs:
            yield prefix + name, getattr(self, name)
        for name in self.child_attrs:
            child = getattr(self, name)
            if child is None:
                continue
            if isinstance(child, (list, tuple)):
                for i, sub in enumerate(child):
                    yield from sub.named_parameters(f"{prefix}{name}.{i}.")
            else:
                yield from child.named_parameters(f"{prefix}{name}.")

    def parameters(self):
        return dict(self.named_parameters())

    def _resolve(self, path):
        parts = path.split(".")
        obj = self
        for part in parts[:-1]:
            if isinstance(obj, (list, tuple)):
                obj = obj[int(part)]
            else:
                obj = getattr(obj, part)
        return obj, parts[-1]

    def get_parameter(self, path):
        obj, leaf = self._resolve(path)
        return obj[int(leaf)] if isinstance(obj, (list, tuple)) else getattr(obj, leaf)

    def set_parameter(self, path, value):
        obj, leaf = self._resolve(path)
        setattr(obj, leaf, value)

    def param_count(self):
        return int(sum(_data(p).size for _, p in self.named_parameters()))


def lift(module):
    """Wrap every parameter of `module` in a Var (in place).

    Returns {path: Var}.  Undo with `restore`.
    """
    lifted = {}
    for path, arr in list(module.named_parameters()):
        v = arr if isinstance(arr, Var) else Var(arr)
        module.set_parameter(path, v)
        lifted[path] = v
    return lifted


def restore(module, values=None):
    """Put plain ndarrays back on the module after `lift`.

    `values` maps path -> ndarray; parameters not in it keep their current
    (possibly lifted) data.
    """
    for path, cur in list(module.named_parameters()):
        if values is not None and path in values:
            module.set_parameter(path, np.asarray(values[path], dtype=np.float64))
        elif isinstance(cur, Var):
            module.set_parameter(path, cur.data)
