"""Reverse-mode automatic differentiation on numpy arrays.

A ``Tape`` records primitive operations in creation order (which is a
topological order by construction).  ``backward`` walks the record once in
reverse, accumulating vector-Jacobian products in a fixed order, so repeated
runs with the same inputs produce bit-identical gradients.

Values are float64 arrays of any shape; a ``Var`` without a tape behaves as a
constant and receives no gradient.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Tape",
    "Var",
    "DomainError",
    "asvar",
    "add", "sub", "mul", "div", "neg",
    "exp", "log", "sqrt", "square", "tanh", "sigmoid", "relu",
    "vsum", "vmean", "sum_square", "dot", "matmul", "cumsum", "concat",
    "reshape", "expand_last",
    "logsumexp", "softmax", "gaussian_log_density", "gather",
    "stop_gradient", "backward", "finite_difference_check",
]


class DomainError(ValueError):
    """Raised when a primitive is evaluated outside its domain."""

    def __init__(self, op, message):
        super().__init__(f"{op}: {message}")
        self.op = op


class Tape:
    """Append-only record of operations; node index = position in the list."""

    __slots__ = ("nodes",)

    def __init__(self):
        self.nodes = []

    def leaf(self, value, name=None):
        """Register an input variable (a gradient target)."""
        return _record(self, name or "leaf", _asarray(value), (), None)

    def __len__(self):
        return len(self.nodes)


class Var:
    """A value on a tape (or a constant, if ``tape`` is None)."""

    __slots__ = ("tape", "value", "idx", "parents", "vjp", "op")

    # make numpy defer to the reflected operators below
    __array_ufunc__ = None

    def __init__(self, tape, value, idx, parents, vjp, op):
        self.tape = tape
        self.value = value
        self.idx = idx
        self.parents = parents
        self.vjp = vjp
        self.op = op

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Var(op={self.op}, shape={self.value.shape})"

    # arithmetic sugar
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
        return _index(self, key)


def _asarray(x):
    return np.asarray(x, dtype=np.float64)


def asvar(x, tape=None):
    """Wrap ``x`` as a Var; arrays/scalars become constants unless a tape is given."""
    if isinstance(x, Var):
        return x
    value = _asarray(x)
    if tape is None:
        return Var(None, value, -1, (), None, "const")
    return tape.leaf(value)


def _record(tape, op, value, parents, vjp):
    if tape is None:
        return Var(None, value, -1, (), None, op)
    node = Var(tape, value, len(tape.nodes), parents, vjp, op)
    tape.nodes.append(node)
    return node


def _tape_of(*vars_):
    tape = None
    for v in vars_:
        if v.tape is not None:
            if tape is None:
                tape = v.tape
            elif tape is not v.tape:
                raise ValueError("operands recorded on different tapes")
    return tape


def _unbroadcast(g, shape):
    """Sum ``g`` down to ``shape`` (inverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _binary(op, a, b, fwd, vjp_a, vjp_b):
    a, b = asvar(a), asvar(b)
    tape = _tape_of(a, b)
    value = fwd(a.value, b.value)
    if tape is None:
        return _record(None, op, value, (), None)
    need_a, need_b = a.tape is not None, b.tape is not None

    def vjp(g):
        return (_unbroadcast(vjp_a(g, a.value, b.value), a.value.shape)
                if need_a else None,
                _unbroadcast(vjp_b(g, a.value, b.value), b.value.shape)
                if need_b else None)

    return _record(tape, op, value, (a, b), vjp)


def _unary(op, x, fwd, vjp_fn):
    x = asvar(x)
    value = fwd(x.value)
    if x.tape is None:
        return _record(None, op, value, (), None)
    return _record(x.tape, op, value, (x,), lambda g: (vjp_fn(g, x.value, value),))


# ---------------------------------------------------------------------------
# primitives

def add(a, b):
    return _binary("add", a, b, lambda x, y: x + y,
                   lambda g, x, y: g, lambda g, x, y: g)


def sub(a, b):
    return _binary("sub", a, b, lambda x, y: x - y,
                   lambda g, x, y: g, lambda g, x, y: -g)


def _mul_vjp(g, other, shape):
    # scaling by a scalar is common in the sampler; contract in one pass
    # instead of materializing g * other and summing it down
    if g.shape == other.shape and np.prod(shape, dtype=int) == 1:
        return np.asarray(np.dot(g.ravel(), other.ravel())).reshape(shape)
    return _unbroadcast(g * other, shape)


def mul(a, b):
    a, b = asvar(a), asvar(b)
    tape = _tape_of(a, b)
    value = a.value * b.value
    if tape is None:
        return _record(None, "mul", value, (), None)
    need_a, need_b = a.tape is not None, b.tape is not None

    def vjp(g):
        return (_mul_vjp(g, b.value, a.value.shape) if need_a else None,
                _mul_vjp(g, a.value, b.value.shape) if need_b else None)

    return _record(tape, "mul", value, (a, b), vjp)


# Domain validation scans the operand, which costs real time on the large
# particle arrays in the inner loop; big arrays are instead covered by the
# sampler's non-finite bound check.
_CHECK_LIMIT = 1 << 14


def _check(op, value, bad, message):
    if value.size <= _CHECK_LIMIT and np.any(bad(value)):
        raise DomainError(op, message)


def div(a, b):
    a, b = asvar(a), asvar(b)
    _check("div", b.value, lambda v: v == 0.0, "division by zero")
    return _binary("div", a, b, lambda x, y: x / y,
                   lambda g, x, y: g / y, lambda g, x, y: -g * x / (y * y))


def neg(x):
    return _unary("neg", x, lambda v: -v, lambda g, v, out: -g)


def exp(x):
    return _unary("exp", x, np.exp, lambda g, v, out: g * out)


def log(x):
    x = asvar(x)
    _check("log", x.value, lambda v: v <= 0.0, "argument must be positive")
    return _unary("log", x, np.log, lambda g, v, out: g / v)


def sqrt(x):
    x = asvar(x)
    _check("sqrt", x.value, lambda v: v < 0.0, "argument must be non-negative")
    return _unary("sqrt", x, np.sqrt, lambda g, v, out: 0.5 * g / out)


def square(x):
    return _unary("square", x, np.square, lambda g, v, out: 2.0 * g * v)


def tanh(x):
    return _unary("tanh", x, np.tanh, lambda g, v, out: g * (1.0 - out * out))


def sigmoid(x):
    def fwd(v):
        e = np.exp(-np.abs(v))
        return np.where(v >= 0, 1.0 / (1.0 + e), e / (1.0 + e))

    return _unary("sigmoid", x, fwd, lambda g, v, out: g * out * (1.0 - out))


def relu(x):
    return _unary("relu", x, lambda v: np.maximum(v, 0.0),
                  lambda g, v, out: g * (v > 0.0))


def vsum(x, axis=None, keepdims=False):
    x = asvar(x)

    def vjp(g, v, out):
        if axis is None:
            return np.broadcast_to(g, v.shape).copy()
        if not keepdims:
            g = np.expand_dims(g, axis)
        return np.broadcast_to(g, v.shape).copy()

    return _unary("sum", x, lambda v: v.sum(axis=axis, keepdims=keepdims), vjp)


def sum_square(x, axis=-1):
    """Sum of x^2 along ``axis`` as a single contraction (no squared temporary)."""
    x = asvar(x)
    if x.value.ndim and axis in (-1, x.value.ndim - 1):
        value = np.einsum("...i,...i->...", x.value, x.value)
    elif x.value.ndim:
        value = np.square(x.value).sum(axis=axis)
    else:
        value = np.square(x.value)
    if x.tape is None:
        return _record(None, "sum-square", value, (), None)

    def vjp(g):
        ge = np.expand_dims(g, axis) if x.value.ndim else g
        return ((2.0 * ge) * x.value,)

    return _record(x.tape, "sum-square", value, (x,), vjp)


def vmean(x, axis=None, keepdims=False):
    x = asvar(x)
    count = x.value.size if axis is None else x.value.shape[axis]
    return div(vsum(x, axis=axis, keepdims=keepdims), float(count))


def dot(a, b):
    return vsum(mul(a, b))


def matmul(a, b):
    a, b = asvar(a), asvar(b)
    tape = _tape_of(a, b)
    value = a.value @ b.value
    if tape is None:
        return _record(None, "matmul", value, (), None)

    def vjp(g):
        ga = g @ np.swapaxes(b.value, -1, -2)
        gb = np.swapaxes(a.value, -1, -2) @ g
        return (_unbroadcast(ga, a.value.shape), _unbroadcast(gb, b.value.shape))

    return _record(tape, "matmul", value, (a, b), vjp)


def reshape(x, shape):
    x = asvar(x)
    return _unary("reshape", x, lambda v: v.reshape(shape),
                  lambda g, v, out: g.reshape(v.shape))


def expand_last(x):
    """Append a trailing axis of size 1 (for broadcasting)."""
    x = asvar(x)
    return reshape(x, x.value.shape + (1,))


def cumsum(x, axis=-1):
    return _unary("cumsum", x, lambda v: np.cumsum(v, axis=axis),
                  lambda g, v, out: np.flip(np.cumsum(np.flip(g, axis), axis=axis), axis))


def concat(parts, axis=0):
    parts = [asvar(p) for p in parts]
    tape = _tape_of(*parts)
    value = np.concatenate([p.value for p in parts], axis=axis)
    if tape is None:
        return _record(None, "concat", value, (), None)
    sizes = [p.value.shape[axis] for p in parts]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, splits, axis=axis))

    return _record(tape, "concat", value, tuple(parts), vjp)


def logsumexp(x, axis=-1, keepdims=False):
    """Overflow-safe log-sum-exp along ``axis``; gradient is the softmax."""
    x = asvar(x)
    m = np.max(x.value, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    s = np.exp(x.value - m)
    total = s.sum(axis=axis, keepdims=True)
    value = (m + np.log(total))
    soft = s / total
    out_value = value if keepdims else np.squeeze(value, axis=axis)
    if x.tape is None:
        return _record(None, "logsumexp", out_value, (), None)

    def vjp(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (g * soft,)

    return _record(x.tape, "logsumexp", out_value, (x,), vjp)


def softmax(x, axis=-1):
    x = asvar(x)
    m = np.max(x.value, axis=axis, keepdims=True)
    e = np.exp(x.value - m)
    out = e / e.sum(axis=axis, keepdims=True)
    if x.tape is None:
        return _record(None, "softmax", out, (), None)

    def vjp(g):
        inner = (g * out).sum(axis=axis, keepdims=True)
        return ((g - inner) * out,)

    return _record(x.tape, "softmax", out, (x,), vjp)


def gaussian_log_density(x, mean, var, reduce_axis=-1):
    """Log density of an isotropic Gaussian, summed over ``reduce_axis``.

    ``var`` is the scalar per-coordinate variance (may itself carry gradient).
    Implemented as a single fused primitive: the surrounding sampler evaluates
    it several times per transition, so the handwritten VJP saves a long chain
    of elementwise nodes.
    """
    x, mean, var = asvar(x), asvar(mean), asvar(var)
    _check("gaussian-log-density", var.value, lambda v: v <= 0.0,
           "variance must be positive")
    tape = _tape_of(x, mean, var)
    diff = np.subtract(x.value, mean.value)
    n = diff.shape[reduce_axis] if diff.ndim else 1
    if diff.ndim and (reduce_axis == -1 or reduce_axis == diff.ndim - 1):
        sq = np.einsum("...i,...i->...", diff, diff)
    elif diff.ndim:
        sq = np.square(diff).sum(axis=reduce_axis)
    else:
        sq = np.square(diff)
    value = -0.5 * (n * np.log(2.0 * np.pi * var.value) + sq / var.value)
    if tape is None:
        return _record(None, "gaussian-log-density", value, (), None)

    need = (x.tape is not None, mean.tape is not None, var.tape is not None)

    def vjp(g):
        gx = None
        if need[0] or need[1]:
            ge = np.expand_dims(g, reduce_axis) if diff.ndim else g
            gx = ge * (diff / (-var.value))
        gvar = None
        if need[2]:
            gvar = g * (0.5 * sq / var.value ** 2 - 0.5 * n / var.value)
        return (_unbroadcast(gx, x.value.shape) if need[0] else None,
                _unbroadcast(-gx, mean.value.shape) if need[1] else None,
                _unbroadcast(gvar, var.value.shape) if need[2] else None)

    return _record(tape, "gaussian-log-density", value, (x, mean, var), vjp)


def gather(x, indices, axis):
    """Select slices of ``x`` along ``axis`` by integer index.

    ``indices`` follows the ``np.take_along_axis`` convention (same rank as
    ``x``) and must have size 1 on every axis after ``axis``: whole trailing
    slices are gathered, which keeps the scatter-add in the VJP cheap.
    """
    x = asvar(x)
    indices = np.asarray(indices)
    ax = axis % x.value.ndim
    if any(s != 1 for s in indices.shape[ax + 1:]):
        raise ValueError("gather: indices must be size 1 after the gather axis")
    idx_lead = indices.reshape(indices.shape[: ax + 1])
    # when the leading axes line up exactly, flatten to (rows, N, slice) and
    # use fancy indexing / a one-hot matmul, which beat take_along_axis and
    # np.add.at by a wide margin on the particle arrays
    fast = idx_lead.shape[:ax] == x.value.shape[:ax]
    if fast:
        lead = x.value.shape[:ax]
        rows = int(np.prod(lead)) if lead else 1
        n_in = x.value.shape[ax]
        tail = x.value.shape[ax + 1:]
        m = int(np.prod(tail)) if tail else 1
        x3 = x.value.reshape(rows, n_in, m)
        i2 = idx_lead.reshape(rows, -1)
        picked = x3[np.arange(rows)[:, None], i2]
        value = picked.reshape(lead + (i2.shape[1],) + tail)
    else:
        value = np.take_along_axis(x.value, indices, axis=axis)
    if x.tape is None:
        return _record(None, "gather", value, (), None)

    def vjp(g):
        # duplicates must accumulate
        if fast:
            g3 = g.reshape(i2.shape[0], i2.shape[1], m)
            onehot = np.zeros((i2.shape[0], i2.shape[1], n_in))
            np.put_along_axis(onehot, i2[..., None], 1.0, axis=-1)
            out = np.matmul(onehot.transpose(0, 2, 1), g3)
            return (out.reshape(x.value.shape),)
        out = np.zeros_like(x.value)
        lead_g = g.shape[: ax + 1]
        idx_b = np.broadcast_to(idx_lead, lead_g)
        grids = np.indices(lead_g)
        np.add.at(out, tuple(grids[:ax]) + (idx_b,), g)
        return (out,)

    return _record(x.tape, "gather", value, (x,), vjp)


def _index(x, key):
    x = asvar(x)
    value = x.value[key]
    if x.tape is None:
        return _record(None, "index", value, (), None)

    def vjp(g):
        out = np.zeros_like(x.value)
        np.add.at(out, key, g)
        return (out,)

    return _record(x.tape, "index", value, (x,), vjp)


def stop_gradient(x):
    """Identity in the forward pass; blocks all gradient flow."""
    x = asvar(x)
    return _record(None, "stop_gradient", x.value, (), None)


# ---------------------------------------------------------------------------
# backward pass

class Gradients:
    """Gradient of the root with respect to every node; indexable by Var."""

    __slots__ = ("_grads",)

    def __init__(self, grads):
        self._grads = grads

    def __getitem__(self, var):
        if var.tape is None or var.idx >= len(self._grads):
            return np.zeros_like(var.value)
        g = self._grads[var.idx]
        if g is None:
            return np.zeros_like(var.value)
        return g


def backward(root, free_memory=False):
    """Accumulate d(root)/d(node) for every node on the root's tape.

    With ``free_memory`` the graph is consumed as it is walked: interior
    gradients and vjp closures are released immediately, leaving only leaf
    gradients.  Use it in training loops, where a full evaluation holds
    hundreds of megabytes of intermediates.
    """
    if root.value.size != 1:
        raise ValueError("backward: root must be scalar")
    if root.tape is None:
        # fully detached graph (e.g. everything behind stop_gradient):
        # every gradient is zero
        return Gradients([])
    nodes = root.tape.nodes
    grads = [None] * len(nodes)
    # an "owned" buffer was allocated here, so later contributions may be
    # accumulated in place; unowned entries may alias a vjp output
    owned = bytearray(len(nodes))
    grads[root.idx] = np.ones_like(root.value)
    for node in reversed(nodes[: root.idx + 1]):
        g = grads[node.idx]
        if g is None or not node.parents:
            continue
        for parent, pg in zip(node.parents, node.vjp(g)):
            if parent.tape is None or pg is None:
                continue
            acc = grads[parent.idx]
            if acc is None:
                grads[parent.idx] = pg
            elif (owned[parent.idx] and isinstance(acc, np.ndarray)
                  and acc.shape == np.shape(pg)):
                np.add(acc, pg, out=acc)
            else:
                grads[parent.idx] = acc + pg
                owned[parent.idx] = 1
        if free_memory:
            grads[node.idx] = None
            node.vjp = None
            node.parents = ()
    return Gradients(grads)


def finite_difference_check(f, x, eps=1e-5):
    """Max relative error between tape gradients of ``f`` and central differences.

    ``f`` maps a Var (wrapping a vector ``x``) to a scalar Var and must be
    deterministic: freeze any randomness as explicit constants.
    """
    x = _asarray(x)
    tape = Tape()
    xv = tape.leaf(x)
    out = f(xv)
    grad = backward(out)[xv]

    worst = 0.0
    flat = x.ravel()
    gflat = grad.ravel()
    for i in range(flat.size):
        xp = flat.copy()
        xm = flat.copy()
        xp[i] += eps
        xm[i] -= eps
        fp = f(asvar(xp.reshape(x.shape))).value
        fm = f(asvar(xm.reshape(x.shape))).value
        fd = (fp - fm) / (2.0 * eps)
        err = abs(fd - gflat[i]) / (abs(gflat[i]) + 1e-8)
        worst = max(worst, float(err))
    return worst
