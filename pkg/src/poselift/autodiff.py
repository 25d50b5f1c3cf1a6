"""Reverse-mode automatic differentiation over dense float64 matrices.

Every value is a :class:`Node` holding a 2-D array.  Ops record, for each
parent, a closure mapping the output gradient to that parent's gradient
contribution; :func:`backward` walks the graph once in reverse topological
order.  Only nodes that (transitively) depend on a ``requires_grad`` leaf are
visited, so frozen or detached subgraphs cost nothing on the way back.

Gradients of leaves accumulate across :func:`backward` calls; callers zero
them explicitly (see :func:`zero_grad`).  Intermediate nodes are reset at the
start of each pass so they always hold the gradient of the most recent loss.

Nodes are not thread-safe.  Independent graphs may be used from different
threads.
"""

from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError, TrainingError

DTYPE = np.float64


def _as_matrix(values):
    arr = np.asarray(values, dtype=DTYPE)
    if arr.ndim == 0:
        return arr.reshape(1, 1)
    if arr.ndim == 1:
        return arr.reshape(1, -1)
    if arr.ndim != 2:
        raise ShapeError(f"Node values must be at most 2-D, got shape {arr.shape}")
    return arr


class Node:
    """A matrix-valued vertex of the computation graph.

    Args:
        values: array-like, promoted to a 2-D float64 matrix.
        parents: sequence of ``(node, local_backward)`` pairs where
            ``local_backward(out_grad)`` returns the contribution to
            ``node.grad``.
        requires_grad: for leaves, whether a gradient is wanted.  Non-leaf
            nodes require grad iff any parent does.
        op: short label for debugging.
    """

    __slots__ = ("values", "_grad", "parents", "requires_grad", "op")

    def __init__(self, values, parents=(), requires_grad=False, op="leaf"):
        self.values = _as_matrix(values)
        self._grad = None
        self.parents = list(parents)
        self.requires_grad = bool(requires_grad) or any(p.requires_grad for p, _ in self.parents)
        self.op = op

    @property
    def grad(self):
        # allocated on first use so forward-only graphs stay cheap
        if self._grad is None or self._grad.shape != self.values.shape:
            self._grad = np.zeros_like(self.values)
        return self._grad

    @grad.setter
    def grad(self, value):
        value = _as_matrix(value)
        if value.shape != self.values.shape:
            raise ShapeError(f"gradient shape {value.shape} does not match values {self.values.shape}")
        self._grad = value

    @property
    def shape(self):
        return self.values.shape

    @property
    def is_leaf(self):
        return not self.parents

    def item(self):
        if self.values.size != 1:
            raise ShapeError(f"item() needs a 1x1 node, got {self.shape}")
        return float(self.values[0, 0])

    def detach(self):
        """Leaf sharing this node's values (no copy) that blocks gradients."""
        return Node(self.values, op="detach")

    def __repr__(self):
        return f"Node(op={self.op!r}, shape={self.shape}, requires_grad={self.requires_grad})"

    # operator sugar; scalars and arrays are lifted to constant leaves
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def constant(values):
    return Node(values, op="const")


def parameter(values):
    return Node(values, requires_grad=True, op="param")


def _lift(x):
    return x if isinstance(x, Node) else constant(x)


def _unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    axes = tuple(i for i, (g, s) in enumerate(zip(grad.shape, shape)) if s == 1 and g != 1)
    out = grad.sum(axis=axes, keepdims=True)
    if out.shape != shape:
        raise ShapeError(f"cannot reduce gradient of shape {grad.shape} to {shape}")
    return out


def _broadcast_shape(a, b, name):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{name}: shapes {a.shape} and {b.shape} do not broadcast") from None


# ---------------------------------------------------------------------------
# primitive ops


def matmul(a, b):
    a, b = _lift(a), _lift(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dimensions differ for shapes {a.shape} and {b.shape}")
    av, bv = a.values, b.values
    return Node(
        av @ bv,
        [(a, lambda g: g @ bv.T), (b, lambda g: av.T @ g)],
        op="matmul",
    )


def add_bias(x, b):
    """Row-broadcast ``x + b`` for ``x`` of shape (m, n) and ``b`` of (1, n)."""
    x, b = _lift(x), _lift(b)
    if b.shape != (1, x.shape[1]):
        raise ShapeError(f"add_bias: bias shape {b.shape} does not match input {x.shape}")
    return Node(
        x.values + b.values,
        [(x, lambda g: g), (b, lambda g: g.sum(axis=0, keepdims=True))],
        op="add_bias",
    )


def leaky_relu(x, slope=0.2):
    """Elementwise ``max(x, slope*x)``; the slope branch also covers x == 0."""
    if not 0.0 <= slope < 1.0:
        raise ValueError(f"leaky_relu slope must lie in [0, 1), got {slope}")
    x = _lift(x)
    factor = np.where(x.values > 0, 1.0, slope)
    return Node(x.values * factor, [(x, lambda g: g * factor)], op="leaky_relu")


def relu(x):
    return leaky_relu(x, 0.0)


def residual_add(x, y):
    """Skip-connection sum; unlike :func:`add` the shapes must match exactly."""
    x, y = _lift(x), _lift(y)
    if x.shape != y.shape:
        raise ShapeError(f"residual_add: shapes {x.shape} and {y.shape} differ")
    return Node(x.values + y.values, [(x, lambda g: g), (y, lambda g: g)], op="residual_add")


def add(a, b):
    a, b = _lift(a), _lift(b)
    _broadcast_shape(a, b, "add")
    sa, sb = a.shape, b.shape
    return Node(
        a.values + b.values,
        [(a, lambda g: _unbroadcast(g, sa)), (b, lambda g: _unbroadcast(g, sb))],
        op="add",
    )


def sub(a, b):
    a, b = _lift(a), _lift(b)
    _broadcast_shape(a, b, "sub")
    sa, sb = a.shape, b.shape
    return Node(
        a.values - b.values,
        [(a, lambda g: _unbroadcast(g, sa)), (b, lambda g: -_unbroadcast(g, sb))],
        op="sub",
    )


def mul(a, b):
    a, b = _lift(a), _lift(b)
    _broadcast_shape(a, b, "mul")
    av, bv = a.values, b.values
    return Node(
        av * bv,
        [(a, lambda g: _unbroadcast(g * bv, av.shape)), (b, lambda g: _unbroadcast(g * av, bv.shape))],
        op="mul",
    )


def div(a, b):
    a, b = _lift(a), _lift(b)
    _broadcast_shape(a, b, "div")
    av, bv = a.values, b.values
    out = av / bv
    return Node(
        out,
        [
            (a, lambda g: _unbroadcast(g / bv, av.shape)),
            (b, lambda g: _unbroadcast(-g * out / bv, bv.shape)),
        ],
        op="div",
    )


def neg(x):
    x = _lift(x)
    return Node(-x.values, [(x, lambda g: -g)], op="neg")


def sin(x):
    x = _lift(x)
    c = np.cos(x.values)
    return Node(np.sin(x.values), [(x, lambda g: g * c)], op="sin")


def cos(x):
    x = _lift(x)
    s = np.sin(x.values)
    return Node(np.cos(x.values), [(x, lambda g: -g * s)], op="cos")


def sqrt(x):
    x = _lift(x)
    out = np.sqrt(x.values)
    # subgradient 0 at x == 0 keeps degenerate inputs from producing NaN
    safe = np.where(out > 0, out, 1.0)
    return Node(out, [(x, lambda g: np.where(out > 0, g / (2.0 * safe), 0.0))], op="sqrt")


def maximum(x, floor):
    """Elementwise ``max(x, floor)`` for a constant ``floor``.

    The gradient flows only where ``x > floor``.
    """
    x = _lift(x)
    mask = x.values > floor
    return Node(np.where(mask, x.values, floor), [(x, lambda g: g * mask)], op="maximum")


def take_cols(x, cols):
    """Gather columns ``cols`` (any int index sequence, repeats allowed)."""
    x = _lift(x)
    cols = np.asarray(cols, dtype=np.intp)
    shape = x.shape

    def back(g):
        out = np.zeros(shape, dtype=DTYPE)
        np.add.at(out, (slice(None), cols), g)
        return out

    return Node(x.values[:, cols], [(x, back)], op="take_cols")


def concat_rows(nodes):
    nodes = [_lift(n) for n in nodes]
    width = nodes[0].shape[1]
    for n in nodes:
        if n.shape[1] != width:
            raise ShapeError(f"concat_rows: column counts differ ({n.shape} vs width {width})")
    bounds = np.cumsum([0] + [n.shape[0] for n in nodes])
    parents = [
        (n, (lambda lo, hi: lambda g: g[lo:hi])(bounds[i], bounds[i + 1]))
        for i, n in enumerate(nodes)
    ]
    return Node(np.concatenate([n.values for n in nodes], axis=0), parents, op="concat_rows")


def slice_rows(x, start, stop):
    x = _lift(x)
    shape = x.shape

    def back(g):
        out = np.zeros(shape, dtype=DTYPE)
        out[start:stop] = g
        return out

    return Node(x.values[start:stop], [(x, back)], op="slice_rows")


def sum_cols(x):
    """Row sums, shape (m, 1)."""
    x = _lift(x)
    shape = x.shape
    return Node(x.values.sum(axis=1, keepdims=True), [(x, lambda g: np.broadcast_to(g, shape))], op="sum_cols")


def mean(x):
    """Mean of all entries as a 1x1 node."""
    x = _lift(x)
    shape, n = x.shape, x.values.size
    return Node(
        np.array([[x.values.mean()]]),
        [(x, lambda g: np.full(shape, g[0, 0] / n))],
        op="mean",
    )


def sigmoid_bce_with_logits(logits, target):
    """Mean binary cross-entropy of ``sigmoid(logits)`` against a constant label.

    Uses ``max(l, 0) - l*t + log1p(exp(-|l|))``, which is finite for any
    finite logit.  For ``target=1`` this is ``-log sigmoid(l)``, for
    ``target=0`` it is ``-log(1 - sigmoid(l))``.
    """
    logits = _lift(logits)
    if logits.shape[1] != 1 or logits.shape[0] < 1:
        raise ShapeError(f"sigmoid_bce_with_logits expects an (m, 1) column, got {logits.shape}")
    if target not in (0, 1):
        raise ValueError(f"target must be 0 or 1, got {target}")
    lv = logits.values
    m = lv.shape[0]
    e = np.exp(-np.abs(lv))
    per_row = np.maximum(lv, 0.0) - lv * target + np.log1p(e)
    sig = np.where(lv >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    dl = (sig - target) / m
    return Node(
        np.array([[per_row.mean()]]),
        [(logits, lambda g: g[0, 0] * dl)],
        op="bce_logits",
    )


# ---------------------------------------------------------------------------
# backward pass


def _topo_order(root):
    """Post-order of grad-requiring nodes reachable from ``root`` (iterative)."""
    order, visited = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited or not node.requires_grad:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent, _ in node.parents:
            if id(parent) not in visited and parent.requires_grad:
                stack.append((parent, False))
    return order


def backward(loss):
    """Populate ``.grad`` of every grad-requiring node reachable from ``loss``.

    ``loss`` must be 1x1.  Leaf gradients accumulate; call :func:`zero_grad`
    between steps.
    """
    if loss.shape != (1, 1):
        raise ShapeError(f"backward needs a scalar (1x1) loss, got shape {loss.shape}")
    order = _topo_order(loss)
    for node in order:
        if node.parents:
            node.grad = np.zeros_like(node.values)
    loss.grad = loss.grad + 1.0
    for node in reversed(order):
        g = node.grad
        for parent, local_backward in node.parents:
            if parent.requires_grad:
                parent.grad += local_backward(g)


def zero_grad(params):
    for p in params:
        p.grad[...] = 0.0


@contextmanager
def frozen(params):
    """Temporarily mark ``params`` as not requiring grad."""
    saved = [p.requires_grad for p in params]
    try:
        for p in params:
            p.requires_grad = False
        yield
    finally:
        for p, flag in zip(params, saved):
            p.requires_grad = flag


# ---------------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    """Moment estimates and hyperparameters for one parameter matrix."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    _buf: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.m.shape != self.v.shape:
            raise ShapeError(f"AdamState moments differ in shape: {self.m.shape} vs {self.v.shape}")
        if self.learning_rate <= 0 or self.epsilon <= 0:
            raise ValueError("learning_rate and epsilon must be positive")
        if not (0.0 < self.beta1 < 1.0 and 0.0 < self.beta2 < 1.0):
            raise ValueError("beta1 and beta2 must lie in (0, 1)")

    @classmethod
    def for_param(cls, param, learning_rate=1e-3, beta1=0.9, beta2=0.999, epsilon=1e-8):
        return cls(
            m=np.zeros_like(param.values),
            v=np.zeros_like(param.values),
            learning_rate=learning_rate,
            beta1=beta1,
            beta2=beta2,
            epsilon=epsilon,
        )


def check_finite_grad(param, name="parameter"):
    if not np.all(np.isfinite(param.grad)):
        raise TrainingError(f"non-finite gradient in {name}", {"parameter": name})


def adam_step(param, state, name="parameter"):
    """One bias-corrected Adam update of ``param.values`` in place."""
    if state.m.shape != param.shape:
        raise ShapeError(f"Adam state shape {state.m.shape} does not match parameter {param.shape}")
    check_finite_grad(param, name)
    g = param.grad
    b1, b2 = state.beta1, state.beta2
    if state._buf is None or state._buf.shape != g.shape:
        state._buf = np.empty_like(g)
    buf = state._buf

    state.t += 1
    state.m *= b1
    np.multiply(g, 1.0 - b1, out=buf)
    state.m += buf
    state.v *= b2
    np.multiply(g, g, out=buf)
    buf *= 1.0 - b2
    state.v += buf

    bc1 = 1.0 - b1**state.t
    bc2 = 1.0 - b2**state.t
    # buf <- lr * (m / bc1) / (sqrt(v / bc2) + eps)
    np.divide(state.v, bc2, out=buf)
    np.sqrt(buf, out=buf)
    buf += state.epsilon
    np.divide(state.m, buf, out=buf)
    buf *= state.learning_rate / bc1
    param.values -= buf
