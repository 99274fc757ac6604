"""Small differentiation engine used for training.

Reverse mode is a tape of :class:`Var` nodes holding numpy arrays; every
operation appends a node whose backward closure pushes adjoints to its
parents. Forward mode is :class:`Dual`, a (value, tangent) pair whose
components may themselves be tape variables, so derivatives with respect to
an input can be differentiated again with respect to the parameters
(forward-over-reverse).

The elementwise helpers (:func:`sin`, :func:`gelu`, :func:`stack`, ...)
dispatch on their argument type, so the same model and dynamics code runs on
plain arrays, tape variables and duals.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

SQRT_2_OVER_PI = np.sqrt(2.0 / np.pi)
GELU_CUBIC = 0.044715


class TapeError(RuntimeError):
    """Raised on misuse of a gradient tape."""


class Tape:
    """Records variables in creation order (a valid topological order)."""

    def __init__(self):
        self.nodes: list[Var] = []
        self.consumed = False

    def var(self, value, name=None) -> "Var":
        """Register a leaf variable (a parameter or any watched input)."""
        v = Var(np.asarray(value, dtype=float), self, (), None)
        v.name = name
        return v

    def backward(self, loss: "Var") -> dict[int, np.ndarray]:
        """Backpropagate a scalar ``loss``; returns adjoints keyed by ``id`` of leaves.

        Prefer :meth:`gradients` which maps leaves to adjoints directly.
        """
        if self.consumed:
            raise TapeError("tape already consumed by a backward pass")
        if not isinstance(loss, Var) or loss.tape is not self:
            raise TapeError("loss was not recorded on this tape")
        if loss.value.size != 1:
            raise TapeError(f"backward needs a scalar root, got shape {loss.value.shape}")
        self.consumed = True
        loss.grad = np.ones_like(loss.value)
        for node in reversed(self.nodes):
            if node.grad is None or node._backward is None:
                continue
            node._backward(node.grad)
        return {id(n): n.grad for n in self.nodes if n._backward is None}

    def gradients(self, loss: "Var", wrt: Sequence["Var"]) -> list[np.ndarray]:
        """Adjoints of ``loss`` for each variable in ``wrt`` (zeros if unused)."""
        self.backward(loss)
        return [np.zeros_like(v.value) if v.grad is None else v.grad for v in wrt]


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    if grad.shape == shape:
        return grad
    ndiff = grad.ndim - len(shape)
    if ndiff > 0:
        grad = grad.sum(axis=tuple(range(ndiff)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _value(x):
    return x.value if isinstance(x, Var) else x


class Var:
    """A node on a :class:`Tape`."""

    __slots__ = ("value", "tape", "parents", "_backward", "grad", "name")
    # numpy defers binary operators to us instead of broadcasting elementwise
    __array_ufunc__ = None

    def __init__(self, value, tape, parents, backward):
        self.value = value
        self.tape = tape
        self.parents = parents
        self._backward = backward
        self.grad = None
        self.name = None
        tape.nodes.append(self)

    def __repr__(self):
        return f"Var(shape={self.value.shape}, name={self.name})"

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    @property
    def T(self):
        return transpose(self)

    def _accumulate(self, g):
        g = _unbroadcast(g, self.value.shape)
        self.grad = g if self.grad is None else self.grad + g

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

    def __pow__(self, n):
        return power(self, n)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def sum(self, axis=None):
        return vsum(self, axis)

    def mean(self, axis=None):
        return mean(self, axis)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 else shape)


def _tape_of(*xs) -> Tape:
    for x in xs:
        if isinstance(x, Var):
            return x.tape
    raise TapeError("no tape variable among operands")


def _node(value, parents, backward):
    tape = _tape_of(*parents)
    return Var(np.asarray(value), tape, parents, backward)


# --- primitive operations on tape variables ------------------------------

def add(a, b):
    if not isinstance(a, Var) and not isinstance(b, Var):
        return a + b
    out_val = _value(a) + _value(b)

    def backward(g):
        if isinstance(a, Var):
            a._accumulate(g)
        if isinstance(b, Var):
            b._accumulate(g)

    return _node(out_val, (a, b), backward)


def sub(a, b):
    if not isinstance(a, Var) and not isinstance(b, Var):
        return a - b
    out_val = _value(a) - _value(b)

    def backward(g):
        if isinstance(a, Var):
            a._accumulate(g)
        if isinstance(b, Var):
            b._accumulate(-g)

    return _node(out_val, (a, b), backward)


def mul(a, b):
    if not isinstance(a, Var) and not isinstance(b, Var):
        return a * b
    av, bv = _value(a), _value(b)

    def backward(g):
        if isinstance(a, Var):
            a._accumulate(g * bv)
        if isinstance(b, Var):
            b._accumulate(g * av)

    return _node(av * bv, (a, b), backward)


def div(a, b):
    if not isinstance(a, Var) and not isinstance(b, Var):
        return a / b
    av, bv = _value(a), _value(b)
    out_val = av / bv

    def backward(g):
        if isinstance(a, Var):
            a._accumulate(g / bv)
        if isinstance(b, Var):
            b._accumulate(-g * out_val / bv)

    return _node(out_val, (a, b), backward)


def neg(a):
    if not isinstance(a, Var):
        return -a
    return _node(-a.value, (a,), lambda g: a._accumulate(-g))


def power(a, n):
    """Integer or real constant power."""
    if not isinstance(a, Var):
        return a ** n
    av = a.value
    return _node(av ** n, (a,), lambda g: a._accumulate(g * n * av ** (n - 1)))


def matmul(a, b):
    if not isinstance(a, Var) and not isinstance(b, Var):
        return a @ b
    av, bv = _value(a), _value(b)
    if av.ndim != 2 or bv.ndim != 2:
        raise ValueError("matmul on the tape supports 2-D operands only")

    def backward(g):
        if isinstance(a, Var):
            a._accumulate(g @ bv.T)
        if isinstance(b, Var):
            b._accumulate(av.T @ g)

    return _node(av @ bv, (a, b), backward)


def transpose(a):
    if not isinstance(a, Var):
        return a.T
    return _node(a.value.T, (a,), lambda g: a._accumulate(g.T))


def reshape(a, shape):
    if not isinstance(a, Var):
        return np.reshape(a, shape)
    old = a.value.shape
    return _node(a.value.reshape(shape), (a,), lambda g: a._accumulate(g.reshape(old)))


def getitem(a, idx):
    if not isinstance(a, Var):
        return a[idx]
    shape = a.value.shape

    parts = idx if isinstance(idx, tuple) else (idx,)
    fancy = any(isinstance(p, (list, np.ndarray)) for p in parts)

    def backward(g):
        full = np.zeros(shape)
        if fancy:
            np.add.at(full, idx, g)
        else:
            full[idx] = g
        a._accumulate(full)

    return _node(a.value[idx], (a,), backward)


def vsum(a, axis=None):
    if not isinstance(a, Var):
        return np.sum(a, axis=axis)
    shape = a.value.shape

    def backward(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        a._accumulate(np.broadcast_to(g, shape))

    return _node(np.sum(a.value, axis=axis), (a,), backward)


def mean(a, axis=None):
    if not isinstance(a, Var):
        return np.mean(a, axis=axis)
    n = a.value.size if axis is None else a.value.shape[axis]
    return vsum(a, axis) / n


def stack(items, axis=-1):
    """Stack arrays, tape variables or duals along a new axis."""
    if any(isinstance(x, Dual) for x in items):
        items = [x if isinstance(x, Dual) else Dual(x, np.zeros_like(_value(x))) for x in items]
        return Dual(stack([d.value for d in items], axis), stack([d.tangent for d in items], axis))
    if not any(isinstance(x, Var) for x in items):
        return np.stack(items, axis=axis)
    vals = [np.broadcast_to(_value(x), np.shape(_value(items[0]))) for x in items]
    out = np.stack(vals, axis=axis)
    ax = axis if axis >= 0 else out.ndim + axis

    def backward(g):
        for k, x in enumerate(items):
            if isinstance(x, Var):
                x._accumulate(np.take(g, k, axis=ax))

    return _node(out, tuple(items), backward)


def concatenate(items, axis=-1):
    if not any(isinstance(x, Var) for x in items):
        return np.concatenate(items, axis=axis)
    vals = [_value(x) for x in items]
    out = np.concatenate(vals, axis=axis)
    bounds = np.cumsum([0] + [v.shape[axis] for v in vals])

    def backward(g):
        for k, x in enumerate(items):
            if isinstance(x, Var):
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(bounds[k], bounds[k + 1])
                x._accumulate(g[tuple(sl)])

    return _node(out, tuple(items), backward)


def _unary(fn: Callable, dfn: Callable, x):
    xv = x.value
    out = fn(xv)
    return _node(out, (x,), lambda g: x._accumulate(g * dfn(xv, out)))


# --- GELU (tanh approximation) --------------------------------------------

def _gelu(x):
    return 0.5 * x * (1.0 + np.tanh(SQRT_2_OVER_PI * (x + GELU_CUBIC * x ** 3)))


def _gelu_prime(x):
    s = np.tanh(SQRT_2_OVER_PI * (x + GELU_CUBIC * x ** 3))
    du = SQRT_2_OVER_PI * (1.0 + 3.0 * GELU_CUBIC * x ** 2)
    return 0.5 * (1.0 + s) + 0.5 * x * (1.0 - s * s) * du


def _gelu_second(x):
    s = np.tanh(SQRT_2_OVER_PI * (x + GELU_CUBIC * x ** 3))
    du = SQRT_2_OVER_PI * (1.0 + 3.0 * GELU_CUBIC * x ** 2)
    ddu = SQRT_2_OVER_PI * 6.0 * GELU_CUBIC * x
    ds = (1.0 - s * s) * du
    dds = -2.0 * s * ds * du + (1.0 - s * s) * ddu
    return ds + 0.5 * x * dds


def gelu_prime(x):
    """Derivative of :func:`gelu`; differentiable on the tape."""
    if isinstance(x, Var):
        return _unary(_gelu_prime, lambda v, _: _gelu_second(v), x)
    return _gelu_prime(x)


def gelu(x):
    """GELU, tanh approximation: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))."""
    if isinstance(x, Dual):
        return Dual(gelu(x.value), gelu_prime(x.value) * x.tangent)
    if isinstance(x, Var):
        return _unary(_gelu, lambda v, _: _gelu_prime(v), x)
    return _gelu(np.asarray(x, dtype=float)) if np.ndim(x) else float(_gelu(float(x)))


# --- elementwise functions with dispatch ----------------------------------

def sin(x):
    if isinstance(x, Dual):
        return Dual(sin(x.value), cos(x.value) * x.tangent)
    if isinstance(x, Var):
        return _unary(np.sin, lambda v, _: np.cos(v), x)
    return np.sin(x)


def cos(x):
    if isinstance(x, Dual):
        return Dual(cos(x.value), -sin(x.value) * x.tangent)
    if isinstance(x, Var):
        return _unary(np.cos, lambda v, _: -np.sin(v), x)
    return np.cos(x)


def exp(x):
    if isinstance(x, Dual):
        e = exp(x.value)
        return Dual(e, e * x.tangent)
    if isinstance(x, Var):
        return _unary(np.exp, lambda _, out: out, x)
    return np.exp(x)


def tanh(x):
    if isinstance(x, Dual):
        th = tanh(x.value)
        return Dual(th, (1.0 - th * th) * x.tangent)
    if isinstance(x, Var):
        return _unary(np.tanh, lambda _, out: 1.0 - out * out, x)
    return np.tanh(x)


def square(x):
    return x * x


def value_of(x):
    """Strip tape/dual wrappers down to a plain array."""
    if isinstance(x, Dual):
        return value_of(x.value)
    return _value(x)


# --- forward mode ----------------------------------------------------------

@dataclass
class Dual:
    """Value and tangent (derivative along one seeded input direction).

    Components may be floats, arrays or tape variables; products follow
    (a, a')(b, b') = (ab, ab' + a'b).
    """

    value: object
    tangent: object = field(default=0.0)

    __array_ufunc__ = None

    @staticmethod
    def _lift(x):
        return x if isinstance(x, Dual) else Dual(x, 0.0)

    def __add__(self, other):
        if not isinstance(other, Dual):
            return Dual(self.value + other, self.tangent)
        return Dual(self.value + other.value, self.tangent + other.tangent)

    __radd__ = __add__

    def __sub__(self, other):
        if not isinstance(other, Dual):
            return Dual(self.value - other, self.tangent)
        return Dual(self.value - other.value, self.tangent - other.tangent)

    def __rsub__(self, other):
        return self._lift(other) - self

    def __neg__(self):
        return Dual(-self.value, -self.tangent)

    def __mul__(self, other):
        if not isinstance(other, Dual):
            return Dual(self.value * other, self.tangent * other)
        return Dual(self.value * other.value,
                    self.value * other.tangent + self.tangent * other.value)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not isinstance(other, Dual):
            return Dual(self.value / other, self.tangent / other)
        q = self.value / other.value
        return Dual(q, (self.tangent - q * other.tangent) / other.value)

    def __rtruediv__(self, other):
        return self._lift(other) / self

    def __pow__(self, n):
        return Dual(self.value ** n, n * self.value ** (n - 1) * self.tangent)

    def __matmul__(self, other):
        # other is a constant or tape matrix, never a dual here
        return Dual(self.value @ other, self.tangent @ other)

    def __getitem__(self, idx):
        return Dual(self.value[idx], self.tangent[idx])


DualScalar = Dual


# --- multilayer perceptron -------------------------------------------------

@dataclass
class MlpParameters:
    """Weights ``W[l]`` of shape (out, in) and biases ``b[l]`` of shape (out,)."""

    layer_sizes: list[int]
    weights: list
    biases: list

    def __post_init__(self):
        sizes = list(self.layer_sizes)
        if len(sizes) < 2 or any(int(s) < 1 for s in sizes):
            raise ValueError(f"invalid layer sizes {sizes}")
        if len(self.weights) != len(sizes) - 1 or len(self.biases) != len(sizes) - 1:
            raise ValueError("need one weight matrix and bias per layer")
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            wv, bv = value_of(w), value_of(b)
            if wv.shape != (sizes[l + 1], sizes[l]) or bv.shape != (sizes[l + 1],):
                raise ValueError(
                    f"layer {l}: weight {wv.shape} / bias {bv.shape} do not match sizes {sizes}")
            if not (np.all(np.isfinite(wv)) and np.all(np.isfinite(bv))):
                raise ValueError(f"layer {l}: non-finite parameters")

    @classmethod
    def glorot(cls, layer_sizes, rng: np.random.Generator) -> "MlpParameters":
        ws, bs = [], []
        for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            ws.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
            bs.append(np.zeros(fan_out))
        return cls(list(layer_sizes), ws, bs)

    @property
    def arrays(self) -> list:
        """Parameters in canonical order W0, b0, W1, b1, ..."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    @classmethod
    def from_arrays(cls, layer_sizes, arrays) -> "MlpParameters":
        return cls(list(layer_sizes), list(arrays[0::2]), list(arrays[1::2]))

    def on_tape(self, tape: Tape) -> "MlpParameters":
        """Copy whose arrays are leaf variables of ``tape``."""
        return MlpParameters.from_arrays(
            self.layer_sizes, [tape.var(a) for a in self.arrays])

    def n_params(self) -> int:
        return sum(value_of(a).size for a in self.arrays)


def mlp_forward(params: MlpParameters, inputs):
    """Affine -> GELU hidden layers -> affine output.

    ``inputs`` is a vector of length ``layer_sizes[0]`` or a batch of shape
    (n, layer_sizes[0]); may be an array, tape variable or :class:`Dual`.
    """
    width = np.shape(value_of(inputs))[-1] if np.ndim(value_of(inputs)) else 1
    if width != params.layer_sizes[0]:
        raise ValueError(f"input width {width} != layer size {params.layer_sizes[0]}")
    h = inputs
    last = len(params.weights) - 1
    for l, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = h @ transpose(w) + b
        if l < last:
            h = gelu(h)
    return h


def mlp_forward_with_t_derivative(params: MlpParameters, inputs, t_index: int):
    """Output and its derivative along input channel ``t_index``.

    The tangent is carried by :class:`Dual`; when ``params`` live on a tape
    the derivative is itself a tape variable.
    """
    xv = np.asarray(value_of(inputs), dtype=float)
    n_in = params.layer_sizes[0]
    if not 0 <= t_index < n_in:
        raise IndexError(f"t_index {t_index} outside input width {n_in}")
    seed = np.zeros_like(xv)
    seed[..., t_index] = 1.0
    out = mlp_forward(params, Dual(inputs, seed))
    tangent = out.tangent
    if isinstance(tangent, float) or np.ndim(value_of(tangent)) == 0:
        tangent = np.zeros_like(value_of(out.value))
    return out.value, tangent


def mse(a, b=None):
    """Mean squared difference over all entries."""
    d = a if b is None else a - b
    return mean(d * d)
