"""Minimal dense-tensor engine with reverse-mode automatic differentiation.

Define-by-run tape over numpy arrays.  Exactly the operations the fusion
graph needs are provided: matmul, broadcasting elementwise arithmetic,
concat/slice/transpose, relu/tanh/sigmoid, stable softmax, layer norm,
inverted dropout, pooling, L2 norm, and an LSTM step composed from the
primitives.

Two precisions are supported: float32 (training default) and float64
(gradient verification; finite differences are unreliable at float32).
Graph construction and backward are single-threaded per graph; nothing
here touches global state.
"""
from __future__ import annotations

import numpy as np

from .errors import ConfigError, ShapeError
from .rng import Rng


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum grad over axes that were broadcast to reach grad.shape."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """Dense array node in the differentiation graph.

    grad is populated by backward() for every requires_grad tensor
    reachable from the loss; unreachable tensors keep grad=None.
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents")

    def __init__(self, data, requires_grad=False, dtype=None, _parents=()):
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype)
        elif arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float32)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        # list of (parent Tensor, fn mapping out-grad -> parent-grad)
        self._parents = _parents

    # -- bookkeeping ----------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    # -- graph construction ---------------------------------------------

    @staticmethod
    def _make(data, parents):
        parents = [(p, fn) for p, fn in parents if p.requires_grad]
        out = Tensor(data, requires_grad=bool(parents), dtype=data.dtype,
                     _parents=tuple(parents))
        return out

    def _coerce(self, other) -> "Tensor":
        if isinstance(other, Tensor):
            return other
        return Tensor(np.asarray(other, dtype=self.data.dtype))

    # -- elementwise arithmetic (numpy broadcasting rules) ---------------

    def __add__(self, other):
        other = self._coerce(other)
        out_data = self.data + other.data
        return Tensor._make(out_data, [
            (self, lambda g: _unbroadcast(g, self.shape)),
            (other, lambda g: _unbroadcast(g, other.shape)),
        ])

    __radd__ = __add__

    def __neg__(self):
        return Tensor._make(-self.data, [(self, lambda g: -g)])

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) + (-self)

    def __mul__(self, other):
        other = self._coerce(other)
        out_data = self.data * other.data
        return Tensor._make(out_data, [
            (self, lambda g: _unbroadcast(g * other.data, self.shape)),
            (other, lambda g: _unbroadcast(g * self.data, other.shape)),
        ])

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = self._coerce(other)
        out_data = self.data / other.data
        return Tensor._make(out_data, [
            (self, lambda g: _unbroadcast(g / other.data, self.shape)),
            (other, lambda g: _unbroadcast(-g * self.data / other.data ** 2,
                                           other.shape)),
        ])

    # -- linear algebra ---------------------------------------------------

    def matmul(self, other: "Tensor") -> "Tensor":
        other = self._coerce(other)
        if self.data.ndim != 2 or other.data.ndim != 2 or \
                self.shape[1] != other.shape[0]:
            raise ShapeError(
                f"matmul: incompatible shapes {self.shape} and {other.shape}")
        out_data = self.data @ other.data
        return Tensor._make(out_data, [
            (self, lambda g: g @ other.data.T),
            (other, lambda g: self.data.T @ g),
        ])

    def __matmul__(self, other):
        return self.matmul(other)

    def transpose(self) -> "Tensor":
        return Tensor._make(self.data.T, [(self, lambda g: g.T)])

    # -- shape ops --------------------------------------------------------

    def reshape(self, *shape) -> "Tensor":
        old = self.shape
        return Tensor._make(self.data.reshape(*shape),
                            [(self, lambda g: g.reshape(old))])

    def slice(self, key) -> "Tensor":
        def back(g):
            full = np.zeros_like(self.data)
            full[key] = g
            return full
        return Tensor._make(self.data[key], [(self, back)])

    # -- reductions -------------------------------------------------------

    def sum(self, axis=None, keepdims=False) -> "Tensor":
        out_data = self.data.sum(axis=axis, keepdims=keepdims)

        def back(g):
            if axis is None:
                return np.broadcast_to(g, self.shape).astype(self.data.dtype)
            gg = g if keepdims else np.expand_dims(g, axis)
            return np.broadcast_to(gg, self.shape).astype(self.data.dtype)

        return Tensor._make(np.asarray(out_data), [(self, back)])

    def mean(self, axis=None, keepdims=False) -> "Tensor":
        n = self.data.size if axis is None else self.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    # -- nonlinearities ---------------------------------------------------

    def relu(self) -> "Tensor":
        mask = self.data > 0
        return Tensor._make(self.data * mask, [(self, lambda g: g * mask)])

    def tanh(self) -> "Tensor":
        out_data = np.tanh(self.data)
        return Tensor._make(out_data, [(self, lambda g: g * (1.0 - out_data ** 2))])

    def sigmoid(self) -> "Tensor":
        out_data = 1.0 / (1.0 + np.exp(-self.data))
        return Tensor._make(out_data,
                            [(self, lambda g: g * out_data * (1.0 - out_data))])

    def exp(self) -> "Tensor":
        out_data = np.exp(self.data)
        return Tensor._make(out_data, [(self, lambda g: g * out_data)])

    def log(self) -> "Tensor":
        return Tensor._make(np.log(self.data),
                            [(self, lambda g: g / self.data)])

    def sqrt(self) -> "Tensor":
        out_data = np.sqrt(self.data)
        return Tensor._make(out_data, [(self, lambda g: g * 0.5 / out_data)])

    # -- backward ---------------------------------------------------------

    def backward(self):
        if self.data.size != 1:
            raise ShapeError(
                f"backward: loss must be scalar, got shape {self.shape}")
        order = []
        seen = set()

        def visit(t):
            stack = [(t, iter(t._parents))]
            seen.add(id(t))
            while stack:
                node, it = stack[-1]
                advanced = False
                for p, _ in it:
                    if id(p) not in seen:
                        seen.add(id(p))
                        stack.append((p, iter(p._parents)))
                        advanced = True
                        break
                if not advanced:
                    order.append(node)
                    stack.pop()

        visit(self)
        grads = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.requires_grad and not node._parents:
                # leaf: accumulate into .grad (a tensor used twice sums)
                node.grad = g if node.grad is None else node.grad + g
            for parent, fn in node._parents:
                pg = fn(g)
                if id(parent) in grads:
                    grads[id(parent)] = grads[id(parent)] + pg
                else:
                    grads[id(parent)] = pg


class Parameter(Tensor):
    """Named trainable leaf tensor."""

    __slots__ = ("name",)

    def __init__(self, data, name: str, dtype=None):
        super().__init__(data, requires_grad=True, dtype=dtype)
        self.name = name

    def __repr__(self):
        return f"Parameter({self.name}, shape={self.shape})"


# -- free functions over tensors ------------------------------------------

def concat(tensors, axis=0) -> Tensor:
    """Concatenate along an axis; gradient splits back to each input."""
    datas = [t.data for t in tensors]
    out_data = np.concatenate(datas, axis=axis)
    parents = []
    offset = 0
    for t in tensors:
        size = t.shape[axis]
        key = [np.s_[:]] * out_data.ndim
        key[axis] = np.s_[offset:offset + size]
        key = tuple(key)
        parents.append((t, lambda g, key=key: g[key]))
        offset += size
    return Tensor._make(out_data, parents)


def softmax(x: Tensor, axis=-1) -> Tensor:
    """Numerically stable softmax (max-subtraction; the shift has zero
    total gradient so detaching it is exact)."""
    if axis >= x.data.ndim or axis < -x.data.ndim:
        raise ShapeError(f"softmax: axis {axis} invalid for shape {x.shape}")
    m = Tensor(x.data.max(axis=axis, keepdims=True))
    e = (x - m).exp()
    return e / e.sum(axis=axis, keepdims=True)


def log_sum_exp(x: Tensor, axis=-1) -> Tensor:
    m_data = x.data.max(axis=axis, keepdims=True)
    m = Tensor(m_data)
    s = (x - m).exp().sum(axis=axis, keepdims=True)
    return s.log() + m


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps=1e-5) -> Tensor:
    """Standardize each row over the last axis, then affine transform."""
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise ShapeError(
            f"layer_norm: gain/bias shapes {gain.shape}/{bias.shape} "
            f"do not match feature dim {d}")
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    return xc / (var + eps).sqrt() * gain + bias


def dropout(x: Tensor, rate: float, mode: str, rng: Rng | None) -> Tensor:
    """Inverted dropout: eval mode is a pure identity."""
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must be in [0, 1), got {rate}")
    if mode == "eval" or rate == 0.0:
        return x
    if mode != "train":
        raise ConfigError(f"dropout mode must be 'train' or 'eval', got {mode!r}")
    if rng is None:
        raise ConfigError("dropout in train mode requires an rng")
    keep = 1.0 - rate
    mask = (rng.bernoulli_keep(x.shape, keep) / keep).astype(x.data.dtype)
    return x * Tensor(mask)


def mean_pool(x: Tensor, axis=0) -> Tensor:
    return x.mean(axis=axis)


def l2_norm(x: Tensor) -> Tensor:
    """L2 norm over the whole (flattened) tensor, as a scalar tensor."""
    return (x * x).sum().sqrt()


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Row-vector convention: out = x @ weight (+ bias)."""
    out = x.matmul(weight)
    if bias is not None:
        out = out + bias
    return out


def lstm_step(x: Tensor, state, params: dict):
    """One LSTM cell step.

    x: (1, d_in) row, state: (h, c) rows of (1, d_h).  params holds
    per-gate weights w_{i,f,o,g} (d_in, d_h), u_{i,f,o,g} (d_h, d_h) and
    biases b_{i,f,o,g} (d_h,).
    """
    h, c = state
    if x.data.ndim != 2 or x.shape[0] != 1:
        raise ShapeError(f"lstm_step: x must be (1, d_in), got {x.shape}")
    if params["w_i"].shape[0] != x.shape[1]:
        raise ShapeError(
            f"lstm_step: input dim {x.shape[1]} does not match "
            f"w_i shape {params['w_i'].shape}")
    i = linear(x, params["w_i"], params["b_i"]) + h.matmul(params["u_i"])
    f = linear(x, params["w_f"], params["b_f"]) + h.matmul(params["u_f"])
    o = linear(x, params["w_o"], params["b_o"]) + h.matmul(params["u_o"])
    g = linear(x, params["w_g"], params["b_g"]) + h.matmul(params["u_g"])
    c_new = f.sigmoid() * c + i.sigmoid() * g.tanh()
    h_new = o.sigmoid() * c_new.tanh()
    return h_new, c_new
