"""Dense arrays with a reverse-mode tape and a finite-difference gradient checker.

Every operation producing a :class:`Tensor` from inputs that need gradients
records a backward closure on the result. Nodes carry a creation index, so
``Tensor.backward`` replays the reachable part of the recording in reverse
creation order.
"""

from __future__ import annotations

import itertools
import math
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import LabelError, NumericError, ShapeError

_counter = itertools.count()

GELU_C = math.sqrt(2.0 / math.pi)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward", "_order")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None, dtype=None):
        self.data = np.asarray(data, dtype=dtype)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None
        self._order = next(_counter)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self) -> str:
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, dtype={self.dtype})"

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self.grad += g

    def backward(self, grad: np.ndarray | None = None) -> None:
        """Accumulate d(self)/d(leaf) into ``.grad`` of every reachable leaf."""
        if grad is None:
            if self.data.size != 1:
                raise ShapeError(f"backward() without a seed needs a scalar, got shape {self.shape}")
            grad = np.ones_like(self.data)
        # collect the recorded nodes reachable from self
        nodes = {}
        stack = [self]
        while stack:
            node = stack.pop()
            if node._order in nodes:
                continue
            nodes[node._order] = node
            stack.extend(node._parents)
        # interior gradients live only for the duration of this call
        pending: dict[int, np.ndarray] = {self._order: np.asarray(grad, dtype=self.data.dtype)}
        for order in sorted(nodes, reverse=True):
            node = nodes[order]
            g = pending.pop(order, None)
            if g is None:
                continue
            if node._backward is None:
                if node.requires_grad:
                    node._accumulate(g)
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not _tracks(parent):
                    continue
                if parent._order in pending:
                    pending[parent._order] = pending[parent._order] + pg
                else:
                    pending[parent._order] = pg


class Parameter(Tensor):
    """A named trainable leaf."""

    __slots__ = ()

    def __init__(self, data, name: str, dtype=None):
        super().__init__(data, requires_grad=True, name=name, dtype=dtype)

    @property
    def value(self) -> np.ndarray:
        return self.data

    @property
    def gradient(self) -> np.ndarray:
        return np.zeros_like(self.data) if self.grad is None else self.grad


def _tracks(t: Tensor) -> bool:
    return t.requires_grad or t._backward is not None


def _result(data: np.ndarray, parents: Sequence[Tensor], backward) -> Tensor:
    out = Tensor(data)
    if any(_tracks(p) for p in parents):
        out._parents = tuple(parents)
        out._backward = backward
    return out


def as_tensor(x, dtype=None) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x, dtype=dtype)


def _sum_to(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Reduce a broadcast gradient back to ``shape`` (leading axes only)."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    return g


def _check_trailing(a_shape, b_shape, op: str) -> None:
    if len(b_shape) > len(a_shape) or tuple(a_shape[len(a_shape) - len(b_shape):]) != tuple(b_shape):
        raise ShapeError(f"{op}: shape {tuple(b_shape)} does not match trailing dims of {tuple(a_shape)}")


# --------------------------------------------------------------------------
# elementwise and structural ops
# --------------------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum. ``b`` may be a row/bias broadcast over leading axes of ``a``."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        _check_trailing(a.shape, b.shape, "add")
    b_shape = b.shape

    def backward(g):
        return g, _sum_to(g, b_shape)

    return _result(a.data + b.data, (a, b), backward)


def add_constant(a: Tensor, c: np.ndarray) -> Tensor:
    """Add a non-differentiable array (numpy broadcasting; used for attention masks)."""
    a = as_tensor(a)
    out = a.data + np.asarray(c, dtype=a.dtype)
    if out.shape != a.shape:
        raise ShapeError(f"add_constant: constant of shape {np.shape(c)} would grow {a.shape}")
    return _result(out, (a,), lambda g: (g,))


def scale(a: Tensor, s: float) -> Tensor:
    a = as_tensor(a)
    return _result(a.data * s, (a,), lambda g: (g * s,))


def mul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"mul: shapes {a.shape} and {b.shape} differ")
    return _result(a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product over the last two axes.

    ``b`` is either 2-D (shared weight, broadcast over the leading axes of ``a``)
    or has exactly the same leading axes as ``a``.
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ShapeError(f"matmul needs >= 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: inner dimensions differ for {a.shape} and {b.shape}")
    if b.data.ndim > 2 and a.shape[:-2] != b.shape[:-2]:
        raise ShapeError(f"matmul: batch dimensions differ for {a.shape} and {b.shape}")
    ad, bd = a.data, b.data

    def backward(g):
        ga = g @ np.swapaxes(bd, -1, -2)
        if bd.ndim == 2:
            gb = ad.reshape(-1, ad.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        else:
            gb = np.swapaxes(ad, -1, -2) @ g
        return ga, gb

    return _result(ad @ bd, (a, b), backward)


def transpose(a: Tensor, axes: Sequence[int]) -> Tensor:
    a = as_tensor(a)
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    return _result(np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inverse),))


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    a = as_tensor(a)
    old = a.shape
    return _result(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),))


def take(a: Tensor, index) -> Tensor:
    """``a[index]`` with scatter-add backward (handles repeated indices)."""
    a = as_tensor(a)
    shape, dtype = a.shape, a.dtype

    def backward(g):
        full = np.zeros(shape, dtype=dtype)
        np.add.at(full, index, g)
        return (full,)

    return _result(a.data[index], (a,), backward)


def embedding(table: Tensor, ids: np.ndarray) -> Tensor:
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise ShapeError(f"embedding ids outside table of {table.shape[0]} rows")
    return take(table, ids)


def tanh(a: Tensor) -> Tensor:
    a = as_tensor(a)
    y = np.tanh(a.data)
    return _result(y, (a,), lambda g: (g * (1.0 - y * y),))


def gelu(a: Tensor) -> Tensor:
    """GELU, tanh approximation."""
    a = as_tensor(a)
    x = a.data
    inner = GELU_C * (x + 0.044715 * x * x * x)
    t = np.tanh(inner)
    y = 0.5 * x * (1.0 + t)

    def backward(g):
        dinner = GELU_C * (1.0 + 3 * 0.044715 * x * x)
        dy = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner
        return (g * dy,)

    return _result(y, (a,), backward)


def dropout(a: Tensor, rate: float, rng: np.random.Generator | None) -> Tensor:
    """Inverted dropout. Identity when ``rng`` is None or ``rate`` is 0."""
    a = as_tensor(a)
    if rng is None or rate <= 0.0:
        return a
    keep = (rng.random(a.shape) >= rate).astype(a.dtype) / (1.0 - rate)
    return _result(a.data * keep, (a,), lambda g: (g * keep,))


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    z = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return _result(y, (a,), backward)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-12) -> Tensor:
    x, gain, bias = as_tensor(x), as_tensor(gain), as_tensor(bias)
    h = x.shape[-1]
    if gain.shape != (h,) or bias.shape != (h,):
        raise ShapeError(f"layer_norm: gain {gain.shape} / bias {bias.shape} do not match last dim {h}")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gain.data + bias.data

    def backward(g):
        gx_hat = g * gain.data
        gx = inv * (gx_hat - gx_hat.mean(axis=-1, keepdims=True)
                    - xhat * (gx_hat * xhat).mean(axis=-1, keepdims=True))
        flat_g = g.reshape(-1, h)
        ggain = (flat_g * xhat.reshape(-1, h)).sum(axis=0)
        gbias = flat_g.sum(axis=0)
        return gx, ggain, gbias

    return _result(out, (x, gain, bias), backward)


def log_softmax_np(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def cross_entropy(logits: Tensor, labels: Sequence[int]) -> Tensor:
    """Mean negative log-likelihood of ``labels`` under softmax(logits)."""
    logits = as_tensor(logits)
    if logits.data.ndim != 2:
        raise ShapeError(f"cross_entropy expects [b, C] logits, got {logits.shape}")
    b, C = logits.shape
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (b,):
        raise ShapeError(f"cross_entropy: {labels.shape[0] if labels.ndim else 0} labels for {b} rows")
    if b == 0:
        raise ShapeError("cross_entropy over an empty batch")
    if labels.min() < 0 or labels.max() >= C:
        raise LabelError(f"label outside [0, {C})")
    logp = log_softmax_np(logits.data)
    rows = np.arange(b)
    loss = -logp[rows, labels].mean()

    def backward(g):
        grad = np.exp(logp)
        grad[rows, labels] -= 1.0
        return (grad * (g / b),)

    return _result(np.asarray(loss, dtype=logits.dtype), (logits,), backward)


def sum_all(a: Tensor) -> Tensor:
    a = as_tensor(a)
    shape = a.shape
    return _result(np.asarray(a.data.sum()), (a,), lambda g: (np.broadcast_to(g, shape).copy(),))


# --------------------------------------------------------------------------
# gradient checking
# --------------------------------------------------------------------------

def grad_check(
    f: Callable[[], Tensor],
    params: Iterable[Parameter],
    step: float = 1e-5,
    max_entries: int | None = None,
    seed: int = 0,
) -> float:
    """Largest relative error between tape gradients and central differences.

    ``f`` rebuilds the scalar loss from the current parameter values on every
    call. With ``max_entries`` set, tensors larger than that are checked on a
    random subsample of ``max(50, max_entries)`` entries.
    """
    if not step > 0:
        raise ValueError(f"finite-difference step must be positive, got {step}")
    params = list(params)
    for p in params:
        p.zero_grad()
    loss = f()
    if not np.isfinite(loss.data).all():
        raise NumericError("loss is not finite")
    loss.backward()
    analytic = {id(p): p.gradient.copy() for p in params}

    rng = np.random.default_rng(seed)
    worst = 0.0
    for p in params:
        flat = p.data.reshape(-1)
        n = flat.size
        if max_entries is not None and n > max(50, max_entries):
            idx = rng.choice(n, size=max(50, max_entries), replace=False)
        else:
            idx = np.arange(n)
        g_ad = analytic[id(p)].reshape(-1)
        for i in idx:
            orig = flat[i]
            flat[i] = orig + step
            up = float(f().data)
            flat[i] = orig - step
            down = float(f().data)
            flat[i] = orig
            if not (math.isfinite(up) and math.isfinite(down)):
                raise NumericError(f"non-finite loss while perturbing {p.name}[{i}]")
            fd = (up - down) / (2.0 * step)
            ad = float(g_ad[i])
            if not math.isfinite(ad):
                raise NumericError(f"non-finite gradient for {p.name}[{i}]")
            err = abs(ad - fd) / max(1e-8, abs(ad) + abs(fd))
            worst = max(worst, err)
    return worst
