"""Minimal reverse-mode differentiation over numpy arrays.

Only the operations the training objectives need are provided. Each op
records its parents and a closure that pushes the output gradient back;
``Tensor.backward`` walks the graph in reverse topological order.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .errors import NonFiniteGradient


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and grad.shape[i] != 1:
            grad = grad.sum(axis=i, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, _parents: tuple = ()):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = None

    @property
    def shape(self) -> tuple:
        return self.data.shape

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def item(self) -> float:
        return float(self.data)

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad += g

    def backward(self) -> None:
        if self.data.size != 1:
            raise ValueError("backward() needs a scalar output")
        order: list[Tensor] = []
        seen: set[int] = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
        for node in order:
            if node.grad is not None and not np.all(np.isfinite(node.grad)):
                raise NonFiniteGradient(f"non-finite gradient reached {node!r}")

    # -- graph construction helper -------------------------------------
    @staticmethod
    def _make(data, parents, backward) -> "Tensor":
        parents = tuple(parents)
        needs = any(p.requires_grad for p in parents)
        out = Tensor(data, requires_grad=needs, _parents=parents if needs else ())
        if needs:
            out._backward = backward
        return out

    # -- arithmetic ----------------------------------------------------
    def __add__(self, other) -> "Tensor":
        other = as_tensor(other)

        def back(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g, self.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(g, other.shape))

        return Tensor._make(self.data + other.data, (self, other), back)

    __radd__ = __add__

    def __neg__(self) -> "Tensor":
        return Tensor._make(-self.data, (self,), lambda g: self._accumulate(-g))

    def __sub__(self, other) -> "Tensor":
        return self + (-as_tensor(other))

    def __rsub__(self, other) -> "Tensor":
        return as_tensor(other) + (-self)

    def __mul__(self, other) -> "Tensor":
        other = as_tensor(other)

        def back(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g * other.data, self.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(g * self.data, other.shape))

        return Tensor._make(self.data * other.data, (self, other), back)

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Tensor":
        other = as_tensor(other)
        out = self.data / other.data

        def back(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g / other.data, self.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(-g * out / other.data, other.shape))

        return Tensor._make(out, (self, other), back)

    def __matmul__(self, other) -> "Tensor":
        other = as_tensor(other)

        def back(g):
            if self.requires_grad:
                self._accumulate(g @ other.data.T)
            if other.requires_grad:
                other._accumulate(self.data.T @ g)

        return Tensor._make(self.data @ other.data, (self, other), back)

    def __getitem__(self, idx) -> "Tensor":
        """Row gather; repeated indices accumulate on the way back."""
        idx = np.asarray(idx)

        def back(g):
            self._accumulate(scatter_rows(idx, g, self.shape))

        return Tensor._make(self.data[idx], (self,), back)

    # -- reductions ----------------------------------------------------
    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        def back(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            self._accumulate(np.broadcast_to(g, self.shape))

        return Tensor._make(self.data.sum(axis=axis, keepdims=keepdims), (self,), back)

    def mean(self, axis=None) -> "Tensor":
        n = self.data.size if axis is None else self.shape[axis]
        return self.sum(axis=axis) * (1.0 / n)

    # -- elementwise ---------------------------------------------------
    def exp(self) -> "Tensor":
        out = np.exp(self.data)
        return Tensor._make(out, (self,), lambda g: self._accumulate(g * out))

    def log(self) -> "Tensor":
        return Tensor._make(np.log(self.data), (self,), lambda g: self._accumulate(g / self.data))

    def sqrt(self) -> "Tensor":
        out = np.sqrt(self.data)
        return Tensor._make(out, (self,), lambda g: self._accumulate(g * 0.5 / out))

    def tanh(self) -> "Tensor":
        out = np.tanh(self.data)
        return Tensor._make(out, (self,), lambda g: self._accumulate(g * (1.0 - out * out)))

    def sigmoid(self) -> "Tensor":
        out = sigmoid(self.data)
        return Tensor._make(out, (self,), lambda g: self._accumulate(g * out * (1.0 - out)))

    def log_sigmoid(self) -> "Tensor":
        out = log_sigmoid(self.data)
        return Tensor._make(out, (self,), lambda g: self._accumulate(g * sigmoid(-self.data)))

    def reshape(self, *shape) -> "Tensor":
        return Tensor._make(
            self.data.reshape(*shape), (self,), lambda g: self._accumulate(g.reshape(self.shape))
        )

    @property
    def T(self) -> "Tensor":
        return Tensor._make(self.data.T, (self,), lambda g: self._accumulate(g.T))


def scatter_rows(idx: np.ndarray, g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum rows of ``g`` into a zero array of ``shape`` at positions ``idx``."""
    flat = idx.reshape(-1)
    g2 = g.reshape(flat.size, -1)
    op = sp.csr_matrix(
        (np.ones(flat.size), (flat, np.arange(flat.size))), shape=(shape[0], flat.size)
    )
    return np.asarray(op @ g2).reshape(shape)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def sigmoid(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def log_sigmoid(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return np.minimum(x, 0.0) - np.log1p(np.exp(-np.abs(x)))


def spmm(op: sp.spmatrix, x: Tensor) -> Tensor:
    """Constant sparse matrix times a tensor."""
    op_t = op.T.tocsr()
    return Tensor._make(op @ x.data, (x,), lambda g: x._accumulate(op_t @ g))


def rowdot(a: Tensor, b: Tensor) -> Tensor:
    return (a * b).sum(axis=1)


def l2_normalize(a: Tensor, eps: float = 1e-12) -> Tensor:
    """Row-wise normalisation; zero rows stay zero."""
    norm = ((a * a).sum(axis=1, keepdims=True) + eps).sqrt()
    return a / norm


def concat_rows(parts: list[Tensor]) -> Tensor:
    sizes = [p.shape[0] for p in parts]
    bounds = np.cumsum([0] + sizes)

    def back(g):
        for p, lo, hi in zip(parts, bounds[:-1], bounds[1:]):
            if p.requires_grad:
                p._accumulate(g[lo:hi])

    return Tensor._make(np.concatenate([p.data for p in parts], axis=0), parts, back)
