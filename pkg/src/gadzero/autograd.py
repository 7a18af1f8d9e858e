"""Minimal reverse-mode automatic differentiation over float64 numpy arrays.

Implements exactly the operations the training objectives need: broadcasted
arithmetic, dense/sparse matrix products, elementwise nonlinearities,
reductions, row normalization with the zero-norm convention, indexed row
dot products, and row-wise softmax. Gradients are verified against central
finite differences by ``numerics.grad_check``; agreement with that oracle is
the only contract here.

Also hosts the hand-rolled Adam optimizer used by every training loop.
"""

from __future__ import annotations

import numpy as np
from scipy import sparse

# Norms below this threshold are treated as zero by cosine-style operations;
# the corresponding similarity is 0 and no gradient flows into those rows.
ZERO_NORM_EPS = 1e-12


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce a broadcasted gradient back to the original operand shape."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """A node in the computation graph wrapping a float64 ndarray."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def backward(self):
        """Accumulate gradients of this scalar into every upstream tensor."""
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar tensor")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in seen:
                    stack.append((parent, False))
        for node in topo:
            node.grad = np.zeros_like(node.data)
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None and node._parents:
                node._backward()

    # -- arithmetic ---------------------------------------------------------

    def __add__(self, other):
        other = as_tensor(other)
        out = _node(self.data + other.data, (self, other))

        def backward():
            if self.requires_grad or self._parents:
                self.grad += _unbroadcast(out.grad, self.data.shape)
            if other.requires_grad or other._parents:
                other.grad += _unbroadcast(out.grad, other.data.shape)

        out._backward = backward
        return out

    __radd__ = __add__

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        return self + (-as_tensor(other))

    def __rsub__(self, other):
        return as_tensor(other) + (-self)

    def __mul__(self, other):
        other = as_tensor(other)
        out = _node(self.data * other.data, (self, other))

        def backward():
            if self.requires_grad or self._parents:
                self.grad += _unbroadcast(out.grad * other.data, self.data.shape)
            if other.requires_grad or other._parents:
                other.grad += _unbroadcast(out.grad * self.data, other.data.shape)

        out._backward = backward
        return out

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        if isinstance(scalar, Tensor):
            raise TypeError("tensor/tensor division is not supported; multiply by a reciprocal")
        return self * (1.0 / float(scalar))

    def __matmul__(self, other):
        other = as_tensor(other)
        out = _node(self.data @ other.data, (self, other))

        def backward():
            if self.requires_grad or self._parents:
                self.grad += out.grad @ other.data.T
            if other.requires_grad or other._parents:
                other.grad += self.data.T @ out.grad

        out._backward = backward
        return out

    def t(self):
        out = _node(self.data.T, (self,))

        def backward():
            self.grad += out.grad.T

        out._backward = backward
        return out

    # -- reductions and elementwise maps -------------------------------------

    def sum(self, axis=None, keepdims: bool = False):
        out = _node(self.data.sum(axis=axis, keepdims=keepdims), (self,))

        def backward():
            g = out.grad
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            self.grad += np.broadcast_to(g, self.data.shape)

        out._backward = backward
        return out

    def exp(self):
        out = _node(np.exp(self.data), (self,))

        def backward():
            self.grad += out.grad * out.data

        out._backward = backward
        return out

    def log(self):
        out = _node(np.log(self.data), (self,))

        def backward():
            self.grad += out.grad / self.data

        out._backward = backward
        return out

    def log1p(self):
        out = _node(np.log1p(self.data), (self,))

        def backward():
            self.grad += out.grad / (1.0 + self.data)

        out._backward = backward
        return out

    def relu(self):
        out = _node(np.maximum(self.data, 0.0), (self,))

        def backward():
            self.grad += out.grad * (self.data > 0.0)

        out._backward = backward
        return out

    def tanh(self):
        out = _node(np.tanh(self.data), (self,))

        def backward():
            self.grad += out.grad * (1.0 - out.data * out.data)

        out._backward = backward
        return out


def _node(data: np.ndarray, parents: tuple) -> Tensor:
    out = Tensor(data)
    if any(p.requires_grad or p._parents for p in parents):
        out.requires_grad = True
        out._parents = parents
    return out


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def parameter(data, rng: np.random.Generator | None = None, scale: float | None = None,
              shape: tuple | None = None) -> Tensor:
    """Create a trainable tensor, optionally drawn uniform in [-scale, scale]."""
    if data is None:
        data = rng.uniform(-scale, scale, size=shape)
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True)


def spmm(adj, x: Tensor) -> Tensor:
    """Sparse-constant @ dense-tensor product; the sparse operand gets no gradient."""
    out = _node(np.asarray(adj @ x.data), (x,))
    adj_t = adj.T.tocsr()

    def backward():
        x.grad += np.asarray(adj_t @ out.grad)

    out._backward = backward
    return out


def normalize_rows(x: Tensor, eps: float = ZERO_NORM_EPS) -> Tensor:
    """Scale each row to unit norm; rows with norm < eps become zero rows.

    Zero rows receive no gradient, consistent with treating their cosine
    similarities as the constant 0.
    """
    norms = np.sqrt((x.data * x.data).sum(axis=1, keepdims=True))
    live = norms >= eps
    safe = np.where(live, norms, 1.0)
    y = np.where(live, x.data / safe, 0.0)
    out = _node(y, (x,))

    def backward():
        g = out.grad
        inner = (out.data * g).sum(axis=1, keepdims=True)
        x.grad += np.where(live, (g - out.data * inner) / safe, 0.0)

    out._backward = backward
    return out


def gather_dot(a: Tensor, b: Tensor, rows: np.ndarray, cols: np.ndarray) -> Tensor:
    """Vector of per-pair dot products a[rows[t]] . b[cols[t]]."""
    rows = np.asarray(rows, dtype=np.intp)
    cols = np.asarray(cols, dtype=np.intp)
    out = _node((a.data[rows] * b.data[cols]).sum(axis=1), (a, b))

    def backward():
        g = out.grad[:, None]
        if a.requires_grad or a._parents:
            np.add.at(a.grad, rows, g * b.data[cols])
        if b.requires_grad or b._parents:
            np.add.at(b.grad, cols, g * a.data[rows])

    out._backward = backward
    return out


def rowwise_cosine(a: Tensor, b: Tensor) -> Tensor:
    """cos(a_i, b_i) per row, with the zero-norm convention."""
    n = a.data.shape[0]
    idx = np.arange(n)
    return gather_dot(normalize_rows(a), normalize_rows(b), idx, idx)


def cosine_matrix(a: Tensor, b: Tensor) -> Tensor:
    """Full matrix of cos(a_i, b_j), with the zero-norm convention."""
    return normalize_rows(a) @ normalize_rows(b).t()


def softmax_rows(x: Tensor) -> Tensor:
    """Numerically stable softmax along the last axis."""
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)
    out = _node(y, (x,))

    def backward():
        g = out.grad
        x.grad += y * (g - (g * y).sum(axis=-1, keepdims=True))

    out._backward = backward
    return out


class Adam:
    """Adam with bias correction; betas (0.9, 0.999), eps 1e-8."""

    def __init__(self, params: list[Tensor], lr: float = 1e-3,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        self.params = list(params)
        self.lr = float(lr)
        self.beta1, self.beta2 = betas
        self.eps = float(eps)
        self.step_count = 0
        self._m = [np.zeros_like(p.data) for p in self.params]
        self._v = [np.zeros_like(p.data) for p in self.params]

    def step(self):
        self.step_count += 1
        t = self.step_count
        for i, p in enumerate(self.params):
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            self._m[i] = self.beta1 * self._m[i] + (1.0 - self.beta1) * g
            self._v[i] = self.beta2 * self._v[i] + (1.0 - self.beta2) * g * g
            m_hat = self._m[i] / (1.0 - self.beta1 ** t)
            v_hat = self._v[i] / (1.0 - self.beta2 ** t)
            p.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
