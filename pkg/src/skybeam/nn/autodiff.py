"""Minimal reverse-mode automatic differentiation over numpy arrays.

Every public op accepts either :class:`Tensor` or plain ``numpy`` arrays.
When no argument is a Tensor the op short-circuits to pure numpy, so the
same forward code serves both differentiable training and fast inference.

The engine is deliberately closed: it implements exactly the primitives the
beamformer / policy losses need (dense affine maps, segment statistics,
leave-one-out max, categorical log-probabilities). Anything outside that
set raises :class:`UnsupportedOpError` instead of silently detaching.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Tensor",
    "ShapeError",
    "NumericError",
    "UnsupportedOpError",
    "add", "sub", "mul", "div", "neg", "power", "matmul",
    "exp", "log", "log2", "sqrt", "relu",
    "tensor_sum", "tensor_mean", "tensor_max",
    "maximum", "minimum", "where", "clip",
    "concatenate", "reshape", "swapaxes", "broadcast_to",
    "gather_last", "diagonal", "loo_max",
    "log_softmax", "softmax", "categorical_entropy",
    "detach", "as_array",
    "finite_difference_gradients", "max_relative_error", "check_gradients",
]

_LN2 = float(np.log(2.0))


class ShapeError(ValueError):
    """Operand shapes are incompatible."""


class NumericError(ValueError):
    """Non-finite values where finite ones are required."""


class UnsupportedOpError(TypeError):
    """Operation has no reverse-mode rule in this engine."""


def as_array(x):
    """Underlying ndarray of ``x`` (Tensor or array-like)."""
    return x.data if isinstance(x, Tensor) else np.asarray(x)


def detach(x):
    """Constant view of ``x``: gradients do not flow past it."""
    return x.data if isinstance(x, Tensor) else np.asarray(x)


def _sum_to_shape(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce a broadcasted gradient back to ``shape``."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Tensor:
    """A numpy array plus the closure that back-propagates into its parents."""

    __slots__ = ("data", "grad", "_parents", "_bwd")
    # Keep numpy from hijacking mixed Tensor/ndarray operators.
    __array_ufunc__ = None

    def __init__(self, data, _parents=(), _bwd=None):
        self.data = np.asarray(data)
        self.grad = None
        self._parents = _parents
        self._bwd = _bwd

    # -- introspection ------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype})"

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = g.copy() if isinstance(g, np.ndarray) else np.asarray(g, dtype=self.data.dtype)
        else:
            self.grad = self.grad + g

    # -- reverse pass --------------------------------------------------
    def backward(self) -> None:
        """Back-propagate from a scalar tensor through the whole graph."""
        if self.data.size != 1:
            raise ShapeError("backward() requires a scalar loss, got shape %s" % (self.data.shape,))
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._bwd is not None:
                node._bwd(node.grad)

    # -- operators -----------------------------------------------------
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

    def __pow__(self, exponent):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, key):
        return _getitem(self, key)

    # Comparisons are evaluated on data and are not differentiable; they
    # exist to build `where` conditions.
    def __lt__(self, other):
        return self.data < as_array(other)

    def __le__(self, other):
        return self.data <= as_array(other)

    def __gt__(self, other):
        return self.data > as_array(other)

    def __ge__(self, other):
        return self.data >= as_array(other)

    def __iter__(self):
        raise UnsupportedOpError("iterating a Tensor is not differentiable; use detach()")


def _any_tensor(*args) -> bool:
    return any(isinstance(a, Tensor) for a in args)


# ---------------------------------------------------------------------------
# elementwise arithmetic
# ---------------------------------------------------------------------------

def add(a, b):
    if not _any_tensor(a, b):
        return np.add(a, b)
    ad, bd = as_array(a), as_array(b)
    out = Tensor(ad + bd, _parents=tuple(x for x in (a, b) if isinstance(x, Tensor)))

    def _bwd(g):
        if isinstance(a, Tensor):
            a._accumulate(_sum_to_shape(g, ad.shape))
        if isinstance(b, Tensor):
            b._accumulate(_sum_to_shape(g, bd.shape))

    out._bwd = _bwd
    return out


def sub(a, b):
    if not _any_tensor(a, b):
        return np.subtract(a, b)
    ad, bd = as_array(a), as_array(b)
    out = Tensor(ad - bd, _parents=tuple(x for x in (a, b) if isinstance(x, Tensor)))

    def _bwd(g):
        if isinstance(a, Tensor):
            a._accumulate(_sum_to_shape(g, ad.shape))
        if isinstance(b, Tensor):
            b._accumulate(_sum_to_shape(-g, bd.shape))

    out._bwd = _bwd
    return out


def mul(a, b):
    if not _any_tensor(a, b):
        return np.multiply(a, b)
    ad, bd = as_array(a), as_array(b)
    out = Tensor(ad * bd, _parents=tuple(x for x in (a, b) if isinstance(x, Tensor)))

    def _bwd(g):
        if isinstance(a, Tensor):
            a._accumulate(_sum_to_shape(g * bd, ad.shape))
        if isinstance(b, Tensor):
            b._accumulate(_sum_to_shape(g * ad, bd.shape))

    out._bwd = _bwd
    return out


def div(a, b):
    if not _any_tensor(a, b):
        return np.divide(a, b)
    ad, bd = as_array(a), as_array(b)
    out = Tensor(ad / bd, _parents=tuple(x for x in (a, b) if isinstance(x, Tensor)))

    def _bwd(g):
        if isinstance(a, Tensor):
            a._accumulate(_sum_to_shape(g / bd, ad.shape))
        if isinstance(b, Tensor):
            b._accumulate(_sum_to_shape(-g * ad / (bd * bd), bd.shape))

    out._bwd = _bwd
    return out


def neg(a):
    if not isinstance(a, Tensor):
        return np.negative(a)
    out = Tensor(-a.data, _parents=(a,))
    out._bwd = lambda g: a._accumulate(-g)
    return out


def power(a, exponent):
    """Elementwise power with a constant scalar exponent."""
    if isinstance(exponent, Tensor):
        raise UnsupportedOpError("tensor-valued exponents are not supported")
    if not isinstance(a, Tensor):
        return np.power(a, exponent)
    out = Tensor(np.power(a.data, exponent), _parents=(a,))

    def _bwd(g):
        a._accumulate(g * exponent * np.power(a.data, exponent - 1))

    out._bwd = _bwd
    return out


def exp(a):
    if not isinstance(a, Tensor):
        return np.exp(a)
    val = np.exp(a.data)
    out = Tensor(val, _parents=(a,))
    out._bwd = lambda g: a._accumulate(g * val)
    return out


def log(a):
    if not isinstance(a, Tensor):
        return np.log(a)
    out = Tensor(np.log(a.data), _parents=(a,))
    out._bwd = lambda g: a._accumulate(g / a.data)
    return out


def log2(a):
    if not isinstance(a, Tensor):
        return np.log2(a)
    out = Tensor(np.log2(a.data), _parents=(a,))
    out._bwd = lambda g: a._accumulate(g / (a.data * _LN2))
    return out


def sqrt(a):
    if not isinstance(a, Tensor):
        return np.sqrt(a)
    val = np.sqrt(a.data)
    out = Tensor(val, _parents=(a,))
    out._bwd = lambda g: a._accumulate(g * 0.5 / val)
    return out


def relu(a):
    if not isinstance(a, Tensor):
        return np.maximum(a, 0.0)
    mask = a.data > 0
    out = Tensor(np.where(mask, a.data, 0.0), _parents=(a,))
    out._bwd = lambda g: a._accumulate(g * mask)
    return out


def maximum(a, b):
    """Elementwise max; on ties the subgradient routes to ``a``."""
    if not _any_tensor(a, b):
        return np.maximum(a, b)
    ad, bd = as_array(a), as_array(b)
    take_a = ad >= bd
    out = Tensor(np.where(take_a, ad, bd), _parents=tuple(x for x in (a, b) if isinstance(x, Tensor)))

    def _bwd(g):
        if isinstance(a, Tensor):
            a._accumulate(_sum_to_shape(g * take_a, ad.shape))
        if isinstance(b, Tensor):
            b._accumulate(_sum_to_shape(g * ~take_a, bd.shape))

    out._bwd = _bwd
    return out


def minimum(a, b):
    """Elementwise min; on ties the subgradient routes to ``a``."""
    if not _any_tensor(a, b):
        return np.minimum(a, b)
    ad, bd = as_array(a), as_array(b)
    take_a = ad <= bd
    out = Tensor(np.where(take_a, ad, bd), _parents=tuple(x for x in (a, b) if isinstance(x, Tensor)))

    def _bwd(g):
        if isinstance(a, Tensor):
            a._accumulate(_sum_to_shape(g * take_a, ad.shape))
        if isinstance(b, Tensor):
            b._accumulate(_sum_to_shape(g * ~take_a, bd.shape))

    out._bwd = _bwd
    return out


def where(cond, a, b):
    """Select ``a`` where ``cond`` else ``b``; ``cond`` is a constant mask."""
    cond = as_array(cond).astype(bool)
    if not _any_tensor(a, b):
        return np.where(cond, a, b)
    ad, bd = as_array(a), as_array(b)
    out = Tensor(np.where(cond, ad, bd), _parents=tuple(x for x in (a, b) if isinstance(x, Tensor)))

    def _bwd(g):
        if isinstance(a, Tensor):
            a._accumulate(_sum_to_shape(g * cond, ad.shape))
        if isinstance(b, Tensor):
            b._accumulate(_sum_to_shape(g * ~cond, bd.shape))

    out._bwd = _bwd
    return out


def clip(a, lo, hi):
    return minimum(maximum(a, lo), hi)


# ---------------------------------------------------------------------------
# linear algebra & shape ops
# ---------------------------------------------------------------------------

def matmul(a, b):
    """Stacked matrix product ``(..., n, m) @ (..., m, p)``."""
    if not _any_tensor(a, b):
        return np.matmul(a, b)
    ad, bd = as_array(a), as_array(b)
    out = Tensor(np.matmul(ad, bd), _parents=tuple(x for x in (a, b) if isinstance(x, Tensor)))

    def _bwd(g):
        if isinstance(a, Tensor):
            ga = np.matmul(g, np.swapaxes(bd, -1, -2))
            a._accumulate(_sum_to_shape(ga, ad.shape))
        if isinstance(b, Tensor):
            gb = np.matmul(np.swapaxes(ad, -1, -2), g)
            b._accumulate(_sum_to_shape(gb, bd.shape))

    out._bwd = _bwd
    return out


def reshape(a, shape):
    if not isinstance(a, Tensor):
        return np.reshape(a, shape)
    orig = a.data.shape
    out = Tensor(a.data.reshape(shape), _parents=(a,))
    out._bwd = lambda g: a._accumulate(g.reshape(orig))
    return out


def swapaxes(a, ax1, ax2):
    if not isinstance(a, Tensor):
        return np.swapaxes(a, ax1, ax2)
    out = Tensor(np.swapaxes(a.data, ax1, ax2), _parents=(a,))
    out._bwd = lambda g: a._accumulate(np.swapaxes(g, ax1, ax2))
    return out


def broadcast_to(a, shape):
    if not isinstance(a, Tensor):
        return np.broadcast_to(a, shape)
    orig = a.data.shape
    out = Tensor(np.broadcast_to(a.data, shape).copy(), _parents=(a,))
    out._bwd = lambda g: a._accumulate(_sum_to_shape(g, orig))
    return out


def concatenate(parts, axis=0):
    if not _any_tensor(*parts):
        return np.concatenate(parts, axis=axis)
    datas = [as_array(p) for p in parts]
    sizes = [d.shape[axis] for d in datas]
    out = Tensor(np.concatenate(datas, axis=axis),
                 _parents=tuple(p for p in parts if isinstance(p, Tensor)))

    def _bwd(g):
        offset = 0
        for p, n in zip(parts, sizes):
            if isinstance(p, Tensor):
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(offset, offset + n)
                p._accumulate(g[tuple(idx)])
            offset += n

    out._bwd = _bwd
    return out


def _getitem(a: Tensor, key):
    out = Tensor(a.data[key], _parents=(a,))

    def _bwd(g):
        buf = np.zeros_like(a.data)
        np.add.at(buf, key, g)
        a._accumulate(buf)

    out._bwd = _bwd
    return out


def gather_last(a, idx):
    """Pick one entry per row along the last axis: ``out[..., 0] = a[..., idx]``.

    ``idx`` has shape ``a.shape[:-1] + (1,)`` with integer entries.
    """
    idx = np.asarray(idx)
    if not isinstance(a, Tensor):
        return np.take_along_axis(a, idx, axis=-1)
    out = Tensor(np.take_along_axis(a.data, idx, axis=-1), _parents=(a,))

    def _bwd(g):
        buf = np.zeros_like(a.data)
        np.put_along_axis(buf, idx, g, axis=-1)
        a._accumulate(buf)

    out._bwd = _bwd
    return out


def diagonal(a):
    """Diagonal of the trailing two axes: ``(..., K, K) -> (..., K)``."""
    if not isinstance(a, Tensor):
        return np.diagonal(a, axis1=-2, axis2=-1).copy()
    out = Tensor(np.diagonal(a.data, axis1=-2, axis2=-1).copy(), _parents=(a,))

    def _bwd(g):
        buf = np.zeros_like(a.data)
        k = buf.shape[-1]
        r = np.arange(k)
        buf[..., r, r] = g
        a._accumulate(buf)

    out._bwd = _bwd
    return out


# ---------------------------------------------------------------------------
# reductions
# ---------------------------------------------------------------------------

def tensor_sum(a, axis=None, keepdims=False):
    if not isinstance(a, Tensor):
        return np.sum(a, axis=axis, keepdims=keepdims)
    out = Tensor(a.data.sum(axis=axis, keepdims=keepdims), _parents=(a,))

    def _bwd(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        a._accumulate(np.broadcast_to(g, a.data.shape))

    out._bwd = _bwd
    return out


def tensor_mean(a, axis=None, keepdims=False):
    if not isinstance(a, Tensor):
        return np.mean(a, axis=axis, keepdims=keepdims)
    data = a.data
    count = data.size if axis is None else np.prod([data.shape[ax] for ax in np.atleast_1d(axis)])
    out = Tensor(data.mean(axis=axis, keepdims=keepdims), _parents=(a,))

    def _bwd(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        a._accumulate(np.broadcast_to(g, data.shape) / count)

    out._bwd = _bwd
    return out


def tensor_max(a, axis, keepdims=False):
    """Max along one axis; the gradient routes to the first argmax."""
    if not isinstance(a, Tensor):
        return np.max(a, axis=axis, keepdims=keepdims)
    data = a.data
    am = np.expand_dims(np.argmax(data, axis=axis), axis)
    val = np.take_along_axis(data, am, axis=axis)
    out_val = val if keepdims else np.squeeze(val, axis=axis)
    out = Tensor(out_val, _parents=(a,))

    def _bwd(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        buf = np.zeros_like(data)
        np.put_along_axis(buf, am, g, axis=axis)
        a._accumulate(buf)

    out._bwd = _bwd
    return out


def loo_max(a):
    """Leave-one-out max over axis ``-2``: ``out[..., i, :] = max_{j != i} a[..., j, :]``.

    A singleton axis (one node) yields zeros, the convention for a node with
    no neighbours. Gradients route to the max provider, with a deterministic
    tie rule (stable argsort).
    """
    data = as_array(a)
    k = data.shape[-2]
    if k == 1:
        if not isinstance(a, Tensor):
            return np.zeros_like(data)
        out = Tensor(np.zeros_like(data), _parents=(a,))
        out._bwd = lambda g: None
        return out

    order = np.argsort(data, axis=-2, kind="stable")
    top1 = order[..., -1:, :]
    top2 = order[..., -2:-1, :]
    m1 = np.take_along_axis(data, top1, axis=-2)
    m2 = np.take_along_axis(data, top2, axis=-2)
    idx_col = np.arange(k).reshape((-1, 1))
    while idx_col.ndim < data.ndim:
        idx_col = idx_col[np.newaxis, ...]
    at_max = idx_col == top1
    value = np.where(at_max, m2, m1)
    if not isinstance(a, Tensor):
        return value

    out = Tensor(value, _parents=(a,))
    receiver = np.where(at_max, top2, top1)
    receiver = np.broadcast_to(receiver, data.shape)

    def _bwd(g):
        buf = np.zeros_like(data)
        lead = np.indices(data.shape, sparse=False)
        idx = tuple(lead[d] for d in range(data.ndim - 2)) + (receiver, lead[-1])
        np.add.at(buf, idx, g)
        a._accumulate(buf)

    out._bwd = _bwd
    return out


# ---------------------------------------------------------------------------
# categorical helpers
# ---------------------------------------------------------------------------

def log_softmax(a, axis=-1):
    shift = as_array(a).max(axis=axis, keepdims=True)
    z = sub(a, shift)
    lse = log(tensor_sum(exp(z), axis=axis, keepdims=True))
    return sub(z, lse)


def softmax(a, axis=-1):
    return exp(log_softmax(a, axis=axis))


def categorical_entropy(logits, axis=-1):
    """Entropy of softmax(logits) along ``axis``."""
    ls = log_softmax(logits, axis=axis)
    p = exp(ls)
    return neg(tensor_sum(mul(p, ls), axis=axis))


# ---------------------------------------------------------------------------
# gradient checking
# ---------------------------------------------------------------------------

def finite_difference_gradients(loss_fn, params: dict, step: float = 1e-6) -> dict:
    """Central-difference gradients of ``loss_fn()`` w.r.t. every param entry.

    ``loss_fn`` must recompute the loss from the current contents of the
    parameter tensors; entries are perturbed in place and restored.
    """
    grads = {}
    for name, p in params.items():
        flat = p.data.reshape(-1)
        fd = np.zeros_like(flat)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            hi = float(as_array(loss_fn()))
            flat[i] = orig - step
            lo = float(as_array(loss_fn()))
            flat[i] = orig
            fd[i] = (hi - lo) / (2.0 * step)
        grads[name] = fd.reshape(p.data.shape)
    return grads


def max_relative_error(analytic: dict, numeric: dict, floor: float = 1e-6) -> float:
    """Worst relative disagreement over all parameter entries."""
    worst = 0.0
    for name in analytic:
        a = np.asarray(analytic[name], dtype=np.float64)
        n = np.asarray(numeric[name], dtype=np.float64)
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst


def check_gradients(loss_fn, params: dict, step: float = 1e-6, tol: float = 1e-4) -> float:
    """Compare reverse-mode gradients with central differences.

    Returns the max relative error; raises ``NumericError`` when above tol.
    """
    for p in params.values():
        p.grad = None
    loss = loss_fn()
    if not isinstance(loss, Tensor):
        raise UnsupportedOpError("loss_fn must return a Tensor for the analytic pass")
    loss.backward()
    analytic = {k: (p.grad if p.grad is not None else np.zeros_like(p.data)) for k, p in params.items()}
    for p in params.values():
        p.grad = None
    numeric = finite_difference_gradients(loss_fn, params, step=step)
    err = max_relative_error(analytic, numeric)
    if err > tol:
        raise NumericError(f"gradient check failed: max relative error {err:.3e} > {tol:.1e}")
    return err
