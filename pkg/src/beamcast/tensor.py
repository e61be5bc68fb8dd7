"""Dense float64 tensors with tape-based reverse-mode autodiff.

Every operator records a closure that propagates gradients to its inputs;
``Tensor.backward()`` walks the tape in reverse topological order. Arrays are
always float64 and row-major. Ops work on whole tensors (not scalars) so the
transformer forward stays a short tape. Finiteness is validated when tensors
are built from external data; internal op outputs skip the check for speed.
"""

import math

import numpy as np

from .errors import ShapeError

GELU_TANH_COEFF = 0.044715  # cubic coefficient of the tanh approximation

_grad_enabled = True


class no_grad:
    """Context manager that disables tape recording inside its block."""

    def __enter__(self):
        global _grad_enabled
        self._saved = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._saved
        return False


def _unbroadcast(grad, shape):
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
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
    """A float64 array plus an optional gradient buffer and tape hooks."""

    def __init__(self, data, requires_grad=False):
        arr = np.asarray(data, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise ValueError("tensor values must be finite (no NaN/Inf)")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._grad_owned = False
        self._backward = None
        self._prev = ()

    @classmethod
    def _wrap(cls, data, parents):
        """Internal fast constructor for op outputs (skips finite check)."""
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        out._grad_owned = False
        out._backward = None
        if _grad_enabled:
            parents = tuple(p for p in parents if p.requires_grad)
            out.requires_grad = bool(parents)
            out._prev = parents
        else:
            out.requires_grad = False
            out._prev = ()
        return out

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self):
        return float(self.data)

    def __float__(self):
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def _accum(self, g, fresh=False):
        """Accumulate a gradient contribution.

        `fresh` marks arrays the caller just allocated; those can be taken
        by reference and mutated in place. Borrowed arrays (views of a
        downstream node's grad) are never written to, so a second
        contribution switches to an out-of-place add.
        """
        if self.grad is None:
            self.grad = g
            self._grad_owned = fresh
        elif self._grad_owned:
            self.grad += g
        else:
            self.grad = self.grad + g
            self._grad_owned = True

    def zero_grad(self):
        self.grad = None
        self._grad_owned = False

    def backward(self):
        """Reverse-mode pass from a scalar output.

        Populates ``grad`` on every tensor with ``requires_grad`` reachable
        from this one. Raises if called on a non-scalar.
        """
        if self.data.size != 1:
            raise ShapeError(
                f"backward() requires a scalar, got shape {self.data.shape}"
            )
        # Iterative topological sort; training graphs for the recurrent
        # baselines are deep enough to overflow Python's recursion limit.
        topo = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for child in node._prev:
                if id(child) not in visited:
                    stack.append((child, False))
        self.grad = np.ones_like(self.data)
        self._grad_owned = True
        for node in reversed(topo):
            fn = node._backward
            if fn is not None:
                fn(node.grad)
                # the tape is single-use: release the closure (and the
                # forward intermediates it captured) plus this node's grad
                node._backward = None
                node.grad = None
                node._grad_owned = False

    # -- operator sugar -------------------------------------------------

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

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return take(self, key)

    def reshape(self, *shape):
        return reshape(self, shape)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean_(self, axis=axis, keepdims=keepdims)

    def transpose(self, axes=None):
        return transpose(self, axes)


def as_tensor(x):
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=np.float64))


def _accum_unb(t, g, fresh):
    """Unbroadcast-and-accumulate; a reduced array is always freshly owned."""
    gu = _unbroadcast(g, t.data.shape)
    t._accum(gu, fresh or gu is not g)


def _binop(a, b, fwd, bwd_a, bwd_b, fresh_a, fresh_b):
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor._wrap(fwd(a.data, b.data), (a, b))
    if out.requires_grad:

        def _backward(g):
            if a.requires_grad:
                _accum_unb(a, bwd_a(g, a.data, b.data), fresh_a)
            if b.requires_grad:
                _accum_unb(b, bwd_b(g, a.data, b.data), fresh_b)

        out._backward = _backward
    return out


def add(a, b):
    return _binop(a, b, lambda x, y: x + y,
                  lambda g, x, y: g, lambda g, x, y: g, False, False)


def sub(a, b):
    return _binop(a, b, lambda x, y: x - y,
                  lambda g, x, y: g, lambda g, x, y: -g, False, True)


def mul(a, b):
    return _binop(a, b, lambda x, y: x * y,
                  lambda g, x, y: g * y, lambda g, x, y: g * x, True, True)


def div(a, b):
    return _binop(
        a,
        b,
        lambda x, y: x / y,
        lambda g, x, y: g / y,
        lambda g, x, y: -g * x / (y * y),
        True,
        True,
    )


def matmul(a, b):
    """Matrix product with batched leading dimensions (numpy semantics).

    Backward: dA = dC @ B^T, dB = A^T @ dC, summed over broadcast batch dims.
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ShapeError("matmul operands must be at least 2-D")
    if a.data.shape[-1] != b.data.shape[-2]:
        raise ShapeError(
            f"matmul inner dims differ: {a.data.shape} @ {b.data.shape}"
        )
    out = Tensor._wrap(np.matmul(a.data, b.data), (a, b))
    if out.requires_grad:

        def _backward(g):
            if a.requires_grad:
                _accum_unb(a, np.matmul(g, np.swapaxes(b.data, -1, -2)), True)
            if b.requires_grad:
                _accum_unb(b, np.matmul(np.swapaxes(a.data, -1, -2), g), True)

        out._backward = _backward
    return out


def transpose(x, axes=None):
    x = as_tensor(x)
    out = Tensor._wrap(np.transpose(x.data, axes), (x,))
    if out.requires_grad:
        inv = None if axes is None else np.argsort(axes)

        def _backward(g):
            x._accum(np.transpose(g, inv), fresh=False)

        out._backward = _backward
    return out


def swap_last(x):
    """Swap the last two axes (batched matrix transpose)."""
    x = as_tensor(x)
    axes = list(range(x.data.ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return transpose(x, tuple(axes))


def reshape(x, shape):
    x = as_tensor(x)
    out = Tensor._wrap(np.reshape(x.data, shape), (x,))
    if out.requires_grad:

        def _backward(g):
            gr = g.reshape(x.data.shape)
            x._accum(gr, fresh=gr is not g and gr.base is None)

        out._backward = _backward
    return out


def take(x, key):
    """Basic indexing (ints/slices) only; use gather_last for fancy gathers.

    Basic index regions never overlap, so the backward pass can write the
    gradient into a zero buffer with a plain in-place add.
    """
    x = as_tensor(x)
    out = Tensor._wrap(x.data[key], (x,))
    if out.requires_grad:

        def _backward(g):
            gx = np.zeros_like(x.data)
            gx[key] += g
            x._accum(gx, fresh=True)

        out._backward = _backward
    return out


def gather_last(x, idx):
    """Gather along the last axis: out[..., p, l] = x[..., idx[p, l]].

    `idx` is a constant int array; backward scatter-adds (duplicated indices
    accumulate, which is what replication padding needs).
    """
    x = as_tensor(x)
    idx = np.asarray(idx)
    out = Tensor._wrap(x.data[..., idx], (x,))
    if out.requires_grad:

        def _backward(g):
            gx = np.zeros_like(x.data)
            flat = idx.ravel()
            g = g.reshape(x.data.shape[:-1] + (flat.size,))
            np.add.at(gx, (..., flat), g)
            x._accum(gx, fresh=True)

        out._backward = _backward
    return out


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    out = Tensor._wrap(np.concatenate([t.data for t in tensors], axis=axis), tensors)
    if out.requires_grad:
        sizes = [t.data.shape[axis] for t in tensors]
        offsets = np.cumsum([0] + sizes)

        def _backward(g):
            for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
                if t.requires_grad:
                    sl = [slice(None)] * g.ndim
                    sl[axis] = slice(lo, hi)
                    t._accum(g[tuple(sl)], fresh=False)

        out._backward = _backward
    return out


def sum_(x, axis=None, keepdims=False):
    x = as_tensor(x)
    out = Tensor._wrap(np.sum(x.data, axis=axis, keepdims=keepdims), (x,))
    if out.requires_grad:

        def _backward(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            x._accum(np.broadcast_to(g, x.data.shape), fresh=False)

        out._backward = _backward
    return out


def mean_(x, axis=None, keepdims=False):
    x = as_tensor(x)
    n = x.data.size if axis is None else np.prod(
        [x.data.shape[a] for a in np.atleast_1d(axis)]
    )
    return mul(sum_(x, axis=axis, keepdims=keepdims), 1.0 / float(n))


def _elementwise(x, fwd, dfwd):
    """dfwd(out_data, x_data) -> local derivative, multiplied by the incoming grad."""
    x = as_tensor(x)
    out = Tensor._wrap(fwd(x.data), (x,))
    if out.requires_grad:

        def _backward(g):
            x._accum(g * dfwd(out.data, x.data), fresh=True)

        out._backward = _backward
    return out


def relu(x):
    return _elementwise(x, lambda v: np.maximum(v, 0.0), lambda o, v: (v > 0).astype(np.float64))


def tanh_(x):
    return _elementwise(x, np.tanh, lambda o, v: 1.0 - o * o)


def sigmoid(x):
    return _elementwise(
        x, lambda v: 1.0 / (1.0 + np.exp(-v)), lambda o, v: o * (1.0 - o)
    )


def exp_(x):
    return _elementwise(x, np.exp, lambda o, v: o)


def log_(x):
    return _elementwise(x, np.log, lambda o, v: 1.0 / v)


def sqrt_(x):
    return _elementwise(x, np.sqrt, lambda o, v: 0.5 / o)


def gelu(x):
    """Gaussian error linear unit, tanh approximation."""
    x = as_tensor(x)
    c = math.sqrt(2.0 / math.pi)
    v = x.data
    sq = v * v
    t = np.tanh(c * (v + GELU_TANH_COEFF * (sq * v)))
    out = Tensor._wrap(0.5 * v * (1.0 + t), (x,))
    if out.requires_grad:

        def _backward(g):
            du = c * (1.0 + (3.0 * GELU_TANH_COEFF) * sq)
            local = 0.5 * (1.0 + t) + (0.5 * v) * ((1.0 - t * t) * du)
            x._accum(g * local, fresh=True)

        out._backward = _backward
    return out


def softmax(x, axis=-1):
    """Max-subtracted exponent normalization along `axis`."""
    x = as_tensor(x)
    z = x.data - np.max(x.data, axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / np.sum(e, axis=axis, keepdims=True)
    out = Tensor._wrap(y, (x,))
    if out.requires_grad:

        def _backward(g):
            dot = np.sum(g * y, axis=axis, keepdims=True)
            x._accum(y * (g - dot), fresh=True)

        out._backward = _backward
    return out


def layer_norm(x, gain, bias, eps=1e-5):
    """Normalize the last axis to mean 0 / variance 1, then apply affine."""
    x, gain, bias = as_tensor(x), as_tensor(gain), as_tensor(bias)
    mu = np.mean(x.data, axis=-1, keepdims=True)
    xc = x.data - mu
    var = np.mean(xc * xc, axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = Tensor._wrap(xhat * gain.data + bias.data, (x, gain, bias))
    if out.requires_grad:

        def _backward(g):
            if gain.requires_grad:
                _accum_unb(gain, g * xhat, True)
            if bias.requires_grad:
                _accum_unb(bias, g, False)
            if x.requires_grad:
                gh = g * gain.data
                m1 = np.mean(gh, axis=-1, keepdims=True)
                m2 = np.mean(gh * xhat, axis=-1, keepdims=True)
                x._accum(inv * (gh - m1 - xhat * m2), fresh=True)

        out._backward = _backward
    return out


def standardize(x, eps=1e-5):
    """Normalize the last axis; returns (normalized, mean, std) for inversion.

    std = sqrt(population_variance + eps); gradient flows through the
    statistics exactly as in layer_norm without the affine stage.
    """
    x = as_tensor(x)
    mu = np.mean(x.data, axis=-1, keepdims=True)
    var = np.var(x.data, axis=-1, keepdims=True)
    std = np.sqrt(var + eps)
    inv = 1.0 / std
    xhat = (x.data - mu) * inv
    out = Tensor._wrap(xhat, (x,))
    if out.requires_grad:

        def _backward(g):
            m1 = np.mean(g, axis=-1, keepdims=True)
            m2 = np.mean(g * xhat, axis=-1, keepdims=True)
            x._accum(inv * (g - m1 - xhat * m2), fresh=True)

        out._backward = _backward
    return out, mu, std


def _log_softmax_data(logits):
    z = logits - np.max(logits, axis=-1, keepdims=True)
    return z - np.log(np.sum(np.exp(z), axis=-1, keepdims=True))


def cross_entropy(logits, target_class):
    """Negative natural-log softmax probability of `target_class`.

    `logits` is a length-M vector; gradient is softmax(logits) - onehot.
    """
    logits = as_tensor(logits)
    if logits.data.ndim != 1:
        raise ShapeError(f"cross_entropy expects a 1-D logit vector, got {logits.data.shape}")
    m = logits.data.shape[0]
    target_class = int(target_class)
    if not 0 <= target_class < m:
        raise IndexError(f"target class {target_class} out of range [0, {m})")
    logp = _log_softmax_data(logits.data)
    out = Tensor._wrap(np.asarray(-logp[target_class]), (logits,))
    if out.requires_grad:

        def _backward(gout):
            g = np.exp(logp)
            g[target_class] -= 1.0
            logits._accum(g * gout, fresh=True)

        out._backward = _backward
    return out


def sequence_cross_entropy(logits, targets):
    """Mean over samples of the summed per-step cross-entropy.

    `logits` has shape [n, T, M] (or [T, M] for a single sample) and
    `targets` matching integer shape [n, T] ([T]). The scalar equals
    (1/n) * sum_s sum_t CE(logits[s, t], targets[s, t]).
    """
    logits = as_tensor(logits)
    arr = logits.data
    tgt = np.asarray(targets, dtype=np.int64)
    if arr.ndim == 2:
        arr = arr[None]
        tgt = tgt[None]
    if arr.ndim != 3 or tgt.shape != arr.shape[:2]:
        raise ShapeError(
            f"sequence_cross_entropy shapes mismatch: {logits.data.shape} vs targets {tgt.shape}"
        )
    m = arr.shape[-1]
    if tgt.min() < 0 or tgt.max() >= m:
        raise IndexError(f"target classes must lie in [0, {m})")
    n = arr.shape[0]
    logp = _log_softmax_data(arr)
    rows = np.arange(arr.shape[0])[:, None], np.arange(arr.shape[1])[None, :]
    value = -logp[rows[0], rows[1], tgt].sum() / n
    out = Tensor._wrap(np.asarray(value), (logits,))
    if out.requires_grad:

        def _backward(gout):
            g = np.exp(logp)
            g[rows[0], rows[1], tgt] -= 1.0
            g /= n
            g *= gout
            logits._accum(g.reshape(logits.data.shape), fresh=True)

        out._backward = _backward
    return out


class Parameter:
    """A named tensor with a trainability flag.

    ``trainable=False`` parameters never receive gradient buffers and are
    skipped by the optimizer, so their values stay bit-identical.
    """

    def __init__(self, name, data, trainable=True):
        self.name = name
        self.trainable = bool(trainable)
        self.tensor = Tensor(np.array(data, dtype=np.float64), requires_grad=self.trainable)

    @property
    def data(self):
        return self.tensor.data

    @property
    def grad(self):
        return self.tensor.grad

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.tensor.data.shape}, trainable={self.trainable})"


class ParamDict:
    """Ordered, name-unique parameter collection used by the models."""

    def __init__(self):
        self._params = {}

    def add(self, name, data, trainable=True):
        if name in self._params:
            raise ValueError(f"duplicate parameter name: {name}")
        p = Parameter(name, data, trainable=trainable)
        self._params[name] = p
        return p

    def merge(self, other, prefix=""):
        for p in other:
            name = prefix + p.name
            if name in self._params:
                raise ValueError(f"duplicate parameter name: {name}")
            self._params[name] = p
        return self

    def __iter__(self):
        return iter(self._params.values())

    def __getitem__(self, name):
        return self._params[name]

    def __contains__(self, name):
        return name in self._params

    def __len__(self):
        return len(self._params)

    def trainable(self):
        return [p for p in self if p.trainable]

    def zero_grad(self):
        for p in self:
            p.tensor.zero_grad()
