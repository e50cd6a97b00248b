"""Dense-array substrate: deterministic RNG, stable primitives, reverse-mode gradients.

All values are float64 numpy arrays internally.  ``Tensor`` wraps an ndarray
with a gradient tape; only the operations actually needed by the encoders,
decoder and losses are implemented.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

Array = np.ndarray


# ---------------------------------------------------------------------------
# RNG
# ---------------------------------------------------------------------------


class Rng:
    """Counter-based deterministic RNG (Philox). Identical seed, identical draws.

    Single-owner: never share one instance across threads.
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self._gen = np.random.Generator(np.random.Philox(self.seed))

    def normal(self, shape) -> Array:
        return rng_normal(self, shape)

    def integers(self, low: int, high: int, size=None):
        return self._gen.integers(low, high, size=size)

    def permutation(self, n: int) -> Array:
        return self._gen.permutation(n)

    def choice(self, n: int, size: int, replace: bool = False) -> Array:
        return self._gen.choice(n, size=size, replace=replace)

    def uniform(self, size=None) -> Array:
        return self._gen.random(size)

    def spawn(self, key: int) -> "Rng":
        """Derive an independent stream; deterministic in (seed, key)."""
        return Rng((self.seed * 0x9E3779B97F4A7C15 + key + 1) & 0xFFFFFFFFFFFFFFFF)


def rng_normal(rng: Rng, shape) -> Array:
    """I.i.d. standard-normal draws of the given shape; advances rng state."""
    shape = tuple(int(s) for s in (shape if hasattr(shape, "__len__") else (shape,)))
    if len(shape) == 0 or any(s <= 0 for s in shape):
        raise ValueError(f"rng_normal requires a non-empty positive shape, got {shape}")
    return rng._gen.standard_normal(shape, dtype=np.float64)


# ---------------------------------------------------------------------------
# Stable primitives
# ---------------------------------------------------------------------------


def stable_log_softmax(logits: Array) -> Array:
    """Log-probabilities of a 1-D logit vector, safe against overflow."""
    x = np.asarray(logits, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError(f"stable_log_softmax expects a 1-D array, got shape {x.shape}")
    if np.isnan(x).any():
        raise ValueError("stable_log_softmax: NaN in input")
    m = np.max(x)
    shifted = x - m
    return shifted - np.log(np.sum(np.exp(shifted)))


def _log_softmax_nd(x: Array) -> Array:
    m = np.max(x, axis=-1, keepdims=True)
    shifted = x - m
    return shifted - np.log(np.sum(np.exp(shifted), axis=-1, keepdims=True))


# ---------------------------------------------------------------------------
# Reverse-mode tape
# ---------------------------------------------------------------------------


def _unbroadcast(grad: Array, shape: tuple) -> Array:
    """Sum grad down to `shape` (inverse of numpy broadcasting)."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and grad.shape[i] != 1:
            grad = grad.sum(axis=i, keepdims=True)
    return grad


class Tensor:
    """A float64 ndarray plus a reverse tape node."""

    __slots__ = ("value", "grad", "_parents", "requires_grad")

    def __init__(self, value, parents=(), requires_grad=False):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self._parents = parents  # tuple of (Tensor, vjp: grad -> parent grad)
        self.requires_grad = requires_grad or any(p.requires_grad for p, _ in parents)

    @property
    def shape(self):
        return self.value.shape

    # -- graph construction helpers --

    @staticmethod
    def _lift(x) -> "Tensor":
        return x if isinstance(x, Tensor) else Tensor(x)

    def __add__(self, other):
        other = Tensor._lift(other)
        return Tensor(
            self.value + other.value,
            parents=(
                (self, lambda g: _unbroadcast(g, self.value.shape)),
                (other, lambda g: _unbroadcast(g, other.value.shape)),
            ),
        )

    __radd__ = __add__

    def __neg__(self):
        return Tensor(-self.value, parents=((self, lambda g: -g),))

    def __sub__(self, other):
        return self + (-Tensor._lift(other))

    def __rsub__(self, other):
        return Tensor._lift(other) + (-self)

    def __mul__(self, other):
        other = Tensor._lift(other)
        return Tensor(
            self.value * other.value,
            parents=(
                (self, lambda g: _unbroadcast(g * other.value, self.value.shape)),
                (other, lambda g: _unbroadcast(g * self.value, other.value.shape)),
            ),
        )

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = Tensor._lift(other)
        return Tensor(
            self.value / other.value,
            parents=(
                (self, lambda g: _unbroadcast(g / other.value, self.value.shape)),
                (other, lambda g: _unbroadcast(-g * self.value / other.value**2, other.value.shape)),
            ),
        )

    def __matmul__(self, other):
        other = Tensor._lift(other)
        a, b = self.value, other.value
        out = a @ b
        a1, b1 = a.ndim == 1, b.ndim == 1
        if a1 and b1:
            return Tensor(out, parents=((self, lambda g: g * b), (other, lambda g: g * a)))

        def vjp_a(g):
            gg = g[..., None, :] if a1 else g
            gg = gg[..., :, None] if b1 else gg
            bb = b[:, None] if b1 else b
            ga = gg @ np.swapaxes(bb, -1, -2)
            if a1:
                ga = ga.reshape(ga.shape[:-2] + (ga.shape[-1],))
            return _unbroadcast(ga, a.shape)

        def vjp_b(g):
            gg = g[..., None, :] if a1 else g
            gg = gg[..., :, None] if b1 else gg
            aa = a[None, :] if a1 else a
            gb = np.swapaxes(aa, -1, -2) @ gg
            if b1:
                gb = gb.reshape(gb.shape[:-2] + (gb.shape[-2],))
                gb = _unbroadcast(gb, b.shape)
                return gb
            return _unbroadcast(gb, b.shape)

        return Tensor(out, parents=((self, vjp_a), (other, vjp_b)))

    def __getitem__(self, idx):
        out = self.value[idx]

        def vjp(g):
            full = np.zeros_like(self.value)
            np.add.at(full, idx, g)
            return full

        return Tensor(out, parents=((self, vjp),))

    def sum(self, axis=None, keepdims=False):
        out = self.value.sum(axis=axis, keepdims=keepdims)

        def vjp(g):
            g = np.asarray(g)
            if axis is None:
                return np.broadcast_to(g, self.value.shape).copy()
            if not keepdims:
                g = np.expand_dims(g, axis)
            return np.broadcast_to(g, self.value.shape).copy()

        return Tensor(out, parents=((self, vjp),))

    def mean(self, axis=None, keepdims=False):
        n = self.value.size if axis is None else self.value.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) / float(n)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        out = self.value.reshape(shape)
        return Tensor(out, parents=((self, lambda g: g.reshape(self.value.shape)),))

    def transpose(self, *axes):
        axes = axes or None
        out = self.value.transpose(axes) if axes else self.value.T
        if axes:
            inv = np.argsort(axes)
            return Tensor(out, parents=((self, lambda g: g.transpose(inv)),))
        return Tensor(out, parents=((self, lambda g: g.T),))

    @property
    def T(self):
        return self.transpose()

    def tanh(self):
        out = np.tanh(self.value)
        return Tensor(out, parents=((self, lambda g: g * (1.0 - out**2)),))

    def sigmoid(self):
        out = 1.0 / (1.0 + np.exp(-np.clip(self.value, -500, 500)))
        return Tensor(out, parents=((self, lambda g: g * out * (1.0 - out)),))

    def exp(self):
        out = np.exp(self.value)
        return Tensor(out, parents=((self, lambda g: g * out),))

    def log(self):
        return Tensor(np.log(self.value), parents=((self, lambda g: g / self.value),))

    def square(self):
        return self * self

    def item(self) -> float:
        return float(self.value)

    # -- backward --

    def backward(self, grad: Array | None = None):
        if grad is None:
            if self.value.shape != ():
                raise ValueError("backward without explicit grad requires a scalar")
            grad = np.array(1.0)
        # topological order
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent, _ in node._parents:
                if parent.requires_grad and id(parent) not in seen:
                    stack.append((parent, False))
        grads: dict[int, Array] = {id(self): np.asarray(grad, dtype=np.float64)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.requires_grad and not node._parents:
                node.grad = g if node.grad is None else node.grad + g
            for parent, vjp in node._parents:
                if not parent.requires_grad:
                    continue
                pg = vjp(g)
                if id(parent) in grads:
                    grads[id(parent)] = grads[id(parent)] + pg
                else:
                    grads[id(parent)] = pg
        # leaves the flow never reached still report a zero gradient
        for node in order:
            if node.requires_grad and not node._parents and node.grad is None:
                node.grad = np.zeros_like(node.value)


def leaf(value) -> Tensor:
    t = Tensor(value)
    t.requires_grad = True
    return t


def concat(tensors: list[Tensor], axis: int = 0) -> Tensor:
    vals = [t.value for t in tensors]
    out = np.concatenate(vals, axis=axis)
    sizes = [v.shape[axis] for v in vals]
    offsets = np.cumsum([0] + sizes)
    parents = []
    for i, t in enumerate(tensors):
        lo, hi = offsets[i], offsets[i + 1]

        def vjp(g, lo=lo, hi=hi):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(lo, hi)
            return g[tuple(sl)]

        parents.append((t, vjp))
    return Tensor(out, parents=tuple(parents))


def stack(tensors: list[Tensor], axis: int = 0) -> Tensor:
    out = np.stack([t.value for t in tensors], axis=axis)
    parents = []
    for i, t in enumerate(tensors):
        parents.append((t, lambda g, i=i: np.take(g, i, axis=axis)))
    return Tensor(out, parents=tuple(parents))


def take_rows(table: Tensor, ids: Array) -> Tensor:
    """Gather rows of a 2-D table by integer ids (embedding lookup)."""
    ids = np.asarray(ids)
    out = table.value[ids]

    def vjp(g):
        full = np.zeros_like(table.value)
        np.add.at(full, ids, g)
        return full

    return Tensor(out, parents=((table, vjp),))


def log_softmax(t: Tensor) -> Tensor:
    """Log-softmax over the last axis, numerically stable, differentiable."""
    if np.isnan(t.value).any():
        raise ValueError("log_softmax: NaN in input")
    out = _log_softmax_nd(t.value)
    softmax = np.exp(out)

    def vjp(g):
        return g - softmax * g.sum(axis=-1, keepdims=True)

    return Tensor(out, parents=((t, vjp),))


# ---------------------------------------------------------------------------
# Gradient checking
# ---------------------------------------------------------------------------


@dataclass
class GradCheckReport:
    passed: bool
    max_rel_error: float
    worst_param: str = ""
    worst_index: tuple = ()
    message: str = ""
    per_param: dict = field(default_factory=dict)


def grad_check(f, params: dict[str, Array], eps: float = 1e-5, tol: float = 1e-4) -> GradCheckReport:
    """Compare analytic gradients of a scalar function against central differences.

    ``f`` maps a dict of name -> Tensor leaves to a scalar Tensor.  Relative
    error per entry is |a - b| / max(1, |a|, |b|).
    """
    if not (0.0 < eps <= 1e-2):
        raise ValueError(f"eps must be in (0, 1e-2], got {eps}")
    leaves = {k: leaf(np.asarray(v, dtype=np.float64)) for k, v in params.items()}
    out = f(leaves)
    if not np.isfinite(out.value):
        return GradCheckReport(False, np.inf, message="non-finite value at base point")
    out.backward()
    analytic = {k: (t.grad if t.grad is not None else np.zeros_like(t.value)) for k, t in leaves.items()}

    max_err = 0.0
    worst = ("", ())
    per_param = {}
    for name, base in params.items():
        base = np.asarray(base, dtype=np.float64)
        fd = np.zeros_like(base)
        it = np.nditer(base, flags=["multi_index"])
        while not it.finished:
            idx = it.multi_index
            plus = {k: v.copy() for k, v in params.items()}
            minus = {k: v.copy() for k, v in params.items()}
            plus[name] = np.asarray(plus[name], dtype=np.float64)
            minus[name] = np.asarray(minus[name], dtype=np.float64)
            plus[name][idx] += eps
            minus[name][idx] -= eps
            fp = f({k: leaf(v) for k, v in plus.items()}).item()
            fm = f({k: leaf(v) for k, v in minus.items()}).item()
            if not (np.isfinite(fp) and np.isfinite(fm)):
                return GradCheckReport(
                    False, np.inf, worst_param=name, worst_index=idx,
                    message=f"non-finite value probing parameter '{name}' at {idx}",
                )
            fd[idx] = (fp - fm) / (2.0 * eps)
            it.iternext()
        a = analytic[name].reshape(base.shape)
        denom = np.maximum(1.0, np.maximum(np.abs(a), np.abs(fd)))
        err = np.abs(a - fd) / denom
        per_param[name] = float(err.max()) if err.size else 0.0
        if err.size and err.max() > max_err:
            max_err = float(err.max())
            worst = (name, np.unravel_index(int(err.argmax()), base.shape) if base.shape else ())
    passed = max_err <= tol
    msg = "" if passed else f"max relative error {max_err:.3e} at parameter '{worst[0]}' index {worst[1]}"
    return GradCheckReport(passed, max_err, worst[0], worst[1], msg, per_param)
