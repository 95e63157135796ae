"""Minimal reverse-mode array kernel.

Every equation of the interpreter, the circuits and the controllers is built
from the primitives in this module. Each primitive records a closure that maps
the output adjoint to the adjoints of its inputs; ``Tensor.backward`` replays
them in reverse topological order.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "ShapeError",
    "DomainError",
    "GradientError",
    "ParameterMask",
    "TrainConfig",
    "tensor",
    "contract",
    "mix",
    "softmax",
    "log_softmax",
    "exp",
    "log",
    "tanh",
    "relu",
    "sigmoid",
    "concat",
    "stack",
    "take",
    "masked_sgd_step",
    "SGD",
    "Adam",
    "grad_check",
    "graph_stats",
    "set_default_dtype",
    "get_default_dtype",
]

_DTYPE = np.float64
CHECK_DOMAINS = True


class ShapeError(ValueError):
    """Operand dimensions do not agree."""


class DomainError(ValueError):
    """An argument lies outside the domain of an operation."""


class GradientError(RuntimeError):
    """Gradient bookkeeping was used incorrectly, or a check hit a non-finite value."""


def set_default_dtype(dtype) -> None:
    """Switch the dtype used for new tensors (float64 for checks, float32 for speed)."""
    global _DTYPE
    dtype = np.dtype(dtype)
    if dtype not in (np.float32, np.float64):
        raise ValueError(f"unsupported dtype {dtype}")
    _DTYPE = dtype.type


def get_default_dtype():
    return _DTYPE


BackwardFn = Callable[[np.ndarray], Sequence["np.ndarray | None"]]


class Tensor:
    """Dense array with optional gradient tracking."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "op")

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        _parents: tuple["Tensor", ...] = (),
        _backward: BackwardFn | None = None,
        op: str = "",
    ):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data)
        if arr.dtype != _DTYPE:
            arr = arr.astype(_DTYPE)
        self.data: np.ndarray = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._parents = _parents
        self._backward = _backward
        self.op = op

    # -- basic properties -------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __len__(self) -> int:
        return len(self.data)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag}, op={self.op or 'leaf'})"

    # -- autograd -----------------------------------------------------------
    def zero_grad(self) -> None:
        self.grad = None

    def backward(self, grad: np.ndarray | float | None = None) -> None:
        """Accumulate d(self)/d(leaf) into ``leaf.grad`` for every tracked leaf."""
        if not self.requires_grad:
            raise GradientError("backward() on a tensor that does not require grad")
        if grad is None:
            if self.data.size != 1:
                raise GradientError("backward() without an explicit seed needs a scalar output")
            grad = np.ones_like(self.data)
        grad = np.broadcast_to(np.asarray(grad, dtype=self.data.dtype), self.shape)

        order = _topological_order(self)
        adj: dict[int, np.ndarray] = {id(self): np.array(grad, copy=True)}
        for node in reversed(order):
            g = adj.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in adj:
                    adj[key] = adj[key] + pg
                else:
                    adj[key] = pg

    # -- operator sugar -------------------------------------------------------
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
        return mul(self, -1.0)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        count = self.data.size if axis is None else np.prod([self.shape[a] for a in np.atleast_1d(axis)])
        return tsum(self, axis=axis, keepdims=keepdims) * (1.0 / float(count))

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes) -> "Tensor":
        return transpose(self, axes or None)


def tensor(data, requires_grad: bool = False) -> Tensor:
    return Tensor(data, requires_grad=requires_grad)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _topological_order(root: Tensor) -> list[Tensor]:
    # iterative DFS: interpreter and circuit graphs are far deeper than the recursion limit
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def graph_stats(root: Tensor) -> tuple[int, int]:
    """Return (node count, nodes on the longest leaf-to-root path) of the graph under ``root``."""
    order = _topological_order(root)
    depth: dict[int, int] = {}
    for node in order:
        parents = [p for p in node._parents if p.requires_grad]
        depth[id(node)] = 1 + max((depth[id(p)] for p in parents), default=0)
    return len(order), depth[id(root)]


def _make(data: np.ndarray, parents: tuple[Tensor, ...], backward: BackwardFn, op: str) -> Tensor:
    if any(p.requires_grad for p in parents):
        return Tensor(data, True, parents, backward, op)
    return Tensor(data, op=op)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# -- elementwise ---------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    return _make(
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
        "add",
    )


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    return _make(
        a.data - b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
        "sub",
    )


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    return _make(
        a.data * b.data,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
        "mul",
    )


def div(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = a.data / b.data
    return _make(
        out,
        (a, b),
        lambda g: (_unbroadcast(g / b.data, a.shape), _unbroadcast(-g * out / b.data, b.shape)),
        "div",
    )


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)
    return _make(out, (x,), lambda g: (g * out,), "exp")


def log(x: Tensor) -> Tensor:
    return _make(np.log(x.data), (x,), lambda g: (g / x.data,), "log")


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)
    return _make(out, (x,), lambda g: (g * (1.0 - out * out),), "tanh")


def relu(x: Tensor) -> Tensor:
    pos = x.data > 0
    return _make(np.where(pos, x.data, 0.0), (x,), lambda g: (g * pos,), "relu")


def sigmoid(x: Tensor) -> Tensor:
    out = 0.5 * (1.0 + np.tanh(0.5 * x.data))
    return _make(out, (x,), lambda g: (g * out * (1.0 - out),), "sigmoid")


# -- shape manipulation ----------------------------------------------------------

def tsum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape),)

    return _make(np.asarray(out), (x,), backward, "sum")


def reshape(x: Tensor, shape) -> Tensor:
    return _make(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),), "reshape")


def transpose(x: Tensor, axes=None) -> Tensor:
    out = np.transpose(x.data, axes)
    inv = None if axes is None else np.argsort(axes)
    return _make(out, (x,), lambda g: (np.transpose(g, inv),), "transpose")


def getitem(x: Tensor, idx) -> Tensor:
    out = x.data[idx]

    def backward(g):
        full = np.zeros_like(x.data)
        np.add.at(full, idx, g)
        return (full,)

    return _make(np.array(out, copy=True), (x,), backward, "getitem")


def take(table: Tensor, indices) -> Tensor:
    """Row gather ``table[indices]`` (embedding lookup)."""
    indices = np.asarray(indices, dtype=np.intp)
    return getitem(table, indices)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _make(out, tuple(tensors), backward, "concat")


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    out = np.stack([t.data for t in tensors], axis=axis)

    def backward(g):
        return tuple(np.moveaxis(g, axis, 0))

    return _make(out, tuple(tensors), backward, "stack")


# -- the workhorse primitives ----------------------------------------------------

def _parse_subscripts(subscripts: str, n_ops: int) -> tuple[list[str], str]:
    if "..." in subscripts:
        raise ValueError("ellipsis subscripts are not supported")
    subscripts = subscripts.replace(" ", "")
    if "->" not in subscripts:
        raise ValueError("contract needs an explicit output, e.g. 'ij,j->i'")
    lhs, out = subscripts.split("->")
    ins = lhs.split(",")
    if len(ins) != n_ops:
        raise ShapeError(f"subscripts name {len(ins)} operands but {n_ops} were given")
    for s in ins:
        if len(set(s)) != len(s):
            raise ValueError(f"repeated index within one operand ({s!r}) is not supported")
    return ins, out


def contract(subscripts: str, *operands) -> Tensor:
    """Generalized tensor contraction (sum of products over paired axes).

    ``subscripts`` is an einsum-style pairing descriptor with explicit output,
    e.g. ``"i,ij->j"`` for a Dirac row selection or ``"fijk,bf,bi,bj->bk"``
    for the four-way ALU lookup.
    """
    ops = [_as_tensor(o) for o in operands]
    ins, out_sub = _parse_subscripts(subscripts, len(ops))
    sizes: dict[str, int] = {}
    for k, (sub_k, op) in enumerate(zip(ins, ops)):
        if len(sub_k) != op.ndim:
            raise ShapeError(
                f"operand {k} has {op.ndim} axes but subscripts {sub_k!r} name {len(sub_k)}"
            )
        for ax, (ch, dim) in enumerate(zip(sub_k, op.shape)):
            if ch in sizes and sizes[ch] != dim:
                raise ShapeError(
                    f"index {ch!r} has size {sizes[ch]} elsewhere but operand {k} axis {ax} has size {dim}"
                )
            sizes.setdefault(ch, dim)
    for ch in out_sub:
        if ch not in sizes:
            raise ShapeError(f"output index {ch!r} does not appear in any operand")

    out = np.einsum(subscripts, *[o.data for o in ops], optimize=len(ops) > 2)

    def backward(g):
        grads = []
        for k, op in enumerate(ops):
            if not op.requires_grad:
                grads.append(None)
                continue
            others = [ins[i] for i in range(len(ops)) if i != k] + [out_sub]
            arrays = [ops[i].data for i in range(len(ops)) if i != k] + [g]
            present = set("".join(others))
            lonely = "".join(ch for ch in ins[k] if ch not in present)
            if lonely:
                others.append(lonely)
                arrays.append(np.ones([sizes[ch] for ch in lonely], dtype=g.dtype))
            spec = ",".join(others) + "->" + ins[k]
            grads.append(np.einsum(spec, *arrays, optimize=len(arrays) > 2))
        return grads

    return _make(np.asarray(out), tuple(ops), backward, "contract")


def mix(p, a, b) -> Tensor:
    """Convex combination ``(1 - p) * a + p * b``.

    ``p`` may be a scalar or carry leading (batch) axes, in which case it is
    broadcast against the trailing axes of ``a`` and ``b``.
    """
    p, a, b = _as_tensor(p), _as_tensor(a), _as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"mix operands differ in shape: {a.shape} vs {b.shape}")
    if CHECK_DOMAINS and p.size and (p.data.min() < -1e-12 or p.data.max() > 1 + 1e-12):
        raise DomainError(f"mix weight outside [0, 1]: [{p.data.min()}, {p.data.max()}]")
    pd = p.data.reshape(p.shape + (1,) * (a.ndim - p.ndim))
    out = a.data + pd * (b.data - a.data)

    def backward(g):
        gp = (g * (b.data - a.data)).reshape(p.shape + (-1,)).sum(axis=-1) if p.ndim < a.ndim else g * (b.data - a.data)
        ga = _unbroadcast(g * (1.0 - pd), a.shape)
        gb = _unbroadcast(g * pd, b.shape)
        return (gp.reshape(p.shape), ga, gb)

    return _make(out, (p, a, b), backward, "mix")


def softmax(logits, axis: int = -1) -> Tensor:
    x = _as_tensor(logits)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _make(out, (x,), backward, "softmax")


def log_softmax(logits, axis: int = -1) -> Tensor:
    x = _as_tensor(logits)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - lse
    probs = np.exp(out)

    def backward(g):
        return (g - probs * g.sum(axis=axis, keepdims=True),)

    return _make(out, (x,), backward, "log_softmax")


# -- parameter updates --------------------------------------------------------------

@dataclass(frozen=True)
class ParameterMask:
    """Elementwise update mask: 1 = trainable, 0 = frozen."""

    mask: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.mask)
        if not np.all((m == 0) | (m == 1)):
            raise ValueError("parameter mask entries must be exactly 0 or 1")
        object.__setattr__(self, "mask", m.astype(np.float64))

    @classmethod
    def ones(cls, shape) -> "ParameterMask":
        return cls(np.ones(shape))

    @classmethod
    def zeros(cls, shape) -> "ParameterMask":
        return cls(np.zeros(shape))

    @property
    def shape(self) -> tuple[int, ...]:
        return self.mask.shape


@dataclass
class TrainConfig:
    learning_rate: float = 0.05
    max_epochs: int = 100
    seed: int = 0
    batch_size: int = 32
    optimizer: str = "adam"
    momentum: float = 0.0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.max_epochs < 1 or self.batch_size < 1:
            raise ValueError("max_epochs and batch_size must be positive")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


def _check_mask(theta: Tensor, mask: ParameterMask | None) -> np.ndarray | None:
    if mask is None:
        return None
    if mask.shape != theta.shape:
        raise ShapeError(f"mask shape {mask.shape} does not match parameter shape {theta.shape}")
    return mask.mask.astype(bool)


def masked_sgd_step(theta: Tensor, mask: ParameterMask, eta: float) -> Tensor:
    """One descent step ``theta - eta * grad`` restricted to unmasked entries.

    Frozen entries are copied through untouched, so they stay bit-identical
    even when the gradient there is non-finite.
    """
    if theta.grad is None:
        raise GradientError("masked_sgd_step needs a populated gradient; call backward() first")
    keep = _check_mask(theta, mask)
    theta.data = np.where(keep, theta.data - eta * theta.grad, theta.data)
    return theta


class SGD:
    """Masked SGD with optional heavy-ball momentum."""

    def __init__(self, params: Iterable[Tensor], lr: float, momentum: float = 0.0,
                 masks: Sequence[ParameterMask | None] | None = None):
        self.params = list(params)
        self.lr = lr
        self.momentum = momentum
        self.masks = list(masks) if masks is not None else [None] * len(self.params)
        self._velocity = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        for p, m, vel in zip(self.params, self.masks, self._velocity):
            if p.grad is None:
                continue
            keep = _check_mask(p, m)
            vel *= self.momentum
            vel += p.grad
            new = p.data - self.lr * vel
            p.data = new if keep is None else np.where(keep, new, p.data)


class Adam:
    """Masked Adam; frozen entries never move."""

    def __init__(self, params: Iterable[Tensor], lr: float, betas=(0.9, 0.999), eps: float = 1e-8,
                 masks: Sequence[ParameterMask | None] | None = None):
        self.params = list(params)
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.masks = list(masks) if masks is not None else [None] * len(self.params)
        self._m = [np.zeros_like(p.data) for p in self.params]
        self._v = [np.zeros_like(p.data) for p in self.params]
        self.t = 0

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for p, m, mom, var in zip(self.params, self.masks, self._m, self._v):
            if p.grad is None:
                continue
            keep = _check_mask(p, m)
            mom *= self.b1
            mom += (1.0 - self.b1) * p.grad
            var *= self.b2
            var += (1.0 - self.b2) * p.grad * p.grad
            new = p.data - self.lr * (mom / c1) / (np.sqrt(var / c2) + self.eps)
            p.data = new if keep is None else np.where(keep, new, p.data)


def make_optimizer(config: TrainConfig, params, masks=None):
    if config.optimizer == "adam":
        return Adam(params, config.learning_rate, masks=masks)
    return SGD(params, config.learning_rate, momentum=config.momentum, masks=masks)


# -- validation -----------------------------------------------------------------------

def grad_check(f: Callable[[Tensor], Tensor], x, epsilon: float = 1e-6) -> float:
    """Max over coordinates of |analytic - central difference| / max(1, |analytic|)."""
    x0 = np.array(_as_tensor(x).data, dtype=np.float64, copy=True)
    probe = Tensor(x0.copy(), requires_grad=True)
    out = f(probe)
    if out.size != 1:
        raise GradientError("grad_check needs a scalar-valued function")
    if not np.all(np.isfinite(out.data)):
        raise GradientError(f"function value is not finite: {out.data}")
    out.backward()
    analytic = probe.grad if probe.grad is not None else np.zeros_like(x0)

    numeric = np.zeros_like(x0)
    flat = numeric.reshape(-1)
    for i in range(x0.size):
        xp = x0.copy().reshape(-1)
        xm = x0.copy().reshape(-1)
        xp[i] += epsilon
        xm[i] -= epsilon
        fp = f(Tensor(xp.reshape(x0.shape))).data
        fm = f(Tensor(xm.reshape(x0.shape))).data
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise GradientError(f"non-finite function value while perturbing coordinate {i}")
        flat[i] = (float(fp) - float(fm)) / (2.0 * epsilon)
    err = np.abs(analytic - numeric) / np.maximum(1.0, np.abs(analytic))
    return float(err.max()) if err.size else 0.0
