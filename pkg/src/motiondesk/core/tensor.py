"""Dense float64 tensors with tape-free reverse-mode autodiff.

Every op records its parents and a closure that maps the output gradient to
parent gradients.  ``backward`` walks the graph in reverse topological order.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Sequence

import numpy as np

_GRAD_ENABLED = True


class ShapeError(ValueError):
    """Raised when operand shapes do not conform for a primitive."""

    def __init__(self, primitive: str, shape_a, shape_b, detail: str = ""):
        self.primitive = primitive
        self.shape_a = tuple(shape_a)
        self.shape_b = tuple(shape_b)
        msg = f"{primitive}: incompatible shapes {self.shape_a} and {self.shape_b}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "__weakref__")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim > 0 and 0 in arr.shape:
            raise ValueError(f"tensor extents must be positive, got {arr.shape}")
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else _raise_nonscalar(self)

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

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

    def __matmul__(self, other):
        return matmul(self, other)

    def backward(self) -> None:
        backward(self)


def _raise_nonscalar(t: Tensor):
    raise ValueError(f"item() needs a single-element tensor, got shape {t.shape}")


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, parents: tuple[Tensor, ...], backward_fn) -> Tensor:
    out = Tensor(data)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward_fn
    return out


# ---------------------------------------------------------------- elementwise


def _broadcast_check(name: str, a: Tensor, b: Tensor) -> None:
    sa, sb = a.shape, b.shape
    if sa == sb or sa == () or sb == ():
        return
    if len(sa) == len(sb) + 1 and sa[1:] == sb:
        return
    if len(sb) == len(sa) + 1 and sb[1:] == sa:
        return
    raise ShapeError(name, sa, sb, "broadcast is only allowed over a leading batch axis")


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    if shape == ():
        return np.asarray(grad.sum())
    return grad.sum(axis=0)


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check("add", a, b)
    sa, sb = a.shape, b.shape
    return _make(a.data + b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check("subtract", a, b)
    sa, sb = a.shape, b.shape
    return _make(a.data - b.data, (a, b), lambda g: (_unbroadcast(g, sa), -_unbroadcast(g, sb)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check("multiply", a, b)
    ad, bd = a.data, b.data
    return _make(
        ad * bd,
        (a, b),
        lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)),
    )


def sigmoid(x: Tensor) -> Tensor:
    d = x.data
    # split by sign so exp never overflows
    e = np.exp(-np.abs(d))
    s = np.where(d >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return _make(s, (x,), lambda g: (g * s * (1.0 - s),))


def tanh(x: Tensor) -> Tensor:
    t = np.tanh(x.data)
    return _make(t, (x,), lambda g: (g * (1.0 - t * t),))


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    # np.maximum keeps NaN, so non-finite activations still reach the loss check
    return _make(np.maximum(x.data, 0.0), (x,), lambda g: (g * mask,))


def hinge(x) -> Tensor:
    """max(x, 0)."""
    return relu(as_tensor(x))


def log(x: Tensor, floor: float = 0.0) -> Tensor:
    """Natural log; with ``floor > 0`` the input is clamped from below first."""
    d = x.data
    if floor > 0:
        keep = ~(d <= floor)  # NaN is kept, so it propagates to the loss
        safe = np.where(keep, d, floor)
        return _make(np.log(safe), (x,), lambda g: (np.where(keep, g / safe, 0.0),))
    return _make(np.log(d), (x,), lambda g: (g / d,))


def softmax(x: Tensor) -> Tensor:
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=-1, keepdims=True)

    def bw(g):
        return (s * (g - (g * s).sum(axis=-1, keepdims=True)),)

    return _make(s, (x,), bw)


# ---------------------------------------------------------------- reductions


def sum(x: Tensor, axis: int | None = None) -> Tensor:  # noqa: A001
    shape = x.shape
    if axis is None:
        return _make(np.asarray(x.data.sum()), (x,), lambda g: (np.broadcast_to(g, shape).copy(),))
    ax = axis % x.ndim
    return _make(
        x.data.sum(axis=ax),
        (x,),
        lambda g: (np.broadcast_to(np.expand_dims(g, ax), shape).copy(),),
    )


def mean(x: Tensor, axis: int | None = None) -> Tensor:
    n = x.data.size if axis is None else x.shape[axis]
    return mul(sum(x, axis), 1.0 / n)


def euclidean_distance(a: Tensor, b: Tensor) -> Tensor:
    """Row-wise L2 distance along the last axis.  Gradient at zero distance is 0."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError("euclidean_distance", a.shape, b.shape)
    diff = a.data - b.data
    dist = np.sqrt((diff * diff).sum(axis=-1))

    def bw(g):
        scale = np.divide(g, dist, out=np.zeros_like(dist), where=dist > 0)
        ga = diff * scale[..., None]
        return ga, -ga

    return _make(dist, (a, b), bw)


# ---------------------------------------------------------------- linear algebra / structure


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 1 or b.ndim != 2 or a.shape[-1] != b.shape[0]:
        raise ShapeError("matmul", a.shape, b.shape, "inner dimensions must match")
    ad, bd = a.data, b.data

    def bw(g):
        ga = g @ bd.T
        if ad.ndim == 1:
            gb = np.outer(ad, g)
        else:
            gb = ad.reshape(-1, ad.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        return ga, gb

    return _make(ad @ bd, (a, b), bw)


def concatenate(tensors: Sequence[Tensor]) -> Tensor:
    """Concatenate along the last axis."""
    ts = [as_tensor(t) for t in tensors]
    lead = ts[0].shape[:-1]
    for t in ts[1:]:
        if t.shape[:-1] != lead:
            raise ShapeError("concatenate", ts[0].shape, t.shape, "leading axes differ")
    widths = [t.shape[-1] for t in ts]
    cuts = np.cumsum(widths)[:-1]

    def bw(g):
        return tuple(np.split(g, cuts, axis=-1))

    return _make(np.concatenate([t.data for t in ts], axis=-1), tuple(ts), bw)


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    old = x.shape
    return _make(x.data.reshape(shape), (x,), lambda g: (g.reshape(old),))


def take(x: Tensor, indices) -> Tensor:
    """Gather rows (axis 0) by integer index."""
    idx = np.asarray(indices, dtype=np.intp)
    shape = x.shape

    def bw(g):
        out = np.zeros(shape)
        np.add.at(out, idx, g)
        return (out,)

    return _make(x.data[idx], (x,), bw)


def conv2d(x: Tensor, w: Tensor, b: Tensor | None = None, stride: int = 1, padding: int = 0) -> Tensor:
    """Channels-last convolution.  x: (N, H, W, C); w: (kh, kw, C, F); b: (F,).

    Implemented as im2col followed by a single matmul.
    """
    if x.ndim != 4 or w.ndim != 4 or x.shape[3] != w.shape[2]:
        raise ShapeError("conv2d", x.shape, w.shape, "expected (N,H,W,C) and (kh,kw,C,F)")
    n, h, wd, c = x.shape
    kh, kw, _, f = w.shape
    xp = np.pad(x.data, ((0, 0), (padding, padding), (padding, padding), (0, 0))) if padding else x.data
    hp, wp = xp.shape[1], xp.shape[2]
    if hp < kh or wp < kw:
        raise ShapeError("conv2d", x.shape, w.shape, "kernel larger than padded input")
    ho = (hp - kh) // stride + 1
    wo = (wp - kw) // stride + 1
    hs, ws = stride * (ho - 1) + 1, stride * (wo - 1) + 1
    offsets = [(i, j) for i in range(kh) for j in range(kw)]
    cols = np.concatenate(
        [xp[:, i : i + hs : stride, j : j + ws : stride, :] for i, j in offsets], axis=-1
    ).reshape(n * ho * wo, kh * kw * c)
    wmat = w.data.reshape(kh * kw * c, f)
    out = cols @ wmat
    parents: tuple[Tensor, ...] = (x, w)
    if b is not None:
        if b.shape != (f,):
            raise ShapeError("conv2d", w.shape, b.shape, "bias must have one entry per filter")
        out += b.data
        parents = (x, w, b)
    out = out.reshape(n, ho, wo, f)
    need_x = x.requires_grad

    def bw(g):
        g2 = g.reshape(n * ho * wo, f)
        gw = (cols.T @ g2).reshape(w.shape)
        gx = None
        if need_x:
            gcols = (g2 @ wmat.T).reshape(n, ho, wo, kh * kw, c)
            gxp = np.zeros(xp.shape)
            for k, (i, j) in enumerate(offsets):
                gxp[:, i : i + hs : stride, j : j + ws : stride, :] += gcols[:, :, :, k, :]
            gx = gxp[:, padding : padding + h, padding : padding + wd, :] if padding else gxp
        if b is None:
            return gx, gw
        return gx, gw, g2.sum(axis=0)

    return _make(out, parents, bw)


def max_pool2d(x: Tensor, size: int = 2) -> Tensor:
    """Channels-last non-overlapping max pooling over (N, H, W, C).

    Trailing rows/cols that do not fill a window are dropped.  Within a window
    the first maximum in row-major order receives the gradient.
    """
    if x.ndim != 4:
        raise ShapeError("max_pool2d", x.shape, (size, size), "expected (N,H,W,C)")
    n, h, w, c = x.shape
    ho, wo = h // size, w // size
    if ho == 0 or wo == 0:
        raise ShapeError("max_pool2d", x.shape, (size, size), "window larger than input")
    d = x.data
    offsets = [(i, j) for i in range(size) for j in range(size)]
    slices = [d[:, i : ho * size : size, j : wo * size : size, :] for i, j in offsets]
    out = slices[0].copy()
    for s_ in slices[1:]:
        np.maximum(out, s_, out=out)

    def bw(g):
        gx = np.zeros((n, h, w, c))
        taken = np.zeros(out.shape, dtype=bool)
        for (i, j), s_ in zip(offsets, slices):
            hit = s_ == out
            hit &= ~taken
            taken |= hit
            gx[:, i : ho * size : size, j : wo * size : size, :] = g * hit
        return (gx,)

    return _make(out, (x,), bw)


# ---------------------------------------------------------------- backward pass


def _topo_order(root: Tensor) -> list[Tensor]:
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


def backward(output: Tensor) -> None:
    """Accumulate d(output)/d(leaf) into ``.grad`` of every reachable leaf needing grad."""
    if output.data.size != 1:
        raise ValueError(f"backward needs a scalar output, got shape {output.shape}")
    if not output.requires_grad:
        return
    grads: dict[int, np.ndarray] = {id(output): np.ones_like(output.data)}
    for node in reversed(_topo_order(output)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg


def parameters_of(tensors: Iterable[Tensor]) -> list[Tensor]:
    return [t for t in tensors if t.requires_grad]
