"""Minimal reverse-mode automatic differentiation on numpy arrays.

The op vocabulary is exactly what the adaptation networks need: strided
conv2d, instance normalization, dense layers, the four activations, binary
cross entropy, and enough scalar arithmetic to combine losses.  Graphs are
built implicitly through parent links; ``Tensor.backward`` walks the graph
once in reverse topological order and accumulates gradients additively
across fan-out.

Everything is single-threaded and deterministic for fixed inputs; the only
internal parallelism is whatever BLAS applies to the matmuls, which is
reproducible run to run for a fixed thread count.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidTargetError, ShapeError

BCE_EPS = 1e-7

# When enabled, every forward op asserts its output is finite.
_debug_finite = False


def set_debug_checks(enabled: bool) -> None:
    global _debug_finite
    _debug_finite = bool(enabled)


def _check(op: str, arr: np.ndarray) -> None:
    if _debug_finite and not np.all(np.isfinite(arr)):
        raise FloatingPointError(f"non-finite values produced by {op}")


class Tensor:
    """An ndarray with an optional gradient and a backward closure."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        self.data = np.asarray(data, dtype=dtype)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = g.copy() if isinstance(g, np.ndarray) else np.asarray(g)
        else:
            self.grad = self.grad + g

    def backward(self, grad=None) -> None:
        """Reverse-mode sweep from this node.

        ``grad`` seeds the output gradient; scalars default to 1.
        """
        if grad is None:
            if self.data.ndim != 0 and self.data.size != 1:
                raise ShapeError("backward() without a seed requires a scalar output")
            grad = np.ones_like(self.data)
        self.grad = np.asarray(grad, dtype=self.data.dtype).reshape(self.data.shape)

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
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))

        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- scalar / elementwise arithmetic ------------------------------------

    def __add__(self, other):
        if isinstance(other, Tensor):
            if other.data.shape != self.data.shape:
                raise ShapeError(f"add shapes differ: {self.data.shape} vs {other.data.shape}")
            out = _node(self.data + other.data, (self, other))

            def bw(g):
                self._accumulate(g)
                other._accumulate(g)

            out._backward = bw
            return out
        out = _node(self.data + other, (self,))
        out._backward = lambda g: self._accumulate(g)
        return out

    __radd__ = __add__

    def __mul__(self, other):
        if isinstance(other, Tensor):
            if other.data.shape != self.data.shape:
                raise ShapeError(f"mul shapes differ: {self.data.shape} vs {other.data.shape}")
            out = _node(self.data * other.data, (self, other))

            def bw(g):
                self._accumulate(g * other.data)
                other._accumulate(g * self.data)

            out._backward = bw
            return out
        out = _node(self.data * other, (self,))
        out._backward = lambda g: self._accumulate(g * other)
        return out

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        return self + (-other if isinstance(other, Tensor) else -other)

    def __rsub__(self, other):
        return (-self) + other

    def log(self):
        out = _node(np.log(self.data), (self,))
        out._backward = lambda g: self._accumulate(g / self.data)
        _check("log", out.data)
        return out

    def sum(self):
        out = _node(self.data.sum(), (self,))
        out._backward = lambda g: self._accumulate(np.broadcast_to(g, self.data.shape).astype(self.data.dtype))
        return out

    def mean(self):
        n = self.data.size
        out = _node(self.data.mean(), (self,))
        out._backward = lambda g: self._accumulate(
            np.broadcast_to(g / n, self.data.shape).astype(self.data.dtype)
        )
        return out

    def reshape(self, *shape):
        orig = self.data.shape
        out = _node(self.data.reshape(*shape), (self,))
        out._backward = lambda g: self._accumulate(g.reshape(orig))
        return out


def _node(data: np.ndarray, parents: tuple[Tensor, ...]) -> Tensor:
    out = Tensor(data)
    out.requires_grad = any(p.requires_grad for p in parents)
    if out.requires_grad:
        out._parents = parents
    return out


# ---------------------------------------------------------------------------
# Activations
# ---------------------------------------------------------------------------


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    out = _node(np.where(x.data >= 0.0, x.data, x.data * slope), (x,))

    def bw(g):
        # at exactly 0 the positive-side slope applies
        x._accumulate(g * np.where(x.data >= 0.0, 1.0, slope).astype(x.data.dtype))

    out._backward = bw
    _check("leaky_relu", out.data)
    return out


def relu(x: Tensor) -> Tensor:
    return leaky_relu(x, slope=0.0)


def sigmoid(x: Tensor) -> Tensor:
    d = x.data
    y = np.empty_like(d)
    pos = d >= 0
    y[pos] = 1.0 / (1.0 + np.exp(-d[pos]))
    e = np.exp(d[~pos])
    y[~pos] = e / (1.0 + e)
    out = _node(y, (x,))
    out._backward = lambda g: x._accumulate(g * y * (1.0 - y))
    _check("sigmoid", out.data)
    return out


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    out = _node(y, (x,))
    out._backward = lambda g: x._accumulate(g * (1.0 - y * y))
    _check("tanh", out.data)
    return out


# ---------------------------------------------------------------------------
# Layers
# ---------------------------------------------------------------------------


def dense(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Affine map: (N, F) @ (F, O) + (O,)."""
    if x.data.ndim != 2 or weight.data.ndim != 2:
        raise ShapeError("dense expects 2-d input and weight")
    if x.data.shape[1] != weight.data.shape[0]:
        raise ShapeError(
            f"dense feature mismatch: input {x.data.shape} vs weight {weight.data.shape}"
        )
    if bias.data.shape != (weight.data.shape[1],):
        raise ShapeError(f"dense bias shape {bias.data.shape} != ({weight.data.shape[1]},)")
    out = _node(x.data @ weight.data + bias.data, (x, weight, bias))

    def bw(g):
        if x.requires_grad:
            x._accumulate(g @ weight.data.T)
        if weight.requires_grad:
            weight._accumulate(x.data.T @ g)
        if bias.requires_grad:
            bias._accumulate(g.sum(axis=0))

    out._backward = bw
    _check("dense", out.data)
    return out


def _im2col(x: np.ndarray, kh: int, kw: int, stride: int, padding: int):
    n, c, h, w = x.shape
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    oh = (h + 2 * padding - kh) // stride + 1
    ow = (w + 2 * padding - kw) // stride + 1
    win = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(2, 3))
    win = win[:, :, ::stride, ::stride]  # (n, c, oh, ow, kh, kw)
    cols = np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(n * oh * ow, c * kh * kw)
    return cols, oh, ow


def _col2im(dcols: np.ndarray, xshape, kh: int, kw: int, stride: int, padding: int, oh: int, ow: int):
    n, c, h, w = xshape
    hp, wp = h + 2 * padding, w + 2 * padding
    dxp = np.zeros((n, c, hp, wp), dtype=dcols.dtype)
    dc = dcols.reshape(n, oh, ow, c, kh, kw).transpose(0, 3, 1, 2, 4, 5)
    for a in range(kh):
        for b in range(kw):
            dxp[:, :, a : a + stride * oh : stride, b : b + stride * ow : stride] += dc[:, :, :, :, a, b]
    if padding:
        return dxp[:, :, padding : hp - padding, padding : wp - padding]
    return dxp


def conv2d(x: Tensor, weight: Tensor, bias: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """2-d convolution on NCHW input with an OIHW kernel.

    Output spatial size is floor((in + 2*padding - kernel)/stride) + 1.
    """
    if stride < 1:
        raise ShapeError(f"stride must be >= 1, got {stride}")
    if x.data.ndim != 4 or weight.data.ndim != 4:
        raise ShapeError("conv2d expects NCHW input and OIHW weight")
    n, c, h, w = x.data.shape
    o, ci, kh, kw = weight.data.shape
    if ci != c:
        raise ShapeError(f"conv2d channel mismatch: input has {c}, weight expects {ci}")
    if bias.data.shape != (o,):
        raise ShapeError(f"conv2d bias shape {bias.data.shape} != ({o},)")
    if h + 2 * padding < kh or w + 2 * padding < kw:
        raise ShapeError("kernel larger than padded input")

    cols, oh, ow = _im2col(x.data, kh, kw, stride, padding)
    wmat = weight.data.reshape(o, c * kh * kw)
    out_flat = cols @ wmat.T + bias.data
    out_data = np.ascontiguousarray(out_flat.reshape(n, oh, ow, o).transpose(0, 3, 1, 2))
    out = _node(out_data, (x, weight, bias))

    def bw(g):
        gr = np.ascontiguousarray(g.transpose(0, 2, 3, 1)).reshape(n * oh * ow, o)
        if weight.requires_grad:
            weight._accumulate((gr.T @ cols).reshape(weight.data.shape))
        if bias.requires_grad:
            bias._accumulate(gr.sum(axis=0))
        if x.requires_grad:
            dcols = gr @ wmat
            x._accumulate(_col2im(dcols, x.data.shape, kh, kw, stride, padding, oh, ow))

    out._backward = bw
    _check("conv2d", out.data)
    return out


def instance_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize each (sample, channel) slice over its spatial extent."""
    if x.data.ndim != 4:
        raise ShapeError("instance_norm expects NCHW input")
    n, c, h, w = x.data.shape
    if gamma.data.shape != (c,) or beta.data.shape != (c,):
        raise ShapeError("instance_norm affine parameters must have shape (C,)")
    if eps < 0.0:
        raise ValueError("instance_norm eps must be non-negative")
    if eps == 0.0 and h * w == 1:
        raise ValueError("instance_norm over a single spatial element requires eps > 0")

    m = h * w
    mu = x.data.mean(axis=(2, 3), keepdims=True)
    xc = x.data - mu
    var = np.square(xc).mean(axis=(2, 3), keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    gb = gamma.data.reshape(1, c, 1, 1)
    out = _node(xhat * gb + beta.data.reshape(1, c, 1, 1), (x, gamma, beta))

    def bw(g):
        if gamma.requires_grad:
            gamma._accumulate((g * xhat).sum(axis=(0, 2, 3)))
        if beta.requires_grad:
            beta._accumulate(g.sum(axis=(0, 2, 3)))
        if x.requires_grad:
            dxhat = g * gb
            s1 = dxhat.sum(axis=(2, 3), keepdims=True)
            s2 = (dxhat * xhat).sum(axis=(2, 3), keepdims=True)
            x._accumulate((inv / m) * (m * dxhat - s1 - xhat * s2))

    out._backward = bw
    _check("instance_norm", out.data)
    return out


def bce_loss(pred: Tensor, targets) -> Tensor:
    """Mean binary cross entropy against hard {0, 1} targets.

    Predictions are clamped into [BCE_EPS, 1-BCE_EPS] first; the clamp
    passes no gradient outside that interval.
    """
    t = np.asarray(targets, dtype=pred.data.dtype)
    if t.shape != pred.data.shape:
        raise ShapeError(f"target shape {t.shape} != prediction shape {pred.data.shape}")
    if not np.all((t == 0.0) | (t == 1.0)):
        raise InvalidTargetError("bce targets must be 0 or 1")
    p = np.clip(pred.data, BCE_EPS, 1.0 - BCE_EPS)
    inside = (pred.data >= BCE_EPS) & (pred.data <= 1.0 - BCE_EPS)
    loss = -(t * np.log(p) + (1.0 - t) * np.log(1.0 - p)).mean()
    out = _node(np.asarray(loss, dtype=pred.data.dtype), (pred,))

    def bw(g):
        dp = (-t / p + (1.0 - t) / (1.0 - p)) / p.size
        pred._accumulate(g * np.where(inside, dp, 0.0).astype(pred.data.dtype))

    out._backward = bw
    _check("bce_loss", out.data)
    return out


def concat(tensors: list[Tensor], axis: int = 1) -> Tensor:
    datas = [t.data for t in tensors]
    out = _node(np.concatenate(datas, axis=axis), tuple(tensors))
    sizes = [d.shape[axis] for d in datas]
    offsets = np.cumsum([0] + sizes)

    def bw(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(lo, hi)
            t._accumulate(g[tuple(idx)])

    out._backward = bw
    return out


def he_init(shape, fan_in: int, rng: np.random.Generator, dtype=np.float64) -> Tensor:
    """Gaussian init with std sqrt(2/fan_in), deterministic for a given rng."""
    if fan_in < 1:
        raise ValueError(f"fan_in must be >= 1, got {fan_in}")
    std = np.sqrt(2.0 / fan_in)
    return Tensor(rng.normal(0.0, std, size=shape).astype(dtype), requires_grad=True)
