"""Minimal dense-tensor engine with reverse-mode automatic differentiation.

Tensors wrap contiguous numpy arrays (float32 by default, float64 for
gradient-check suites) and record the producing operation so that a scalar
loss can be back-propagated to every leaf with ``requires_grad=True``.
Only the operators needed by the segmentation model are provided; there is
no broadcasting cleverness beyond what those operators require.

A differentiation graph is single-threaded; independent graphs may run
concurrently, and graph-free tensors are immutable after construction and
safe to share.
"""

from __future__ import annotations

import math
from contextlib import contextmanager

import numpy as np

DEFAULT_DTYPE = np.float32

_GRAD_ENABLED = True


@contextmanager
def no_grad():
    """Disable graph recording inside the block (forward-only passes)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def grad_enabled() -> bool:
    return _GRAD_ENABLED


class DimensionError(ValueError):
    """Raised when operand shapes violate an operator contract."""


class Tensor:
    """An n-dimensional array node in a reverse-mode differentiation graph."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        if dtype is not None:
            arr = np.asarray(data, dtype=dtype)
        elif isinstance(data, np.ndarray) and data.dtype in (np.float32, np.float64):
            arr = data
        else:
            arr = np.asarray(data, dtype=DEFAULT_DTYPE)
        self.data = np.ascontiguousarray(arr)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    # -- construction helpers -------------------------------------------------

    @staticmethod
    def zeros(shape, dtype=None, requires_grad: bool = False) -> "Tensor":
        return Tensor(np.zeros(shape, dtype=dtype or DEFAULT_DTYPE), requires_grad)

    @staticmethod
    def ones(shape, dtype=None, requires_grad: bool = False) -> "Tensor":
        return Tensor(np.ones(shape, dtype=dtype or DEFAULT_DTYPE), requires_grad)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else _not_scalar(self)

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype.name}, requires_grad={self.requires_grad})"

    # -- graph plumbing -------------------------------------------------------

    def _accumulate(self, g: np.ndarray) -> None:
        # Gradient accumulation is additive; callers zero grads between steps.
        if self.grad is None:
            self.grad = g.astype(self.data.dtype, copy=True)
        else:
            self.grad += g

    def backward(self) -> None:
        """Back-propagate from a scalar; every reachable requires_grad leaf
        receives d(self)/d(leaf) in its ``.grad``."""
        if self.data.size != 1:
            raise DimensionError(f"backward() requires a scalar loss, got shape {self.shape}")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self._accumulate(np.ones_like(self.data))
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
            if node._parents:
                # Interior activations are transient; free their grad buffers.
                node.grad = None

    # -- operator sugar -------------------------------------------------------

    def __add__(self, other):
        return add(self, _wrap(other, self.dtype))

    def __radd__(self, other):
        return add(_wrap(other, self.dtype), self)

    def __sub__(self, other):
        return sub(self, _wrap(other, self.dtype))

    def __rsub__(self, other):
        return sub(_wrap(other, self.dtype), self)

    def __mul__(self, other):
        return mul(self, _wrap(other, self.dtype))

    def __rmul__(self, other):
        return mul(_wrap(other, self.dtype), self)

    def __truediv__(self, other):
        return div(self, _wrap(other, self.dtype))

    def __rtruediv__(self, other):
        return div(_wrap(other, self.dtype), self)

    def __neg__(self):
        return mul(self, _wrap(-1.0, self.dtype))

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, exponent):
        return power(self, float(exponent))

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 or isinstance(shape[0], int) else shape[0])

    def transpose(self, *axes):
        return transpose(self, axes)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)


class Parameter(Tensor):
    """A trainable leaf tensor; names are assigned hierarchically by Module."""

    __slots__ = ()

    def __init__(self, data, dtype=None):
        super().__init__(data, requires_grad=True, dtype=dtype)


def _not_scalar(t: Tensor):
    raise DimensionError(f"item() requires a single-element tensor, got shape {t.shape}")


def _wrap(x, dtype) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


def _make(data: np.ndarray, parents: tuple[Tensor, ...], backward) -> Tensor:
    out = Tensor(data)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(p for p in parents if p.requires_grad)
        out._backward = backward
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum gradient `g` down to `shape` (inverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, ss) in enumerate(zip(g.shape, shape)) if ss == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# -- elementwise arithmetic ----------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    data = a.data + b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.shape))

    return _make(data, (a, b), backward)


def sub(a: Tensor, b: Tensor) -> Tensor:
    data = a.data - b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g, b.shape))

    return _make(data, (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    data = a.data * b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.shape))

    return _make(data, (a, b), backward)


def div(a: Tensor, b: Tensor) -> Tensor:
    data = a.data / b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g / b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g * a.data / (b.data * b.data), b.shape))

    return _make(data, (a, b), backward)


def power(a: Tensor, exponent: float) -> Tensor:
    data = a.data ** exponent

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * exponent * a.data ** (exponent - 1.0))

    return _make(data, (a,), backward)


def exp(a: Tensor) -> Tensor:
    data = np.exp(a.data)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * data)

    return _make(data, (a,), backward)


def log(a: Tensor) -> Tensor:
    data = np.log(a.data)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g / a.data)

    return _make(data, (a,), backward)


def sqrt(a: Tensor) -> Tensor:
    data = np.sqrt(a.data)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * (0.5 / data))

    return _make(data, (a,), backward)


def tanh(a: Tensor) -> Tensor:
    data = np.tanh(a.data)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * (1.0 - data * data))

    return _make(data, (a,), backward)


def sigmoid(a: Tensor) -> Tensor:
    data = _sigmoid(a.data)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * data * (1.0 - data))

    return _make(data, (a,), backward)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # Split by sign so exp never overflows.
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


_GELU_C = math.sqrt(2.0 / math.pi)


def gelu(a: Tensor) -> Tensor:
    """x * Phi(x) in the tanh approximation."""
    x = a.data
    inner = _GELU_C * (x + 0.044715 * x * x * x)
    t = np.tanh(inner)
    data = 0.5 * x * (1.0 + t)

    def backward(g):
        if a.requires_grad:
            d_inner = _GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
            grad = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * d_inner
            a._accumulate(g * grad)

    return _make(data, (a,), backward)


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * mask)

    return _make(a.data * mask, (a,), backward)


def clip_min(a: Tensor, lo: float) -> Tensor:
    """max(a, lo); gradient passes only where a > lo."""
    mask = a.data > lo
    data = np.where(mask, a.data, np.asarray(lo, dtype=a.dtype))

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * mask)

    return _make(data, (a,), backward)


# -- reductions and shape ops ----------------------------------------------------


def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if not a.requires_grad:
            return
        if axis is None:
            a._accumulate(np.broadcast_to(g, a.shape).copy() if np.ndim(g) else np.full(a.shape, g, dtype=a.dtype))
            return
        if not keepdims:
            g = np.expand_dims(g, axis)
        a._accumulate(np.broadcast_to(g, a.shape).astype(a.dtype))

    return _make(np.asarray(data), (a,), backward)


def tmean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    n = a.size if axis is None else a.shape[axis]
    return tsum(a, axis=axis, keepdims=keepdims) * (1.0 / n)


def reshape(a: Tensor, shape) -> Tensor:
    data = a.data.reshape(shape)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g.reshape(a.shape))

    return _make(data, (a,), backward)


def transpose(a: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    inv = np.argsort(axes)
    data = np.ascontiguousarray(a.data.transpose(axes))

    def backward(g):
        if a.requires_grad:
            a._accumulate(np.ascontiguousarray(g.transpose(inv)))

    return _make(data, (a,), backward)


def concat(tensors: list[Tensor], axis: int = 0) -> Tensor:
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(lo, hi)
                t._accumulate(g[tuple(idx)])

    return _make(data, tuple(tensors), backward)


# -- linear algebra ----------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product; trailing two axes contract, leading axes batch."""
    if a.ndim < 1 or b.ndim < 2:
        raise DimensionError(f"matmul needs matrices, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul inner extents differ: {a.shape} @ {b.shape}")
    data = a.data @ b.data

    def backward(g):
        if a.requires_grad:
            ga = g @ np.swapaxes(b.data, -1, -2)
            a._accumulate(_unbroadcast(ga, a.shape))
        if b.requires_grad:
            gb = np.swapaxes(a.data, -1, -2) @ g
            b._accumulate(_unbroadcast(gb, b.shape))

    return _make(data, (a, b), backward)


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    """Max-subtracted softmax along `axis`; slices sum to 1."""
    if not -a.ndim <= axis < a.ndim:
        raise DimensionError(f"softmax axis {axis} out of range for shape {a.shape}")
    data = a.data - a.data.max(axis=axis, keepdims=True)
    np.exp(data, out=data)
    data /= data.sum(axis=axis, keepdims=True)

    def backward(g):
        if a.requires_grad:
            gy = g * data
            a._accumulate(gy - data * gy.sum(axis=axis, keepdims=True))

    return _make(data, (a,), backward)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit population variance,
    then scale by gamma and shift by beta."""
    if x.shape[-1] != gamma.shape[-1] or x.shape[-1] != beta.shape[-1]:
        raise DimensionError(
            f"layer_norm feature extent {x.shape[-1]} does not match gamma {gamma.shape} / beta {beta.shape}")
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    var = np.mean(centered * centered, axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + np.asarray(eps, dtype=x.dtype))
    xhat = centered * inv
    data = xhat * gamma.data + beta.data

    def backward(g):
        if beta.requires_grad:
            beta._accumulate(_unbroadcast(g, beta.shape))
        if gamma.requires_grad:
            gamma._accumulate(_unbroadcast(g * xhat, gamma.shape))
        if x.requires_grad:
            dxhat = g * gamma.data
            m1 = dxhat.mean(axis=-1, keepdims=True)
            m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
            x._accumulate((dxhat - m1 - xhat * m2) * inv)

    return _make(data, (x, gamma, beta), backward)


# -- convolution family ----------------------------------------------------


def conv2d(x: Tensor, w: Tensor, b: Tensor | None, stride: int = 1, pad: int = 0) -> Tensor:
    """Cross-correlation of x[C,H,W] with w[F,C,k,k] (+ bias[F])."""
    if x.ndim != 3 or w.ndim != 4:
        raise DimensionError(f"conv2d expects x[C,H,W], w[F,C,k,k]; got {x.shape}, {w.shape}")
    C, H, W = x.shape
    F, Cw, kh, kw = w.shape
    if Cw != C:
        raise DimensionError(f"conv2d channel mismatch: input has {C}, weight expects {Cw}")
    if stride < 1:
        raise DimensionError(f"conv2d stride must be >= 1, got {stride}")
    if kh > H + 2 * pad or kw > W + 2 * pad:
        raise DimensionError(
            f"conv2d kernel {kh}x{kw} larger than padded input {H + 2 * pad}x{W + 2 * pad}")
    oh = (H + 2 * pad - kh) // stride + 1
    ow = (W + 2 * pad - kw) // stride + 1

    xp = np.pad(x.data, ((0, 0), (pad, pad), (pad, pad))) if pad else x.data
    if kh == 1 and kw == 1 and stride == 1:
        cols = np.ascontiguousarray(xp.reshape(C, oh * ow).T)
    elif kh == stride and kw == stride and xp.shape[1] % kh == 0 and xp.shape[2] % kw == 0:
        # non-overlapping windows (patchify): pure reshape
        cols = np.ascontiguousarray(
            xp.reshape(C, oh, kh, ow, kw).transpose(1, 3, 0, 2, 4).reshape(oh * ow, C * kh * kw))
    else:
        win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(1, 2))
        win = win[:, ::stride, ::stride]                   # (C, oh, ow, kh, kw)
        cols = win.transpose(1, 2, 0, 3, 4).reshape(oh * ow, C * kh * kw)
    wmat = w.data.reshape(F, C * kh * kw)
    out = cols @ wmat.T
    if b is not None:
        if b.shape != (F,):
            raise DimensionError(f"conv2d bias shape {b.shape} != ({F},)")
        out = out + b.data
    data = out.T.reshape(F, oh, ow)

    def backward(g):
        g2 = g.reshape(F, oh * ow).T                       # (oh*ow, F)
        if w.requires_grad:
            w._accumulate((g2.T @ cols).reshape(w.shape))
        if b is not None and b.requires_grad:
            b._accumulate(g2.sum(axis=0))
        if x.requires_grad:
            gcols = g2 @ wmat                              # (oh*ow, C*kh*kw)
            gcols = gcols.reshape(oh, ow, C, kh, kw)
            gx = np.zeros((C, H + 2 * pad, W + 2 * pad), dtype=x.dtype)
            for i in range(kh):
                for j in range(kw):
                    gx[:, i:i + oh * stride:stride, j:j + ow * stride:stride] += \
                        gcols[:, :, :, i, j].transpose(2, 0, 1)
            x._accumulate(gx[:, pad:pad + H, pad:pad + W] if pad else gx)

    parents = (x, w) if b is None else (x, w, b)
    return _make(data, parents, backward)


def conv_transpose2d(x: Tensor, w: Tensor, b: Tensor | None, stride: int) -> Tensor:
    """Transposed convolution with kernel extent == stride (block upsampling).

    x[C,H,W] with w[C,F,k,k] yields [F, H*k, W*k]; used by the decoder to
    double/quadruple the token-grid resolution.
    """
    if x.ndim != 3 or w.ndim != 4:
        raise DimensionError(f"conv_transpose2d expects x[C,H,W], w[C,F,k,k]; got {x.shape}, {w.shape}")
    C, H, W = x.shape
    Cw, F, kh, kw = w.shape
    if Cw != C:
        raise DimensionError(f"conv_transpose2d channel mismatch: input {C}, weight {Cw}")
    if kh != stride or kw != stride:
        raise DimensionError(f"conv_transpose2d supports kernel == stride only, got k={kh} stride={stride}")
    # out[f, i*k+a, j*k+b] = sum_c x[c,i,j] * w[c,f,a,b]
    xf = x.data.reshape(C, H * W)
    wf = w.data.reshape(C, F * kh * kw)
    out = xf.T @ wf                                         # (H*W, F*kh*kw)
    out = out.reshape(H, W, F, kh, kw).transpose(2, 0, 3, 1, 4).reshape(F, H * kh, W * kw)
    if b is not None:
        if b.shape != (F,):
            raise DimensionError(f"conv_transpose2d bias shape {b.shape} != ({F},)")
        out = out + b.data[:, None, None]
    data = out

    def backward(g):
        gr = g.reshape(F, H, kh, W, kw).transpose(1, 3, 0, 2, 4).reshape(H * W, F * kh * kw)
        if x.requires_grad:
            x._accumulate((gr @ wf.T).T.reshape(C, H, W))
        if w.requires_grad:
            w._accumulate((xf @ gr).reshape(w.shape))
        if b is not None and b.requires_grad:
            b._accumulate(g.sum(axis=(1, 2)))

    parents = (x, w) if b is None else (x, w, b)
    return _make(data, parents, backward)


_INTERP_CACHE: dict[tuple[int, int, str], np.ndarray] = {}


def _interp_matrix(n_in: int, n_out: int, dtype) -> np.ndarray:
    """Row-stochastic bilinear sampling matrix (align_corners=false)."""
    key = (n_in, n_out, np.dtype(dtype).name)
    cached = _INTERP_CACHE.get(key)
    if cached is not None:
        return cached
    m = np.zeros((n_out, n_in), dtype=dtype)
    scale = n_in / n_out
    for i in range(n_out):
        src = (i + 0.5) * scale - 0.5
        src = min(max(src, 0.0), n_in - 1.0)
        lo = int(math.floor(src))
        hi = min(lo + 1, n_in - 1)
        frac = src - lo
        m[i, lo] += 1.0 - frac
        m[i, hi] += frac
    _INTERP_CACHE[key] = m
    return m


def bilinear_resize(x: Tensor, out_h: int, out_w: int) -> Tensor:
    """Bilinear interpolation of x[C,H,W] to [C,out_h,out_w] (align_corners=false)."""
    if x.ndim != 3:
        raise DimensionError(f"bilinear_resize expects x[C,H,W], got {x.shape}")
    if out_h < 1 or out_w < 1:
        raise DimensionError(f"bilinear_resize target must be >= 1, got {out_h}x{out_w}")
    C, H, W = x.shape
    if (out_h, out_w) == (H, W):
        return reshape(x, x.shape)  # identity, but keeps the graph uniform
    rh = _interp_matrix(H, out_h, x.dtype)
    rw = _interp_matrix(W, out_w, x.dtype)
    # separable: rows then columns, two BLAS calls
    tmp = np.tensordot(rh, x.data, axes=(1, 1)).transpose(1, 0, 2)   # (C, oh, W)
    data = np.ascontiguousarray(tmp @ rw.T)                          # (C, oh, ow)

    def backward(g):
        if x.requires_grad:
            gt = g @ rw                                              # (C, oh, W)
            x._accumulate(np.ascontiguousarray(
                np.tensordot(rh, gt, axes=(0, 1)).transpose(1, 0, 2)))

    return _make(data, (x,), backward)


# -- optimizer ----------------------------------------------------


class OptimizerState:
    """Adam moments plus the piecewise-constant learning-rate schedule."""

    def __init__(self, lr: float, schedule: list[tuple[int, float]] | None = None):
        self.step_count = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.lr = lr
        # schedule entries are (epoch, lr); the last entry at or below the
        # current epoch wins.
        self.schedule = sorted(schedule) if schedule else [(0, lr)]

    def lr_at_epoch(self, epoch: int) -> float:
        lr = self.schedule[0][1]
        for e, value in self.schedule:
            if epoch >= e:
                lr = value
        return lr


def adam_step(params: dict[str, Parameter], state: OptimizerState,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8,
              lr: float | None = None) -> None:
    """One bias-corrected adaptive update over named parameters in place."""
    state.step_count += 1
    t = state.step_count
    lr = state.lr if lr is None else lr
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for name, p in params.items():
        g = p.grad
        if g is None:
            continue
        if g.shape != p.data.shape:
            raise DimensionError(f"gradient shape {g.shape} != parameter shape {p.data.shape} for {name!r}")
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p.data)
        v = state.v.get(name)
        if v is None:
            v = state.v[name] = np.zeros_like(p.data)
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        p.data -= lr * (m / c1) / (np.sqrt(v / c2) + eps)


class Adam:
    """Convenience wrapper binding named parameters to an OptimizerState."""

    def __init__(self, params: dict[str, Parameter], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8,
                 schedule: list[tuple[int, float]] | None = None):
        self.params = dict(params)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.state = OptimizerState(lr, schedule)

    def step(self) -> None:
        adam_step(self.params, self.state, self.beta1, self.beta2, self.eps)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def set_epoch(self, epoch: int) -> None:
        self.state.lr = self.state.lr_at_epoch(epoch)


# -- module system ----------------------------------------------------


class Module:
    """Plain attribute-walking parameter container (no hooks, no buffers)."""

    def named_parameters(self, prefix: str = "") -> dict[str, Parameter]:
        out: dict[str, Parameter] = {}
        for key, value in vars(self).items():
            path = f"{prefix}{key}"
            if isinstance(value, Parameter):
                out[path] = value
            elif isinstance(value, Module):
                out.update(value.named_parameters(f"{path}."))
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        out.update(item.named_parameters(f"{path}.{i}."))
                    elif isinstance(item, Parameter):
                        out[f"{path}.{i}"] = item
        return out

    def zero_grad(self) -> None:
        for p in self.named_parameters().values():
            p.grad = None
