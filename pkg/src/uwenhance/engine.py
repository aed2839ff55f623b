"""Minimal reverse-mode autodiff over numpy arrays.

Provides exactly the tensor operations the enhancement networks and their
losses need: 2-D convolution and its transpose, a handful of elementwise
ops, channel concatenation/slicing, padding/cropping, separable filtering
for SSIM windows, and an RMSProp step with weight clamping for the critic.

Tensors wrap float32 arrays by default; float64 inputs are preserved so
tests can run entire graphs in double precision. Reductions always
accumulate in float64. Convolution inner products run at the tensor's own
precision through BLAS (see `_corr_s1`), which keeps a 256x256 enhancement
pass under the latency budget on a desktop CPU.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.linalg import blas as _blas
from scipy.special import expit as _expit

from .errors import DimensionError, DomainError, UsageError

__all__ = [
    "Tensor", "Parameter", "as_tensor", "no_grad", "grad_enabled",
    "add", "sub", "mul", "div", "neg", "abs_", "square", "sqrt_", "exp_",
    "pow_scalar", "relu", "leaky_relu", "sigmoid", "clamp01",
    "reduce_mean", "reduce_sum", "concat_channels", "slice_channels",
    "concat_batch", "slice_batch",
    "reshape", "pad2d", "crop2d", "avg_pool2", "sep_filter2d",
    "conv2d", "conv_transpose2d",
    "backward", "zero_grads", "rmsprop_step", "clamp_params",
]


class Tensor:
    """N-d array node on a dynamically recorded tape.

    `data` is immutable by convention once the node is created; `grad` is
    lazily allocated and accumulates additively across uses and across
    backward calls.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_vjp")

    def __init__(self, data, requires_grad=False):
        arr = np.asarray(data)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float32)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._vjp = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self):
        return float(self.data.reshape(-1)[0])

    def detach(self):
        """A new leaf sharing this tensor's values, cut off from the tape."""
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self):
        self.grad = None

    def backward(self, retain_graph=False):
        backward(self, retain_graph=retain_graph)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}, grad={self.requires_grad})"

    # arithmetic sugar; scalar operands follow the scalar-with-tensor rule
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


class Parameter:
    """Trainable tensor with a unique name and per-element RMSProp state."""

    __slots__ = ("name", "t", "state")

    def __init__(self, name, data):
        self.name = name
        self.t = Tensor(data, requires_grad=True)
        self.state = None  # allocated on the first optimizer step

    @property
    def data(self):
        return self.t.data

    @data.setter
    def data(self, value):
        self.t.data = np.asarray(value, dtype=self.t.data.dtype)

    @property
    def grad(self):
        return self.t.grad

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.t.shape})"


def as_tensor(x, requires_grad=False, dtype=None):
    if isinstance(x, Tensor):
        return x
    arr = np.asarray(x, dtype=dtype)
    if arr.dtype not in (np.float32, np.float64):
        arr = arr.astype(np.float32 if dtype is None else dtype)
    return Tensor(arr, requires_grad=requires_grad)


_grad_enabled = True


class no_grad:
    """Context manager: ops inside record no tape (inference fast path)."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


def grad_enabled():
    return _grad_enabled


def _make(data, parents, vjp):
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._vjp = vjp
    return out


def _is_scalar(x):
    return isinstance(x, (int, float, np.integer, np.floating))


def _check_same_shape(a, b, opname):
    if a.shape != b.shape:
        raise DimensionError(f"{opname}: operand shapes {a.shape} and {b.shape} differ")


# ---------------------------------------------------------------------------
# elementwise and reduction ops
# ---------------------------------------------------------------------------

def add(a, b):
    if _is_scalar(b):
        a = as_tensor(a)
        return _make(a.data + b, (a,), lambda g: (g,))
    if _is_scalar(a):
        return add(b, a)
    a, b = as_tensor(a), as_tensor(b)
    _check_same_shape(a, b, "add")
    return _make(a.data + b.data, (a, b), lambda g: (g, g))


def sub(a, b):
    if _is_scalar(b):
        a = as_tensor(a)
        return _make(a.data - b, (a,), lambda g: (g,))
    if _is_scalar(a):
        b = as_tensor(b)
        return _make(a - b.data, (b,), lambda g: (-g,))
    a, b = as_tensor(a), as_tensor(b)
    _check_same_shape(a, b, "sub")
    return _make(a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a, b):
    if _is_scalar(b):
        a = as_tensor(a)
        return _make(a.data * b, (a,), lambda g: (g * b,))
    if _is_scalar(a):
        return mul(b, a)
    a, b = as_tensor(a), as_tensor(b)
    _check_same_shape(a, b, "mul")
    ad, bd = a.data, b.data
    return _make(ad * bd, (a, b), lambda g: (g * bd, g * ad))


def div(a, b):
    if _is_scalar(b):
        return mul(a, 1.0 / b)
    if _is_scalar(a):
        b = as_tensor(b)
        bd = b.data
        out = a / bd
        return _make(out, (b,), lambda g: (-g * out / bd,))
    a, b = as_tensor(a), as_tensor(b)
    _check_same_shape(a, b, "div")
    ad, bd = a.data, b.data
    return _make(ad / bd, (a, b), lambda g: (g / bd, -g * ad / (bd * bd)))


def neg(x):
    x = as_tensor(x)
    return _make(-x.data, (x,), lambda g: (-g,))


def abs_(x):
    x = as_tensor(x)
    out = np.abs(x.data)
    if not (_grad_enabled and x.requires_grad):
        return _make(out, (x,), None)
    sgn = np.sign(x.data)  # subgradient 0 at ties
    return _make(out, (x,), lambda g: (g * sgn,))


def square(x):
    x = as_tensor(x)
    xd = x.data
    return _make(xd * xd, (x,), lambda g: (g * (2.0 * xd),))


def sqrt_(x):
    x = as_tensor(x)
    out = np.sqrt(x.data)
    return _make(out, (x,), lambda g: (g * (0.5 / out),))


def exp_(x):
    x = as_tensor(x)
    out = np.exp(x.data)
    return _make(out, (x,), lambda g: (g * out,))


def pow_scalar(x, p):
    """x ** p for a fixed scalar exponent; x must stay positive for fractional p."""
    x = as_tensor(x)
    xd = x.data
    out = xd ** p
    return _make(out, (x,), lambda g: (g * (p * xd ** (p - 1.0)),))


def relu(x):
    x = as_tensor(x)
    out = np.maximum(x.data, 0.0)
    if not (_grad_enabled and x.requires_grad):
        return _make(out, (x,), None)
    mask = x.data > 0  # subgradient at 0 is 0
    return _make(out, (x,), lambda g: (g * mask,))


def leaky_relu(x, slope=0.2):
    x = as_tensor(x)
    scale = np.where(x.data > 0, 1.0, slope).astype(x.data.dtype)
    return _make(x.data * scale, (x,), lambda g: (g * scale,))


def sigmoid(x):
    x = as_tensor(x)
    out = _expit(x.data)
    return _make(out, (x,), lambda g: (g * out * (1.0 - out),))


def clamp01(x):
    """Clamp to [0, 1]; gradient passes only through the open interval."""
    x = as_tensor(x)
    out = np.clip(x.data, 0.0, 1.0)
    if not (_grad_enabled and x.requires_grad):
        return _make(out, (x,), None)
    mask = (x.data > 0) & (x.data < 1)
    return _make(out, (x,), lambda g: (g * mask,))


def reduce_mean(x):
    x = as_tensor(x)
    n = x.size
    out = np.asarray(np.mean(x.data, dtype=np.float64), dtype=x.data.dtype)
    return _make(out, (x,),
                 lambda g: (np.full(x.shape, float(g) / n, dtype=x.data.dtype),))


def reduce_sum(x):
    x = as_tensor(x)
    out = np.asarray(np.sum(x.data, dtype=np.float64), dtype=x.data.dtype)
    return _make(out, (x,),
                 lambda g: (np.full(x.shape, float(g), dtype=x.data.dtype),))


# ---------------------------------------------------------------------------
# shape ops
# ---------------------------------------------------------------------------

def concat_channels(tensors):
    """Concatenate NCHW tensors along the channel axis."""
    ts = [as_tensor(t) for t in tensors]
    if not ts:
        raise UsageError("concat_channels: empty tensor list")
    base = ts[0]
    for t in ts[1:]:
        if t.ndim != 4 or base.ndim != 4:
            raise DimensionError("concat_channels: inputs must be 4-d NCHW")
        if t.shape[0] != base.shape[0] or t.shape[2:] != base.shape[2:]:
            raise DimensionError(
                f"concat_channels: batch/spatial axes differ, {base.shape} vs {t.shape}")
    data = np.concatenate([t.data for t in ts], axis=1)
    splits = np.cumsum([t.shape[1] for t in ts])[:-1]

    def vjp(g):
        return tuple(np.split(g, splits, axis=1))

    return _make(data, ts, vjp)


def concat_batch(tensors):
    """Concatenate NCHW tensors along the batch axis."""
    ts = [as_tensor(t) for t in tensors]
    if not ts:
        raise UsageError("concat_batch: empty tensor list")
    base = ts[0]
    for t in ts[1:]:
        if t.shape[1:] != base.shape[1:]:
            raise DimensionError(
                f"concat_batch: trailing axes differ, {base.shape} vs {t.shape}")
    data = np.concatenate([t.data for t in ts], axis=0)
    splits = np.cumsum([t.shape[0] for t in ts])[:-1]

    def vjp(g):
        return tuple(np.split(g, splits, axis=0))

    return _make(data, ts, vjp)


def slice_batch(x, start, stop):
    x = as_tensor(x)
    n = x.shape[0]
    if not (0 <= start < stop <= n):
        raise DimensionError(f"slice_batch: [{start}:{stop}] outside 0..{n}")

    def vjp(g):
        out = np.zeros(x.shape, dtype=g.dtype)
        out[start:stop] = g
        return (out,)

    return _make(np.ascontiguousarray(x.data[start:stop]), (x,), vjp)


def slice_channels(x, start, stop):
    x = as_tensor(x)
    c = x.shape[1]

    def vjp(g):
        out = np.zeros(x.shape, dtype=g.dtype)
        out[:, start:stop] = g
        return (out,)

    if not (0 <= start < stop <= c):
        raise DimensionError(f"slice_channels: [{start}:{stop}] outside 0..{c}")
    return _make(np.ascontiguousarray(x.data[:, start:stop]), (x,), vjp)


def reshape(x, shape):
    x = as_tensor(x)
    orig = x.shape
    return _make(x.data.reshape(shape), (x,), lambda g: (g.reshape(orig),))


def pad2d(x, pads, mode="zero"):
    """Pad the two trailing axes; pads = (top, bottom, left, right)."""
    x = as_tensor(x)
    t, b, l, r = pads
    spec = [(0, 0)] * (x.ndim - 2) + [(t, b), (l, r)]
    if mode == "zero":
        data = np.pad(x.data, spec)

        def vjp(g):
            sl = (Ellipsis, slice(t, g.shape[-2] - b), slice(l, g.shape[-1] - r))
            return (g[sl],)
    elif mode == "reflect":
        data = np.pad(x.data, spec, mode="reflect")
        h, w = x.shape[-2], x.shape[-1]
        idx_h = np.pad(np.arange(h), (t, b), mode="reflect")
        idx_w = np.pad(np.arange(w), (l, r), mode="reflect")

        def vjp(g):
            acc = np.zeros(x.shape[:-2] + (h, g.shape[-1]), dtype=g.dtype)
            np.add.at(acc.swapaxes(0, -2), idx_h, g.swapaxes(0, -2))
            out = np.zeros(x.shape, dtype=g.dtype)
            np.add.at(out.swapaxes(0, -1), idx_w, acc.swapaxes(0, -1))
            return (out,)
    else:
        raise UsageError(f"pad2d: unknown mode {mode!r}")
    return _make(data, (x,), vjp)


def crop2d(x, top, left, height, width):
    x = as_tensor(x)
    if top + height > x.shape[-2] or left + width > x.shape[-1]:
        raise DimensionError(
            f"crop2d: window {height}x{width}@({top},{left}) exceeds {x.shape[-2:]}")

    def vjp(g):
        out = np.zeros(x.shape, dtype=g.dtype)
        out[..., top:top + height, left:left + width] = g
        return (out,)

    return _make(np.ascontiguousarray(
        x.data[..., top:top + height, left:left + width]), (x,), vjp)


def avg_pool2(x):
    """2x2 mean pooling with stride 2; trailing odd row/column is dropped."""
    x = as_tensor(x)
    h2, w2 = x.shape[-2] // 2, x.shape[-1] // 2
    if h2 == 0 or w2 == 0:
        raise DomainError(f"avg_pool2: spatial size {x.shape[-2:]} below 2x2")
    lead = x.shape[:-2]
    core = x.data[..., :2 * h2, :2 * w2].reshape(lead + (h2, 2, w2, 2))
    data = core.mean(axis=(-3, -1), dtype=np.float64).astype(x.data.dtype)

    def vjp(g):
        up = np.repeat(np.repeat(g, 2, axis=-2), 2, axis=-1) * 0.25
        out = np.zeros(x.shape, dtype=g.dtype)
        out[..., :2 * h2, :2 * w2] = up
        return (out,)

    return _make(data, (x,), vjp)


# ---------------------------------------------------------------------------
# convolution kernels (BLAS-backed)
# ---------------------------------------------------------------------------

def _gemm_acc(a_t, b_cols, c_cols):
    """c_cols += a_t.T @ b_cols, in place via BLAS F-contiguous views."""
    fn = _blas.sgemm if a_t.dtype == np.float32 else _blas.dgemm
    fn(1.0, a_t, b_cols, beta=1.0, c=c_cols, trans_a=1, overwrite_c=1)


def _to_cl_padded(x, pad):
    """NCHW -> zero-padded channels-last (N, Hp, Wp, C) in one fused copy."""
    n, c, h, w = x.shape
    out = np.zeros((n, h + 2 * pad, w + 2 * pad, c), dtype=x.dtype)
    out[:, pad:pad + h, pad:pad + w, :] = np.moveaxis(x, 1, -1)
    return out


def _corr_s1(xcl, w):
    """Stride-1 valid cross-correlation of a channels-last padded buffer.

    Works on the flattened spatial axis: a shift (u, v) of the kernel is a
    constant column offset u*Wp + v, so each tap is one GEMM with no im2col
    copy. Junk columns produced at row wrap-around are discarded by the
    final crop.
    """
    n, hp, wp, c = xcl.shape
    o, _, k, _ = w.shape
    ho, wo = hp - k + 1, wp - k + 1
    t = n * hp * wp
    flat = xcl.reshape(t, c)
    acc = np.zeros((t, o), dtype=xcl.dtype)
    acc_t = acc.T          # (O, T) F-contiguous
    flat_t = flat.T        # (C, T) F-contiguous
    wt = np.ascontiguousarray(w.transpose(2, 3, 0, 1))  # (K, K, O, C)
    for u in range(k):
        for v in range(k):
            off = u * wp + v
            # a = (C, O) F-contiguous so op(a) with trans_a is W_uv (O, C)
            _gemm_acc(wt[u, v].T, flat_t[:, off:], acc_t[:, :t - off])
    out = acc.reshape(n, hp, wp, o)[:, :ho, :wo, :]
    return np.ascontiguousarray(np.moveaxis(out, -1, 1))


def _corr_strided(xcl, w, stride):
    """General strided cross-correlation via im2col; used for stride > 1."""
    n, hp, wp, c = xcl.shape
    o, _, k, _ = w.shape
    win = sliding_window_view(xcl, (k, k), axis=(1, 2))[:, ::stride, ::stride]
    ho, wo = win.shape[1], win.shape[2]
    cols = np.ascontiguousarray(win.transpose(0, 1, 2, 4, 5, 3)).reshape(-1, k * k * c)
    wm = np.ascontiguousarray(w.transpose(2, 3, 1, 0)).reshape(k * k * c, o)
    out = (cols @ wm).reshape(n, ho, wo, o)
    return np.ascontiguousarray(np.moveaxis(out, -1, 1))


def _conv_forward(x, w, stride, padding):
    xcl = _to_cl_padded(x, padding)
    if stride == 1:
        return _corr_s1(xcl, w)
    return _corr_strided(xcl, w, stride)


def _conv_t_forward(x, w, stride, padding, out_hw=None):
    """Adjoint of `_conv_forward` for the same weight/stride/padding.

    `x` is (N, O, Hi, Wi); the result is (N, C, Ho, Wo) with
    Ho = (Hi - 1) * stride + K - 2 * padding unless out_hw overrides it.
    """
    n, o, hi, wi = x.shape
    o2, c, k, _ = w.shape
    if o != o2:
        raise DimensionError(
            f"conv_transpose2d: input channel axis {o} != weight axis 0 {o2}")
    if out_hw is None:
        ho = (hi - 1) * stride + k - 2 * padding
        wo = (wi - 1) * stride + k - 2 * padding
        if ho <= 0 or wo <= 0:
            raise DomainError(f"conv_transpose2d: empty output {ho}x{wo}")
    else:
        ho, wo = out_hw
    hp, wp = ho + 2 * padding, wo + 2 * padding
    xcl = np.ascontiguousarray(np.moveaxis(x, 1, -1)).reshape(n * hi * wi, o)
    ycl = np.zeros((n, hp, wp, c), dtype=x.dtype)
    wt = np.ascontiguousarray(w.transpose(2, 3, 0, 1))  # (K, K, O, C)
    for u in range(k):
        lim_h = min(hi, (hp - u + stride - 1) // stride)
        for v in range(k):
            lim_w = min(wi, (wp - v + stride - 1) // stride)
            if lim_h <= 0 or lim_w <= 0:
                continue
            contrib = (xcl @ wt[u, v]).reshape(n, hi, wi, c)
            ycl[:, u:u + stride * lim_h:stride, v:v + stride * lim_w:stride, :] += \
                contrib[:, :lim_h, :lim_w, :]
    core = ycl[:, padding:padding + ho, padding:padding + wo, :]
    return np.ascontiguousarray(np.moveaxis(core, -1, 1))


def _conv_weight_grad(x, g, stride, padding, k):
    """d(conv2d)/d(weight): correlate the padded input with the output grad."""
    n, c, _, _ = x.shape
    _, o, ho, wo = g.shape
    xcl = _to_cl_padded(x, padding)
    _, hp, wp, _ = xcl.shape
    dw = np.empty((o, c, k, k), dtype=x.dtype)
    if stride == 1:
        t = n * hp * wp
        gemb = np.zeros((n, hp, wp, o), dtype=g.dtype)
        gemb[:, :ho, :wo, :] = np.moveaxis(g, 1, -1)
        gflat = gemb.reshape(t, o)
        xflat = xcl.reshape(t, c)
        for u in range(k):
            for v in range(k):
                off = u * wp + v
                # zero rows of gemb outside the valid region kill junk terms
                dw[:, :, u, v] = gflat[:t - off].T @ xflat[off:]
    else:
        gcl = np.moveaxis(g, 1, -1).reshape(-1, o)
        for u in range(k):
            for v in range(k):
                sl = np.ascontiguousarray(
                    xcl[:, u:u + stride * ho:stride, v:v + stride * wo:stride, :]
                ).reshape(-1, c)
                dw[:, :, u, v] = gcl.T @ sl
    return dw


def conv2d(x, w, b=None, stride=1, padding=0):
    """Cross-correlation (no kernel flip) of NCHW input with OIKK weights.

    Output spatial size is (H + 2*padding - K) // stride + 1. The backward
    map produces exact gradients for input, weight, and bias.
    """
    x, w = as_tensor(x), as_tensor(w)
    if x.ndim != 4 or w.ndim != 4:
        raise DimensionError(
            f"conv2d: need 4-d input/weight, got {x.ndim}-d and {w.ndim}-d")
    n, c, h, wd = x.shape
    o, ci, k, k2 = w.shape
    if k != k2:
        raise DimensionError(f"conv2d: non-square kernel {k}x{k2}")
    if c != ci:
        raise DimensionError(
            f"conv2d: input channel axis {c} != weight channel axis {ci}")
    if stride < 1 or padding < 0:
        raise UsageError("conv2d: stride must be >= 1 and padding >= 0")
    ho = (h + 2 * padding - k) // stride + 1
    wo = (wd + 2 * padding - k) // stride + 1
    if ho <= 0 or wo <= 0:
        raise DomainError(
            f"conv2d: kernel {k} with padding {padding} does not fit {h}x{wd}")
    out = _conv_forward(x.data, w.data, stride, padding)
    if b is not None:
        b = as_tensor(b)
        if b.shape != (o,):
            raise DimensionError(f"conv2d: bias shape {b.shape} != ({o},)")
        np.add(out, b.data.reshape(1, o, 1, 1), out=out)
    xd, wdta = x.data, w.data
    parents = (x, w) if b is None else (x, w, b)

    def vjp(g):
        g = np.ascontiguousarray(g)
        if stride == 1 and padding <= k - 1:
            # the adjoint of a stride-1 correlation is itself a stride-1
            # correlation with channel-swapped, index-flipped kernels, so
            # it can reuse the fast GEMM path
            w_adj = np.ascontiguousarray(
                wdta.transpose(1, 0, 2, 3)[:, :, ::-1, ::-1])
            dx = _corr_s1(_to_cl_padded(g, k - 1 - padding), w_adj)
        else:
            dx = _conv_t_forward(g, wdta, stride, padding, out_hw=(h, wd))
        dw = _conv_weight_grad(xd, g, stride, padding, k)
        if b is None:
            return (dx, dw)
        return (dx, dw, g.sum(axis=(0, 2, 3), dtype=np.float64).astype(g.dtype))

    return _make(out, parents, vjp)


def conv_transpose2d(x, w, b=None, stride=1, padding=0):
    """Exact adjoint of conv2d for matching weight, stride, and padding.

    Weights keep the OIKK layout of the paired conv2d: input channels of
    this op index axis 0, output channels axis 1.
    """
    x, w = as_tensor(x), as_tensor(w)
    if x.ndim != 4 or w.ndim != 4:
        raise DimensionError(
            f"conv_transpose2d: need 4-d input/weight, got {x.ndim}-d and {w.ndim}-d")
    if stride < 1 or padding < 0:
        raise UsageError("conv_transpose2d: stride must be >= 1 and padding >= 0")
    o, c, k, _ = w.shape
    out = _conv_t_forward(x.data, w.data, stride, padding)
    if b is not None:
        b = as_tensor(b)
        if b.shape != (c,):
            raise DimensionError(f"conv_transpose2d: bias shape {b.shape} != ({c},)")
        out = out + b.data.reshape(1, c, 1, 1)
    xd, wdta = x.data, w.data
    hi, wi = x.shape[2], x.shape[3]
    parents = (x, w) if b is None else (x, w, b)

    def vjp(g):
        g = np.ascontiguousarray(g)
        dx = _conv_forward(g, wdta, stride, padding)[:, :, :hi, :wi]
        dw = _conv_weight_grad(g, xd, stride, padding, k)
        if b is None:
            return (dx, dw)
        return (dx, dw, g.sum(axis=(0, 2, 3), dtype=np.float64).astype(g.dtype))

    return _make(out, parents, vjp)


def sep_filter2d(x, kernel1d):
    """Valid correlation with a separable kernel applied per channel.

    The same 1-d kernel runs along both spatial axes (SSIM's Gaussian
    window); the kernel is a fixed constant and receives no gradient.
    """
    x = as_tensor(x)
    k = np.asarray(kernel1d, dtype=x.data.dtype)
    if k.ndim != 1:
        raise DimensionError("sep_filter2d: kernel must be 1-d")
    ksz = k.shape[0]
    if x.shape[-2] < ksz or x.shape[-1] < ksz:
        raise DomainError(
            f"sep_filter2d: kernel {ksz} does not fit input {x.shape[-2:]}")

    def corr_axis(a, axis):
        n = a.shape[axis] - ksz + 1
        out = np.zeros(a.shape[:axis] + (n,) + a.shape[axis + 1:], dtype=a.dtype)
        sl = [slice(None)] * a.ndim
        for i in range(ksz):
            sl[axis] = slice(i, i + n)
            out += k[i] * a[tuple(sl)]
        return out

    def corr_axis_adj(g, axis, full):
        pads = [(0, 0)] * g.ndim
        pads[axis] = (ksz - 1, ksz - 1)
        gp = np.pad(g, pads)
        n = full
        out = np.zeros(g.shape[:axis] + (n,) + g.shape[axis + 1:], dtype=g.dtype)
        sl = [slice(None)] * g.ndim
        for i in range(ksz):
            sl[axis] = slice(i, i + n)
            out += k[ksz - 1 - i] * gp[tuple(sl)]
        return out

    h, w = x.shape[-2], x.shape[-1]
    data = corr_axis(corr_axis(x.data, x.ndim - 1), x.ndim - 2)

    def vjp(g):
        t = corr_axis_adj(g, x.ndim - 2, h)
        return (corr_axis_adj(t, x.ndim - 1, w),)

    return _make(data, (x,), vjp)


# ---------------------------------------------------------------------------
# backward pass and optimizer
# ---------------------------------------------------------------------------

def backward(loss, retain_graph=False):
    """Reverse-mode sweep from a scalar loss.

    Every reachable tensor with requires_grad and no parents (a leaf)
    receives d(loss)/d(leaf) added into `.grad`. Repeated calls without
    zeroing accumulate. Unless retain_graph is set, the recorded tape is
    released afterwards.
    """
    if not isinstance(loss, Tensor):
        raise UsageError("backward: expected a Tensor")
    if loss.size != 1:
        raise UsageError(f"backward: loss must be scalar, got shape {loss.shape}")

    topo = []
    seen = set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in seen or not node.requires_grad:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            stack.append((p, False))

    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(topo):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._vjp is None:
            if node.requires_grad:
                if node.grad is None:
                    node.grad = np.zeros_like(node.data)
                node.grad += g.astype(node.data.dtype, copy=False)
            continue
        parent_grads = node._vjp(g)
        for p, pg in zip(node._parents, parent_grads):
            if pg is None or not p.requires_grad:
                continue
            key = id(p)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg

    if not retain_graph:
        for node in topo:
            if node._vjp is not None:
                node._parents = ()
                node._vjp = None


def zero_grads(params):
    for p in params:
        p.t.grad = None


def rmsprop_step(params, lr, smoothing=0.9, eps=1e-8):
    """One RMSProp update per parameter; gradients are zeroed afterwards.

    s <- smoothing*s + (1-smoothing)*g^2 ; p <- p - lr*g/(sqrt(s)+eps)
    """
    for p in params:
        g = p.t.grad
        if g is None:
            raise UsageError(f"rmsprop_step: parameter {p.name!r} has no gradient")
        if p.state is None:
            p.state = np.zeros_like(p.t.data)
        s = p.state
        s *= smoothing
        s += (1.0 - smoothing) * g * g
        p.t.data = p.t.data - lr * g / (np.sqrt(s) + eps)
        p.t.grad = None


def clamp_params(params, lo, hi):
    """Clip every parameter element into [lo, hi] in place."""
    if lo > hi:
        raise UsageError(f"clamp_params: lo {lo} > hi {hi}")
    for p in params:
        np.clip(p.t.data, lo, hi, out=p.t.data)
