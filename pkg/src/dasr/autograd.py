"""Dense tensors with reverse-mode automatic differentiation.

Deliberately minimal: exactly the layer set needed to train a small conv-net
patch classifier and a compact residual SR network on the CPU. Tensors wrap
numpy arrays (float32 by default; float64 is used by the gradient-check
oracles in the test suite). No broadcasting beyond what the listed ops do
internally, no graph mutation, no in-place ops on graph inputs.

Conventions:
  * 4-D activations are (batch, channel, height, width), row-major.
  * ``backward()`` accumulates into ``.grad``; callers zero grads explicitly
    between optimizer steps.
  * An op only records a backward closure if some input requires grad, so
    inference does not retain buffers.
"""

from __future__ import annotations

import threading

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DimensionError, NumericsError

LOG_CLAMP = 1e-12


class Tensor:
    """N-dimensional array plus optional gradient accumulator."""

    __slots__ = ("data", "grad", "requires_grad", "_backward", "_parents")

    def __init__(self, data, requires_grad=False, dtype=np.float32):
        self.data = np.ascontiguousarray(data, dtype=dtype)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._backward = None
        self._parents = ()

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def zero_grad(self):
        self.grad = None

    def accumulate_grad(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self.grad += g

    def assert_finite(self, what="tensor"):
        if not np.isfinite(self.data).all():
            raise NumericsError(f"non-finite values in {what}")
        return self

    def backward(self, seed=None):
        """Reverse-mode sweep from this tensor through its recorded graph."""
        if seed is None:
            if self.data.size != 1:
                raise DimensionError(
                    f"backward() without a seed requires a scalar, got shape {self.data.shape}"
                )
            seed = np.ones_like(self.data)
        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in seen:
                    stack.append((parent, False))
        self.accumulate_grad(seed)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)


def _result(data, parents, backward):
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.requires_grad = any(p.requires_grad for p in parents)
    if out.requires_grad:
        out._parents = tuple(parents)
        out._backward = backward
    else:
        out._parents = ()
        out._backward = None
    return out


def _as_array(x, like):
    if isinstance(x, Tensor):
        return x.data
    return np.asarray(x, dtype=like.dtype)


# ---------------------------------------------------------------------------
# layers


def conv2d(x: Tensor, weight: Tensor, bias: Tensor, stride: int = 1, pad: int = 0) -> Tensor:
    """2-D cross-correlation with zero padding.

    x: (N, Cin, H, W), weight: (Cout, Cin, kh, kw), bias: (Cout,).
    Output spatial dims follow floor((H + 2*pad - kh) / stride) + 1.
    """
    if x.data.ndim != 4:
        raise DimensionError(f"conv2d input must be 4-D (N,C,H,W), got {x.data.ndim}-D")
    if weight.data.ndim != 4:
        raise DimensionError(f"conv2d weight must be 4-D (Cout,Cin,kh,kw), got {weight.data.ndim}-D")
    n, cin, h, w = x.data.shape
    cout, cin_w, kh, kw = weight.data.shape
    if cin != cin_w:
        raise DimensionError(
            f"conv2d channel mismatch: input axis 1 has {cin}, weight axis 1 has {cin_w}"
        )
    if bias.data.shape != (cout,):
        raise DimensionError(f"conv2d bias must have shape ({cout},), got {bias.data.shape}")
    if stride < 1:
        raise DimensionError(f"conv2d stride must be >= 1, got {stride}")
    if kh > h + 2 * pad or kw > w + 2 * pad:
        raise DimensionError(
            f"conv2d kernel ({kh}x{kw}) exceeds padded input ({h + 2 * pad}x{w + 2 * pad}) "
            f"on axes (2,3)"
        )

    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x.data
    windows = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    ho, wo = windows.shape[2], windows.shape[3]
    # im2col: (N*ho*wo, Cin*kh*kw) @ (Cin*kh*kw, Cout)
    cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, cin * kh * kw)
    wmat = weight.data.reshape(cout, cin * kh * kw)
    out = cols @ wmat.T
    out += bias.data
    out = out.reshape(n, ho, wo, cout).transpose(0, 3, 1, 2)
    out = np.ascontiguousarray(out)

    def backward(gy):
        gy_mat = gy.transpose(0, 2, 3, 1).reshape(n * ho * wo, cout)
        if bias.requires_grad:
            bias.accumulate_grad(gy_mat.sum(axis=0))
        if weight.requires_grad:
            # recompute the column view instead of retaining the big matrix
            win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
            c = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, cin * kh * kw)
            weight.accumulate_grad((gy_mat.T @ c).reshape(cout, cin, kh, kw))
        if x.requires_grad:
            gcols = (gy_mat @ wmat).reshape(n, ho, wo, cin, kh, kw).transpose(0, 3, 1, 2, 4, 5)
            gxp = np.zeros_like(xp)
            for i in range(kh):
                for j in range(kw):
                    gxp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += gcols[
                        :, :, :, :, i, j
                    ]
            if pad:
                gxp = gxp[:, :, pad : pad + h, pad : pad + w]
            x.accumulate_grad(gxp)

    return _result(out, (x, weight, bias), backward)


def maxpool2(x: Tensor) -> Tensor:
    """2x2 non-overlapping max pooling; ties route the gradient to the first
    window position in row-major order."""
    if x.data.ndim != 4:
        raise DimensionError(f"maxpool2 input must be 4-D, got {x.data.ndim}-D")
    n, c, h, w = x.data.shape
    if h % 2 or w % 2:
        raise DimensionError(f"maxpool2 requires even spatial dims, got {h}x{w}")
    win = x.data.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5)
    win = win.reshape(n, c, h // 2, w // 2, 4)
    idx = np.argmax(win, axis=-1)
    out = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]

    def backward(gy):
        if x.requires_grad:
            gwin = np.zeros((n, c, h // 2, w // 2, 4), dtype=gy.dtype)
            np.put_along_axis(gwin, idx[..., None], gy[..., None], axis=-1)
            gx = gwin.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
            x.accumulate_grad(gx.reshape(n, c, h, w))

    return _result(np.ascontiguousarray(out), (x,), backward)


def linear(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Affine map: (N, D) @ (K, D)^T + (K,)."""
    if x.data.ndim != 2 or weight.data.ndim != 2:
        raise DimensionError(
            f"linear expects 2-D input and weight, got {x.data.ndim}-D and {weight.data.ndim}-D"
        )
    n, d = x.data.shape
    k, d_w = weight.data.shape
    if d != d_w:
        raise DimensionError(f"linear inner-dimension mismatch: input has {d}, weight has {d_w}")
    if bias.data.shape != (k,):
        raise DimensionError(f"linear bias must have shape ({k},), got {bias.data.shape}")
    out = x.data @ weight.data.T + bias.data

    def backward(gy):
        if bias.requires_grad:
            bias.accumulate_grad(gy.sum(axis=0))
        if weight.requires_grad:
            weight.accumulate_grad(gy.T @ x.data)
        if x.requires_grad:
            x.accumulate_grad(gy @ weight.data)

    return _result(out, (x, weight, bias), backward)


def relu(x: Tensor) -> Tensor:
    out = np.maximum(x.data, 0)

    def backward(gy):
        if x.requires_grad:
            x.accumulate_grad(gy * (x.data > 0))

    return _result(out, (x,), backward)


def flatten(x: Tensor) -> Tensor:
    """(N, ...) -> (N, prod(...))."""
    n = x.data.shape[0]
    out = x.data.reshape(n, -1)

    def backward(gy):
        if x.requires_grad:
            x.accumulate_grad(gy.reshape(x.data.shape))

    return _result(out, (x,), backward)


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum of two same-shape tensors (residual connections)."""
    if a.data.shape != b.data.shape:
        raise DimensionError(f"add shape mismatch: {a.data.shape} vs {b.data.shape}")
    out = a.data + b.data

    def backward(gy):
        if a.requires_grad:
            a.accumulate_grad(gy)
        if b.requires_grad:
            b.accumulate_grad(gy)

    return _result(out, (a, b), backward)


def scale_shift(x: Tensor, factor: float, shift) -> Tensor:
    """x * factor + shift for a scalar factor and a constant same-shape shift.

    Puts a network output back on an external skip connection inside the
    graph; only ``x`` receives gradient.
    """
    s = np.asarray(shift, dtype=x.data.dtype)
    if s.shape != x.data.shape:
        raise DimensionError(f"scale_shift shape mismatch: {x.data.shape} vs {s.shape}")
    out = x.data * x.data.dtype.type(factor) + s

    def backward(gy):
        if x.requires_grad:
            x.accumulate_grad(gy * factor)

    return _result(out, (x,), backward)


def pixel_shuffle(x: Tensor, factor: int) -> Tensor:
    """Rearrange (N, C*r^2, H, W) into (N, C, H*r, W*r) sub-pixel planes."""
    n, c, h, w = x.data.shape
    r = factor
    if c % (r * r):
        raise DimensionError(f"pixel_shuffle needs channels divisible by {r * r}, got {c}")
    co = c // (r * r)
    out = x.data.reshape(n, co, r, r, h, w).transpose(0, 1, 4, 2, 5, 3).reshape(n, co, h * r, w * r)

    def backward(gy):
        if x.requires_grad:
            g = gy.reshape(n, co, h, r, w, r).transpose(0, 1, 3, 5, 2, 4).reshape(n, c, h, w)
            x.accumulate_grad(np.ascontiguousarray(g))

    return _result(np.ascontiguousarray(out), (x,), backward)


# ---------------------------------------------------------------------------
# classification head


def softmax(z: Tensor) -> Tensor:
    """Row-wise softmax over (N, C) logits, computed with max subtraction."""
    if z.data.ndim != 2:
        raise DimensionError(f"softmax expects (N, C) logits, got {z.data.ndim}-D")
    if np.isnan(z.data).any():
        raise NumericsError("NaN in softmax input")
    shifted = z.data - z.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    p = e / e.sum(axis=1, keepdims=True)

    def backward(gy):
        if z.requires_grad:
            inner = (gy * p).sum(axis=1, keepdims=True)
            z.accumulate_grad(p * (gy - inner))

    return _result(p, (z,), backward)


class _ClampCounter:
    """Counts how often the loss had to clamp log(0) at a true class."""

    def __init__(self):
        self._lock = threading.Lock()
        self._count = 0

    def bump(self, n=1):
        with self._lock:
            self._count += n

    @property
    def count(self):
        return self._count

    def reset(self):
        with self._lock:
            self._count = 0


log_clamp_warnings = _ClampCounter()


def cross_entropy_loss(y_hat: Tensor, y_true) -> Tensor:
    """Mean over the batch of -(1/|C|) * sum_c y_c * log(y_hat_c).

    ``y_true`` is a one-hot (N, C) array. The 1/|C| factor is part of the
    loss definition used here (it rescales gradients by 1/C relative to the
    plain one-hot cross-entropy). Probabilities at the true class are clamped
    below at 1e-12; each clamped row bumps ``log_clamp_warnings``.
    """
    y = _as_array(y_true, y_hat)
    if y_hat.data.ndim != 2 or y.shape != y_hat.data.shape:
        raise DimensionError(
            f"cross_entropy_loss shape mismatch: y_hat {y_hat.data.shape} vs y {y.shape}"
        )
    n, c = y_hat.data.shape
    p = y_hat.data
    clamped_true = (y > 0) & (p <= LOG_CLAMP)
    n_clamped = int(clamped_true.sum())
    if n_clamped:
        log_clamp_warnings.bump(n_clamped)
    logs = np.log(np.maximum(p, LOG_CLAMP))
    loss = -(y * logs).sum() / (c * n)
    out = np.asarray(loss, dtype=p.dtype).reshape(())

    def backward(gy):
        if y_hat.requires_grad:
            g = np.where(p > LOG_CLAMP, -y / np.maximum(p, LOG_CLAMP), 0.0) / (c * n)
            y_hat.accumulate_grad(g * gy)

    return _result(out, (y_hat,), backward)


def weighted_l1(pred: Tensor, target, sample_weight) -> Tensor:
    """Mean absolute error averaged over the samples with non-zero weight.

    ``sample_weight`` has shape (N,); samples with weight 0 contribute neither
    loss nor gradient. With all weights equal to 1 this is the plain batch L1.
    """
    t = _as_array(target, pred)
    if t.shape != pred.data.shape:
        raise DimensionError(f"weighted_l1 shape mismatch: {pred.data.shape} vs {t.shape}")
    w = np.asarray(sample_weight, dtype=pred.data.dtype).reshape(-1)
    n = pred.data.shape[0]
    if w.shape != (n,):
        raise DimensionError(f"sample_weight must have shape ({n},), got {w.shape}")
    per_elem = pred.data.size // n
    denom = max(float(w.sum()), 1.0) * per_elem
    diff = pred.data - t
    wview = w.reshape((n,) + (1,) * (pred.data.ndim - 1))
    out = np.asarray((np.abs(diff) * wview).sum() / denom, dtype=pred.data.dtype).reshape(())

    def backward(gy):
        if pred.requires_grad:
            pred.accumulate_grad(gy * np.sign(diff) * wview / denom)

    return _result(out, (pred,), backward)


# ---------------------------------------------------------------------------
# parameter initialisation


def kaiming_conv(rng: np.random.Generator, cout, cin, kh, kw) -> Tensor:
    """Fan-in scaled normal init for a conv weight feeding a ReLU."""
    std = np.sqrt(2.0 / (cin * kh * kw))
    return Tensor(rng.normal(0.0, std, size=(cout, cin, kh, kw)), requires_grad=True)


def kaiming_linear(rng: np.random.Generator, k, d) -> Tensor:
    std = np.sqrt(2.0 / d)
    return Tensor(rng.normal(0.0, std, size=(k, d)), requires_grad=True)


def zeros(shape) -> Tensor:
    return Tensor(np.zeros(shape, dtype=np.float32), requires_grad=True)
