"""Array operators with hand-derived backward passes.

Everything here is dtype-generic: float32 in training, float64 in the
finite-difference harness. Forward functions return plain arrays;
backward functions take the saved forward inputs plus the upstream
gradient and return gradients in the same dtype.
"""

from __future__ import annotations

import numpy as np

_KERNELS = (1, 3)
_STRIDES = (1, 2)


def _check_conv_args(x, weight, bias, stride):
    if x.ndim != 4:
        raise ValueError(f"conv input must be [n, c, h, w], got ndim={x.ndim}")
    if weight.ndim != 4:
        raise ValueError("conv weight must be [out, in, kh, kw]")
    cout, cin, kh, kw = weight.shape
    if kh != kw or kh not in _KERNELS:
        raise ValueError(f"kernel must be square 1x1 or 3x3, got {kh}x{kw}")
    if x.shape[1] != cin:
        raise ValueError(f"channel mismatch: input has {x.shape[1]}, weight expects {cin}")
    if bias is not None and bias.shape != (cout,):
        raise ValueError(f"bias must be [{cout}]")
    if stride not in _STRIDES:
        raise ValueError(f"stride must be 1 or 2, got {stride}")
    return cout, cin, kh


def _pad_input(x, pad):
    if pad == 0:
        return x
    n, c, h, w = x.shape
    xp = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=x.dtype)
    xp[:, :, pad:pad + h, pad:pad + w] = x
    return xp


def conv2d(x, weight, bias, stride=1):
    """2-D convolution, zero padding (kernel-1)//2, output ceil(size/stride).

    x [n, cin, h, w]; weight [cout, cin, k, k]; bias [cout] or None.
    Computed as k*k shifted strided slices contracted against the kernel
    taps, which keeps everything inside BLAS-backed einsum calls.
    """
    cout, cin, k = _check_conv_args(x, weight, bias, stride)
    n, _, h, w = x.shape
    pad = (k - 1) // 2
    ho = -(-h // stride)
    wo = -(-w // stride)
    xp = _pad_input(x, pad)
    out = np.zeros((n, cout, ho, wo), dtype=x.dtype)
    for di in range(k):
        for dj in range(k):
            patch = xp[:, :, di:di + (ho - 1) * stride + 1:stride,
                       dj:dj + (wo - 1) * stride + 1:stride]
            out += np.einsum("ncij,oc->noij", patch, weight[:, :, di, dj],
                             optimize=True)
    if bias is not None:
        out += bias[None, :, None, None]
    return out


def conv2d_backward(x, weight, grad_out, stride=1):
    """Gradients of conv2d wrt input, weight and bias.

    Returns (grad_x, grad_weight, grad_bias). The input gradient is
    scattered through the same strided slices used by the forward pass,
    so each padded position is written by plain slice arithmetic.
    """
    cout, cin, k = _check_conv_args(x, weight, np.zeros(weight.shape[0], x.dtype), stride)
    n, _, h, w = x.shape
    pad = (k - 1) // 2
    ho = -(-h // stride)
    wo = -(-w // stride)
    if grad_out.shape != (n, cout, ho, wo):
        raise ValueError(f"grad_out must be {(n, cout, ho, wo)}, got {grad_out.shape}")
    xp = _pad_input(x, pad)
    gxp = np.zeros_like(xp)
    gw = np.zeros_like(weight)
    for di in range(k):
        for dj in range(k):
            sl_i = slice(di, di + (ho - 1) * stride + 1, stride)
            sl_j = slice(dj, dj + (wo - 1) * stride + 1, stride)
            patch = xp[:, :, sl_i, sl_j]
            gw[:, :, di, dj] = np.einsum("noij,ncij->oc", grad_out, patch,
                                         optimize=True)
            gxp[:, :, sl_i, sl_j] += np.einsum("noij,oc->ncij", grad_out,
                                               weight[:, :, di, dj], optimize=True)
    gx = gxp[:, :, pad:pad + h, pad:pad + w] if pad else gxp
    gb = grad_out.sum(axis=(0, 2, 3))
    return np.ascontiguousarray(gx), gw, gb


def relu(x):
    return np.maximum(x, 0)


def relu_backward(x, grad_out):
    """Subgradient 0 at exactly zero."""
    return grad_out * (x > 0)


def _interp_matrix(n_in, n_out):
    """Row-stochastic-ish resize operator for one axis, float64.

    Output sample i reads continuous source coordinate
    (i + 0.5) * n_in/n_out - 0.5. Interior coordinates blend the two
    straddling samples; coordinates past either end keep the edge
    segment's slope (linear extrapolation), so resizing a linear ramp
    is exact at every position including the borders.
    """
    if n_in < 2:
        raise ValueError(f"resize needs at least 2 samples per axis, got {n_in}")
    if n_out < 1:
        raise ValueError("output size must be positive")
    s = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
    seg = np.clip(np.floor(s).astype(np.int64), 0, n_in - 2)
    frac = s - seg
    m = np.zeros((n_out, n_in), dtype=np.float64)
    rows = np.arange(n_out)
    m[rows, seg] = 1.0 - frac
    m[rows, seg + 1] += frac
    return m


def bilinear_resize(x, out_h, out_w):
    """Separable bilinear resize of [n, c, h, w] to [n, c, out_h, out_w]."""
    if x.ndim != 4:
        raise ValueError("resize input must be [n, c, h, w]")
    mh = _interp_matrix(x.shape[2], out_h).astype(x.dtype)
    mw = _interp_matrix(x.shape[3], out_w).astype(x.dtype)
    return np.matmul(np.matmul(mh, x), mw.T)


def bilinear_resize_backward(in_h, in_w, grad_out):
    """Adjoint of bilinear_resize: y = A x B^T  =>  dx = A^T g B."""
    if grad_out.ndim != 4:
        raise ValueError("grad_out must be [n, c, h, w]")
    mh = _interp_matrix(in_h, grad_out.shape[2]).astype(grad_out.dtype)
    mw = _interp_matrix(in_w, grad_out.shape[3]).astype(grad_out.dtype)
    return np.matmul(np.matmul(mh.T, grad_out), mw)


def log_softmax(x, axis=1):
    """Numerically stable log softmax along `axis`."""
    shifted = x - x.max(axis=axis, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))


def log_softmax_backward(x, grad_out, axis=1):
    """d/dx of log_softmax contracted with grad_out."""
    p = np.exp(log_softmax(x, axis=axis))
    return grad_out - p * grad_out.sum(axis=axis, keepdims=True)
