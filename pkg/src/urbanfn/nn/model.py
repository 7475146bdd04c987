"""Two-resolution fully convolutional segmentation net.

A small network that keeps a full-resolution feature branch alive next
to a half-resolution branch and exchanges information between them once
before the classifier head:

    stem:   7 -> 16, 3x3                      (full res)
    high:   16 -> 16 -> 16, two 3x3 convs     (full res)
    low:    16 -> 32 stride-2, then 32 -> 32 -> 32   (half res)
    fuse:   high -> 3x3 stride-2 -> added into low
            low  -> 1x1 32->16 -> upsampled x2 -> added into high
    head:   1x1 over concat(high + up, up), 32 -> 8 logits

Every conv except the head is followed by ReLU. Spatial dims must be
even and at least 4 so the upsample returns to the exact input size.
"""

from __future__ import annotations

import hashlib
import json

import numpy as np

from . import ops

N_CLASSES = 8
IN_CHANNELS = 7

PARAM_SHAPES = {
    "stem_w": (16, IN_CHANNELS, 3, 3), "stem_b": (16,),
    "high1_w": (16, 16, 3, 3), "high1_b": (16,),
    "high2_w": (16, 16, 3, 3), "high2_b": (16,),
    "down_w": (32, 16, 3, 3), "down_b": (32,),
    "low1_w": (32, 32, 3, 3), "low1_b": (32,),
    "low2_w": (32, 32, 3, 3), "low2_b": (32,),
    "fuse_down_w": (32, 16, 3, 3), "fuse_down_b": (32,),
    "fuse_up_w": (16, 32, 1, 1), "fuse_up_b": (16,),
    "head_w": (N_CLASSES, 32, 1, 1), "head_b": (N_CLASSES,),
}

PARAM_ORDER = tuple(PARAM_SHAPES)

# conv params whose output feeds a ReLU, matched to the cache key of the
# activation they produce (used by tests to find nonlinearity crossings)
RELU_ACTIVATIONS = ("s", "h1", "h", "d", "l1", "l", "fd", "fu")

_STRIDE2 = {"down_w", "fuse_down_w"}


def arch_fingerprint() -> str:
    """Stable id of the layer layout, stored in checkpoints."""
    desc = {name: list(shape) for name, shape in PARAM_SHAPES.items()}
    desc["stride2"] = sorted(_STRIDE2)
    desc["classes"] = N_CLASSES
    blob = json.dumps(desc, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def init_params(seed, dtype=np.float32):
    """Glorot-uniform weights, zero biases, in PARAM_ORDER draw order."""
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x70D0]))
    params = {}
    for name in PARAM_ORDER:
        shape = PARAM_SHAPES[name]
        if name.endswith("_b"):
            params[name] = np.zeros(shape, dtype=dtype)
            continue
        cout, cin, kh, kw = shape
        fan_in = cin * kh * kw
        fan_out = cout * kh * kw
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        params[name] = rng.uniform(-limit, limit, size=shape).astype(dtype)
    return params


def _validate_params(params):
    for name, shape in PARAM_SHAPES.items():
        if name not in params:
            raise ValueError(f"missing parameter {name}")
        if tuple(params[name].shape) != shape:
            raise ValueError(f"parameter {name} has shape {params[name].shape}, expected {shape}")


def net_forward(x, params):
    """Returns (logits [n, 8, h, w], cache for net_backward)."""
    _validate_params(params)
    if x.ndim != 4 or x.shape[1] != IN_CHANNELS:
        raise ValueError(f"input must be [n, {IN_CHANNELS}, h, w]")
    n, _, h, w = x.shape
    if h < 4 or w < 4 or h % 2 or w % 2:
        raise ValueError(f"spatial dims must be even and >= 4, got {h}x{w}")

    s = ops.relu(ops.conv2d(x, params["stem_w"], params["stem_b"]))
    h1 = ops.relu(ops.conv2d(s, params["high1_w"], params["high1_b"]))
    hf = ops.relu(ops.conv2d(h1, params["high2_w"], params["high2_b"]))
    d = ops.relu(ops.conv2d(s, params["down_w"], params["down_b"], stride=2))
    l1 = ops.relu(ops.conv2d(d, params["low1_w"], params["low1_b"]))
    lf = ops.relu(ops.conv2d(l1, params["low2_w"], params["low2_b"]))
    fd = ops.relu(ops.conv2d(hf, params["fuse_down_w"], params["fuse_down_b"], stride=2))
    lp = lf + fd
    fu = ops.relu(ops.conv2d(lp, params["fuse_up_w"], params["fuse_up_b"]))
    u = ops.bilinear_resize(fu, h, w)
    hp = hf + u
    cat = np.concatenate([hp, u], axis=1)
    logits = ops.conv2d(cat, params["head_w"], params["head_b"])

    cache = {"x": x, "s": s, "h1": h1, "h": hf, "d": d, "l1": l1, "l": lf,
             "fd": fd, "lp": lp, "fu": fu, "u": u, "cat": cat}
    return logits, cache


def net_backward(grad_logits, params, cache):
    """Parameter gradients for net_forward, same keys as `params`."""
    x, s, h1, hf = cache["x"], cache["s"], cache["h1"], cache["h"]
    d, l1, lf = cache["d"], cache["l1"], cache["l"]
    lp, fu, cat = cache["lp"], cache["fu"], cache["cat"]
    n, _, h, w = x.shape
    grads = {}

    g_cat, grads["head_w"], grads["head_b"] = ops.conv2d_backward(
        cat, params["head_w"], grad_logits)
    g_hp = g_cat[:, :16]
    g_u = g_cat[:, 16:] + g_hp          # u feeds both concat halves via hp
    g_h = g_hp.copy()

    g_fu = ops.relu_backward(fu, ops.bilinear_resize_backward(
        fu.shape[2], fu.shape[3], g_u))
    g_lp, grads["fuse_up_w"], grads["fuse_up_b"] = ops.conv2d_backward(
        lp, params["fuse_up_w"], g_fu)

    g_fd = ops.relu_backward(cache["fd"], g_lp)
    g_h2, grads["fuse_down_w"], grads["fuse_down_b"] = ops.conv2d_backward(
        hf, params["fuse_down_w"], g_fd, stride=2)
    g_h += g_h2

    g_l = ops.relu_backward(lf, g_lp)
    g_l1, grads["low2_w"], grads["low2_b"] = ops.conv2d_backward(
        l1, params["low2_w"], g_l)
    g_d = ops.relu_backward(l1, g_l1)
    g_d2, grads["low1_w"], grads["low1_b"] = ops.conv2d_backward(
        d, params["low1_w"], g_d)
    g_d3 = ops.relu_backward(d, g_d2)
    g_s_low, grads["down_w"], grads["down_b"] = ops.conv2d_backward(
        s, params["down_w"], g_d3, stride=2)

    g_h = ops.relu_backward(hf, g_h)
    g_h1, grads["high2_w"], grads["high2_b"] = ops.conv2d_backward(
        h1, params["high2_w"], g_h)
    g_h1 = ops.relu_backward(h1, g_h1)
    g_s_high, grads["high1_w"], grads["high1_b"] = ops.conv2d_backward(
        s, params["high1_w"], g_h1)

    g_s = ops.relu_backward(s, g_s_high + g_s_low)
    _, grads["stem_w"], grads["stem_b"] = ops.conv2d_backward(
        x, params["stem_w"], g_s)
    return grads


def relu_sign_pattern(cache):
    """Concatenated boolean activation signs, for kink detection in tests."""
    return np.concatenate([(cache[k] > 0).ravel() for k in RELU_ACTIVATIONS])
