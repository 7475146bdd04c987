import numpy as np
import pytest

from urbanfn.nn import (
    PARAM_SHAPES,
    arch_fingerprint,
    init_params,
    net_backward,
    net_forward,
)
from urbanfn.nn.model import PARAM_ORDER, relu_sign_pattern

ARCH_FINGERPRINT = "db9858c9c47ccbbe"


def test_init_shapes_dtypes_and_zero_biases():
    params = init_params(0)
    assert set(params) == set(PARAM_SHAPES)
    for name, arr in params.items():
        assert arr.shape == PARAM_SHAPES[name]
        assert arr.dtype == np.float32
        if name.endswith("_b"):
            assert not arr.any()


def test_init_deterministic_and_seed_sensitive():
    a = init_params(7)
    b = init_params(7)
    c = init_params(8)
    for name in PARAM_ORDER:
        assert a[name].tobytes() == b[name].tobytes()
    assert any(a[n].tobytes() != c[n].tobytes() for n in PARAM_ORDER)


def test_init_respects_uniform_fan_bounds():
    params = init_params(3)
    for name, arr in params.items():
        if name.endswith("_b"):
            continue
        cout, cin, kh, kw = arr.shape
        limit = np.sqrt(6.0 / (cin * kh * kw + cout * kh * kw))
        assert np.abs(arr).max() <= limit
        # a healthy draw should actually use the range
        assert np.abs(arr).max() > 0.5 * limit


def test_forward_shapes_and_cache(rng):
    params = init_params(0)
    x = rng.standard_normal((2, 7, 8, 10)).astype(np.float32)
    logits, cache = net_forward(x, params)
    assert logits.shape == (2, 8, 8, 10)
    assert cache["d"].shape == (2, 32, 4, 5)
    assert cache["u"].shape == (2, 16, 8, 10)
    assert cache["cat"].shape == (2, 32, 8, 10)
    pattern = relu_sign_pattern(cache)
    assert pattern.dtype == bool and pattern.ndim == 1


def test_forward_deterministic(rng):
    params = init_params(1)
    x = rng.standard_normal((1, 7, 6, 6)).astype(np.float32)
    a, _ = net_forward(x, params)
    b, _ = net_forward(x, params)
    assert a.tobytes() == b.tobytes()


def test_forward_input_validation(rng):
    params = init_params(0)
    with pytest.raises(ValueError, match="even"):
        net_forward(np.zeros((1, 7, 5, 6)), params)
    with pytest.raises(ValueError, match="even"):
        net_forward(np.zeros((1, 7, 2, 2)), params)
    with pytest.raises(ValueError, match="input"):
        net_forward(np.zeros((1, 3, 6, 6)), params)
    bad = dict(params)
    del bad["head_w"]
    with pytest.raises(ValueError, match="missing parameter head_w"):
        net_forward(np.zeros((1, 7, 6, 6)), bad)
    bad = dict(params)
    bad["stem_w"] = np.zeros((16, 7, 5, 5), dtype=np.float32)
    with pytest.raises(ValueError, match="stem_w"):
        net_forward(np.zeros((1, 7, 6, 6)), bad)


def test_every_parameter_receives_gradient(rng):
    params = init_params(2, dtype=np.float64)
    x = rng.standard_normal((2, 7, 6, 6))
    logits, cache = net_forward(x, params)
    grads = net_backward(rng.standard_normal(logits.shape), params, cache)
    assert set(grads) == set(PARAM_SHAPES)
    for name, g in grads.items():
        assert g.shape == PARAM_SHAPES[name]
        assert np.isfinite(g).all()
        assert np.abs(g).max() > 0, f"no gradient reached {name}"


def _loss_and_pattern(x, params, probe):
    logits, cache = net_forward(x, params)
    return float(np.sum(logits * probe)), relu_sign_pattern(cache)


def test_composed_network_gradients_match_finite_differences(rng):
    """Numerical check of the whole forward/backward pair.

    Scalar objective sum(logits * probe); analytic gradients come from
    net_backward(probe). Coordinates where a ReLU flips sign inside the
    +/- eps interval are excluded -- the loss is only piecewise smooth.
    """
    params = init_params(5, dtype=np.float64)
    x = rng.standard_normal((1, 7, 6, 6))
    probe = rng.standard_normal((1, 8, 6, 6))

    logits, cache = net_forward(x, params)
    grads = net_backward(probe, params, cache)

    eps = 1e-3
    checked = skipped = 0
    for name in PARAM_ORDER:
        arr = params[name]
        n_coords = min(3, arr.size)
        for idx in rng.choice(arr.size, size=n_coords, replace=False):
            idx = int(idx)
            orig = arr.flat[idx]
            arr.flat[idx] = orig + eps
            f_plus, pat_plus = _loss_and_pattern(x, params, probe)
            arr.flat[idx] = orig - eps
            f_minus, pat_minus = _loss_and_pattern(x, params, probe)
            arr.flat[idx] = orig
            if not np.array_equal(pat_plus, pat_minus):
                skipped += 1
                continue
            fd = (f_plus - f_minus) / (2 * eps)
            analytic = float(grads[name].flat[idx])
            rel = abs(analytic - fd) / max(abs(analytic), abs(fd), 1e-6)
            assert rel < 1e-3, f"{name}[{idx}]: analytic {analytic} vs fd {fd}"
            checked += 1
    assert checked >= 20
    # kink exclusions should stay a small minority of the samples
    assert skipped <= (checked + skipped) // 3


def test_backward_accumulates_both_paths_into_high_branch(rng):
    """The full-res features feed both the head and the downward fuse;
    zeroing the fuse weights must change the high-branch gradients."""
    params = init_params(4, dtype=np.float64)
    x = rng.standard_normal((1, 7, 6, 6))
    probe = rng.standard_normal((1, 8, 6, 6))
    _, cache = net_forward(x, params)
    g_full = net_backward(probe, params, cache)

    cut = {k: v.copy() for k, v in params.items()}
    cut["fuse_down_w"][:] = 0
    _, cache2 = net_forward(x, cut)
    g_cut = net_backward(probe, cut, cache2)
    assert not np.allclose(g_full["high2_w"], g_cut["high2_w"])


def test_arch_fingerprint_frozen():
    assert arch_fingerprint() == ARCH_FINGERPRINT
    assert arch_fingerprint() == arch_fingerprint()
