import json
import os

import numpy as np
import pytest

from urbanfn.nn import init_params, load_checkpoint, save_checkpoint


def _stats():
    return np.stack([np.arange(7, dtype=np.float64),
                     np.linspace(0.5, 2.0, 7)], axis=1)


def test_round_trip_is_exact(tmp_path):
    params = init_params(9)
    stats = _stats()
    meta = {"epochs": 3, "note": "fixture"}
    path = tmp_path / "ckpt"
    save_checkpoint(path, params, stats, meta)

    loaded, loaded_stats, loaded_meta = load_checkpoint(path)
    assert set(loaded) == set(params)
    for name in params:
        assert loaded[name].dtype == params[name].dtype
        assert loaded[name].tobytes() == params[name].tobytes()
    assert loaded_stats.tobytes() == stats.tobytes()
    assert loaded_meta == meta


def test_float64_params_round_trip(tmp_path):
    params = init_params(1, dtype=np.float64)
    save_checkpoint(tmp_path / "c", params, _stats())
    loaded, _, meta = load_checkpoint(tmp_path / "c")
    assert loaded["stem_w"].dtype == np.float64
    assert loaded["stem_w"].tobytes() == params["stem_w"].tobytes()
    assert meta == {}


def test_save_is_deterministic(tmp_path):
    params = init_params(4)
    for sub in ("a", "b"):
        save_checkpoint(tmp_path / sub, params, _stats(), {"k": 1})
    for name in sorted(os.listdir(tmp_path / "a")):
        with open(tmp_path / "a" / name, "rb") as fa, \
                open(tmp_path / "b" / name, "rb") as fb:
            assert fa.read() == fb.read(), name
    assert sorted(os.listdir(tmp_path / "a")) == sorted(os.listdir(tmp_path / "b"))


def test_format_mismatch_rejected(tmp_path):
    save_checkpoint(tmp_path / "c", init_params(0), _stats())
    manifest_path = tmp_path / "c" / "manifest.json"
    manifest = json.loads(manifest_path.read_text())
    manifest["format"] = "something-else"
    manifest_path.write_text(json.dumps(manifest))
    with pytest.raises(ValueError, match="format"):
        load_checkpoint(tmp_path / "c")


def test_arch_mismatch_rejected(tmp_path):
    save_checkpoint(tmp_path / "c", init_params(0), _stats())
    manifest_path = tmp_path / "c" / "manifest.json"
    manifest = json.loads(manifest_path.read_text())
    manifest["arch"] = "0" * 16
    manifest_path.write_text(json.dumps(manifest))
    with pytest.raises(ValueError, match="architecture"):
        load_checkpoint(tmp_path / "c")
    # but a caller that only wants the tensors can opt out
    params, _, _ = load_checkpoint(tmp_path / "c", expect_model=False)
    assert "stem_w" in params


def test_missing_tensor_rejected(tmp_path):
    params = init_params(0)
    save_checkpoint(tmp_path / "c", params, _stats())
    manifest_path = tmp_path / "c" / "manifest.json"
    manifest = json.loads(manifest_path.read_text())
    manifest["tensors"] = [e for e in manifest["tensors"]
                           if e["name"] != "head_w"]
    manifest_path.write_text(json.dumps(manifest))
    with pytest.raises(ValueError, match="head_w"):
        load_checkpoint(tmp_path / "c")


def test_wrong_shape_rejected(tmp_path):
    params = init_params(0)
    params["head_b"] = np.zeros(9, dtype=np.float32)   # should be 8
    save_checkpoint(tmp_path / "c", params, _stats())
    with pytest.raises(ValueError, match="head_b"):
        load_checkpoint(tmp_path / "c")


def test_unsupported_dtype_rejected(tmp_path):
    params = init_params(0)
    params["head_b"] = params["head_b"].astype(np.float16)
    with pytest.raises(ValueError, match="dtype"):
        save_checkpoint(tmp_path / "c", params, _stats())
