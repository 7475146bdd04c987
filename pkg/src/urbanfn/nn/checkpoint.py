"""Checkpoint directory format: manifest.json plus one .bin per tensor.

Tensor payloads are little-endian raw bytes in C order; the manifest
records name, shape, dtype and file for each, the architecture
fingerprint, the normalization stats entry, and caller metadata. All
writes are atomic so interrupted runs never leave a readable-but-wrong
checkpoint behind.
"""

from __future__ import annotations

import os

import numpy as np

from ..fileio import atomic_write_bytes, atomic_write_json, read_json
from .model import PARAM_SHAPES, arch_fingerprint

MANIFEST = "manifest.json"
_DTYPES = {"float32": "<f4", "float64": "<f8"}


def _tensor_entry(name, arr):
    dtype = str(arr.dtype)
    if dtype not in _DTYPES:
        raise ValueError(f"unsupported checkpoint dtype {dtype} for {name}")
    return {"name": name, "shape": list(arr.shape), "dtype": dtype,
            "file": f"{name}.bin"}


def save_checkpoint(path, params, norm_stats, meta=None):
    """Write params + normalization stats + metadata under `path`."""
    os.makedirs(path, exist_ok=True)
    entries = []
    for name in sorted(params):
        arr = np.ascontiguousarray(params[name])
        entries.append(_tensor_entry(name, arr))
        atomic_write_bytes(os.path.join(path, f"{name}.bin"),
                           arr.astype(_DTYPES[str(arr.dtype)]).tobytes())
    stats = np.ascontiguousarray(np.asarray(norm_stats, dtype=np.float64))
    atomic_write_bytes(os.path.join(path, "norm_stats.bin"),
                       stats.astype("<f8").tobytes())
    manifest = {
        "format": "urbanfn-checkpoint-1",
        "arch": arch_fingerprint(),
        "tensors": entries,
        "norm_stats": {"shape": list(stats.shape), "dtype": "float64",
                       "file": "norm_stats.bin"},
        "meta": meta or {},
    }
    atomic_write_json(os.path.join(path, MANIFEST), manifest)


def load_checkpoint(path, expect_model=True):
    """Read a checkpoint directory -> (params, norm_stats, meta)."""
    manifest = read_json(os.path.join(path, MANIFEST))
    if manifest.get("format") != "urbanfn-checkpoint-1":
        raise ValueError(f"unrecognized checkpoint format in {path}")
    if expect_model and manifest.get("arch") != arch_fingerprint():
        raise ValueError("checkpoint was written for a different architecture")
    params = {}
    for entry in manifest["tensors"]:
        raw = _read_bytes(os.path.join(path, entry["file"]))
        arr = np.frombuffer(raw, dtype=_DTYPES[entry["dtype"]])
        params[entry["name"]] = arr.reshape(entry["shape"]).astype(entry["dtype"])
    if expect_model:
        for name, shape in PARAM_SHAPES.items():
            if name not in params:
                raise ValueError(f"checkpoint is missing tensor {name}")
            if tuple(params[name].shape) != shape:
                raise ValueError(f"checkpoint tensor {name} has wrong shape")
    ns_entry = manifest["norm_stats"]
    raw = _read_bytes(os.path.join(path, ns_entry["file"]))
    norm_stats = np.frombuffer(raw, dtype="<f8").reshape(ns_entry["shape"]).copy()
    return params, norm_stats, manifest.get("meta", {})


def _read_bytes(path):
    with open(path, "rb") as fh:
        return fh.read()
