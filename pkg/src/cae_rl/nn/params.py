"""Parameter-collection utilities: soft update, counting, checkpoint files.

Checkpoint layout (version tag ``cae-rl/ckpt/1``)::

    b"cae-rl/ckpt/1\\n"
    uint64 little-endian: byte length of the JSON manifest
    JSON manifest: {"format", "tensors": [{"name", "shape", "offset"}], "meta"}
    raw little-endian float64 data; offsets are relative to its start
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..errors import DimensionError, ValidationError

CKPT_TAG = "cae-rl/ckpt/1"


def unique_arrays(params: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    """Drop names that alias an array already listed."""
    seen = set()
    out = {}
    for name, arr in params.items():
        if id(arr) not in seen:
            seen.add(id(arr))
            out[name] = arr
    return out


def soft_update(target: dict[str, np.ndarray], online: dict[str, np.ndarray], tau: float):
    """Polyak averaging ``target <- tau * online + (1 - tau) * target`` in place."""
    if not 0.0 < tau <= 1.0:
        raise ValueError(f"tau must lie in (0, 1], got {tau}")
    if target.keys() != online.keys():
        missing = sorted(set(target) ^ set(online))
        raise DimensionError(f"soft_update: parameter names differ: {missing[:5]}")
    for name, t in unique_arrays(target).items():
        o = online[name]
        if o.shape != t.shape:
            raise DimensionError(f"soft_update: {name} shape {o.shape} vs {t.shape}")
        if tau == 1.0:
            t[...] = o
        else:
            t *= 1.0 - tau
            t += tau * o
    return target


def hard_update(target: dict[str, np.ndarray], online: dict[str, np.ndarray]):
    return soft_update(target, online, 1.0)


def param_count(params: dict[str, np.ndarray]) -> int:
    """Number of scalars across distinct tensors (shared arrays count once)."""
    return int(sum(a.size for a in unique_arrays(params).values()))


def save_checkpoint(path, tensors: dict[str, np.ndarray], meta: dict | None = None) -> None:
    entries = []
    offset = 0
    for name, arr in tensors.items():
        arr = np.asarray(arr, dtype=np.float64)
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
        offset += arr.size * 8
    manifest = json.dumps(
        {"format": CKPT_TAG, "tensors": entries, "meta": meta or {}}, sort_keys=True
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CKPT_TAG.encode("ascii") + b"\n")
        fh.write(struct.pack("<Q", len(manifest)))
        fh.write(manifest)
        for arr in tensors.values():
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    raw = Path(path).read_bytes()
    tag = (CKPT_TAG + "\n").encode("ascii")
    if not raw.startswith(tag):
        raise ValidationError(f"{path}: not a {CKPT_TAG} checkpoint")
    pos = len(tag)
    (n,) = struct.unpack_from("<Q", raw, pos)
    pos += 8
    manifest = json.loads(raw[pos:pos + n].decode("utf-8"))
    data = raw[pos + n:]
    tensors = {}
    for e in manifest["tensors"]:
        count = int(np.prod(e["shape"], dtype=np.int64))
        arr = np.frombuffer(data, dtype="<f8", count=count, offset=e["offset"])
        tensors[e["name"]] = arr.reshape(e["shape"]).astype(np.float64)
    return tensors, manifest["meta"]


def assign(params: dict[str, np.ndarray], values: dict[str, np.ndarray]) -> None:
    """Copy ``values`` into existing arrays, checking names and shapes."""
    for name, arr in params.items():
        if name not in values:
            raise ValidationError(f"checkpoint missing tensor {name}")
        v = values[name]
        if v.shape != arr.shape:
            raise DimensionError(f"checkpoint tensor {name} has shape {v.shape}, expected {arr.shape}")
        arr[...] = v
