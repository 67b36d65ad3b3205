"""Versioned binary checkpoint container.

Layout: magic bytes, format version, a JSON header (configs, epoch, rng
state, normalization), then a named tensor table with dtype/shape and raw
little-endian data. Round-trips are bit-exact.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import CheckpointError

MAGIC = b"SGFG"
FORMAT_VERSION = 1

_DTYPE_CODES = {"<f4": 0, "<f8": 1, "<i8": 2}
_CODE_DTYPES = {v: np.dtype(k) for k, v in _DTYPE_CODES.items()}


@dataclass
class CheckpointRecord:
    model_config: dict
    train_config: dict
    epoch: int
    best_val_miou: float
    params: dict = field(default_factory=dict)      # name -> ndarray
    buffers: dict = field(default_factory=dict)     # name -> ndarray (BN running stats)
    velocities: dict = field(default_factory=dict)  # name -> ndarray
    rng_state: dict | None = None
    preprocessing: dict | None = None  # normalization stats + patch spec
    patch: np.ndarray | None = None    # sea-surface padding patch pixels


def _write_tensor(fh, name: str, arr: np.ndarray) -> None:
    arr = np.ascontiguousarray(arr)
    dt = arr.dtype.newbyteorder("<")
    code = _DTYPE_CODES.get(dt.str)
    if code is None:
        raise CheckpointError(f"unsupported tensor dtype {arr.dtype} for {name!r}")
    name_bytes = name.encode("utf-8")
    fh.write(struct.pack("<H", len(name_bytes)))
    fh.write(name_bytes)
    fh.write(struct.pack("<BB", code, arr.ndim))
    for dim in arr.shape:
        fh.write(struct.pack("<Q", dim))
    fh.write(arr.astype(dt, copy=False).tobytes())


def _read_exact(fh, count: int) -> bytes:
    data = fh.read(count)
    if len(data) != count:
        raise CheckpointError("truncated checkpoint file")
    return data


def _read_tensor(fh):
    (name_len,) = struct.unpack("<H", _read_exact(fh, 2))
    name = _read_exact(fh, name_len).decode("utf-8")
    code, ndim = struct.unpack("<BB", _read_exact(fh, 2))
    dtype = _CODE_DTYPES.get(code)
    if dtype is None:
        raise CheckpointError(f"unknown dtype code {code} for tensor {name!r}")
    shape = tuple(struct.unpack("<Q", _read_exact(fh, 8))[0] for _ in range(ndim))
    count = int(np.prod(shape, dtype=np.int64)) if shape else 1
    raw = _read_exact(fh, count * dtype.itemsize)
    return name, np.frombuffer(raw, dtype=dtype).reshape(shape).copy()


def save_checkpoint(record: CheckpointRecord, path) -> None:
    header = {
        "format_version": FORMAT_VERSION,
        "model_config": record.model_config,
        "train_config": record.train_config,
        "epoch": record.epoch,
        "best_val_miou": record.best_val_miou,
        "rng_state": record.rng_state,
        "preprocessing": record.preprocessing,
        "tensor_sections": {
            "param": sorted(record.params),
            "buffer": sorted(record.buffers),
            "velocity": sorted(record.velocities),
            "extra": ["patch"] if record.patch is not None else [],
        },
    }
    header_bytes = json.dumps(header).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<Q", len(header_bytes)))
        fh.write(header_bytes)
        tensors = []
        for name in header["tensor_sections"]["param"]:
            tensors.append(("param/" + name, record.params[name]))
        for name in header["tensor_sections"]["buffer"]:
            tensors.append(("buffer/" + name, record.buffers[name]))
        for name in header["tensor_sections"]["velocity"]:
            tensors.append(("velocity/" + name, record.velocities[name]))
        if record.patch is not None:
            tensors.append(("extra/patch", record.patch))
        fh.write(struct.pack("<Q", len(tensors)))
        for name, arr in tensors:
            _write_tensor(fh, name, arr)


def load_checkpoint(path) -> CheckpointRecord:
    with open(path, "rb") as fh:
        if _read_exact(fh, 4) != MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
        (version,) = struct.unpack("<I", _read_exact(fh, 4))
        if version != FORMAT_VERSION:
            raise CheckpointError(
                f"{path}: format version {version} unsupported (expected {FORMAT_VERSION})"
            )
        (header_len,) = struct.unpack("<Q", _read_exact(fh, 8))
        header = json.loads(_read_exact(fh, header_len).decode("utf-8"))
        (n_tensors,) = struct.unpack("<Q", _read_exact(fh, 8))
        record = CheckpointRecord(
            model_config=header["model_config"],
            train_config=header["train_config"],
            epoch=header["epoch"],
            best_val_miou=header["best_val_miou"],
            rng_state=header.get("rng_state"),
            preprocessing=header.get("preprocessing"),
        )
        for _ in range(n_tensors):
            name, arr = _read_tensor(fh)
            section, _, key = name.partition("/")
            if section == "param":
                record.params[key] = arr
            elif section == "buffer":
                record.buffers[key] = arr
            elif section == "velocity":
                record.velocities[key] = arr
            elif name == "extra/patch":
                record.patch = arr
            else:
                raise CheckpointError(f"unknown tensor section in {name!r}")
    return record


def snapshot_model(model) -> tuple[dict, dict]:
    params = {name: p.data.copy() for name, p in model.named_parameters()}
    buffers = {name: b.data.copy() for name, b in model.named_buffers()}
    return params, buffers


def restore_model(model, record: CheckpointRecord) -> None:
    """Copy checkpoint tensors into the model; name sets must match exactly."""
    model_params = dict(model.named_parameters())
    if set(model_params) != set(record.params):
        diff = sorted(set(model_params) ^ set(record.params))
        raise CheckpointError(f"parameter name set mismatch, first difference: {diff[0]!r}")
    for name, p in model_params.items():
        arr = record.params[name]
        if tuple(arr.shape) != tuple(p.data.shape):
            raise CheckpointError(
                f"parameter {name!r} shape {arr.shape} does not match model {p.data.shape}"
            )
        p.data[...] = arr.astype(p.data.dtype, copy=False)
        p.grad = None
    model_buffers = dict(model.named_buffers())
    if set(model_buffers) != set(record.buffers):
        diff = sorted(set(model_buffers) ^ set(record.buffers))
        raise CheckpointError(f"buffer name set mismatch, first difference: {diff[0]!r}")
    for name, b in model_buffers.items():
        b.data[...] = record.buffers[name].astype(b.data.dtype, copy=False)
