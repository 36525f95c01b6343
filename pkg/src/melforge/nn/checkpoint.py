"""Model checkpoints: a flat binary tensor record plus a text manifest.

Binary layout (all integers little-endian):

    magic     8 bytes  b"MELFCKPT"
    version   uint32   currently 1
    arch      uint32 length + utf-8 bytes
    inshape   uint32 ndim + uint32 per extent
    n_tensors uint32
    per tensor (parameters first, then buffers, in graph order):
        name  uint32 length + utf-8 bytes
        kind  uint8  0 = parameter, 1 = buffer
        ndim  uint32, extents uint32 each
        data  float64 little-endian, C order

The sidecar `<checkpoint>.manifest.txt` lists every tensor with its
kind and shape for quick inspection.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .models import Model, build_model

_MAGIC = b"MELFCKPT"
_VERSION = 1


def _write_str(f, s: str):
    raw = s.encode("utf-8")
    f.write(struct.pack("<I", len(raw)))
    f.write(raw)


def _read_str(f) -> str:
    (n,) = struct.unpack("<I", f.read(4))
    return f.read(n).decode("utf-8")


def _write_tensor(f, name: str, kind: int, arr: np.ndarray):
    _write_str(f, name)
    f.write(struct.pack("<B", kind))
    f.write(struct.pack("<I", arr.ndim))
    for extent in arr.shape:
        f.write(struct.pack("<I", extent))
    f.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def _read_tensor(f):
    name = _read_str(f)
    (kind,) = struct.unpack("<B", f.read(1))
    (ndim,) = struct.unpack("<I", f.read(4))
    shape = struct.unpack(f"<{ndim}I", f.read(4 * ndim)) if ndim else ()
    count = int(np.prod(shape)) if shape else 1
    data = np.frombuffer(f.read(8 * count), dtype="<f8").reshape(shape)
    return name, kind, data.astype(np.float64)


def save_checkpoint(path, model: Model) -> None:
    path = Path(path)
    params = model.named_params()
    buffers = model.named_buffers()
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<I", _VERSION))
        _write_str(f, model.arch)
        f.write(struct.pack("<I", len(model.input_shape)))
        for extent in model.input_shape:
            f.write(struct.pack("<I", extent))
        f.write(struct.pack("<I", len(params) + len(buffers)))
        for name, p in params:
            _write_tensor(f, name, 0, p.value)
        for name, b in buffers:
            _write_tensor(f, name, 1, b)
    lines = [f"arch={model.arch}", f"input_shape={'x'.join(map(str, model.input_shape))}"]
    for name, p in params:
        lines.append(f"param {name} {'x'.join(map(str, p.shape))}")
    for name, b in buffers:
        lines.append(f"buffer {name} {'x'.join(map(str, b.shape))}")
    Path(str(path) + ".manifest.txt").write_text("\n".join(lines) + "\n", encoding="ascii")


def load_checkpoint(path) -> Model:
    path = Path(path)
    with open(path, "rb") as f:
        if f.read(8) != _MAGIC:
            raise ValueError(f"{path}: not a melforge checkpoint")
        (version,) = struct.unpack("<I", f.read(4))
        if version != _VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        arch = _read_str(f)
        (ndim,) = struct.unpack("<I", f.read(4))
        input_shape = struct.unpack(f"<{ndim}I", f.read(4 * ndim))
        (n_tensors,) = struct.unpack("<I", f.read(4))
        tensors = dict()
        for _ in range(n_tensors):
            name, kind, data = _read_tensor(f)
            tensors[name] = (kind, data)

    model = build_model(arch, input_shape=input_shape, init_seed=0)
    for name, p in model.named_params():
        if name not in tensors:
            raise ValueError(f"{path}: checkpoint is missing parameter {name}")
        kind, data = tensors[name]
        if data.shape != p.value.shape:
            raise ValueError(f"{path}: shape mismatch for {name}")
        p.value[...] = data
    buffer_values = {name: data for name, (kind, data) in tensors.items() if kind == 1}
    for name, b in model.named_buffers():
        if name not in buffer_values:
            raise ValueError(f"{path}: checkpoint is missing buffer {name}")
        b[...] = buffer_values[name]
    return model
