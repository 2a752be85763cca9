"""AEFV binary model files.

Layout (little-endian, no padding)::

    b"AEFV" | version u32 | input_dim u32 | layer_count u32
    per layer: out u32 | in u32 | activation u8 | out*in f64 (row-major) | out f64
"""

import struct

import numpy as np

from .errors import ModelError
from .nn import Activation, DenseLayer, Network

MAGIC = b"AEFV"
VERSION = 1
_HEADER = struct.Struct("<4sIII")
_LAYER = struct.Struct("<IIB")


def dumps(net):
    parts = [_HEADER.pack(MAGIC, VERSION, net.input_dim, len(net.layers))]
    for layer in net.layers:
        parts.append(_LAYER.pack(layer.out_dim, layer.in_dim, layer.activation.code))
        parts.append(np.ascontiguousarray(layer.weights, dtype="<f8").tobytes())
        parts.append(np.ascontiguousarray(layer.bias, dtype="<f8").tobytes())
    return b"".join(parts)


def loads(buf):
    if len(buf) < _HEADER.size:
        raise ModelError(f"model file truncated: {len(buf)} bytes is shorter than the header")
    magic, version, input_dim, n_layers = _HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise ModelError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise ModelError(f"unsupported model format version {version}")
    pos = _HEADER.size
    layers = []
    for i in range(n_layers):
        if pos + _LAYER.size > len(buf):
            raise ModelError(f"model file truncated in layer {i} header at offset {pos}")
        out_dim, in_dim, code = _LAYER.unpack_from(buf, pos)
        pos += _LAYER.size
        try:
            act = Activation.from_code(code)
        except ValueError as exc:
            raise ModelError(f"layer {i}: {exc}") from None
        n_w, n_b = out_dim * in_dim * 8, out_dim * 8
        if pos + n_w + n_b > len(buf):
            raise ModelError(f"model file truncated in layer {i} payload at offset {pos}")
        w = np.frombuffer(buf, dtype="<f8", count=out_dim * in_dim, offset=pos)
        pos += n_w
        b = np.frombuffer(buf, dtype="<f8", count=out_dim, offset=pos)
        pos += n_b
        layers.append(DenseLayer(w.reshape(out_dim, in_dim).astype(np.float64), b.astype(np.float64), act))
    if pos != len(buf):
        raise ModelError(f"{len(buf) - pos} trailing bytes after last layer")
    try:
        return Network(input_dim, layers)
    except Exception as exc:
        raise ModelError(f"inconsistent model: {exc}") from exc


def save(net, path):
    with open(path, "wb") as f:
        f.write(dumps(net))


def load(path):
    with open(path, "rb") as f:
        return loads(f.read())
