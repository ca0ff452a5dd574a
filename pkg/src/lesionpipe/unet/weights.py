"""Binary weight file (``LPWT``), little-endian throughout.

Layout::

    magic "LPWT" | version u16
    config: levels, base_filters, conv_size, pool_size, in_channels, out_classes (u16 each)
    entry count u32, then per entry:
        name length u16 | UTF-8 name | rank u8 | dims u32[rank] | f32 payload
    flag u8 (1 = Adam state follows)
    [step u32, entry count u32, entries named "m/<param>" and "v/<param>"]

Entries cover learnable weights followed by batch-norm running statistics.
"""

import io
import struct
from pathlib import Path

import numpy as np

from ..errors import DataError
from .model import UNetConfig, UNetParams

MAGIC = b"LPWT"
VERSION = 1
_CONFIG_FIELDS = ("levels", "base_filters", "conv_size", "pool_size", "in_channels", "out_classes")


def _write_entries(buf, entries):
    buf.write(struct.pack("<I", len(entries)))
    for name, arr in entries:
        raw = name.encode("utf-8")
        arr = np.ascontiguousarray(arr, dtype="<f4")
        buf.write(struct.pack("<H", len(raw)))
        buf.write(raw)
        buf.write(struct.pack("<B", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        buf.write(arr.tobytes())


def _read_exact(buf, n):
    data = buf.read(n)
    if len(data) != n:
        raise DataError("truncated weight file")
    return data


def _read_entries(buf):
    (count,) = struct.unpack("<I", _read_exact(buf, 4))
    out = {}
    for _ in range(count):
        (n,) = struct.unpack("<H", _read_exact(buf, 2))
        name = _read_exact(buf, n).decode("utf-8")
        (rank,) = struct.unpack("<B", _read_exact(buf, 1))
        dims = struct.unpack(f"<{rank}I", _read_exact(buf, 4 * rank))
        size = int(np.prod(dims)) if rank else 1
        out[name] = np.frombuffer(_read_exact(buf, 4 * size), dtype="<f4").reshape(dims).astype(np.float32)
    return out


def dumps(params, include_adam=True):
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<H", VERSION))
    cfg = params.config
    buf.write(struct.pack("<6H", *(getattr(cfg, f) for f in _CONFIG_FIELDS)))
    _write_entries(buf, list(params.weights.items()) + list(params.running.items()))
    has_adam = include_adam and bool(params.adam_m)
    buf.write(struct.pack("<B", int(has_adam)))
    if has_adam:
        buf.write(struct.pack("<I", params.step))
        entries = [(f"m/{k}", v) for k, v in params.adam_m.items()]
        entries += [(f"v/{k}", v) for k, v in params.adam_v.items()]
        _write_entries(buf, entries)
    return buf.getvalue()


def loads(data):
    buf = io.BytesIO(data)
    if _read_exact(buf, 4) != MAGIC:
        raise DataError("not a weight file (bad magic)")
    (version,) = struct.unpack("<H", _read_exact(buf, 2))
    if version != VERSION:
        raise DataError(f"unsupported weight file version {version}")
    cfg = UNetConfig(**dict(zip(_CONFIG_FIELDS, struct.unpack("<6H", _read_exact(buf, 12)))))
    entries = _read_entries(buf)
    weights = {k: v for k, v in entries.items() if "running_" not in k}
    running = {k: v for k, v in entries.items() if "running_" in k}
    params = UNetParams(cfg, weights, running)
    (flag,) = struct.unpack("<B", _read_exact(buf, 1))
    if flag:
        (params.step,) = struct.unpack("<I", _read_exact(buf, 4))
        for k, v in _read_entries(buf).items():
            kind, name = k.split("/", 1)
            (params.adam_m if kind == "m" else params.adam_v)[name] = v
    return params


def save_weights(path, params, include_adam=True):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_bytes(dumps(params, include_adam))


def load_weights(path):
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read weights {path}: {exc}") from exc
    return loads(data)
