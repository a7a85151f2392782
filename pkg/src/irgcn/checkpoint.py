"""Binary checkpoints.

Layout, all integers little-endian::

    b"IRGC"                      magic
    u32  format version
    u32  n, n bytes              config echo, UTF-8 ``key=value`` lines
    u64  training seed
    u32  epoch count
    u32  number of parameter blocks
    per block:
        u32 n, n bytes           name, UTF-8
        u32 rows, u32 cols
        rows * cols f64          row-major values
"""

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import CheckpointError

MAGIC = b"IRGC"
FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    params: dict
    config: dict
    seed: int
    epochs: int
    version: int = FORMAT_VERSION


def _encode_config(config):
    return "".join(f"{k}={config[k]}\n" for k in sorted(config)).encode("utf-8")


def dumps(ckpt):
    out = [MAGIC, struct.pack("<I", FORMAT_VERSION)]
    cfg = _encode_config(ckpt.config)
    out += [struct.pack("<I", len(cfg)), cfg]
    out.append(struct.pack("<QI", ckpt.seed, ckpt.epochs))
    out.append(struct.pack("<I", len(ckpt.params)))
    for name, value in ckpt.params.items():
        arr = np.ascontiguousarray(value, dtype="<f8")
        if arr.ndim != 2:
            raise CheckpointError(f"parameter {name!r} is not 2-D")
        raw = name.encode("utf-8")
        out += [struct.pack("<I", len(raw)), raw, struct.pack("<II", *arr.shape), arr.tobytes()]
    return b"".join(out)


def loads(data):
    view = memoryview(data)
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(view):
            raise CheckpointError("truncated checkpoint")
        chunk = view[pos:pos + n]
        pos += n
        return chunk

    if bytes(take(4)) != MAGIC:
        raise CheckpointError("not a checkpoint (bad magic)")
    (version,) = struct.unpack("<I", take(4))
    if version != FORMAT_VERSION:
        raise CheckpointError(f"checkpoint format {version} unsupported, expected {FORMAT_VERSION}")
    (n,) = struct.unpack("<I", take(4))
    config = {}
    for line in bytes(take(n)).decode("utf-8").splitlines():
        key, _, value = line.partition("=")
        config[key] = value
    seed, epochs = struct.unpack("<QI", take(12))
    (n_blocks,) = struct.unpack("<I", take(4))
    params = {}
    for _ in range(n_blocks):
        (n,) = struct.unpack("<I", take(4))
        name = bytes(take(n)).decode("utf-8")
        rows, cols = struct.unpack("<II", take(8))
        arr = np.frombuffer(bytes(take(8 * rows * cols)), dtype="<f8").reshape(rows, cols)
        params[name] = arr.astype(np.float64)
    if pos != len(view):
        raise CheckpointError("trailing bytes after checkpoint")
    return Checkpoint(params, config, seed, epochs, version)


def save(path, ckpt):
    Path(path).write_bytes(dumps(ckpt))


def load(path):
    return loads(Path(path).read_bytes())
