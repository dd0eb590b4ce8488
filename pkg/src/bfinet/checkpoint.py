"""Binary model checkpoints.

Layout, all integers and floats little-endian::

    b"BFIC"                       magic
    u32 version                   currently 1
    u32 D, C, K, L, hidden, M     model config
    u8  variant                   index into Baseline, P, Q, T, S
    u64 seed
    u32 n, u32[n]                 input permutation (n = 0 when absent)
    C times: u32 n, u32[n]        per-layer permutation (n = 0 when absent)
    u32 count                     number of parameter buffers, then for each:
        u16 len, utf-8 name
        u8 ndim, u32[ndim] shape
        f32[prod(shape)]          row-major values
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .model import VARIANTS, Model, ModelConfig, build_model

MAGIC = b"BFIC"
VERSION = 1
_VARIANT_CODES = list(VARIANTS)


class CheckpointError(ValueError):
    pass


def _perm_bytes(perm) -> bytes:
    if perm is None:
        return struct.pack("<I", 0)
    return struct.pack("<I", perm.size) + np.asarray(perm, "<u4").tobytes()


def dumps(m: Model) -> bytes:
    cfg = m.config
    out = [MAGIC, struct.pack("<I", VERSION),
           struct.pack("<6I", cfg.D, cfg.C, cfg.K, cfg.L, cfg.hidden, cfg.M),
           struct.pack("<BQ", _VARIANT_CODES.index(cfg.variant), cfg.seed),
           _perm_bytes(m.input_perm)]
    out += [_perm_bytes(getattr(layer, "perm", None)) for layer in m.cross]
    params = m.named_parameters()
    out.append(struct.pack("<I", len(params)))
    for name, buf in params:
        raw = name.encode()
        out.append(struct.pack("<H", len(raw)) + raw)
        out.append(struct.pack(f"<B{buf.ndim}I", buf.ndim, *buf.shape))
        out.append(np.ascontiguousarray(buf, "<f4").tobytes())
    return b"".join(out)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, fmt: str):
        size = struct.calcsize(fmt)
        if self.pos + size > len(self.data):
            raise CheckpointError("truncated checkpoint")
        vals = struct.unpack_from(fmt, self.data, self.pos)
        self.pos += size
        return vals

    def array(self, dtype: str, n: int) -> np.ndarray:
        size = np.dtype(dtype).itemsize * n
        if self.pos + size > len(self.data):
            raise CheckpointError("truncated checkpoint")
        arr = np.frombuffer(self.data, dtype, n, self.pos)
        self.pos += size
        return arr

    def perm(self):
        (n,) = self.take("<I")
        return self.array("<u4", n).astype(np.int64) if n else None


def loads(data: bytes) -> Model:
    r = _Reader(data)
    if data[:4] != MAGIC:
        raise CheckpointError("not a BFIC checkpoint")
    r.pos = 4
    (version,) = r.take("<I")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    D, C, K, L, hidden, M = r.take("<6I")
    code, seed = r.take("<BQ")
    cfg = ModelConfig(D=D, C=C, K=K, L=L, hidden=hidden, M=M,
                      variant=_VARIANT_CODES[code], seed=seed)
    m = build_model(cfg)
    input_perm = r.perm()
    layer_perms = [r.perm() for _ in range(C)]
    if (input_perm is None) != (m.input_perm is None):
        raise CheckpointError("input permutation does not fit the stored variant")
    m.input_perm = input_perm
    for layer, perm in zip(m.cross, layer_perms):
        if (perm is None) != (getattr(layer, "perm", None) is None):
            raise CheckpointError("layer permutation does not fit the stored variant")
        if perm is not None:
            layer.perm = perm
    expected = m.named_parameters()
    (count,) = r.take("<I")
    if count != len(expected):
        raise CheckpointError(f"expected {len(expected)} buffers, found {count}")
    for name, buf in expected:
        (n,) = r.take("<H")
        got = bytes(r.array("u1", n)).decode()
        (ndim,) = r.take("<B")
        shape = r.take(f"<{ndim}I")
        if got != name or tuple(shape) != buf.shape:
            raise CheckpointError(f"buffer {got}{shape} does not match {name}{buf.shape}")
        buf[...] = r.array("<f4", buf.size).reshape(buf.shape)
    if r.pos != len(data):
        raise CheckpointError("trailing bytes after checkpoint")
    return m


def save(m: Model, path) -> Path:
    path = Path(path)
    path.write_bytes(dumps(m))
    return path


def load(path) -> Model:
    return loads(Path(path).read_bytes())
