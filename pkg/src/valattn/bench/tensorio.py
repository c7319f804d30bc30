"""Reader/writer for the ``VAT1`` named-tensor container.

Layout, little-endian throughout::

    b"VAT1"  u32 version=1  u32 count
    per tensor: u32 name_len, name (UTF-8), u32 ndim, ndim x u64 dims,
                prod(dims) x f32 values (row-major)

No padding and no checksum.
"""
from __future__ import annotations

import math
import struct
from pathlib import Path
from typing import Mapping

import numpy as np

MAGIC = b"VAT1"
VERSION = 1
_U64_MAX = 2**64 - 1


class FormatError(ValueError):
    pass


class BadMagicError(FormatError):
    pass


class BadVersionError(FormatError):
    pass


class TruncatedError(FormatError):
    pass


class DimOverflowError(FormatError):
    pass


def encode_tensors(tensors: Mapping[str, np.ndarray]) -> bytes:
    names = list(tensors)
    if len(set(names)) != len(names):
        raise ValueError("tensor names must be unique")
    parts = [MAGIC, struct.pack("<II", VERSION, len(names))]
    for name in names:
        if not name.isascii():
            raise ValueError(f"tensor name {name!r} is not ASCII")
        arr = np.asarray(tensors[name], dtype="<f4", order="C")
        raw = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<I", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(arr.tobytes())
    return b"".join(parts)


def decode_tensors(buf: bytes) -> dict[str, np.ndarray]:
    view = memoryview(buf)
    if len(view) < 4 or bytes(view[:4]) != MAGIC:
        raise BadMagicError("not a VAT1 file (bad magic bytes)")
    pos = 4

    def take(n, what):
        nonlocal pos
        if pos + n > len(view):
            raise TruncatedError(f"truncated while reading {what} at byte {pos}")
        out = view[pos : pos + n]
        pos += n
        return out

    (version,) = struct.unpack("<I", take(4, "version"))
    if version != VERSION:
        raise BadVersionError(f"unsupported VAT version {version}")
    (count,) = struct.unpack("<I", take(4, "tensor count"))
    out: dict[str, np.ndarray] = {}
    for i in range(count):
        (nlen,) = struct.unpack("<I", take(4, f"name length of tensor {i}"))
        name = bytes(take(nlen, f"name of tensor {i}")).decode("utf-8")
        (ndim,) = struct.unpack("<I", take(4, f"ndim of {name!r}"))
        dims = struct.unpack(f"<{ndim}Q", take(8 * ndim, f"dims of {name!r}"))
        n = math.prod(dims)
        if n > _U64_MAX or n * 4 > _U64_MAX:
            raise DimOverflowError(f"dims {dims} of {name!r} overflow a 64-bit element count")
        data = take(4 * n, f"values of {name!r}")
        if name in out:
            raise FormatError(f"duplicate tensor name {name!r}")
        out[name] = np.frombuffer(data, dtype="<f4").reshape(dims).copy()
    if pos != len(view):
        raise FormatError(f"{len(view) - pos} trailing bytes after last tensor")
    return out


def write_tensors(path, tensors: Mapping[str, np.ndarray]) -> None:
    Path(path).write_bytes(encode_tensors(tensors))


def read_tensors(path) -> dict[str, np.ndarray]:
    return decode_tensors(Path(path).read_bytes())
