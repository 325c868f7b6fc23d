"""MRTX tensor container.

Layout (little-endian): magic ``b"MRTX"``, ``u32`` version (1), ``u32`` ndim,
``u32`` dims[ndim], ``u8`` dtype code (1 = f32, 2 = f64), row-major payload.
"""

from __future__ import annotations

import os
import struct

import numpy as np

MAGIC = b"MRTX"
VERSION = 1
_CODES = {np.dtype("<f4"): 1, np.dtype("<f8"): 2}
_DTYPES = {1: np.dtype("<f4"), 2: np.dtype("<f8")}


class MRTXError(ValueError):
    pass


def dumps(array) -> bytes:
    a = np.asarray(array)
    dt = a.dtype.newbyteorder("<")
    if dt not in _CODES:
        raise MRTXError(f"MRTX stores f32/f64 only, got {a.dtype}")
    if a.ndim == 0:
        raise MRTXError("MRTX stores tensors with at least one dimension")
    head = MAGIC + struct.pack("<II", VERSION, a.ndim) + struct.pack(f"<{a.ndim}I", *a.shape)
    head += struct.pack("<B", _CODES[dt])
    return head + np.ascontiguousarray(a, dtype=dt).tobytes()


def loads(buf: bytes) -> np.ndarray:
    if buf[:4] != MAGIC:
        raise MRTXError("bad magic; not an MRTX file")
    version, ndim = struct.unpack_from("<II", buf, 4)
    if version != VERSION:
        raise MRTXError(f"unsupported MRTX version {version}")
    dims = struct.unpack_from(f"<{ndim}I", buf, 12)
    off = 12 + 4 * ndim
    (code,) = struct.unpack_from("<B", buf, off)
    if code not in _DTYPES:
        raise MRTXError(f"unknown dtype code {code}")
    dt = _DTYPES[code]
    payload = buf[off + 1:]
    expected = int(np.prod(dims, dtype=np.int64)) * dt.itemsize
    if len(payload) != expected:
        raise MRTXError(f"payload is {len(payload)} bytes, dims {dims} need {expected}")
    return np.frombuffer(payload, dtype=dt).reshape(dims).astype(dt.newbyteorder("="))


def write(path, array) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(dumps(array))


def read(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return loads(fh.read())
