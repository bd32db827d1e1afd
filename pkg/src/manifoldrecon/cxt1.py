"""CXT1: a small binary container for one dense tensor plus JSON metadata.

Layout (all integers little-endian)::

    b"CXT1"                 magic
    u16  version            (1)
    u16  ndims
    u64  dims[ndims]
    u16  dtype              0 = complex128 (re, im interleaved), 1 = float64
    u32  metadata length    bytes of UTF-8 JSON that follow
    ...  metadata
    ...  payload            row-major values
"""

from __future__ import annotations

import json
import os
import struct
import tempfile

import numpy as np

from .errors import DimensionError

MAGIC = b"CXT1"
VERSION = 1
DTYPES = {0: np.dtype("<c16"), 1: np.dtype("<f8")}


class FormatError(ValueError):
    """File is not a valid CXT1 container."""


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, complex):
        return [o.real, o.imag]
    raise TypeError(f"cannot serialize {type(o).__name__}")


def encode(array, meta=None) -> bytes:
    a = np.asarray(array)
    if np.iscomplexobj(a):
        code = 0
    elif a.dtype.kind in "biuf":
        code = 1
    else:
        raise DimensionError(f"unsupported dtype {a.dtype}")
    a = np.asarray(a, dtype=DTYPES[code], order="C")  # keeps 0-d arrays 0-d
    text = json.dumps(meta or {}, sort_keys=True, separators=(",", ":"),
                      default=_json_default).encode("utf-8")
    head = MAGIC + struct.pack("<HH", VERSION, a.ndim)
    head += struct.pack(f"<{a.ndim}Q", *a.shape)
    head += struct.pack("<HI", code, len(text))
    return head + text + a.tobytes()


def decode(buf: bytes):
    if len(buf) < 8 or buf[:4] != MAGIC:
        raise FormatError("bad magic, not a CXT1 file")
    version, ndims = struct.unpack_from("<HH", buf, 4)
    if version != VERSION:
        raise FormatError(f"unsupported CXT1 version {version}")
    off = 8
    dims = struct.unpack_from(f"<{ndims}Q", buf, off)
    off += 8 * ndims
    code, mlen = struct.unpack_from("<HI", buf, off)
    off += 6
    if code not in DTYPES:
        raise FormatError(f"unknown dtype code {code}")
    meta = json.loads(buf[off:off + mlen].decode("utf-8")) if mlen else {}
    off += mlen
    dt = DTYPES[code]
    count = int(np.prod(dims, dtype=np.int64)) if ndims else 1
    if len(buf) - off != count * dt.itemsize:
        raise FormatError("payload length does not match dims")
    data = np.reshape(np.frombuffer(buf, dtype=dt, count=count, offset=off), dims).copy()
    return data, meta


def atomic_write_bytes(path, payload: bytes):
    """Write via a temp file in the same directory, then rename."""
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write(path, array, meta=None):
    atomic_write_bytes(path, encode(array, meta))


def read(path):
    """Returns ``(array, metadata_dict)``."""
    with open(path, "rb") as fh:
        return decode(fh.read())
