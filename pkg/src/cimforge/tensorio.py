"""
Tensor files: CSV (2-D, integers or floats) and a compact binary format.

Binary layout, little-endian::

    magic   4 bytes  b"CIMT"
    dtype   uint8    code from DTYPES
    ndim    uint8
    pad     2 bytes  zero
    dims    ndim x uint64
    payload row-major, prod(dims) elements of dtype
"""

from __future__ import annotations

import io
import struct
from pathlib import Path

import numpy as np

from .errors import DomainError

MAGIC = b"CIMT"
DTYPES = {1: "u1", 2: "i1", 3: "i4", 4: "i8", 5: "f4", 6: "f8"}
CODES = {np.dtype(v).newbyteorder("<"): k for k, v in DTYPES.items()}
BINARY_SUFFIXES = (".cimt", ".bin")


def dumps(array) -> bytes:
    a = np.asarray(array)
    dt = a.dtype.newbyteorder("<")
    if dt not in CODES:
        raise DomainError(f"unsupported dtype {a.dtype}")
    header = MAGIC + struct.pack("<BB2x", CODES[dt], a.ndim) + struct.pack(f"<{a.ndim}Q", *a.shape)
    return header + np.ascontiguousarray(a, dtype=dt).tobytes()


def loads(data: bytes) -> np.ndarray:
    if len(data) < 8 or data[:4] != MAGIC:
        raise DomainError("not a CIMT tensor (bad magic)")
    code, ndim = struct.unpack_from("<BB", data, 4)
    if code not in DTYPES:
        raise DomainError(f"unknown dtype code {code}")
    dims = struct.unpack_from(f"<{ndim}Q", data, 8)
    dt = np.dtype(DTYPES[code]).newbyteorder("<")
    offset = 8 + 8 * ndim
    count = int(np.prod(dims, dtype=np.int64)) if ndim else 1
    if len(data) - offset != count * dt.itemsize:
        raise DomainError("payload size does not match header")
    return np.frombuffer(data, dtype=dt, count=count, offset=offset).reshape(dims).astype(dt.newbyteorder("="))


def write_csv(path_or_buf, array, header=None, fmt="%d"):
    a = np.atleast_2d(np.asarray(array))
    buf = io.StringIO()
    if header:
        buf.write(",".join(header) + "\n")
    np.savetxt(buf, a, fmt=fmt, delimiter=",", newline="\n")
    text = buf.getvalue()
    if hasattr(path_or_buf, "write"):
        path_or_buf.write(text)
    else:
        Path(path_or_buf).write_text(text)


def read_csv(path) -> np.ndarray:
    text = Path(path).read_text().strip().splitlines()
    rows = [line for line in text if line.strip() and not line.lstrip().startswith("#")]
    try:
        values = [[float(v) for v in row.split(",")] for row in rows]
    except ValueError as exc:
        raise DomainError(f"{path}: non-numeric CSV content ({exc})") from None
    if not values or len({len(r) for r in values}) != 1:
        raise DomainError(f"{path}: empty CSV or rows of unequal length")
    a = np.array(values, dtype=float)
    if np.all(a == np.round(a)):
        return a.astype(np.int64)
    return a


def load(path) -> np.ndarray:
    path = Path(path)
    if path.suffix in BINARY_SUFFIXES:
        return loads(path.read_bytes())
    return read_csv(path)


def save(path, array):
    path = Path(path)
    if path.suffix in BINARY_SUFFIXES:
        path.write_bytes(dumps(array))
    else:
        a = np.asarray(array)
        write_csv(path, a, fmt="%d" if np.issubdtype(a.dtype, np.integer) else "%.17g")
