"""Binary tensor files.

Layout: ``b"FFCV"``, version byte (1), dtype code byte, ndim byte, ``ndim``
little-endian uint64 extents, then the row-major little-endian payload.
"""

import struct
from pathlib import Path

import numpy as np

MAGIC = b"FFCV"
VERSION = 1

DTYPE_CODES = {
    0: np.dtype("<f4"),
    1: np.dtype("<f8"),
    2: np.dtype("<c8"),
    3: np.dtype("<c16"),
}
_CODE_OF = {dt.newbyteorder("="): code for code, dt in DTYPE_CODES.items()}

_MAX_EXTENT = 2**63


class TensorFormatError(ValueError):
    pass


def header_size(ndim):
    return 7 + 8 * ndim


def write_tensor(path, t):
    """Write a float32/float64/complex64/complex128 array to ``path``."""
    t = np.asarray(t)
    code = _CODE_OF.get(t.dtype.newbyteorder("="))
    if code is None:
        raise TensorFormatError(f"unsupported dtype {t.dtype}")
    if t.ndim > 255:
        raise TensorFormatError("too many dimensions")
    if any(d >= _MAX_EXTENT for d in t.shape):
        raise TensorFormatError("dimension exceeds 2**63")
    head = MAGIC + struct.pack("<BBB", VERSION, code, t.ndim)
    head += struct.pack(f"<{t.ndim}Q", *t.shape)
    payload = np.ascontiguousarray(t, dtype=DTYPE_CODES[code]).tobytes()
    try:
        with open(path, "wb") as fh:
            fh.write(head)
            fh.write(payload)
    except OSError as exc:
        raise OSError(f"cannot write tensor file {path}: {exc}") from exc


def read_tensor(path):
    """Read a tensor file written by :func:`write_tensor`."""
    raw = Path(path).read_bytes()
    if len(raw) < 7 or raw[:4] != MAGIC:
        raise TensorFormatError(f"{path}: not a tensor file")
    version, code, ndim = struct.unpack_from("<BBB", raw, 4)
    if version != VERSION:
        raise TensorFormatError(f"{path}: unsupported version {version}")
    if code not in DTYPE_CODES:
        raise TensorFormatError(f"{path}: unsupported dtype code {code}")
    start = header_size(ndim)
    if len(raw) < start:
        raise TensorFormatError(f"{path}: size mismatch (truncated header)")
    dims = struct.unpack_from(f"<{ndim}Q", raw, 7)
    if any(d >= _MAX_EXTENT for d in dims):
        raise TensorFormatError(f"{path}: dimension exceeds 2**63")
    dtype = DTYPE_CODES[code]
    count = int(np.prod(dims, dtype=object)) if dims else 1
    expected = count * dtype.itemsize
    if len(raw) - start != expected:
        raise TensorFormatError(
            f"{path}: size mismatch (header promises {expected} data bytes, found {len(raw) - start})"
        )
    data = np.frombuffer(raw, dtype=dtype, count=count, offset=start)
    return data.astype(dtype.newbyteorder("="), copy=True).reshape(dims)
