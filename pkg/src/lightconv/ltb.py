"""Binary tensor file format "LTB1".

Layout, all little-endian:

    bytes 0-3   magic ASCII "LTB1"
    byte  4     dim count, always 4
    bytes 5-20  four uint32 dims (n, c, h, w)
    then        n*c*h*w float64 values, row-major (w fastest)
"""

import struct
from pathlib import Path

import numpy as np

from .errors import FormatError
from .tensor import Tensor

MAGIC = b"LTB1"
_HEADER = struct.Struct("<4sB4I")


def write_tensor(path, tensor: Tensor) -> None:
    """Serialize a tensor; round-trips bit-exactly through :func:`read_tensor`."""
    n, c, h, w = tensor.shape
    for dim in tensor.shape:
        if dim >= 1 << 32:
            raise FormatError(f"dimension {dim} does not fit in uint32")
    header = _HEADER.pack(MAGIC, 4, n, c, h, w)
    payload = np.ascontiguousarray(tensor.data, dtype="<f8").tobytes()
    Path(path).write_bytes(header + payload)


def read_tensor(path) -> Tensor:
    """Parse an LTB1 file, validating magic, dims, and payload length."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise FormatError(f"truncated file: {len(raw)} bytes, header needs {_HEADER.size}")
    magic, ndim, n, c, h, w = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if ndim != 4:
        raise FormatError(f"dim count {ndim} unsupported, expected 4")
    count = n * c * h * w
    payload = raw[_HEADER.size :]
    if len(payload) != 8 * count:
        raise FormatError(
            f"payload length mismatch: shape ({n}, {c}, {h}, {w}) needs "
            f"{8 * count} bytes, file has {len(payload)}"
        )
    data = np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(n, c, h, w)
    if data.size and not np.all(np.isfinite(data)):
        raise FormatError("payload contains non-finite values")
    return Tensor._wrap(data)
