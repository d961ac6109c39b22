"""Binary tensor files ("MSDT").

Layout: bytes 0-3 magic b"MSDT"; byte 4 format version (1); byte 5 rank
(1 to 3); then rank unsigned 32-bit little-endian dims; then the row-major
payload as IEEE-754 little-endian 32-bit floats. Files must be exactly
header + payload long; anything else is a FormatError carrying the byte
offset where parsing failed.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import FormatError

MAGIC = b"MSDT"
VERSION = 1
MAX_RANK = 3
# refuse absurd dim products before allocating
_MAX_ELEMENTS = 1 << 31


def write_tensor(path: str | Path, array: np.ndarray) -> None:
    """Write an array as an MSDT file (values cast to float32)."""
    a = np.ascontiguousarray(array, dtype=np.float32)
    if not 1 <= a.ndim <= MAX_RANK:
        raise FormatError(f"tensor rank {a.ndim} outside supported range 1..{MAX_RANK}")
    header = MAGIC + struct.pack("<BB", VERSION, a.ndim)
    header += struct.pack(f"<{a.ndim}I", *a.shape)
    with open(path, "wb") as f:
        f.write(header)
        f.write(a.tobytes(order="C"))


def read_tensor(path: str | Path) -> np.ndarray:
    """Read an MSDT file into a float64 array (payload stored as float32)."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"tensor file not found: {path}")
    blob = path.read_bytes()
    if len(blob) < 6:
        raise FormatError(f"{path}: truncated header at offset {len(blob)} (need 6 bytes)")
    if blob[:4] != MAGIC:
        raise FormatError(f"{path}: bad magic {blob[:4]!r} at offset 0")
    version, rank = blob[4], blob[5]
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version} at offset 4")
    if not 1 <= rank <= MAX_RANK:
        raise FormatError(f"{path}: rank {rank} outside 1..{MAX_RANK} at offset 5")
    dims_end = 6 + 4 * rank
    if len(blob) < dims_end:
        raise FormatError(f"{path}: truncated dims at offset {len(blob)} (need {dims_end} bytes)")
    dims = struct.unpack(f"<{rank}I", blob[6:dims_end])
    n = 1
    for d in dims:
        if d == 0:
            raise FormatError(f"{path}: zero dimension in shape {dims} at offset 6")
        n *= d
    if n > _MAX_ELEMENTS:
        raise FormatError(f"{path}: element count {n} exceeds limit at offset 6")
    expected = dims_end + 4 * n
    if len(blob) != expected:
        raise FormatError(
            f"{path}: payload length mismatch at offset {dims_end}: "
            f"file has {len(blob)} bytes, shape {dims} needs {expected}"
        )
    data = np.frombuffer(blob, dtype="<f4", offset=dims_end).reshape(dims)
    if not np.all(np.isfinite(data)):
        raise FormatError(f"{path}: non-finite payload values at offset {dims_end}")
    return data.astype(np.float64)
