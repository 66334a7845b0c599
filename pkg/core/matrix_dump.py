"""Binary dump of dense complex matrices for debugging and caching.

Layout (little-endian):
    4 bytes   magic b"DMRG"
    uint32    format version
    uint32    rows
    uint32    cols
    uint32    tag length in bytes
    bytes     tag (UTF-8)
    rows*cols complex128 entries, row-major
"""

import struct
from pathlib import Path

import numpy as np

from core.errors import QuadratureError


MAGIC = b"DMRG"
VERSION = 1
_HEADER = struct.Struct("<4sIIII")


def dump_matrix(path, matrix, tag: str = "") -> Path:
    """Write ``matrix`` (2-D) with ``tag`` to ``path``."""
    matrix = np.asarray(matrix, dtype="<c16")
    if matrix.ndim != 2:
        raise QuadratureError(f"Only 2-D matrices can be dumped, got shape {matrix.shape}")
    tag_bytes = tag.encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(_HEADER.pack(MAGIC, VERSION, matrix.shape[0], matrix.shape[1], len(tag_bytes)))
        f.write(tag_bytes)
        f.write(np.ascontiguousarray(matrix).tobytes(order="C"))
    return path


def load_matrix(path) -> tuple[np.ndarray, str]:
    """Read a dump back as (matrix, tag)."""
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise QuadratureError(f"{path}: truncated header")
    magic, version, rows, cols, tag_len = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise QuadratureError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise QuadratureError(f"{path}: unsupported dump version {version}")
    offset = _HEADER.size + tag_len
    expected = offset + rows * cols * 16
    if len(data) != expected:
        raise QuadratureError(f"{path}: expected {expected} bytes, found {len(data)}")
    tag = data[_HEADER.size:offset].decode("utf-8")
    if rows * cols == 0:
        return np.zeros((rows, cols), dtype=complex), tag
    matrix = np.frombuffer(data, dtype="<c16", offset=offset).reshape(rows, cols).astype(complex)
    return matrix, tag


def dump_operator(path, operator) -> Path:
    """Dump a BoundaryOperator's matrix with its kernel tag."""
    return dump_matrix(path, operator.matrix, operator.tag)


def load_operator(path) -> tuple[np.ndarray, str]:
    return load_matrix(path)
