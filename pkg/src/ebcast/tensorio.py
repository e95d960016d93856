"""Raw little-endian tensor files and checksum helpers.

Complex tensors are stored as '<c16' (interleaved float64 re/im pairs),
real tensors as '<f8', both C-order with shapes recorded by the caller's
manifest.
"""

from __future__ import annotations

import hashlib
from pathlib import Path

import numpy as np

from .errors import StoreIntegrityError

_DTYPES = {"c16": np.dtype("<c16"), "f8": np.dtype("<f8")}


def dtype_code(arr: np.ndarray) -> str:
    if np.iscomplexobj(arr):
        return "c16"
    return "f8"


def write_tensor(path: str | Path, arr: np.ndarray) -> str:
    """Write an array in raw little-endian form; returns the dtype code."""
    code = dtype_code(arr)
    data = np.ascontiguousarray(arr, dtype=_DTYPES[code])
    Path(path).write_bytes(data.tobytes())
    return code


def read_tensor(path: str | Path, shape: tuple[int, ...], code: str) -> np.ndarray:
    if code not in _DTYPES:
        raise StoreIntegrityError(f"unknown tensor dtype code {code!r}")
    dtype = _DTYPES[code]
    raw = Path(path).read_bytes()
    expected = int(np.prod(shape)) * dtype.itemsize
    if len(raw) != expected:
        raise StoreIntegrityError(
            f"{path}: expected {expected} bytes for shape {shape}, found {len(raw)}"
        )
    return np.frombuffer(raw, dtype=dtype).reshape(shape).copy()


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_path(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()
