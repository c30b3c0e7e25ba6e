"""Matrix file formats and the rating-triplet ingester.

Two matrix formats are supported:

* ``.mcmx`` -- magic ``b"MCMX"``, then ``n_rows`` and ``n_cols`` as
  little-endian u64, then ``n_rows * n_cols`` little-endian float64 values
  in row-major order.
* ``.csv`` -- one matrix row per line, comma separated decimals.

The format is picked from the file suffix; anything that is not ``.csv`` is
treated as MCMX.
"""

from __future__ import annotations

import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .linalg import as_matrix

MAGIC = b"MCMX"
_HEADER = struct.Struct("<4sQQ")


class FormatError(ValueError):
    pass


def write_mcmx(path, M) -> None:
    M = as_matrix(M)
    n1, n2 = M.shape
    payload = _HEADER.pack(MAGIC, n1, n2) + np.ascontiguousarray(M, dtype="<f8").tobytes()
    _atomic_write_bytes(Path(path), payload)


def read_mcmx(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, n1, n2 = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    expected = _HEADER.size + 8 * n1 * n2
    if len(data) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, found {len(data)}")
    M = np.frombuffer(data, dtype="<f8", offset=_HEADER.size).reshape(n1, n2)
    return as_matrix(M.astype(np.float64), name=str(path))


def write_csv(path, M) -> None:
    M = as_matrix(M)
    lines = [",".join(repr(float(v)) for v in row) for row in M]
    _atomic_write_bytes(Path(path), ("\n".join(lines) + "\n").encode())


def read_csv(path) -> np.ndarray:
    M = np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2)
    return as_matrix(M, name=str(path))


def read_matrix(path) -> np.ndarray:
    path = Path(path)
    if path.suffix.lower() == ".csv":
        return read_csv(path)
    return read_mcmx(path)


def write_matrix(path, M) -> None:
    path = Path(path)
    if path.suffix.lower() == ".csv":
        write_csv(path, M)
    else:
        write_mcmx(path, M)


def _atomic_write_bytes(path: Path, payload: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    _atomic_write_bytes(Path(path), text.encode())


def ingest_triplets(path, n1: int, n2: int):
    """Read ``user,item,rating`` triplets (1-based indices) into ``(Y, W)``.

    Fields may be separated by commas, tabs or spaces. Blank lines and lines
    starting with ``#`` are skipped.
    """
    if n1 < 1 or n2 < 1:
        raise ValueError("matrix dimensions must be positive")
    Y = np.zeros((n1, n2))
    W = np.zeros((n1, n2))
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            fields = line.replace(",", " ").split()
            if len(fields) != 3:
                raise FormatError(f"line {lineno}: expected 3 fields, got {len(fields)}")
            try:
                i, j, rating = int(fields[0]), int(fields[1]), float(fields[2])
            except ValueError as exc:
                raise FormatError(f"line {lineno}: {exc}") from None
            if not (1 <= i <= n1 and 1 <= j <= n2):
                raise FormatError(f"line {lineno}: index ({i}, {j}) outside {n1}x{n2}")
            if not np.isfinite(rating):
                raise FormatError(f"line {lineno}: non-finite rating")
            if W[i - 1, j - 1]:
                raise FormatError(f"line {lineno}: duplicate pair ({i}, {j})")
            W[i - 1, j - 1] = 1.0
            Y[i - 1, j - 1] = rating
    return Y, W


def export_triplets(path, Y, W) -> None:
    """Write the observed entries of ``Y`` as 1-based triplets."""
    Y, W = as_matrix(Y), as_matrix(W)
    rows, cols = np.nonzero(W)
    lines = [f"{i + 1},{j + 1},{float(Y[i, j])!r}" for i, j in zip(rows, cols)]
    atomic_write_text(path, "\n".join(lines) + ("\n" if lines else ""))
