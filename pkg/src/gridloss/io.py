"""Reading and writing grids: the GRD1 binary format and plain CSV.

GRD1 layout: the 4 magic bytes ``GRD1``, four little-endian uint32 values
(batch, rows, cols, channels), then the float64 little-endian payload in
row-major order with channels varying fastest.
"""

from __future__ import annotations

import csv
import struct
from pathlib import Path
from typing import Union

import numpy as np

from .errors import ParseError
from .tensor import GridTensor

MAGIC = b"GRD1"
_HEADER = struct.Struct("<4I")
PathLike = Union[str, Path]


def encode_grd1(t: GridTensor) -> bytes:
    return MAGIC + _HEADER.pack(*t.shape) + t.numpy().astype("<f8").tobytes(order="C")


def decode_grd1(raw: bytes, allow_nonfinite: bool = False) -> GridTensor:
    if raw[:4] != MAGIC:
        raise ParseError("not a GRD1 file (bad magic)")
    if len(raw) < 4 + _HEADER.size:
        raise ParseError("GRD1 header truncated")
    shape = _HEADER.unpack_from(raw, 4)
    if min(shape) < 1:
        raise ParseError(f"GRD1 dimensions must be positive, got {shape}")
    n = int(np.prod(shape, dtype=np.int64))
    payload = raw[4 + _HEADER.size:]
    if len(payload) != 8 * n:
        raise ParseError(f"GRD1 payload has {len(payload)} bytes, expected {8 * n}")
    data = np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(shape)
    if not np.all(np.isfinite(data)):
        if not allow_nonfinite:
            raise ParseError("GRD1 payload contains NaN or Inf")
        return GridTensor.unchecked(data)
    return GridTensor(data)


def write_grd1(path: PathLike, t: GridTensor) -> None:
    Path(path).write_bytes(encode_grd1(t))


def read_grd1(path: PathLike, allow_nonfinite: bool = False) -> GridTensor:
    return decode_grd1(Path(path).read_bytes(), allow_nonfinite)


def read_csv_grid(path: PathLike) -> GridTensor:
    """Load one 2-D grid, one row per line, as shape ``(1, rows, cols, 1)``."""
    rows = []
    with open(path, newline="") as fh:
        for lineno, rec in enumerate(csv.reader(fh), start=1):
            if not rec or all(not cell.strip() for cell in rec):
                continue
            try:
                rows.append([float(cell) for cell in rec])
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from exc
    if not rows:
        raise ParseError(f"{path}: empty CSV grid")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise ParseError(f"{path}: rows have unequal lengths")
    data = np.array(rows, dtype=np.float64)
    if not np.all(np.isfinite(data)):
        raise ParseError(f"{path}: CSV grid contains NaN or Inf")
    return GridTensor(data.reshape(1, len(rows), width, 1))


def write_csv_grid(path: PathLike, t: GridTensor) -> None:
    if t.shape[0] != 1 or t.shape[3] != 1:
        raise ParseError("CSV holds a single 2-D grid; tensor must be (1, rows, cols, 1)")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for row in t.numpy()[0, :, :, 0]:
            writer.writerow([repr(float(v)) for v in row])


def read_grid(path: PathLike) -> GridTensor:
    """Dispatch on content: GRD1 magic, otherwise CSV."""
    p = Path(path)
    try:
        head = p.read_bytes()[:4]
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc.strerror or exc}") from exc
    if head == MAGIC:
        return read_grd1(p)
    if p.suffix.lower() == ".grd1":
        raise ParseError(f"{path}: not a GRD1 file (bad magic)")
    try:
        return read_csv_grid(p)
    except UnicodeDecodeError as exc:
        raise ParseError(f"{path}: neither GRD1 nor text CSV") from exc
