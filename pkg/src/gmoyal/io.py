"""MYL1 binary arrays and CSV export.

MYL1 layout (little endian): b"MYL1", u32 rank, u32 dims[rank], then the
row-major payload as interleaved (re, im) f64 pairs. Sampled symbols and
operator matrices append a tagged trailer so the file can be read back into
the same object:

    b"GRID" + 6 f64 (q_min, q_max, p_min, p_max, dq, dp) + 2 u32 (n_q, n_p)
    b"BASI" + 3 f64 (x_min, x_max, hbar) + u32 n_x
"""

from __future__ import annotations

import csv
import io
import struct
from pathlib import Path

import numpy as np

from .grid import GridFunction, PhaseGrid, make_grid
from .transforms import OperatorMatrix, PositionBasis

MAGIC = b"MYL1"
GRID_TAG = b"GRID"
BASIS_TAG = b"BASI"


class FormatError(ValueError):
    """Malformed MYL1 or CSV input."""


def _grid_block(g: PhaseGrid) -> bytes:
    return GRID_TAG + struct.pack("<6d2I", g.q_min, g.q_max, g.p_min, g.p_max, g.dq, g.dp, g.n_q, g.n_p)


def _basis_block(b: PositionBasis) -> bytes:
    return BASIS_TAG + struct.pack("<3dI", b.x_min, b.x_max, b.hbar, b.n_x)


def to_bytes(obj) -> bytes:
    """Serialize an ndarray, GridFunction or OperatorMatrix."""
    trailer = b""
    if isinstance(obj, GridFunction):
        arr, trailer = obj.values, _grid_block(obj.grid)
    elif isinstance(obj, OperatorMatrix):
        arr, trailer = obj.entries, _basis_block(obj.basis)
    else:
        arr = np.asarray(obj)
    arr = np.ascontiguousarray(arr, dtype="<c16")
    head = MAGIC + struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape)
    return head + arr.tobytes() + trailer


def _take(buf: memoryview, pos: int, n: int) -> bytes:
    if pos + n > len(buf):
        raise FormatError(f"truncated MYL1 data at byte {pos}")
    return bytes(buf[pos:pos + n])


def from_bytes(data: bytes):
    """Inverse of ``to_bytes``."""
    buf = memoryview(data)
    if _take(buf, 0, 4) != MAGIC:
        raise FormatError("not a MYL1 file (bad magic)")
    (rank,) = struct.unpack("<I", _take(buf, 4, 4))
    dims = struct.unpack(f"<{rank}I", _take(buf, 8, 4 * rank))
    pos = 8 + 4 * rank
    count = int(np.prod(dims, dtype=np.int64))
    arr = np.frombuffer(_take(buf, pos, 16 * count), dtype="<c16").reshape(dims).astype(complex)
    pos += 16 * count
    rest = bytes(buf[pos:])
    if not rest:
        return arr
    tag, body = rest[:4], rest[4:]
    if tag == GRID_TAG:
        if len(body) != struct.calcsize("<6d2I"):
            raise FormatError("bad grid trailer length")
        q0, q1, p0, p1, _, _, nq, np_ = struct.unpack("<6d2I", body)
        grid = make_grid(q0, q1, nq, p0, p1, np_)
        if arr.shape != (nq, np_):
            raise FormatError(f"payload shape {arr.shape} does not match grid ({nq}, {np_})")
        return GridFunction(grid, arr)
    if tag == BASIS_TAG:
        if len(body) != struct.calcsize("<3dI"):
            raise FormatError("bad basis trailer length")
        x0, x1, hbar, n = struct.unpack("<3dI", body)
        basis = PositionBasis(x0, x1, n, hbar)
        if arr.shape != (n, n):
            raise FormatError(f"payload shape {arr.shape} does not match basis size {n}")
        return OperatorMatrix(basis, arr)
    raise FormatError(f"unknown MYL1 trailer tag {tag!r}")


def write_myl(path, obj) -> None:
    Path(path).write_bytes(to_bytes(obj))


def read_myl(path):
    return from_bytes(Path(path).read_bytes())


def _fmt(z: complex) -> str:
    im = z.imag
    sign = "-" if np.signbit(im) else "+"
    return f"{z.real!r}{sign}{abs(im)!r}j"


def to_csv(values) -> str:
    """One row per q index (first axis), entries written as ``re+imj``."""
    arr = np.atleast_2d(values.values if isinstance(values, GridFunction) else np.asarray(values))
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    for row in arr.astype(complex):
        writer.writerow(_fmt(complex(z)) for z in row)
    return out.getvalue()


def from_csv(text: str) -> np.ndarray:
    rows = [r for r in csv.reader(io.StringIO(text)) if r]
    try:
        arr = np.array([[complex(x.strip()) for x in r] for r in rows], dtype=complex)
    except ValueError as exc:
        raise FormatError(f"bad CSV entry: {exc}") from None
    if arr.ndim != 2:
        raise FormatError("CSV rows have unequal lengths")
    return arr


def write_csv(path, values) -> None:
    Path(path).write_text(to_csv(values))


def write_rows(path, header, rows) -> None:
    """A plain numeric CSV table with a header line (audit logs and the like)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for r in rows:
            writer.writerow(repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in r)
