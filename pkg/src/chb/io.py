"""Snapshot files, PGM images and file hashing.

CHBF1 snapshot layout: a 32-byte ASCII header ``"CHBF1 nx ny t"`` padded
with blanks and terminated by ``"\\n"`` in its last byte, then ``nx*ny``
little-endian float64 values in row-major order (``x`` fastest).  A
velocity snapshot is two such blocks back to back: the ``x`` faces
(``nx+1`` by ``ny``) followed by the ``y`` faces (``nx`` by ``ny+1``).
"""

from __future__ import annotations

import hashlib
from pathlib import Path

import numpy as np

from .domain import VelocityField
from .errors import FormatError

MAGIC = b"CHBF1"
HEADER_BYTES = 32
_DTYPE = np.dtype("<f8")


def _header(nx: int, ny: int, t: float) -> bytes:
    text = f"CHBF1 {nx} {ny} {t:.10g}".encode("ascii")
    if len(text) > HEADER_BYTES - 1:
        raise FormatError(f"header {text!r} longer than {HEADER_BYTES - 1} bytes")
    return text.ljust(HEADER_BYTES - 1) + b"\n"


def _block(values, t) -> bytes:
    values = np.asarray(values, dtype=float)
    if values.ndim != 2:
        raise FormatError(f"snapshot blocks are 2-D, got shape {values.shape}")
    ny, nx = values.shape
    return _header(nx, ny, t) + values.astype(_DTYPE, copy=False).tobytes(order="C")


def _parse_block(buf: bytes, offset: int, expected=None, label="field"):
    head = buf[offset:offset + HEADER_BYTES]
    if len(head) < HEADER_BYTES:
        raise FormatError(f"{label}: truncated header ({len(head)} of {HEADER_BYTES} bytes)")
    if not head.startswith(MAGIC) or head[-1:] != b"\n":
        raise FormatError(f"{label}: bad magic {head[:5]!r}, expected {MAGIC!r}")
    parts = head.decode("ascii", errors="replace").split()
    try:
        nx, ny, t = int(parts[1]), int(parts[2]), float(parts[3])
    except (IndexError, ValueError):
        raise FormatError(f"{label}: malformed header {head!r}") from None
    if expected is not None:
        eny, enx = expected
        if nx != enx:
            raise FormatError(f"{label}: expected nx={enx}, found nx={nx}")
        if ny != eny:
            raise FormatError(f"{label}: expected ny={eny}, found ny={ny}")
    start = offset + HEADER_BYTES
    nbytes = nx * ny * _DTYPE.itemsize
    body = buf[start:start + nbytes]
    if len(body) < nbytes:
        raise FormatError(f"{label}: truncated data ({len(body)} of {nbytes} bytes)")
    values = np.frombuffer(body, dtype=_DTYPE).reshape(ny, nx).astype(float)
    return values, t, start + nbytes


def write_snapshot(values, path, t=0.0):
    """Write a cell field (shape ``(ny, nx)``) as a CHBF1 file."""
    Path(path).write_bytes(_block(values, t))


def read_snapshot(path, shape=None):
    """Return ``(values, t)``; ``shape=(ny, nx)`` enforces the grid size."""
    buf = Path(path).read_bytes()
    values, t, end = _parse_block(buf, 0, shape, str(path))
    if end != len(buf):
        raise FormatError(f"{path}: {len(buf) - end} trailing bytes after the data block")
    return values, t


def write_velocity_snapshot(u: VelocityField, path, t=0.0):
    if u.x.ndim != 2:
        raise FormatError("velocity snapshots hold a single time level")
    Path(path).write_bytes(_block(u.x, t) + _block(u.y, t))


def read_velocity_snapshot(path, grid_shape=None):
    """Return ``(VelocityField, t)``; ``grid_shape=(ny, nx)`` enforces the cell grid."""
    buf = Path(path).read_bytes()
    ex = ey = None
    if grid_shape is not None:
        ny, nx = grid_shape
        ex, ey = (ny, nx + 1), (ny + 1, nx)
    ux, t, off = _parse_block(buf, 0, ex, f"{path} (x faces)")
    uy, _, end = _parse_block(buf, off, ey, f"{path} (y faces)")
    if uy.shape != (ux.shape[0] + 1, ux.shape[1] - 1):
        raise FormatError(f"{path}: face blocks {ux.shape}/{uy.shape} are inconsistent")
    if end != len(buf):
        raise FormatError(f"{path}: {len(buf) - end} trailing bytes after the data blocks")
    return VelocityField(ux, uy), t


def pgm_pixels(values, lo, hi):
    """8-bit pixel array, top row first: ``floor((v - lo)/(hi - lo)*255 + 1/2)`` clamped."""
    if not hi > lo:
        raise ValueError("pgm range needs lo < hi")
    v = np.asarray(values, dtype=float)
    scaled = np.floor((v - lo) / (hi - lo) * 255.0 + 0.5)
    scaled = np.nan_to_num(scaled, nan=0.0, posinf=255.0, neginf=0.0)
    return np.clip(scaled, 0, 255).astype(np.uint8)[::-1]


def emit_pgm(values, path, value_range=(-1.0, 1.0)):
    """Binary (P5) greyscale image of a cell field; row ``j = ny-1`` is the top line."""
    lo, hi = value_range
    pix = pgm_pixels(values, lo, hi)
    ny, nx = pix.shape
    Path(path).write_bytes(f"P5\n{nx} {ny}\n255\n".encode("ascii") + pix.tobytes())


def read_pgm(path):
    data = Path(path).read_bytes()
    parts = data.split(maxsplit=4)
    if len(parts) < 5 or parts[0] != b"P5":
        raise FormatError(f"{path}: not a binary PGM")
    nx, ny, maxval = int(parts[1]), int(parts[2]), int(parts[3])
    if maxval != 255:
        raise FormatError(f"{path}: only 8-bit PGM is supported")
    body = data[len(data) - nx * ny:]
    return np.frombuffer(body, dtype=np.uint8).reshape(ny, nx)


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()

