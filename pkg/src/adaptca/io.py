"""Snapshot and PGM image I/O.

Snapshot layout (all little-endian)::

    b"ACA1" | u32 width | u32 height | u32 channels | u32 step | f32[channels*height*width]

with the payload channel-outermost and row-major.
"""
from __future__ import annotations

import re
import struct
from pathlib import Path

import numpy as np

from .errors import FormatError
from .grid import Grid

MAGIC = b"ACA1"
_HEADER = struct.Struct("<4s4I")


def snapshot_bytes(grid: Grid, step: int) -> bytes:
    header = _HEADER.pack(MAGIC, grid.width, grid.height, grid.channels, step)
    return header + grid.data.astype("<f4", copy=False).tobytes(order="C")


def write_snapshot(path, grid: Grid, step: int) -> Path:
    path = Path(path)
    path.write_bytes(snapshot_bytes(grid, step))
    return path


def parse_snapshot(buf: bytes) -> tuple[Grid, int]:
    if len(buf) < _HEADER.size:
        raise FormatError("truncated snapshot header", offset=len(buf))
    magic, width, height, channels, step = _HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise FormatError(f"bad snapshot magic {magic!r}", offset=0)
    n = width * height * channels
    expected = _HEADER.size + 4 * n
    if len(buf) < expected:
        raise FormatError(f"truncated snapshot payload, expected {expected} bytes", offset=len(buf))
    data = np.frombuffer(buf, dtype="<f4", count=n, offset=_HEADER.size)
    return Grid(data.reshape(channels, height, width).astype(np.float32)), step


def read_snapshot(path) -> tuple[Grid, int]:
    return parse_snapshot(Path(path).read_bytes())


def to_gray8(plane: np.ndarray) -> np.ndarray:
    """Linear min/max scaling to 0..255; a constant plane maps to 0."""
    plane = np.asarray(plane, dtype=np.float64)
    lo, hi = np.nanmin(plane), np.nanmax(plane)
    if not np.isfinite(lo) or not np.isfinite(hi) or hi <= lo:
        return np.zeros(plane.shape, dtype=np.uint8)
    return np.round((plane - lo) / (hi - lo) * 255).astype(np.uint8)


def write_pgm(path, plane: np.ndarray) -> Path:
    """Write a 2-D array as a binary (P5) 8-bit PGM with min/max scaling."""
    img = to_gray8(plane)
    h, w = img.shape
    path = Path(path)
    path.write_bytes(f"P5\n{w} {h}\n255\n".encode("ascii") + img.tobytes())
    return path


def write_snapshot_pgms(out_dir, stem: str, grid: Grid, names) -> list[Path]:
    out_dir = Path(out_dir)
    return [write_pgm(out_dir / f"{stem}_{name}.pgm", grid.data[c]) for c, name in enumerate(names)]


_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*([^\s#]+)")


def _header_tokens(buf: bytes, count: int) -> tuple[list[bytes], int]:
    """Read ``count`` whitespace-separated header tokens (comments allowed)."""
    pos, tokens = 2, []
    for _ in range(count):
        m = _TOKEN.match(buf, pos)
        if m is None:
            raise FormatError("truncated PGM header", offset=pos)
        tokens.append(m.group(1))
        pos = m.end()
    return tokens, pos


def parse_pgm(buf: bytes) -> np.ndarray:
    """Decode a P2 or P5 PGM into a float field in [0, 1] (pixel / maxval)."""
    magic = buf[:2]
    if magic not in (b"P2", b"P5"):
        raise FormatError(f"not a PGM file (magic {magic!r})", offset=0)
    tokens, pos = _header_tokens(buf, 3)
    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError as exc:
        raise FormatError(f"non-numeric PGM header field: {exc}", offset=pos) from None
    if width < 1 or height < 1:
        raise FormatError(f"invalid PGM dimensions {width}x{height}", offset=pos)
    if not 0 < maxval <= 255:
        raise FormatError(f"unsupported PGM maxval {maxval}; only 8-bit images (maxval <= 255) are supported", offset=pos)
    n = width * height
    if magic == b"P5":
        start = pos + 1  # single whitespace byte after maxval
        if len(buf) < start + n:
            raise FormatError(f"truncated PGM raster, expected {n} bytes", offset=len(buf))
        pixels = np.frombuffer(buf, dtype=np.uint8, count=n, offset=start)
        if pixels.max() > maxval:
            raise FormatError("P5 pixel value exceeds maxval", offset=start + int(np.argmax(pixels > maxval)))
    else:
        body = buf[pos:].split()
        if len(body) < n:
            raise FormatError(f"truncated PGM raster, expected {n} values, found {len(body)}", offset=len(buf))
        try:
            pixels = np.array([int(v) for v in body[:n]], dtype=np.int64)
        except ValueError:
            raise FormatError("non-numeric value in P2 raster", offset=pos) from None
        if pixels.min() < 0 or pixels.max() > maxval:
            raise FormatError("P2 pixel value outside [0, maxval]", offset=pos)
    return (pixels.astype(np.float64) / maxval).reshape(height, width)


def load_pgm(path) -> np.ndarray:
    return parse_pgm(Path(path).read_bytes())
