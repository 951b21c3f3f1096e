"""Depth file formats.

PFM (``Pf``): grayscale 32-bit floats, rows stored bottom-to-top, scale
``-1.0`` on write (little-endian). Values round-trip exactly when they are
representable as float32.

PGM16 (``P5``): 16-bit big-endian samples, maxval 65535, with a header
comment ``# depth_range_mm <min> <max>``; depth is quantised linearly over
that range, so a round-trip is exact to within one step
``(max - min) / 65535``.
"""

from __future__ import annotations

import os
import re

import numpy as np

from .field import DepthField

__all__ = ["read_pfm", "write_pfm", "read_pgm16", "write_pgm16", "read_depth", "write_depth", "detect_format"]

PGM_MAXVAL = 65535
_RANGE_RE = re.compile(rb"#\s*depth_range_mm\s+(\S+)\s+(\S+)")


class FormatError(ValueError):
    pass


def _read_token_lines(buf: bytes, pos: int, count: int):
    """Pull ``count`` whitespace-separated header tokens, collecting comments."""
    tokens, comments = [], []
    n = len(buf)
    while len(tokens) < count:
        while pos < n and buf[pos:pos + 1].isspace():
            pos += 1
        if pos >= n:
            raise FormatError("truncated header")
        if buf[pos:pos + 1] == b"#":
            end = buf.find(b"\n", pos)
            end = n if end < 0 else end
            comments.append(buf[pos:end])
            pos = end
            continue
        start = pos
        while pos < n and not buf[pos:pos + 1].isspace():
            pos += 1
        tokens.append(buf[start:pos])
    # exactly one whitespace byte separates the header from raster data
    return tokens, comments, pos + 1


_F32_MAX = float(np.finfo(np.float32).max)


def write_pfm(path, field: DepthField) -> None:
    h, w = field.shape
    if np.max(np.abs(field.data)) > _F32_MAX:
        raise ValueError(f"{path}: depth values exceed the float32 range of PFM")
    body = np.flipud(field.data).astype("<f4").tobytes()
    with open(path, "wb") as f:
        f.write(f"Pf\n{w} {h}\n-1.0\n".encode("ascii"))
        f.write(body)


def read_pfm(path) -> DepthField:
    with open(path, "rb") as f:
        buf = f.read()
    if not buf.startswith(b"Pf"):
        if buf.startswith(b"PF"):
            raise FormatError(f"{path}: colour PFM is not supported")
        raise FormatError(f"{path}: not a grayscale PFM file")
    tokens, _, pos = _read_token_lines(buf, 2, 3)
    try:
        w, h, scale = int(tokens[0]), int(tokens[1]), float(tokens[2])
    except ValueError as exc:
        raise FormatError(f"{path}: bad PFM header") from exc
    if scale == 0:
        raise FormatError(f"{path}: PFM scale must be non-zero")
    dtype = "<f4" if scale < 0 else ">f4"
    need = w * h * 4
    if len(buf) - pos < need:
        raise FormatError(f"{path}: expected {need} bytes of raster, found {len(buf) - pos}")
    data = np.frombuffer(buf, dtype=dtype, count=w * h, offset=pos).reshape(h, w)
    return DepthField(np.flipud(data).astype(np.float64))


def write_pgm16(path, field: DepthField, depth_range: tuple[float, float] | None = None) -> None:
    a = field.data
    if depth_range is None:
        lo, hi = float(a.min()), float(a.max())
        if hi <= lo:
            hi = lo + 1.0
    else:
        lo, hi = map(float, depth_range)
        if not hi > lo:
            raise ValueError(f"depth range must satisfy max > min, got {depth_range}")
    q = np.rint((np.clip(a, lo, hi) - lo) / (hi - lo) * PGM_MAXVAL)
    q = np.clip(q, 0, PGM_MAXVAL).astype(">u2")
    h, w = a.shape
    header = f"P5\n# depth_range_mm {lo!r} {hi!r}\n{w} {h}\n{PGM_MAXVAL}\n"
    with open(path, "wb") as f:
        f.write(header.encode("ascii"))
        f.write(q.tobytes())


def read_pgm16(path, with_range: bool = False):
    with open(path, "rb") as f:
        buf = f.read()
    if not buf.startswith(b"P5"):
        raise FormatError(f"{path}: not a binary PGM file")
    tokens, comments, pos = _read_token_lines(buf, 2, 3)
    w, h, maxval = (int(t) for t in tokens)
    if maxval != PGM_MAXVAL:
        raise FormatError(f"{path}: expected maxval {PGM_MAXVAL}, got {maxval}")
    rng = None
    for c in comments:
        m = _RANGE_RE.match(c)
        if m:
            rng = (float(m.group(1)), float(m.group(2)))
    if rng is None:
        raise FormatError(f"{path}: missing '# depth_range_mm <min> <max>' comment")
    need = w * h * 2
    if len(buf) - pos < need:
        raise FormatError(f"{path}: expected {need} bytes of raster, found {len(buf) - pos}")
    q = np.frombuffer(buf, dtype=">u2", count=w * h, offset=pos).reshape(h, w)
    lo, hi = rng
    field = DepthField(lo + q.astype(np.float64) * ((hi - lo) / PGM_MAXVAL))
    return (field, rng) if with_range else field


def detect_format(path) -> str:
    with open(path, "rb") as f:
        magic = f.read(2)
    if magic in (b"Pf", b"PF"):
        return "pfm"
    if magic == b"P5":
        return "pgm"
    raise FormatError(f"{path}: unrecognised depth file (magic {magic!r})")


def read_depth(path):
    """Read either format; returns ``(field, format, depth_range or None)``."""
    fmt = detect_format(path)
    if fmt == "pfm":
        return read_pfm(path), fmt, None
    field, rng = read_pgm16(path, with_range=True)
    return field, fmt, rng


def write_depth(path, field: DepthField, fmt: str | None = None, depth_range=None) -> None:
    if fmt is None:
        ext = os.path.splitext(str(path))[1].lower()
        fmt = "pgm" if ext in (".pgm", ".pgm16") else "pfm"
    if fmt == "pfm":
        write_pfm(path, field)
    elif fmt == "pgm":
        write_pgm16(path, field, depth_range)
    else:
        raise ValueError(f"unknown depth format {fmt!r}")
