"""Minimal PGM (portable graymap) reader and writer.

Reads P2 (ASCII) and P5 (binary, 8- or 16-bit big-endian) files and returns
float images in [0, 1]. Writes 8-bit P5.
"""

from __future__ import annotations

import numpy as np

from .errors import ParseError
from .fileio import atomic_write_bytes


def _tokens(data: bytes, count: int, pos: int):
    """Read ``count`` whitespace-separated header tokens, skipping comments."""
    out = []
    n = len(data)
    while len(out) < count:
        while pos < n and (data[pos:pos + 1].isspace() or data[pos:pos + 1] == b"#"):
            if data[pos:pos + 1] == b"#":
                while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                    pos += 1
            else:
                pos += 1
        if pos >= n:
            raise ParseError("truncated header", f"byte {pos}")
        start = pos
        while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        out.append((data[start:pos], start))
    return out, pos


def _int(token, what):
    text, offset = token
    try:
        return int(text)
    except ValueError:
        raise ParseError(f"bad {what} {text!r}", f"byte {offset}") from None


def parse_pgm(data: bytes) -> np.ndarray:
    if data[:2] not in (b"P2", b"P5"):
        raise ParseError("not a P2/P5 PGM file", "byte 0")
    magic = data[:2]
    toks, pos = _tokens(data, 3, 2)
    width, height, maxval = _int(toks[0], "width"), _int(toks[1], "height"), _int(toks[2], "maxval")
    if width < 1 or height < 1:
        raise ParseError("image dimensions must be positive", f"byte {toks[0][1]}")
    if not 0 < maxval <= 65535:
        raise ParseError(f"maxval {maxval} outside 1..65535", f"byte {toks[2][1]}")
    count = width * height
    if magic == b"P5":
        # exactly one whitespace byte separates the header from the raster
        if pos >= len(data) or not data[pos:pos + 1].isspace():
            raise ParseError("missing whitespace after maxval", f"byte {pos}")
        pos += 1
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        need = count * dtype.itemsize
        if len(data) - pos < need:
            raise ParseError(f"truncated raster: need {need} bytes, have {len(data) - pos}", f"byte {len(data)}")
        pixels = np.frombuffer(data, dtype=dtype, count=count, offset=pos).astype(float)
    else:
        toks, _ = (_tokens(data, count, pos) if count else ([], pos))
        pixels = np.array([_int(t, "pixel") for t in toks], dtype=float)
    if np.any(pixels > maxval):
        raise ParseError("pixel value exceeds maxval")
    return pixels.reshape(height, width) / maxval


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return parse_pgm(fh.read())


def encode_pgm(img) -> bytes:
    img = np.clip(np.asarray(img, dtype=float), 0.0, 1.0)
    if img.ndim != 2:
        raise ValueError("expected a 2-D grayscale image")
    raster = np.floor(img * 255.0 + 0.5).astype(np.uint8)
    h, w = raster.shape
    return f"P5\n{w} {h}\n255\n".encode() + raster.tobytes()


def encode_pgm_ascii(img, maxval: int = 255) -> bytes:
    img = np.clip(np.asarray(img, dtype=float), 0.0, 1.0)
    raster = np.floor(img * maxval + 0.5).astype(int)
    h, w = raster.shape
    rows = "\n".join(" ".join(str(v) for v in row) for row in raster)
    return f"P2\n{w} {h}\n{maxval}\n{rows}\n".encode()


def write_pgm(img, path) -> None:
    atomic_write_bytes(path, encode_pgm(img))
