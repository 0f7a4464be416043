"""Binary and ASCII Netpbm readers and writers (P1, P4, P5, P6)."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from cmsanet.errors import ParseError

_WS = b" \t\n\r\v\f"


def _header(buf: bytes, path, n_fields: int) -> tuple[list[int], int]:
    """Parse ``n_fields`` integers after the 2-byte magic; return them and the raster offset."""
    pos = 2
    fields: list[int] = []
    while len(fields) < n_fields:
        while pos < len(buf) and buf[pos] in _WS:
            pos += 1
        if pos < len(buf) and buf[pos:pos + 1] == b"#":
            while pos < len(buf) and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(buf) and buf[pos:pos + 1].isdigit():
            pos += 1
        if start == pos:
            raise ParseError(f"truncated or malformed header (field {len(fields) + 1})", path)
        fields.append(int(buf[start:pos]))
    if pos >= len(buf) or buf[pos] not in _WS:
        raise ParseError("header not terminated by whitespace", path)
    return fields, pos + 1


def _read(path) -> bytes:
    buf = Path(path).read_bytes()
    if len(buf) < 2:
        raise ParseError("file too short for a Netpbm header", path)
    return buf


def _raster(buf: bytes, offset: int, count: int, path) -> np.ndarray:
    if len(buf) - offset < count:
        raise ParseError(f"truncated raster: expected {count} bytes, found {len(buf) - offset}", path)
    return np.frombuffer(buf, dtype=np.uint8, count=count, offset=offset)


def write_ppm(path, rgb: np.ndarray) -> None:
    """8-bit binary P6 from an ``H x W x 3`` uint8 array."""
    rgb = np.ascontiguousarray(rgb, dtype=np.uint8)
    h, w, _ = rgb.shape
    Path(path).write_bytes(f"P6\n{w} {h}\n255\n".encode("ascii") + rgb.tobytes())


def read_ppm(path) -> np.ndarray:
    buf = _read(path)
    if buf[:2] != b"P6":
        raise ParseError(f"expected P6 magic, found {buf[:2]!r}", path)
    (w, h, maxval), off = _header(buf, path, 3)
    if maxval != 255:
        raise ParseError(f"only maxval 255 is supported, found {maxval}", path)
    return _raster(buf, off, w * h * 3, path).reshape(h, w, 3).copy()


def write_pgm(path, gray: np.ndarray, maxval: int = 255) -> None:
    gray = np.ascontiguousarray(gray, dtype=np.uint8)
    h, w = gray.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n{maxval}\n".encode("ascii") + gray.tobytes())


def read_pgm(path) -> np.ndarray:
    buf = _read(path)
    if buf[:2] != b"P5":
        raise ParseError(f"expected P5 magic, found {buf[:2]!r}", path)
    (w, h, maxval), off = _header(buf, path, 3)
    if not 0 < maxval < 256:
        raise ParseError(f"only 8-bit maxval is supported, found {maxval}", path)
    return _raster(buf, off, w * h, path).reshape(h, w).copy()


def write_pbm(path, mask: np.ndarray, binary: bool = True) -> None:
    """Bitmap with 1 = foreground (black in Netpbm convention)."""
    bits = np.asarray(mask).astype(bool)
    h, w = bits.shape
    if binary:
        body = np.packbits(bits, axis=1).tobytes()
        Path(path).write_bytes(f"P4\n{w} {h}\n".encode("ascii") + body)
    else:
        rows = "\n".join(" ".join("1" if b else "0" for b in row) for row in bits)
        Path(path).write_text(f"P1\n{w} {h}\n{rows}\n", encoding="ascii")


def read_pbm(path) -> np.ndarray:
    buf = _read(path)
    magic = buf[:2]
    if magic not in (b"P1", b"P4"):
        raise ParseError(f"expected P1 or P4 magic, found {magic!r}", path)
    (w, h), off = _header(buf, path, 2)
    if magic == b"P4":
        stride = (w + 7) // 8
        packed = _raster(buf, off, stride * h, path).reshape(h, stride)
        return np.unpackbits(packed, axis=1)[:, :w].astype(bool)
    digits = [c for c in buf[off:] if c in b"01"]
    if len(digits) < w * h:
        raise ParseError(f"truncated raster: expected {w * h} pixels, found {len(digits)}", path)
    return (np.array(digits[:w * h], dtype=np.uint8) == ord("1")).reshape(h, w)
