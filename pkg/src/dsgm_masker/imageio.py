"""Binary netpbm (P5/P6) frame I/O and deterministic sequence listing.

Frames are ``float64`` arrays of shape ``(height, width)`` holding intensities
in ``[0, 255]``. Masks are ``uint8`` arrays holding only 0 and 255. Only the
binary variants with ``maxval == 255`` are supported.
"""

from __future__ import annotations

import fnmatch
import os
from pathlib import Path

import numpy as np

__all__ = [
    "ImageFormatError",
    "MalformedHeaderError",
    "TruncatedPayloadError",
    "UnsupportedFormatError",
    "as_frame",
    "as_mask",
    "read_frame",
    "write_frame",
    "write_mask",
    "sequence",
]

_WHITESPACE = b" \t\n\r\x0b\x0c"


class ImageFormatError(ValueError):
    """Base class for netpbm decoding failures."""


class MalformedHeaderError(ImageFormatError):
    pass


class TruncatedPayloadError(ImageFormatError):
    pass


class UnsupportedFormatError(ImageFormatError):
    """Magic number or bit depth outside binary P5/P6 at maxval 255."""


def as_frame(data) -> np.ndarray:
    """Validate and convert ``data`` to a float64 frame."""
    frame = np.asarray(data, dtype=np.float64)
    if frame.ndim != 2 or frame.shape[0] < 1 or frame.shape[1] < 1:
        raise ValueError(f"frame must be a non-empty 2-D array, got shape {frame.shape}")
    if not np.all((frame >= 0.0) & (frame <= 255.0)):
        raise ValueError("frame intensities must lie in [0, 255]")
    return frame


def as_mask(data) -> np.ndarray:
    mask = np.asarray(data)
    if mask.ndim != 2 or mask.size == 0:
        raise ValueError(f"mask must be a non-empty 2-D array, got shape {mask.shape}")
    if not np.all((mask == 0) | (mask == 255)):
        raise ValueError("mask values must be 0 or 255")
    return mask.astype(np.uint8)


def _parse_header(buf: bytes) -> tuple[bytes, int, int, int, int]:
    """Return ``(magic, width, height, maxval, payload_offset)``."""
    if len(buf) < 2:
        raise MalformedHeaderError("file too short for a netpbm magic number")
    magic = buf[:2]
    if magic not in (b"P5", b"P6"):
        raise UnsupportedFormatError(f"unsupported magic number {magic!r}")

    pos = 2
    fields: list[int] = []
    while len(fields) < 3:
        # whitespace and comments between tokens
        while pos < len(buf):
            if buf[pos] in _WHITESPACE:
                pos += 1
            elif buf[pos] == ord("#"):
                while pos < len(buf) and buf[pos] not in b"\r\n":
                    pos += 1
            else:
                break
        start = pos
        while pos < len(buf) and buf[pos] not in _WHITESPACE and buf[pos] != ord("#"):
            pos += 1
        token = buf[start:pos]
        if not token:
            raise MalformedHeaderError("header ended before width/height/maxval")
        if not token.isdigit():
            raise MalformedHeaderError(f"non-numeric header field {token!r}")
        fields.append(int(token))

    if pos >= len(buf) or buf[pos] not in _WHITESPACE:
        raise MalformedHeaderError("maxval must be followed by a single whitespace byte")
    pos += 1

    width, height, maxval = fields
    if width < 1 or height < 1:
        raise MalformedHeaderError(f"invalid dimensions {width}x{height}")
    if maxval != 255:
        raise UnsupportedFormatError(f"unsupported maxval {maxval} (only 8-bit, maxval 255)")
    return magic, width, height, maxval, pos


def read_frame(path) -> np.ndarray:
    """Decode a binary PGM or PPM file into a float64 intensity frame.

    PPM pixels are converted with Rec. 601 luma weights, rounded half-up.
    """
    buf = Path(path).read_bytes()
    magic, width, height, _, offset = _parse_header(buf)
    channels = 1 if magic == b"P5" else 3
    expected = width * height * channels
    payload = buf[offset : offset + expected]
    if len(payload) < expected:
        raise TruncatedPayloadError(f"{path}: expected {expected} payload bytes, got {len(payload)}")

    raw = np.frombuffer(payload, dtype=np.uint8)
    if channels == 1:
        return raw.reshape(height, width).astype(np.float64)

    rgb = raw.reshape(height, width, 3).astype(np.int64)
    # integer form of round(0.299 R + 0.587 G + 0.114 B), half-up
    luma = (299 * rgb[..., 0] + 587 * rgb[..., 1] + 114 * rgb[..., 2] + 500) // 1000
    return luma.astype(np.float64)


def _write_p5(pixels: np.ndarray, path) -> None:
    height, width = pixels.shape
    header = f"P5\n{width} {height}\n255\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(pixels, dtype=np.uint8).tobytes())


def write_mask(mask, path) -> None:
    """Write a 0/255 mask as a binary PGM."""
    _write_p5(as_mask(mask), path)


def write_frame(frame, path) -> None:
    """Quantize a real-valued frame (round half-up, clip) and write it as P5."""
    frame = as_frame(frame)
    _write_p5(np.clip(np.floor(frame + 0.5), 0, 255), path)


def sequence(directory, pattern: str = "*") -> list[Path]:
    """List files in ``directory`` matching ``pattern``, sorted by name.

    Raises ``OSError`` (e.g. ``FileNotFoundError``, ``PermissionError``) when
    the directory cannot be read.
    """
    directory = Path(directory)
    names = os.listdir(directory)
    matched = sorted(n for n in names if fnmatch.fnmatchcase(n, pattern))
    return [directory / n for n in matched if (directory / n).is_file()]
