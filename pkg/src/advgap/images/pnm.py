"""Minimal 8-bit PGM/PPM reading and writing.

Pixels are returned as ``float64`` arrays of shape ``(H, W, C)`` with values
``v / 255``; ``C`` is 1 for PGM and 3 for PPM.  Reading accepts both the
binary (P5/P6) and ASCII (P2/P3) variants; writing produces binary files.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

_MAGIC = {b"P2": (1, False), b"P3": (3, False), b"P5": (1, True), b"P6": (3, True)}


def _tokens(data: bytes, count: int, pos: int):
    """Read ``count`` whitespace-separated header tokens, skipping comments."""
    out = []
    while len(out) < count:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        out.append(data[start:pos])
    return out, pos


def read_pnm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    magic = data[:2]
    if magic not in _MAGIC:
        raise ValueError(f"{path}: not a PGM/PPM file")
    channels, binary = _MAGIC[magic]
    (w, h, maxval), pos = _tokens(data, 3, 2)
    w, h, maxval = int(w), int(h), int(maxval)
    if maxval != 255:
        raise ValueError(f"{path}: only 8-bit files are supported (maxval {maxval})")
    count = w * h * channels
    if binary:
        raw = np.frombuffer(data, dtype=np.uint8, count=count, offset=pos + 1)
    else:
        raw = np.array(data[pos:].split()[:count], dtype=np.int64)
        if raw.size != count:
            raise ValueError(f"{path}: truncated pixel data")
    return raw.reshape(h, w, channels).astype(np.float64) / 255.0


def write_pnm(path, img) -> None:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        img = img[:, :, None]
    h, w, c = img.shape
    if c not in (1, 3):
        raise ValueError("images need 1 or 3 channels")
    raw = np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)
    header = f"{'P5' if c == 1 else 'P6'}\n{w} {h}\n255\n".encode()
    Path(path).write_bytes(header + raw.tobytes())


def read_seg_mask(path) -> np.ndarray:
    """Segmentation mask from a PGM: pixels at or above 128 are foreground."""
    img = read_pnm(path)
    return (np.rint(img[:, :, 0] * 255.0) >= 128).astype(np.uint8)


def write_seg_mask(path, seg) -> None:
    write_pnm(path, np.asarray(seg, dtype=np.float64))
