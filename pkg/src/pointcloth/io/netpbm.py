"""Binary NetPBM: P5 grayscale (masks) and P6 RGB, maxval 255 only."""
from __future__ import annotations

import os

import numpy as np

MASK_THRESHOLD = 128


class NetpbmError(ValueError):
    pass


def _tokens(data: bytes, count: int):
    """First ``count`` header tokens and the offset of the raster (one whitespace after maxval)."""
    out, i, n = [], 0, len(data)
    while len(out) < count:
        while i < n and data[i:i + 1].isspace():
            i += 1
        if i < n and data[i:i + 1] == b"#":
            while i < n and data[i:i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        j = i
        while j < n and not data[j:j + 1].isspace() and data[j:j + 1] != b"#":
            j += 1
        if j == i:
            raise NetpbmError("header ended early")
        out.append(data[i:j])
        i = j
    if i >= n or not data[i:i + 1].isspace():
        raise NetpbmError("missing whitespace after maxval")
    return out, i + 1


def _read(path, magic: bytes, channels: int) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:2] != magic:
        raise NetpbmError(f"{os.fspath(path)}: expected magic {magic.decode()}, got {data[:2]!r}")
    tok, off = _tokens(data[2:], 3)
    try:
        w, h, maxval = (int(t) for t in tok)
    except ValueError:
        raise NetpbmError(f"{os.fspath(path)}: non-numeric header field") from None
    if maxval != 255:
        raise NetpbmError(f"{os.fspath(path)}: maxval {maxval} is not supported (only 255)")
    if w <= 0 or h <= 0:
        raise NetpbmError(f"{os.fspath(path)}: bad size {w}x{h}")
    need = w * h * channels
    raster = data[2 + off:]
    if len(raster) != need:
        raise NetpbmError(f"{os.fspath(path)}: expected {need} raster bytes, got {len(raster)}")
    arr = np.frombuffer(raster, np.uint8).reshape((h, w, channels) if channels > 1 else (h, w))
    return arr.copy()


def _write(path, magic: bytes, arr: np.ndarray) -> None:
    h, w = arr.shape[:2]
    with open(path, "wb") as fh:
        fh.write(magic + f"\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(arr, dtype=np.uint8).tobytes())


def to_uint8(img) -> np.ndarray:
    """Floats in [0, 1] (clipped) or bools to bytes; uint8 passes through."""
    img = np.asarray(img)
    if img.dtype == np.uint8:
        return img
    if img.dtype == bool:
        return img.astype(np.uint8) * 255
    return np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)


def load_pgm(path) -> np.ndarray:
    return _read(path, b"P5", 1)


def load_mask(path) -> np.ndarray:
    """P5 image binarized: value >= 128 is foreground."""
    return load_pgm(path) >= MASK_THRESHOLD


def save_pgm(path, img) -> None:
    arr = to_uint8(img)
    if arr.ndim != 2:
        raise NetpbmError(f"P5 needs a 2-D image, got shape {arr.shape}")
    _write(path, b"P5", arr)


save_mask = save_pgm


def load_ppm(path) -> np.ndarray:
    return _read(path, b"P6", 3)


def save_ppm(path, img) -> None:
    arr = to_uint8(img)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise NetpbmError(f"P6 needs an (H, W, 3) image, got shape {arr.shape}")
    _write(path, b"P6", arr)
