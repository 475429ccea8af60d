"""Binary netpbm encode/decode: P5 grayscale (PGM) and P6 color (PPM).

Images travel through the package as float arrays in [0, 1]; files hold
8-bit samples with maxval 255. Comments (# ...) in headers are tolerated on
read, never written.
"""

from __future__ import annotations

import numpy as np


class NetpbmError(ValueError):
    """Raised for malformed netpbm files."""


def _quantize(values: np.ndarray) -> np.ndarray:
    return np.round(np.clip(values, 0.0, 1.0) * 255.0).astype(np.uint8)


def write_pgm(path: str, image: np.ndarray) -> None:
    """Write a 2-D float image in [0, 1] as binary PGM (P5, maxval 255)."""
    if image.ndim != 2:
        raise NetpbmError(f"PGM needs a 2-D image, got shape {image.shape}")
    h, w = image.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(_quantize(image).tobytes())


def write_ppm(path: str, rgb: np.ndarray) -> None:
    """Write an (h, w, 3) float image in [0, 1] as binary PPM (P6)."""
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise NetpbmError(f"PPM needs an (h, w, 3) image, got {rgb.shape}")
    h, w, _ = rgb.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(_quantize(rgb).tobytes())


def _read_tokens(blob: bytes, count: int) -> tuple[list[bytes], int]:
    """Pull ``count`` whitespace-separated header tokens, skipping comments.

    Returns the tokens and the index of the first payload byte (one
    whitespace char after the last token, per the netpbm convention).
    """
    tokens: list[bytes] = []
    i = 0
    while len(tokens) < count:
        if i >= len(blob):
            raise NetpbmError("header ended prematurely")
        c = blob[i:i + 1]
        if c == b"#":
            while i < len(blob) and blob[i:i + 1] != b"\n":
                i += 1
        elif c.isspace():
            i += 1
        else:
            start = i
            while i < len(blob) and not blob[i:i + 1].isspace():
                i += 1
            tokens.append(blob[start:i])
    if i >= len(blob) or not blob[i:i + 1].isspace():
        raise NetpbmError("missing whitespace after maxval")
    return tokens, i + 1


def read_pgm(path: str) -> np.ndarray:
    """Read a binary PGM into a 2-D float64 array scaled to [0, 1]."""
    with open(path, "rb") as fh:
        blob = fh.read()
    tokens, start = _read_tokens(blob, 4)
    if tokens[0] != b"P5":
        raise NetpbmError(f"not a binary PGM: magic {tokens[0]!r}")
    w, h, maxval = (int(t) for t in tokens[1:])
    if maxval != 255:
        raise NetpbmError(f"only maxval 255 supported, got {maxval}")
    data = blob[start:start + w * h]
    if len(data) != w * h:
        raise NetpbmError(f"payload has {len(data)} bytes, expected {w * h}")
    return np.frombuffer(data, dtype=np.uint8).reshape(h, w) / 255.0


def read_ppm(path: str) -> np.ndarray:
    """Read a binary PPM into an (h, w, 3) float64 array scaled to [0, 1]."""
    with open(path, "rb") as fh:
        blob = fh.read()
    tokens, start = _read_tokens(blob, 4)
    if tokens[0] != b"P6":
        raise NetpbmError(f"not a binary PPM: magic {tokens[0]!r}")
    w, h, maxval = (int(t) for t in tokens[1:])
    if maxval != 255:
        raise NetpbmError(f"only maxval 255 supported, got {maxval}")
    need = w * h * 3
    data = blob[start:start + need]
    if len(data) != need:
        raise NetpbmError(f"payload has {len(data)} bytes, expected {need}")
    return np.frombuffer(data, dtype=np.uint8).reshape(h, w, 3) / 255.0
