"""Binary codecs for the on-disk formats: PFT1 tensor files and netpbm images.

PFT1 layout: magic ``PFT1`` | u8 dtype code | u8 ndim | ndim x u32 LE dims |
row-major little-endian payload. Code 1 is float32 (the interchange format);
code 2 (float64) is an internal extension used only by checkpoint files.

Images are binary PGM (``P5``, maxval 255) for grayscale and binary PPM
(``P6``) for RGB. Masks are PGM restricted to the values 0 and 255.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

PFT_MAGIC = b"PFT1"

_DTYPE_BY_CODE = {1: np.dtype("<f4"), 2: np.dtype("<f8")}
_CODE_BY_DTYPE = {np.dtype(np.float32): 1, np.dtype(np.float64): 2}


class FormatError(ValueError):
    """A binary payload does not match its declared format."""


def tensor_to_bytes(arr: np.ndarray) -> bytes:
    """Encode an array as PFT1. Only float32/float64, finite values allowed."""
    arr = np.asarray(arr)
    code = _CODE_BY_DTYPE.get(arr.dtype)
    if code is None:
        raise FormatError(f"unsupported dtype {arr.dtype}; expected float32 or float64")
    if arr.ndim < 1 or arr.ndim > 255:
        raise FormatError(f"ndim {arr.ndim} out of range 1..255")
    if any(d <= 0 for d in arr.shape):
        raise FormatError(f"dims must be positive, got {arr.shape}")
    if not np.isfinite(arr).all():
        raise FormatError("tensor contains non-finite values")
    header = PFT_MAGIC + struct.pack("<BB", code, arr.ndim)
    header += struct.pack(f"<{arr.ndim}I", *arr.shape)
    payload = np.ascontiguousarray(arr, dtype=_DTYPE_BY_CODE[code]).tobytes()
    return header + payload


def tensor_from_bytes(buf: bytes) -> np.ndarray:
    """Decode a PFT1 payload; rejects bad magic, dtype, size, or non-finite data."""
    if len(buf) < 6:
        raise FormatError("truncated PFT1 header")
    if buf[:4] != PFT_MAGIC:
        raise FormatError(f"bad magic {buf[:4]!r}")
    code, ndim = struct.unpack_from("<BB", buf, 4)
    dtype = _DTYPE_BY_CODE.get(code)
    if dtype is None:
        raise FormatError(f"unknown dtype code {code}")
    if ndim < 1:
        raise FormatError("ndim must be >= 1")
    dims_end = 6 + 4 * ndim
    if len(buf) < dims_end:
        raise FormatError("truncated PFT1 dims")
    dims = struct.unpack_from(f"<{ndim}I", buf, 6)
    if any(d == 0 for d in dims):
        raise FormatError(f"dims must be positive, got {dims}")
    count = int(np.prod(dims, dtype=np.int64))
    expected = dims_end + count * dtype.itemsize
    if len(buf) != expected:
        raise FormatError(f"payload length {len(buf)} != expected {expected}")
    arr = np.frombuffer(buf, dtype=dtype, offset=dims_end).reshape(dims)
    if not np.isfinite(arr).all():
        raise FormatError("tensor contains non-finite values")
    return arr.copy()


def write_tensor(path: str | Path, arr: np.ndarray) -> None:
    Path(path).write_bytes(tensor_to_bytes(arr))


def read_tensor(path: str | Path) -> np.ndarray:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"tensor file not found: {path}")
    return tensor_from_bytes(path.read_bytes())


# --- netpbm -----------------------------------------------------------------

def _encode_netpbm(magic: bytes, pixels: np.ndarray) -> bytes:
    h, w = pixels.shape[:2]
    return magic + f"\n{w} {h}\n255\n".encode("ascii") + pixels.tobytes()


def _parse_netpbm_header(buf: bytes, path: str) -> tuple[bytes, int, int, int]:
    """Return (magic, width, height, data offset); handles whitespace and # comments."""
    if len(buf) < 2 or buf[:1] != b"P":
        raise FormatError(f"{path}: not a netpbm file")
    magic = buf[:2]
    pos = 2
    tokens: list[int] = []
    while len(tokens) < 3:
        if pos >= len(buf):
            raise FormatError(f"{path}: truncated netpbm header")
        c = buf[pos : pos + 1]
        if c == b"#":
            while pos < len(buf) and buf[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif c.isspace():
            pos += 1
        else:
            start = pos
            while pos < len(buf) and not buf[pos : pos + 1].isspace():
                pos += 1
            try:
                tokens.append(int(buf[start:pos]))
            except ValueError:
                raise FormatError(f"{path}: bad netpbm header token {buf[start:pos]!r}") from None
    pos += 1  # single whitespace byte terminates the header
    width, height, maxval = tokens
    if maxval != 255:
        raise FormatError(f"{path}: only maxval 255 supported, got {maxval}")
    if width <= 0 or height <= 0:
        raise FormatError(f"{path}: bad dimensions {width}x{height}")
    return magic, width, height, pos


def write_pgm(path: str | Path, gray: np.ndarray) -> None:
    """Write an HxW uint8 array as binary PGM."""
    gray = np.asarray(gray)
    if gray.ndim != 2 or gray.dtype != np.uint8:
        raise FormatError(f"PGM wants an HxW uint8 array, got {gray.dtype} {gray.shape}")
    Path(path).write_bytes(_encode_netpbm(b"P5", gray))


def write_ppm(path: str | Path, rgb: np.ndarray) -> None:
    """Write an HxWx3 uint8 array as binary PPM."""
    rgb = np.asarray(rgb)
    if rgb.ndim != 3 or rgb.shape[2] != 3 or rgb.dtype != np.uint8:
        raise FormatError(f"PPM wants an HxWx3 uint8 array, got {rgb.dtype} {rgb.shape}")
    Path(path).write_bytes(_encode_netpbm(b"P6", rgb))


def read_image_bytes(buf: bytes, path: str = "<bytes>") -> np.ndarray:
    """Decode PGM/PPM bytes into a CxHxW float32 array in [0, 1], C in {1, 3}."""
    magic, width, height, offset = _parse_netpbm_header(buf, path)
    channels = {b"P5": 1, b"P6": 3}.get(magic)
    if channels is None:
        raise FormatError(f"{path}: unsupported netpbm magic {magic!r}")
    count = width * height * channels
    data = buf[offset : offset + count]
    if len(data) != count or len(buf) != offset + count:
        raise FormatError(f"{path}: pixel payload is {len(buf) - offset} bytes, expected {count}")
    pixels = np.frombuffer(data, dtype=np.uint8)
    if channels == 1:
        arr = pixels.reshape(1, height, width)
    else:
        arr = pixels.reshape(height, width, 3).transpose(2, 0, 1)
    return (arr.astype(np.float32) / 255.0).copy()


def read_image(path: str | Path) -> np.ndarray:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"image file not found: {path}")
    return read_image_bytes(path.read_bytes(), str(path))


def read_mask_bytes(buf: bytes, path: str = "<bytes>") -> np.ndarray:
    """Decode a 0/255 PGM mask into an HxW uint8 array of {0, 1}."""
    magic, width, height, offset = _parse_netpbm_header(buf, path)
    if magic != b"P5":
        raise FormatError(f"{path}: masks must be PGM (P5), got {magic!r}")
    count = width * height
    if len(buf) != offset + count:
        raise FormatError(f"{path}: pixel payload is {len(buf) - offset} bytes, expected {count}")
    pixels = np.frombuffer(buf, dtype=np.uint8, offset=offset).reshape(height, width)
    bad = ~np.isin(pixels, (0, 255))
    if bad.any():
        raise FormatError(f"{path}: mask has values other than 0/255")
    return (pixels == 255).astype(np.uint8)


def read_mask(path: str | Path) -> np.ndarray:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"mask file not found: {path}")
    return read_mask_bytes(path.read_bytes(), str(path))


def write_mask(path: str | Path, bits: np.ndarray) -> None:
    """Write an HxW {0,1} array as a 0/255 PGM mask."""
    bits = np.asarray(bits)
    if bits.ndim != 2 or not np.isin(bits, (0, 1)).all():
        raise FormatError("mask wants an HxW array of {0,1}")
    write_pgm(path, (bits.astype(np.uint8) * 255))


def mask_to_pgm_bytes(bits: np.ndarray) -> bytes:
    return _encode_netpbm(b"P5", np.asarray(bits, dtype=np.uint8) * 255)


def image_to_netpbm_bytes(image: np.ndarray) -> bytes:
    """Encode a CxHxW float [0,1] image back to PGM/PPM bytes."""
    image = np.asarray(image)
    quant = np.clip(np.rint(image * 255.0), 0, 255).astype(np.uint8)
    if image.shape[0] == 1:
        return _encode_netpbm(b"P5", quant[0])
    if image.shape[0] == 3:
        return _encode_netpbm(b"P6", np.ascontiguousarray(quant.transpose(1, 2, 0)))
    raise FormatError(f"image must have 1 or 3 channels, got {image.shape[0]}")
