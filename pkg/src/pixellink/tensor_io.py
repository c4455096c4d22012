"""Bit-exact file I/O for score maps, labels and images.

Tensor file format ("PLNK"):

    offset  size        content
    0       4           magic b"PLNK"
    4       1           version, currently 1
    5       1           dtype code, 1 = float32
    6       1           ndim, 1..4
    7       4 * ndim    dims, little-endian u32, each >= 1
    ...     4 * prod    payload, row-major little-endian float32

Images use binary netpbm only: P5 (grayscale) and P6 (RGB), maxval 255.
In memory a tensor is a float32 ndarray and an image a uint8 ndarray of
shape (H, W) or (H, W, 3).
"""

from __future__ import annotations

import math
import os
import struct

import numpy as np

from .errors import (
    BadMagic,
    DimOverflow,
    InvalidHeader,
    IoFailure,
    TruncatedFile,
    UnsupportedFormat,
    UnsupportedVersion,
)

MAGIC = b"PLNK"
VERSION = 1
DTYPE_F32 = 1
MAX_NDIM = 4


def _check_tensor(t: np.ndarray) -> np.ndarray:
    t = np.asarray(t)
    if t.ndim < 1 or t.ndim > MAX_NDIM:
        raise InvalidHeader(f"tensor must have 1..{MAX_NDIM} dims, got {t.ndim}")
    if any(d < 1 for d in t.shape):
        raise InvalidHeader(f"tensor dims must be >= 1, got {t.shape}")
    return np.ascontiguousarray(t, dtype="<f4")


def tensor_bytes(t: np.ndarray) -> bytes:
    """Serialize a tensor to PLNK bytes (float32 payload)."""
    t = _check_tensor(t)
    header = MAGIC + struct.pack("<BBB", VERSION, DTYPE_F32, t.ndim)
    header += struct.pack(f"<{t.ndim}I", *t.shape)
    return header + t.tobytes(order="C")


def save_tensor(t: np.ndarray, path) -> None:
    """Write a float32 tensor in the PLNK format described above."""
    blob = tensor_bytes(t)
    try:
        with open(path, "wb") as fh:
            fh.write(blob)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def load_tensor(path) -> np.ndarray:
    """Read a PLNK tensor file, returning a float32 ndarray."""
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc

    if len(blob) < 4:
        raise TruncatedFile(f"{path}: file shorter than magic")
    if blob[:4] != MAGIC:
        raise BadMagic(f"{path}: bad magic {blob[:4]!r}")
    if len(blob) < 7:
        raise TruncatedFile(f"{path}: header incomplete")
    version, dtype, ndim = blob[4], blob[5], blob[6]
    if version != VERSION:
        raise UnsupportedVersion(f"{path}: version {version} not supported")
    if dtype != DTYPE_F32:
        raise UnsupportedVersion(f"{path}: dtype code {dtype} not supported")
    if ndim < 1 or ndim > MAX_NDIM:
        raise InvalidHeader(f"{path}: ndim {ndim} outside 1..{MAX_NDIM}")
    dims_end = 7 + 4 * ndim
    if len(blob) < dims_end:
        raise TruncatedFile(f"{path}: dim list incomplete")
    dims = struct.unpack(f"<{ndim}I", blob[7:dims_end])
    if any(d < 1 for d in dims):
        raise InvalidHeader(f"{path}: zero-sized dim in {dims}")
    count = math.prod(dims)
    payload = blob[dims_end:]
    if count * 4 > len(payload):
        raise DimOverflow(
            f"{path}: dims {dims} need {count * 4} payload bytes, have {len(payload)}"
        )
    data = np.frombuffer(payload[: count * 4], dtype="<f4")
    return data.reshape(dims).copy()


def netpbm_bytes(img: np.ndarray) -> bytes:
    """Serialize a uint8 image to binary P5 (gray) or P6 (RGB) bytes."""
    img = np.asarray(img)
    if img.dtype != np.uint8:
        raise UnsupportedFormat(f"image dtype must be uint8, got {img.dtype}")
    if img.ndim == 2:
        magic = b"P5"
    elif img.ndim == 3 and img.shape[2] == 3:
        magic = b"P6"
    else:
        raise UnsupportedFormat(f"image shape {img.shape} not (H,W) or (H,W,3)")
    h, w = img.shape[:2]
    if h < 1 or w < 1:
        raise UnsupportedFormat(f"empty image {img.shape}")
    header = magic + b"\n%d %d\n255\n" % (w, h)
    return header + np.ascontiguousarray(img).tobytes(order="C")


def save_netpbm(img: np.ndarray, path) -> None:
    """Write a uint8 image as binary P5 (gray) or P6 (RGB)."""
    blob = netpbm_bytes(img)
    try:
        with open(path, "wb") as fh:
            fh.write(blob)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def load_netpbm(path) -> np.ndarray:
    """Read a binary P5/P6 image (maxval 255) into a uint8 ndarray."""
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc

    if len(blob) < 2:
        raise TruncatedFile(f"{path}: too short for a netpbm header")
    magic = blob[:2]
    if magic not in (b"P5", b"P6"):
        raise UnsupportedFormat(f"{path}: unsupported netpbm magic {magic!r}")
    channels = 1 if magic == b"P5" else 3

    pos = 2
    fields = []
    while len(fields) < 3:
        if pos >= len(blob):
            raise TruncatedFile(f"{path}: header ended early")
        c = blob[pos]
        if c in b" \t\r\n":
            pos += 1
        elif c == ord("#"):
            while pos < len(blob) and blob[pos] not in b"\r\n":
                pos += 1
        elif c in b"0123456789":
            start = pos
            while pos < len(blob) and blob[pos] in b"0123456789":
                pos += 1
            fields.append(int(blob[start:pos]))
        else:
            raise UnsupportedFormat(f"{path}: unexpected byte {c!r} in header")
    width, height, maxval = fields
    if maxval != 255:
        raise UnsupportedFormat(f"{path}: maxval {maxval} not supported")
    if width < 1 or height < 1:
        raise UnsupportedFormat(f"{path}: empty image {width}x{height}")
    if pos >= len(blob):
        raise TruncatedFile(f"{path}: no payload")
    pos += 1  # single whitespace byte after maxval
    need = width * height * channels
    payload = blob[pos : pos + need]
    if len(payload) < need:
        raise TruncatedFile(f"{path}: payload has {len(payload)} of {need} bytes")
    img = np.frombuffer(payload, dtype=np.uint8)
    if channels == 1:
        return img.reshape(height, width).copy()
    return img.reshape(height, width, 3).copy()


def atomic_write_bytes(path, data: bytes) -> None:
    """Write a file via temp-then-rename so readers never see partial content."""
    path = os.fspath(path)
    tmp = f"{path}.tmp.{os.getpid()}"
    try:
        with open(tmp, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except OSError as exc:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise IoFailure(f"cannot write {path}: {exc}") from exc
