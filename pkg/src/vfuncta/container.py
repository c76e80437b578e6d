"""Self-describing binary containers with checksummed round trips.

Every file is `magic + u32 version + body + u64 checksum(body)`, all
little-endian, written atomically. Model and head files share the "VFNC"
magic and are told apart by a kind tag at the start of the body;
encodings use "VENC". Numeric payloads are raw IEEE-754 little-endian in
the dtype the header declares, so save, load, save reproduces files
byte-for-byte.
"""

from __future__ import annotations

import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .errors import (
    BadMagicError,
    ChecksumError,
    FormatError,
    TruncatedFileError,
    UnsupportedVersionError,
)
from .model import MetaModel
from .tensor import Tensor

MODEL_MAGIC = b"VFNC"
ENCODING_MAGIC = b"VENC"
VERSION = 1

KIND_MODEL = 1
KIND_HEAD = 2

_DTYPE_CODES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}


def fnv1a64(data) -> int:
    """64-bit FNV-1a over a byte string."""
    h = 0xCBF29CE484222325
    for byte in bytes(data):
        h = ((h ^ byte) * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h


def dtype_code(dtype) -> int:
    dtype = np.dtype(dtype)
    for code, dt in _DTYPE_CODES.items():
        if dt == dtype.newbyteorder("<"):
            return code
    raise FormatError(f"unsupported dtype {dtype}")


def decode_dtype(code: int) -> np.dtype:
    if code not in _DTYPE_CODES:
        raise FormatError(f"unknown dtype code {code}")
    return _DTYPE_CODES[code]


def atomic_write_bytes(path, blob: bytes) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def pack_container(magic: bytes, body: bytes) -> bytes:
    return magic + struct.pack("<I", VERSION) + body + struct.pack("<Q", fnv1a64(body))


def unpack_container(blob: bytes, magic: bytes, source: str = "file") -> bytes:
    """Validate framing and return the body."""
    if len(blob) < 4 or blob[:4] != magic:
        raise BadMagicError(f"{source}: bad magic {blob[:4]!r}, expected {magic!r}")
    if len(blob) < 16:
        raise TruncatedFileError(f"{source}: {len(blob)} bytes is too short")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != VERSION:
        raise UnsupportedVersionError(f"{source}: version {version}, supported {VERSION}")
    body = blob[8:-8]
    (stored,) = struct.unpack_from("<Q", blob, len(blob) - 8)
    actual = fnv1a64(body)
    if stored != actual:
        raise ChecksumError(f"{source}: checksum {actual:016x} != stored {stored:016x}")
    return body


class _BodyReader:
    """Sequential struct reads with truncation errors instead of crashes."""

    def __init__(self, body: bytes, source: str):
        self.body = body
        self.source = source
        self.pos = 0

    def unpack(self, fmt: str):
        size = struct.calcsize(fmt)
        if self.pos + size > len(self.body):
            raise TruncatedFileError(f"{self.source}: body ends inside a header field")
        out = struct.unpack_from(fmt, self.body, self.pos)
        self.pos += size
        return out

    def raw(self, size: int) -> bytes:
        if self.pos + size > len(self.body):
            raise TruncatedFileError(f"{self.source}: body ends inside the payload")
        out = self.body[self.pos : self.pos + size]
        self.pos += size
        return out

    def expect_end(self) -> None:
        if self.pos != len(self.body):
            raise FormatError(f"{self.source}: {len(self.body) - self.pos} trailing bytes")


def _param_payload(model: MetaModel) -> bytes:
    dt = np.dtype(model.dtype).newbyteorder("<")
    return b"".join(np.ascontiguousarray(p.data).astype(dt, copy=False).tobytes()
                    for _, p in model.parameters())


def _model_dims_blob(model: MetaModel) -> bytes:
    return struct.pack("<BIIIId", dtype_code(model.dtype), model.layers, model.hidden,
                       model.video_dim, model.frame_dim, model.omega0)


def model_fingerprint(model: MetaModel) -> int:
    """Content hash over architecture and parameters (not the iteration
    counter), matching what a saved model file would hold."""
    cached = getattr(model, "_fingerprint", None)
    if cached is None:
        cached = fnv1a64(_model_dims_blob(model) + _param_payload(model))
        model._fingerprint = cached
    return cached


def save_model(path, model: MetaModel) -> None:
    payload = _param_payload(model)
    body = (struct.pack("<I", KIND_MODEL) + _model_dims_blob(model)
            + struct.pack("<QQ", model.iteration, len(payload)) + payload)
    atomic_write_bytes(path, pack_container(MODEL_MAGIC, body))


def load_model(path) -> MetaModel:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc
    body = unpack_container(blob, MODEL_MAGIC, source=str(path))
    reader = _BodyReader(body, str(path))
    (kind,) = reader.unpack("<I")
    if kind != KIND_MODEL:
        raise FormatError(f"{path}: kind {kind} is not a model checkpoint")
    code, layers, hidden, video_dim, frame_dim, omega0 = reader.unpack("<BIIIId")
    iteration, payload_len = reader.unpack("<QQ")
    dt = decode_dtype(code)
    payload = reader.raw(payload_len)
    reader.expect_end()

    shapes = []
    for k in range(layers):
        shapes.append((2 if k == 0 else hidden, hidden))
        shapes.append((hidden,))
    shapes.append((hidden, 1))
    shapes.append((1,))
    shapes.extend([(video_dim, hidden)] * layers)
    shapes.extend([(frame_dim, hidden)] * layers)
    expected = sum(int(np.prod(s)) for s in shapes) * dt.itemsize
    if payload_len != expected:
        raise FormatError(f"{path}: payload {payload_len} bytes, expected {expected}")

    arrays, offset = [], 0
    for shape in shapes:
        count = int(np.prod(shape))
        arr = np.frombuffer(payload, dtype=dt, count=count, offset=offset).reshape(shape)
        arrays.append(Tensor(arr.astype(dt.newbyteorder("="), copy=True)))
        offset += count * dt.itemsize

    lw = [arrays[2 * k] for k in range(layers)]
    lb = [arrays[2 * k + 1] for k in range(layers)]
    out_w, out_b = arrays[2 * layers], arrays[2 * layers + 1]
    vp = arrays[2 * layers + 2 : 2 * layers + 2 + layers]
    fp = arrays[2 * layers + 2 + layers :]
    return MetaModel(lw, lb, out_w, out_b, vp, fp, omega0=omega0, iteration=iteration)
