"""Binary tensor container.

Layout (all little-endian)::

    b"MGT1" | version u8 (=1) | dtype u8 | rank u8 | dims u32 * rank | payload | crc32 u32

dtype codes: 0 float32, 1 int8, 2 int16, 3 fp8 (raw E4M3 bytes).  The CRC32
(zlib polynomial) covers every byte before the trailer.
"""
from __future__ import annotations

import math
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = b"MGT1"
VERSION = 1
DTYPES = {0: np.dtype("<f4"), 1: np.dtype("i1"), 2: np.dtype("<i2"), 3: np.dtype("u1")}
DTYPE_NAMES = {"f32": 0, "i8": 1, "i16": 2, "fp8": 3}


class TensorFileError(ValueError):
    pass


@dataclass(frozen=True)
class TensorFile:
    dtype: str
    data: np.ndarray

    def __post_init__(self):
        if self.dtype not in DTYPE_NAMES:
            raise TensorFileError(f"unknown dtype {self.dtype!r}")
        arr = np.asarray(self.data)
        if arr.ndim > 255:
            raise TensorFileError("rank above 255")
        if any(d <= 0 or d >= 1 << 32 for d in arr.shape):
            raise TensorFileError(f"dimensions must lie in [1, 2**32), got {arr.shape}")
        want = DTYPES[DTYPE_NAMES[self.dtype]]
        if arr.dtype.kind in "iu" and want.kind in "iu":
            info = np.iinfo(want)
            if arr.size and (arr.min() < info.min or arr.max() > info.max):
                raise TensorFileError(f"values do not fit {self.dtype}")
        object.__setattr__(self, "data", arr.astype(want))

    def to_bytes(self) -> bytes:
        arr = self.data
        head = MAGIC + struct.pack("<BBB", VERSION, DTYPE_NAMES[self.dtype], arr.ndim)
        head += struct.pack(f"<{arr.ndim}I", *arr.shape)
        body = head + arr.tobytes(order="C")
        return body + struct.pack("<I", zlib.crc32(body))

    @classmethod
    def from_bytes(cls, buf: bytes) -> TensorFile:
        if len(buf) < 11 or buf[:4] != MAGIC:
            raise TensorFileError("bad magic")
        body, (crc,) = buf[:-4], struct.unpack("<I", buf[-4:])
        if zlib.crc32(body) != crc:
            raise TensorFileError("checksum mismatch")
        version, code, rank = struct.unpack_from("<BBB", body, 4)
        if version != VERSION:
            raise TensorFileError(f"unsupported version {version}")
        if code not in DTYPES:
            raise TensorFileError(f"unknown dtype code {code}")
        off = 7 + 4 * rank
        if len(body) < off:
            raise TensorFileError("truncated header")
        dims = struct.unpack_from(f"<{rank}I", body, 7)
        if any(d == 0 for d in dims):
            raise TensorFileError("zero dimension")
        dt = DTYPES[code]
        payload = body[off:]
        if len(payload) != math.prod(dims) * dt.itemsize:
            raise TensorFileError(f"payload is {len(payload)} bytes, dims {dims} need "
                                  f"{math.prod(dims) * dt.itemsize}")
        arr = np.frombuffer(payload, dtype=dt).reshape(dims).copy()
        name = next(k for k, v in DTYPE_NAMES.items() if v == code)
        return cls(name, arr)


def save(path, tensor: TensorFile) -> None:
    Path(path).write_bytes(tensor.to_bytes())


def load(path) -> TensorFile:
    try:
        buf = Path(path).read_bytes()
    except OSError as e:
        raise TensorFileError(f"cannot read {path}: {e.strerror}") from None
    return TensorFile.from_bytes(buf)
