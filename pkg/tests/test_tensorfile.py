from __future__ import annotations

import struct
import zlib

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp

from mgs.tensorfile import TensorFile, TensorFileError, load, save

shapes = hnp.array_shapes(min_dims=0, max_dims=3, min_side=1, max_side=5)


@given(st.sampled_from(["i8", "i16", "fp8"]), shapes, st.data())
def test_integer_roundtrip(dtype, shape, data):
    info = {"i8": np.int8, "i16": np.int16, "fp8": np.uint8}[dtype]
    arr = data.draw(hnp.arrays(info, shape))
    t = TensorFile(dtype, arr)
    back = TensorFile.from_bytes(t.to_bytes())
    assert back.dtype == dtype and np.array_equal(back.data, arr)


@given(hnp.arrays(np.float32, shapes, elements=st.floats(width=32, allow_nan=False)))
def test_float_roundtrip(arr):
    back = TensorFile.from_bytes(TensorFile("f32", arr).to_bytes())
    assert np.array_equal(back.data, arr)


def test_layout_is_bit_exact():
    buf = TensorFile("i16", np.array([[1, -2, 3]], dtype=np.int16)).to_bytes()
    head = b"MGT1" + bytes([1, 2, 2]) + struct.pack("<II", 1, 3)
    body = head + struct.pack("<hhh", 1, -2, 3)
    assert buf == body + struct.pack("<I", zlib.crc32(body))


def test_corruption_is_detected(tmp_path):
    buf = bytearray(TensorFile("i8", np.arange(6, dtype=np.int8).reshape(2, 3)).to_bytes())
    buf[12] ^= 1
    with pytest.raises(TensorFileError, match="checksum"):
        TensorFile.from_bytes(bytes(buf))
    with pytest.raises(TensorFileError, match="magic"):
        TensorFile.from_bytes(b"XXXX" + bytes(buf[4:]))
    # consistent checksum but wrong payload length
    body = b"MGT1" + bytes([1, 1, 1]) + struct.pack("<I", 4) + b"\x00\x01\x02"
    with pytest.raises(TensorFileError, match="payload"):
        TensorFile.from_bytes(body + struct.pack("<I", zlib.crc32(body)))
    body = b"MGT1" + bytes([2, 1, 0]) + b"\x00"
    with pytest.raises(TensorFileError, match="version"):
        TensorFile.from_bytes(body + struct.pack("<I", zlib.crc32(body)))
    with pytest.raises(TensorFileError):
        load(tmp_path / "missing.mgt")


def test_value_range_checked():
    with pytest.raises(TensorFileError):
        TensorFile("i8", np.array([300]))
    with pytest.raises(TensorFileError):
        TensorFile("f64", np.zeros(2))


def test_save_load(tmp_path):
    t = TensorFile("fp8", np.array([0x38, 0xB8], dtype=np.uint8))
    save(tmp_path / "a.mgt", t)
    assert np.array_equal(load(tmp_path / "a.mgt").data, t.data)
