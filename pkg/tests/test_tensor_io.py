import struct

import numpy as np
import pytest

from pixellink import tensor_io
from pixellink.errors import (
    BadMagic,
    DimOverflow,
    InvalidHeader,
    TruncatedFile,
    UnsupportedFormat,
    UnsupportedVersion,
)


def test_tensor_round_trip_identity(tmp_path):
    t = np.array([[0.0, 1.0], [2.0, 3.0]], dtype=np.float32)
    p = tmp_path / "t.plnk"
    tensor_io.save_tensor(t, p)
    got = tensor_io.load_tensor(p)
    assert got.shape == (2, 2)
    assert np.array_equal(got, t)


def test_bad_magic(tmp_path):
    p = tmp_path / "bad.plnk"
    p.write_bytes(b"XXXX" + bytes(32))
    with pytest.raises(BadMagic):
        tensor_io.load_tensor(p)


def test_header_layout(tmp_path):
    p = tmp_path / "t.plnk"
    tensor_io.save_tensor(np.zeros((1,), dtype=np.float32), p)
    blob = p.read_bytes()
    # magic + version + dtype + ndim + one u32 dim + 4-byte payload
    assert blob[:4] == b"PLNK"
    assert blob[4] == 1 and blob[5] == 1 and blob[6] == 1
    assert struct.unpack("<I", blob[7:11]) == (1,)
    assert len(blob) == 11 + 4

    tensor_io.save_tensor(np.zeros((2, 3, 8), dtype=np.float32), p)
    blob = p.read_bytes()
    assert blob[6] == 3
    assert struct.unpack("<3I", blob[7:19]) == (2, 3, 8)
    assert len(blob) - 19 == 48 * 4


def test_random_round_trips_bitwise(tmp_path):
    rng = np.random.default_rng(7)
    p = tmp_path / "t.plnk"
    for _ in range(100):
        ndim = int(rng.integers(1, 5))
        dims = [int(rng.integers(1, 7)) for _ in range(ndim)]
        t = rng.standard_normal(dims).astype(np.float32)
        tensor_io.save_tensor(t, p)
        got = tensor_io.load_tensor(p)
        assert got.shape == t.shape
        assert got.tobytes() == t.tobytes()


def test_truncated_and_overflow(tmp_path):
    p = tmp_path / "t.plnk"
    tensor_io.save_tensor(np.arange(6, dtype=np.float32).reshape(2, 3), p)
    blob = p.read_bytes()

    (tmp_path / "trunc1.plnk").write_bytes(blob[:5])
    with pytest.raises(TruncatedFile):
        tensor_io.load_tensor(tmp_path / "trunc1.plnk")

    (tmp_path / "trunc2.plnk").write_bytes(blob[:12])
    with pytest.raises(TruncatedFile):
        tensor_io.load_tensor(tmp_path / "trunc2.plnk")

    # declare more payload than present
    hacked = blob[:7] + struct.pack("<2I", 200, 300) + blob[15:]
    (tmp_path / "over.plnk").write_bytes(hacked)
    with pytest.raises(DimOverflow):
        tensor_io.load_tensor(tmp_path / "over.plnk")


def test_unsupported_version_and_ndim(tmp_path):
    p = tmp_path / "t.plnk"
    tensor_io.save_tensor(np.zeros((2,), dtype=np.float32), p)
    blob = bytearray(p.read_bytes())

    v = bytes(blob)
    (tmp_path / "v9.plnk").write_bytes(v[:4] + b"\x09" + v[5:])
    with pytest.raises(UnsupportedVersion):
        tensor_io.load_tensor(tmp_path / "v9.plnk")

    (tmp_path / "d2.plnk").write_bytes(v[:5] + b"\x02" + v[6:])
    with pytest.raises(UnsupportedVersion):
        tensor_io.load_tensor(tmp_path / "d2.plnk")

    (tmp_path / "n7.plnk").write_bytes(v[:6] + b"\x07" + v[7:])
    with pytest.raises(InvalidHeader):
        tensor_io.load_tensor(tmp_path / "n7.plnk")


def test_trailing_bytes_ignored(tmp_path):
    t = np.array([1.5, -2.5], dtype=np.float32)
    p = tmp_path / "t.plnk"
    tensor_io.save_tensor(t, p)
    p.write_bytes(p.read_bytes() + b"junk")
    assert np.array_equal(tensor_io.load_tensor(p), t)


def test_netpbm_gray_1x1(tmp_path):
    p = tmp_path / "i.pgm"
    tensor_io.save_netpbm(np.array([[255]], dtype=np.uint8), p)
    img = tensor_io.load_netpbm(p)
    assert img.shape == (1, 1)
    assert img[0, 0] == 255


def test_netpbm_rgb_2x2(tmp_path):
    img = np.arange(12, dtype=np.uint8).reshape(2, 2, 3)
    p = tmp_path / "i.ppm"
    tensor_io.save_netpbm(img, p)
    blob = p.read_bytes()
    assert blob.startswith(b"P6")
    assert blob[-12:] == bytes(range(12))
    assert np.array_equal(tensor_io.load_netpbm(p), img)


def test_netpbm_random_round_trips(tmp_path):
    rng = np.random.default_rng(11)
    p = tmp_path / "i.pnm"
    for _ in range(30):
        h, w = int(rng.integers(1, 20)), int(rng.integers(1, 20))
        shape = (h, w) if rng.integers(2) else (h, w, 3)
        img = rng.integers(0, 256, shape, dtype=np.uint8)
        tensor_io.save_netpbm(img, p)
        assert np.array_equal(tensor_io.load_netpbm(p), img)


def test_netpbm_comments_and_errors(tmp_path):
    p = tmp_path / "c.pgm"
    p.write_bytes(b"P5 # a comment\n2 1 # another\n255\n\x01\x02")
    assert np.array_equal(tensor_io.load_netpbm(p), np.array([[1, 2]], dtype=np.uint8))

    (tmp_path / "p4.pbm").write_bytes(b"P4\n2 2\n\x00")
    with pytest.raises(UnsupportedFormat):
        tensor_io.load_netpbm(tmp_path / "p4.pbm")

    (tmp_path / "m16.pgm").write_bytes(b"P5\n1 1\n65535\n\x00\x00")
    with pytest.raises(UnsupportedFormat):
        tensor_io.load_netpbm(tmp_path / "m16.pgm")

    (tmp_path / "short.pgm").write_bytes(b"P5\n4 4\n255\n\x00\x01")
    with pytest.raises(TruncatedFile):
        tensor_io.load_netpbm(tmp_path / "short.pgm")
