import numpy as np
import pytest
from numpy.lib import format as npformat

from tunedim.npyio import NpyFormatError, load_npy, save_npy


def test_round_trip_float32(tmp_path):
    a = np.random.default_rng(0).standard_normal((3, 4)).astype(np.float32)
    save_npy(tmp_path / "a.npy", a)
    b = load_npy(tmp_path / "a.npy")
    assert b.dtype == np.float32 and np.array_equal(a, b)


def test_written_header_is_v1(tmp_path):
    save_npy(tmp_path / "a.npy", np.zeros((2, 2)))
    with open(tmp_path / "a.npy", "rb") as fh:
        assert npformat.read_magic(fh) == (1, 0)


def test_rank_error(tmp_path):
    np.save(tmp_path / "r3.npy", np.zeros((2, 2, 2)))
    with pytest.raises(NpyFormatError, match="expected rank 2") as info:
        load_npy(tmp_path / "r3.npy")
    assert info.value.field == "shape"


def test_dtype_error(tmp_path):
    np.save(tmp_path / "i.npy", np.zeros((2, 2), dtype=np.int32))
    with pytest.raises(NpyFormatError) as info:
        load_npy(tmp_path / "i.npy")
    assert info.value.field == "descr"


def test_big_endian_rejected(tmp_path):
    np.save(tmp_path / "be.npy", np.zeros((2, 2), dtype=">f8"))
    with pytest.raises(NpyFormatError) as info:
        load_npy(tmp_path / "be.npy")
    assert info.value.field == "descr"


def test_magic_error(tmp_path):
    (tmp_path / "x.npy").write_bytes(b"PK\x03\x04 not numpy")
    with pytest.raises(NpyFormatError) as info:
        load_npy(tmp_path / "x.npy")
    assert info.value.field == "magic"


def test_truncated_payload(tmp_path):
    save_npy(tmp_path / "t.npy", np.zeros((10, 10)))
    data = (tmp_path / "t.npy").read_bytes()
    (tmp_path / "t.npy").write_bytes(data[:-8])
    with pytest.raises(NpyFormatError):
        load_npy(tmp_path / "t.npy")


def test_fortran_order_accepted(tmp_path):
    a = np.asfortranarray(np.arange(12, dtype=np.float64).reshape(3, 4))
    with open(tmp_path / "f.npy", "wb") as fh:
        npformat.write_array(fh, a, version=(1, 0))
    b = load_npy(tmp_path / "f.npy")
    assert b.flags.c_contiguous and np.array_equal(a, b)
