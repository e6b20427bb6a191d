import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from monarchconv.tensor_io import MAGIC, TensorFormatError, header_size, read_tensor, write_tensor


def test_header_layout(tmp_path):
    path = tmp_path / "t.bin"
    write_tensor(path, np.arange(6, dtype=np.float32).reshape(2, 3))
    raw = path.read_bytes()
    assert raw[:4] == MAGIC
    assert len(raw) == header_size(2) + 6 * 4
    assert header_size(2) == 23


@pytest.mark.parametrize("dtype", [np.float32, np.float64, np.complex64, np.complex128])
def test_round_trip_bit_exact(tmp_path, rng, dtype):
    a = rng.standard_normal((2, 3, 5))
    if np.issubdtype(dtype, np.complexfloating):
        a = a + 1j * rng.standard_normal(a.shape)
    a = a.astype(dtype)
    write_tensor(tmp_path / "a", a)
    b = read_tensor(tmp_path / "a")
    assert b.dtype == a.dtype and b.shape == a.shape
    assert a.tobytes() == b.tobytes()


def test_special_values_survive(tmp_path):
    a = np.array([np.nan, -0.0, np.inf, -np.inf, 5e-324])
    write_tensor(tmp_path / "a", a)
    assert read_tensor(tmp_path / "a").tobytes() == a.tobytes()


def test_rejects_bad_magic(tmp_path):
    (tmp_path / "x").write_bytes(b"NOPE" + bytes(20))
    with pytest.raises(TensorFormatError, match="not a tensor file"):
        read_tensor(tmp_path / "x")


def test_rejects_truncated_payload(tmp_path):
    write_tensor(tmp_path / "a", np.zeros(8))
    raw = (tmp_path / "a").read_bytes()
    (tmp_path / "a").write_bytes(raw[:-3])
    with pytest.raises(TensorFormatError, match="size mismatch"):
        read_tensor(tmp_path / "a")


def test_rejects_unsupported_dtype(tmp_path):
    with pytest.raises((TensorFormatError, ValueError)):
        write_tensor(tmp_path / "a", np.zeros(3, dtype=np.int32))


@settings(max_examples=40, deadline=None)
@given(shape=st.lists(st.integers(0, 4), min_size=0, max_size=4), code=st.sampled_from(["<f4", "<f8", "<c8", "<c16"]))
def test_round_trip_property(tmp_path_factory, shape, code):
    a = np.random.default_rng(len(shape)).standard_normal(shape).astype(code)
    path = tmp_path_factory.mktemp("rt") / "t"
    write_tensor(path, a)
    b = read_tensor(path)
    assert b.shape == a.shape and b.tobytes() == a.tobytes()
