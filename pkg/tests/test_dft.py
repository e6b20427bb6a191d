import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from monarchconv.dft import (
    FORWARD,
    INVERSE,
    direct_conv,
    dft_matrix,
    irfft_via_half,
    naive_dft,
    naive_idft,
    relative_error,
    rfft_via_half,
    twiddle_grid,
)

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def test_frozen_four_point_example():
    X = naive_dft(np.array([1.0, 2.0, 3.0, 4.0]))
    np.testing.assert_allclose(X, [10, -2 + 2j, -2, -2 - 2j], atol=1e-12)


def test_dft_matrix_values():
    F = dft_matrix(4)
    np.testing.assert_allclose(F[1], [1, -1j, -1, 1j], atol=1e-15)
    np.testing.assert_allclose(dft_matrix(4, INVERSE), F.conj(), atol=1e-15)
    np.testing.assert_allclose(F @ F.conj().T, 4 * np.eye(4), atol=1e-12)


def test_twiddle_grid_entries():
    T = twiddle_grid(2, 4, FORWARD)
    assert T.shape == (2, 4)
    np.testing.assert_allclose(T[1], np.exp(-2j * np.pi * np.arange(4) / 8), atol=1e-15)
    np.testing.assert_allclose(T[0], 1)


def test_bad_direction():
    with pytest.raises(ValueError):
        dft_matrix(4, "sideways")


def test_matches_numpy_fft(rng):
    x = rng.standard_normal((3, 96)) + 1j * rng.standard_normal((3, 96))
    np.testing.assert_allclose(naive_dft(x), np.fft.fft(x), atol=1e-10)
    np.testing.assert_allclose(naive_idft(naive_dft(x)), x, atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.integers(1, 64), elements=finite))
def test_parseval(x):
    X = naive_dft(x)
    assert np.sum(np.abs(X) ** 2) == pytest.approx(len(x) * np.sum(x**2), rel=1e-9, abs=1e-6)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 40).flatmap(lambda n: st.tuples(
    arrays(np.float64, n, elements=finite), arrays(np.float64, n, elements=finite), finite)))
def test_linearity(args):
    x, y, a = args
    lhs = naive_dft(a * x + y)
    rhs = a * naive_dft(x) + naive_dft(y)
    assert np.max(np.abs(lhs - rhs)) <= 1e-9 * (1 + np.max(np.abs(rhs)))


def test_rfft_via_half_all_even_lengths(rng):
    for n in range(2, 1025, 2):
        x = rng.standard_normal(n)
        X = rfft_via_half(x)
        assert np.max(np.abs(X - naive_dft(x)[: n // 2 + 1])) <= 1e-10, n
        assert np.max(np.abs(irfft_via_half(X) - x)) <= 1e-10, n


def test_rfft_via_half_calls_one_half_length_transform(rng):
    calls = []

    def spy(z):
        calls.append(z.shape[-1])
        return naive_dft(z)

    rfft_via_half(rng.standard_normal(64), fft=spy)
    assert calls == [32]


def test_rfft_rejects_odd_length():
    with pytest.raises(ValueError, match="even"):
        rfft_via_half(np.ones(5))


def test_irfft_rejects_non_hermitian():
    with pytest.raises(ValueError, match="Hermitian"):
        irfft_via_half(np.array([1 + 1j, 0, 0]))


def test_direct_conv_examples():
    np.testing.assert_allclose(direct_conv([1, 2, 3, 4], [0, 1, 0, 0]), [4, 1, 2, 3])
    np.testing.assert_allclose(direct_conv([1, 2, 3, 4], [1, 1], "causal"), [1, 3, 5, 7])
    with pytest.raises(ValueError):
        direct_conv([1, 2, 3], [1, 2])
    with pytest.raises(ValueError):
        direct_conv([1, 2], [1, 2], "valid")


def test_convolution_theorem(rng):
    u = rng.standard_normal(128)
    k = rng.standard_normal(128)
    via_fft = naive_idft(naive_dft(u) * naive_dft(k)).real
    assert relative_error(via_fft, direct_conv(u, k)) < 1e-12


def test_direct_conv_broadcasts(rng):
    u = rng.standard_normal((2, 3, 16))
    k = rng.standard_normal((3, 16))
    y = direct_conv(u, k)
    np.testing.assert_allclose(y[1, 2], direct_conv(u[1, 2], k[2]))
