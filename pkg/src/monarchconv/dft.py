"""Reference transforms and convolution oracles.

Everything here is computed in float64/complex128 by direct summation. These
functions are deliberately slow and simple: they are the ground truth the
Monarch engine is checked against.
"""

import numpy as np

FORWARD = "forward"
INVERSE = "inverse"

# rows of the DFT matrix materialised at a time inside naive_dft
_ROW_BLOCK = 256


def _check_direction(direction):
    if direction not in (FORWARD, INVERSE):
        raise ValueError(f"direction must be 'forward' or 'inverse', got {direction!r}")
    return -1.0 if direction == FORWARD else 1.0


def _roots(exponents, m, sign):
    # reduce mod m first so large products keep full angular precision
    return np.exp(sign * 2j * np.pi * (exponents % m) / m)


def dft_matrix(n, direction=FORWARD):
    """Unscaled n x n DFT matrix.

    Forward entries are ``W_n**(j*k)`` with ``W_n = exp(-2*pi*i/n)``; the
    inverse matrix holds the conjugate powers and carries no ``1/n`` factor.
    """
    sign = _check_direction(direction)
    if n < 1:
        raise ValueError("dft size must be >= 1")
    idx = np.arange(n, dtype=np.int64)
    return _roots(np.outer(idx, idx), n, sign)


def twiddle_grid(n1, n2, direction=FORWARD):
    """Twiddle factors ``W_{n1*n2}**(+-i*j)`` on an ``n1 x n2`` grid."""
    sign = _check_direction(direction)
    if n1 < 1 or n2 < 1:
        raise ValueError("twiddle grid extents must be >= 1")
    i = np.arange(n1, dtype=np.int64)
    j = np.arange(n2, dtype=np.int64)
    return _roots(np.outer(i, j), n1 * n2, sign)


def _direct_transform(x, sign):
    x = np.asarray(x, dtype=np.complex128)
    if x.ndim == 0 or x.shape[-1] == 0:
        raise ValueError("transform input must be non-empty")
    n = x.shape[-1]
    idx = np.arange(n, dtype=np.int64)
    out = np.empty(x.shape, dtype=np.complex128)
    for k0 in range(0, n, _ROW_BLOCK):
        k = idx[k0:k0 + _ROW_BLOCK]
        w = _roots(np.outer(idx, k), n, sign)
        out[..., k0:k0 + len(k)] = x @ w
    return out


def naive_dft(x):
    """O(N^2) DFT along the last axis: ``X[k] = sum_n x[n] W_N**(n*k)``."""
    return _direct_transform(x, -1.0)


def naive_idft(X):
    """O(N^2) inverse DFT along the last axis, scaled by ``1/N``."""
    X = np.asarray(X)
    return _direct_transform(X, 1.0) / X.shape[-1]


def rfft_via_half(x, fft=None):
    """Bins ``0..N/2`` of the DFT of a real sequence using one length-N/2 complex FFT.

    Even samples go to the real part and odd samples to the imaginary part of
    a half-length complex sequence; its spectrum is then split back into the
    even/odd sub-spectra and recombined with ``W_N**k``.

    Parameters
    ----------
    x : array_like, shape (..., N)
        Real input, N even.
    fft : callable, optional
        Complex FFT applied along the last axis of a length-N/2 array.
        Defaults to :func:`naive_dft`.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[-1]
    if n < 2 or n % 2:
        raise ValueError(f"rfft_via_half needs an even length >= 2, got {n}")
    fft = naive_dft if fft is None else fft
    half = n // 2
    z = x[..., 0::2] + 1j * x[..., 1::2]
    Z = np.asarray(fft(z), dtype=np.complex128)
    if Z.shape[-1] != half:
        raise ValueError("fft callback returned the wrong length")
    k = np.arange(half)
    Zc = np.conj(Z[..., (half - k) % half])
    even = (Z + Zc) / 2
    odd = (Z - Zc) / 2j
    out = np.empty(x.shape[:-1] + (half + 1,), dtype=np.complex128)
    out[..., :half] = even + _roots(k, n, -1.0) * odd
    out[..., half] = even[..., 0] - odd[..., 0]
    return out


def irfft_via_half(X, ifft=None, atol=1e-8):
    """Invert :func:`rfft_via_half` with one length-N/2 complex inverse FFT.

    ``X`` holds bins ``0..N/2``; bins 0 and N/2 must be real (to ``atol``
    relative to the spectrum's magnitude). ``ifft`` must include the ``1/(N/2)``
    scaling; it defaults to :func:`naive_idft`.
    """
    X = np.asarray(X, dtype=np.complex128)
    half = X.shape[-1] - 1
    if half < 1:
        raise ValueError("half spectrum needs at least two bins")
    scale = max(1.0, float(np.max(np.abs(X))))
    if np.max(np.abs(X[..., 0].imag)) > atol * scale or np.max(np.abs(X[..., half].imag)) > atol * scale:
        raise ValueError("half spectrum is not Hermitian: bins 0 and N/2 must be real")
    ifft = naive_idft if ifft is None else ifft
    n = 2 * half
    k = np.arange(half)
    Xc = np.conj(X[..., half - k])
    even = (X[..., :half] + Xc) / 2
    odd = (X[..., :half] - Xc) / 2 * _roots(k, n, 1.0)
    z = np.asarray(ifft(even + 1j * odd))
    out = np.empty(X.shape[:-1] + (n,), dtype=np.float64)
    out[..., 0::2] = z.real
    out[..., 1::2] = z.imag
    return out


def direct_conv(u, k, mode="circular"):
    """Convolution of two real sequences by direct summation.

    ``circular``: ``y[i] = sum_j u[j] k[(i - j) mod N]`` with ``len(k) == len(u)``.
    ``causal``: ``y[i] = sum_{j<=i} u[j] k[i - j]`` with ``len(k) <= len(u)``;
    the output has the length of ``u``.

    Leading axes broadcast; the kernel may have fewer leading axes than ``u``.
    """
    u = np.asarray(u, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    n, nk = u.shape[-1], k.shape[-1]
    if mode == "circular":
        if nk != n:
            raise ValueError(f"circular convolution needs equal lengths, got {n} and {nk}")
    elif mode == "causal":
        if nk > n:
            raise ValueError(f"causal kernel length {nk} exceeds input length {n}")
    else:
        raise ValueError(f"unknown convolution mode {mode!r}")
    lead = np.broadcast_shapes(u.shape[:-1], k.shape[:-1])
    ub = np.broadcast_to(u, lead + (n,)).reshape(-1, n)
    kb = np.broadcast_to(k, lead + (nk,)).reshape(-1, nk)
    out = np.empty((ub.shape[0], n))
    for r in range(ub.shape[0]):
        # np.convolve is a direct O(n*nk) sum, never an FFT
        full = np.convolve(ub[r], kb[r])
        if mode == "circular":
            out[r] = full[:n]
            out[r, : n - 1] += full[n:]
        else:
            out[r] = full[:n]
    return out.reshape(lead + (n,))


def relative_error(actual, expected):
    """Max absolute error normalised by the reference's max magnitude."""
    actual = np.asarray(actual)
    expected = np.asarray(expected)
    scale = float(np.max(np.abs(expected))) if expected.size else 0.0
    err = float(np.max(np.abs(actual - expected))) if expected.size else 0.0
    return err / scale if scale > 0 else err
