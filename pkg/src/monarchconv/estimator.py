"""scikit-learn style wrappers around the convolution engine.

``fit`` builds the plan and precomputes the kernel spectrum; ``transform``
convolves. Inputs are either ``(n_samples, length)`` with a single filter or
``(batch, channels, length)`` with one filter per channel.
"""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .conv import conv_backward, conv_forward, conv_gated, kernel_to_flat, kernel_to_plan, prepare_kernel
from .matmul import BlockedMatmulConfig
from .plan import build_plan, is_power_of_two, load_profile, select_order
from .sparse import (
    FrequencySparsityPattern,
    apply_frequency_mask,
    conv_frequency_sparse,
    pattern_dims,
    truncate_kernel,
)

_DTYPES = {"real-32": np.float32, "real-64": np.float64}


def check_sequences(X, *, precision="real-64"):
    """Validate ``X`` and return it as ``(batch, channels, length)`` plus a flag for 2-D input."""
    X = check_array(X, allow_nd=True, dtype=_DTYPES[precision], ensure_2d=False)
    if X.ndim == 2:
        return X[:, None, :], True
    if X.ndim != 3:
        raise ValueError(f"expected a 2-D or 3-D array, got shape {X.shape}")
    return X, False


def check_kernel(kernel, n_channels):
    k = check_array(kernel, ensure_2d=False, dtype=np.float64)
    if k.ndim == 1:
        k = k[None, :]
    if k.ndim != 2 or k.shape[0] != n_channels:
        raise ValueError(f"kernel must have shape ({n_channels}, n_k), got {k.shape}")
    return k


class MonarchFFTConv(TransformerMixin, BaseEstimator):
    """Long convolution with a fixed filter bank via a Monarch FFT.

    Parameters
    ----------
    kernel : array of shape (n_k,) or (channels, n_k)
        Filters. Circular mode needs ``n_k == length``; causal mode needs
        ``n_k <= length``.
    order : {"auto", 2, 3, 4}
        Monarch order; ``"auto"`` asks the cost model.
    mode : {"circular", "causal"}
    real_input : bool
        Run the transforms at half length on packed real data.
    precision : {"real-64", "real-32"}
    kernel_length : int or None
        Truncate the filters to this many taps before fitting.
    profile : str
        Cost-model profile for ``order="auto"``.
    tile : int
        Blocked-matmul tile extent.
    n_threads : int
    """

    def __init__(
        self,
        kernel=None,
        *,
        order="auto",
        mode="circular",
        real_input=True,
        precision="real-64",
        kernel_length=None,
        profile="a100",
        tile=16,
        n_threads=1,
    ):
        self.kernel = kernel
        self.order = order
        self.mode = mode
        self.real_input = real_input
        self.precision = precision
        self.kernel_length = kernel_length
        self.profile = profile
        self.tile = tile
        self.n_threads = n_threads

    def _cfg(self):
        return BlockedMatmulConfig(self.tile, self.tile, self.tile)

    def fit(self, X, y=None):
        if self.mode not in ("circular", "causal"):
            raise ValueError(f"mode must be 'circular' or 'causal', got {self.mode!r}")
        if self.precision not in _DTYPES:
            raise ValueError(f"precision must be one of {sorted(_DTYPES)}")
        X3, _ = check_sequences(X, precision=self.precision)
        if self.kernel is None:
            raise ValueError("kernel must be set before fit")
        length = X3.shape[2]
        if not is_power_of_two(length):
            raise ValueError(f"sequence length {length} is not a power of two")
        n = length if self.mode == "circular" else 2 * length
        k = check_kernel(self.kernel, X3.shape[1])
        if self.kernel_length is not None:
            k = truncate_kernel(k, self.kernel_length)
        order = self.order
        if order == "auto":
            order = select_order(max(n, 16), X3.shape[0], X3.shape[1], load_profile(self.profile))
        self.plan_ = build_plan(n, order, self.precision, self.real_input, self.mode == "causal")
        self.kernel_spectrum_ = prepare_kernel(k, self.plan_, self.mode)
        self.order_ = order
        self.n_fft_ = n
        self.n_channels_ = X3.shape[1]
        self.sequence_length_ = length
        return self

    def _check(self, X):
        check_is_fitted(self, "plan_")
        X3, flat = check_sequences(X, precision=self.precision)
        if X3.shape[1:] != (self.n_channels_, self.sequence_length_):
            raise ValueError(
                f"expected sequences of shape ({self.n_channels_}, {self.sequence_length_}), got {X3.shape[1:]}"
            )
        return X3, flat

    def transform(self, X):
        X3, flat = self._check(X)
        out = self._convolve(X3)
        return out[:, 0, :] if flat else out

    def _convolve(self, X3):
        return conv_forward(X3, self.kernel_spectrum_, self.plan_, cfg=self._cfg(), threads=self.n_threads)

    def transform_gated(self, X, V, W):
        """``V * conv(X * W)`` with the gates fused into the transform."""
        X3, flat = self._check(X)
        V3, _ = self._check(V)
        W3, _ = self._check(W)
        out = conv_gated(X3, V3, W3, self.kernel_spectrum_, self.plan_, cfg=self._cfg(), threads=self.n_threads)
        return out[:, 0, :] if flat else out

    def backward(self, X, dY):
        """Gradients ``(dX, dkernel)`` of ``transform`` given the output gradient ``dY``."""
        X3, flat = self._check(X)
        dY3, _ = self._check(dY)
        du, dk = conv_backward(dY3, X3, self.kernel_spectrum_, self.plan_, cfg=self._cfg(), threads=self.n_threads)
        return (du[:, 0, :] if flat else du), dk


class FrequencySparseConv(MonarchFFTConv):
    """:class:`MonarchFFTConv` whose kernel spectrum is masked to a keep-pattern.

    ``keep`` lists, innermost-digit-first, how many leading frequency digits
    survive at each stage (see :class:`FrequencySparsityPattern`). Dimensions
    left out are kept whole. Runs on complex plans only.
    """

    def __init__(
        self,
        kernel=None,
        *,
        keep=None,
        order=4,
        mode="circular",
        precision="real-64",
        kernel_length=None,
        profile="a100",
        tile=8,
        n_threads=1,
    ):
        super().__init__(
            kernel,
            order=order,
            mode=mode,
            real_input=False,
            precision=precision,
            kernel_length=kernel_length,
            profile=profile,
            tile=tile,
            n_threads=n_threads,
        )
        self.keep = keep

    def fit(self, X, y=None):
        super().fit(X, y)
        dims = pattern_dims(self.plan_)
        keep = dims if self.keep is None else tuple(self.keep) + dims[len(self.keep):]
        self.pattern_ = FrequencySparsityPattern(dims, keep)
        flat = apply_frequency_mask(kernel_to_flat(self.kernel_spectrum_, self.plan_), self.pattern_)
        self.kernel_spectrum_ = kernel_to_plan(flat, self.plan_)
        return self

    def _convolve(self, X3):
        return conv_frequency_sparse(
            X3, self.kernel_spectrum_, self.pattern_, self.plan_, cfg=self._cfg(), threads=self.n_threads
        )
