"""Long convolutions through Monarch-decomposed FFTs."""

from .conv import (
    ExecStats,
    KernelSpectrum,
    conv_backward,
    conv_forward,
    conv_gated,
    kernel_to_flat,
    kernel_to_plan,
    monarch_fft,
    monarch_ifft,
    prepare_kernel,
)
from .dft import direct_conv, irfft_via_half, naive_dft, naive_idft, rfft_via_half
from .estimator import FrequencySparseConv, MonarchFFTConv
from .matmul import BlockedMatmulConfig, blocked_matmul
from .plan import A100, CostModelParams, MonarchPlan, build_plan, cost, factorize, load_profile, select_order
from .sparse import (
    FrequencySparsityPattern,
    apply_frequency_mask,
    conv_frequency_sparse,
    sparsity_fraction,
    truncate_kernel,
)
from .tensor_io import TensorFormatError, read_tensor, write_tensor

__version__ = "0.1.0"
