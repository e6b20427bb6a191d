"""Monarch factorisations, precomputed execution plans and the roofline cost model."""

from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path

import numpy as np

from .dft import FORWARD, INVERSE, dft_matrix, twiddle_grid

ORDERS = (2, 3, 4)
PRECISIONS = {
    "real-32": (np.float32, np.complex64),
    "real-64": (np.float64, np.complex128),
}


def is_power_of_two(n):
    return isinstance(n, (int, np.integer)) and n >= 1 and (n & (n - 1)) == 0


def factorize(n, p):
    """Split a power-of-two ``n`` into ``p`` balanced power-of-two factors, largest first.

    >>> factorize(2**22, 4)
    [64, 64, 32, 32]
    """
    if p < 1:
        raise ValueError(f"order must be >= 1, got {p}")
    if not is_power_of_two(n):
        raise ValueError(f"{n} is not a power of two")
    bits = int(n).bit_length() - 1
    if bits < p:
        raise ValueError(f"n={n} is too short for an order-{p} decomposition (need n >= {2**p})")
    base, extra = divmod(bits, p)
    return [2 ** (base + 1 if i < extra else base) for i in range(p)]


def normalize_precision(precision):
    if precision in PRECISIONS:
        return precision
    try:
        dt = np.dtype(precision)
    except TypeError:
        dt = None
    if dt in (np.dtype(np.float32), np.dtype(np.complex64)):
        return "real-32"
    if dt in (np.dtype(np.float64), np.dtype(np.complex128)):
        return "real-64"
    raise ValueError(f"unsupported precision {precision!r}")


@dataclass(frozen=True, eq=False)
class MonarchPlan:
    """Everything needed to run one FFT length: factors, DFT blocks and twiddles.

    ``factors[0]`` is the outermost stage: the first matrix applied by the
    forward transform and the last applied by the inverse. The split at stage
    ``i`` divides a length ``M = factors[i] * B`` sub-problem; its twiddle grid
    has shape ``factors[i] x B``.

    With ``real_input`` the complex transform runs at ``fft_size = n // 2``
    and ``factors`` factorise that length.
    """

    n: int
    order: int
    factors: tuple
    precision: str
    real_input: bool
    causal: bool
    forward_matrices: tuple = field(repr=False)
    inverse_matrices: tuple = field(repr=False)
    forward_twiddles: tuple = field(repr=False)
    inverse_twiddles: tuple = field(repr=False)

    @property
    def fft_size(self):
        return self.n // 2 if self.real_input else self.n

    @property
    def real_dtype(self):
        return PRECISIONS[self.precision][0]

    @property
    def complex_dtype(self):
        return PRECISIONS[self.precision][1]

    @property
    def key(self):
        return (self.n, self.factors, self.real_input)

    @cached_property
    def layout(self):
        """``layout[j]`` is the frequency stored at plan position ``j``."""
        rev = tuple(reversed(self.factors))
        idx = np.arange(self.fft_size).reshape(rev)
        return idx.transpose(tuple(range(len(rev) - 1, -1, -1))).ravel()

    @cached_property
    def position(self):
        """Inverse of :attr:`layout`: plan position holding each frequency."""
        pos = np.empty(self.fft_size, dtype=np.int64)
        pos[self.layout] = np.arange(self.fft_size)
        return pos

    def to_flat(self, spectrum):
        """Reorder plan-layout values (last axis) into natural frequency order."""
        return np.asarray(spectrum)[..., self.position]

    def to_plan(self, spectrum):
        """Reorder natural-order values (last axis) into plan layout."""
        return np.asarray(spectrum)[..., self.layout]

    def with_flags(self, **changes):
        """Copy of this plan with different ``causal``/``precision`` flags."""
        bad = set(changes) - {"causal", "precision"}
        if bad:
            raise ValueError(f"only causal/precision can be changed, not {sorted(bad)}")
        if "precision" in changes:
            changes["precision"] = normalize_precision(changes["precision"])
        return replace(self, **changes)


def build_plan(n, p, precision="real-64", real_input=False, causal=False, factors=None):
    """Precompute the DFT blocks and twiddle grids for an order-``p`` transform.

    ``factors`` overrides the balanced split; their product must equal the
    complex transform length (``n``, or ``n // 2`` with ``real_input``).
    """
    if not is_power_of_two(n):
        raise ValueError(f"{n} is not a power of two")
    if p not in ORDERS:
        raise ValueError(f"order must be one of {ORDERS}, got {p}")
    precision = normalize_precision(precision)
    size = n
    if real_input:
        if n < 2:
            raise ValueError("real-input plans need n >= 2")
        size = n // 2
    if factors is None:
        factors = factorize(size, p)
    else:
        factors = [int(f) for f in factors]
        if len(factors) != p or int(np.prod(factors)) != size or not all(
            is_power_of_two(f) and f >= 2 for f in factors
        ):
            raise ValueError(f"factors {factors} do not split {size} into {p} powers of two >= 2")
    fwd_m = tuple(dft_matrix(f, FORWARD) for f in factors)
    inv_m = tuple(dft_matrix(f, INVERSE) for f in factors)
    fwd_t, inv_t = [], []
    rest = size
    for f in factors[:-1]:
        rest //= f
        fwd_t.append(twiddle_grid(f, rest, FORWARD))
        inv_t.append(twiddle_grid(f, rest, INVERSE))
    return MonarchPlan(
        n=int(n),
        order=p,
        factors=tuple(factors),
        precision=precision,
        real_input=bool(real_input),
        causal=bool(causal),
        forward_matrices=fwd_m,
        inverse_matrices=inv_m,
        forward_twiddles=tuple(fwd_t),
        inverse_twiddles=tuple(inv_t),
    )


# --------------------------------------------------------------------------
# cost model


@dataclass(frozen=True)
class CostModelParams:
    """Hardware constants: matrix-unit size, throughputs (FLOP/s), bandwidths (byte/s)."""

    mu: float
    tau_g: float
    tau_m: float
    sigma_h: float
    sigma_s: float
    sram_budget: float = 131072

    def __post_init__(self):
        for name in ("mu", "tau_g", "tau_m", "sigma_h", "sigma_s", "sram_budget"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.tau_m < self.tau_g:
            raise ValueError("tau_m must be >= tau_g")
        if self.sigma_s < self.sigma_h:
            raise ValueError("sigma_s must be >= sigma_h")


# A100-40GB measurements
A100 = CostModelParams(mu=16, tau_g=17.6e12, tau_m=234e12, sigma_h=1.35e12, sigma_s=9.5e12)

PROFILES = {"a100": A100}

_PROFILE_KEYS = ("mu", "tau_g", "tau_m", "sigma_h", "sigma_s", "sram_budget")


def parse_profile(text):
    """Parse ``key=value`` lines (``#`` comments allowed) into :class:`CostModelParams`."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        key = key.strip().lower()
        if not sep or key not in _PROFILE_KEYS:
            raise ValueError(f"profile line {lineno}: expected one of {_PROFILE_KEYS} as key=value")
        values[key] = float(val)
    missing = [k for k in _PROFILE_KEYS[:-1] if k not in values]
    if missing:
        raise ValueError(f"profile is missing {missing}")
    return CostModelParams(**values)


def load_profile(name_or_path):
    """Built-in profile by name (``"a100"``) or a ``key=value`` profile file."""
    if name_or_path in PROFILES:
        return PROFILES[name_or_path]
    path = Path(name_or_path)
    if not path.is_file():
        raise ValueError(f"unknown profile {name_or_path!r}")
    return parse_profile(path.read_text())


@dataclass(frozen=True)
class StageCost:
    factor: int
    throughput: float
    bandwidth: float
    flop_seconds: float
    io_seconds: float


@dataclass(frozen=True)
class CostEstimate:
    n: int
    order: int
    factors: tuple
    seconds: float
    flop_seconds: float
    io_seconds: float
    per_stage: tuple


def gamma(n_i, params=A100):
    """Achievable FLOP/s for an ``n_i``-point factor: matrix units only once ``n_i >= mu``."""
    return params.tau_g if n_i < params.mu else params.tau_m


def omega(i, factors, n, params=A100):
    """Bandwidth of the memory holding stage ``i``'s (1-based) working set.

    Stage ``i`` works on sub-sequences of ``n / (N_1 ... N_{i-1})`` complex
    half-precision values (4 bytes each); they live in SRAM when they fit.
    """
    if not 1 <= i <= len(factors):
        raise ValueError(f"stage {i} out of range for {len(factors)} factors")
    outer = int(np.prod(factors[: i - 1])) if i > 1 else 1
    working_set = 4 * n / outer
    return params.sigma_s if working_set <= params.sram_budget else params.sigma_h


def cost(n, p, b=1, h=1, params=A100, factors=None):
    """Modelled time of an order-``p`` FFT convolution over a ``b x h`` batch.

    ``C = B H sum_i (16 N N_i / gamma(N_i) + 4 N / omega(i))``.
    """
    factors = factorize(n, p) if factors is None else list(factors)
    bh = b * h
    stages = []
    for i, f in enumerate(factors, 1):
        g = gamma(f, params)
        w = omega(i, factors, n, params)
        stages.append(StageCost(f, g, w, bh * (16 * n * f / g), bh * (4 * n / w)))
    flop = sum(s.flop_seconds for s in stages)
    io = sum(s.io_seconds for s in stages)
    return CostEstimate(n, p, tuple(factors), flop + io, flop, io, tuple(stages))


def select_order(n, b=1, h=1, params=A100):
    """Order in (2, 3, 4) with the lowest modelled cost; ties go to the smaller order."""
    if not is_power_of_two(n) or n < 16:
        raise ValueError(f"select_order needs a power of two >= 16, got {n}")
    best, best_cost = None, None
    for p in ORDERS:
        c = cost(n, p, b, h, params).seconds
        if best_cost is None or c < best_cost:
            best, best_cost = p, c
    return best
