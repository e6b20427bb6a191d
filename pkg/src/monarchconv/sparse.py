"""Partial and frequency-sparse convolutions."""

import re
from dataclasses import dataclass

import numpy as np

from .conv import KernelSpectrum, _execute, kernel_to_plan
from .matmul import BlockedMatmulConfig

# finer tiles than the dense default so half of a 16-point stage can be skipped
SPARSE_TILES = BlockedMatmulConfig(8, 8, 8)


@dataclass(frozen=True)
class FrequencySparsityPattern:
    """Keep-prefixes of a row-major reshape of a flat spectrum.

    Along dimension ``i`` only indices below ``keep[i]`` survive; everything
    else is zeroed.
    """

    dims: tuple
    keep: tuple

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        keep = tuple(int(c) for c in self.keep)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "keep", keep)
        if len(dims) != len(keep) or not dims:
            raise ValueError("dims and keep must be non-empty and of equal length")
        if any(d < 1 for d in dims):
            raise ValueError("pattern dims must be >= 1")
        if any(not 0 <= c <= d for c, d in zip(keep, dims)):
            raise ValueError(f"keep counts {keep} must lie within dims {dims}")

    @classmethod
    def from_zeroed(cls, dims, zeroed):
        """Pattern that zeroes the last ``zeroed[i]`` indices of each dimension."""
        return cls(dims, tuple(int(d) - int(z) for d, z in zip(dims, zeroed)))

    @classmethod
    def dense(cls, dims):
        return cls(dims, dims)

    @classmethod
    def parse(cls, text):
        """Parse ``"dims=d1,d2,d3,d4;keep=a,b,c,d"``."""
        m = re.fullmatch(r"\s*dims\s*=\s*([\d,\s]+);\s*keep\s*=\s*([\d,\s]+)", text)
        if not m:
            raise ValueError(f"bad sparsity pattern {text!r}; expected 'dims=...;keep=...'")
        dims = [int(v) for v in m.group(1).split(",") if v.strip()]
        keep = [int(v) for v in m.group(2).split(",") if v.strip()]
        return cls(tuple(dims), tuple(keep))

    def __str__(self):
        return "dims={};keep={}".format(",".join(map(str, self.dims)), ",".join(map(str, self.keep)))

    @property
    def size(self):
        return int(np.prod(self.dims))


def sparsity_fraction(pattern):
    """Fraction of spectrum entries the pattern zeroes."""
    kept = 1.0
    for c, d in zip(pattern.keep, pattern.dims):
        kept *= c / d
    return 1.0 - kept


def truncate_kernel(k, n_k):
    """Zero every filter tap at index ``>= n_k``, keeping the array length."""
    k = np.array(k, dtype=np.float64)
    if not 0 <= n_k <= k.shape[-1]:
        raise ValueError(f"n_k={n_k} outside [0, {k.shape[-1]}]")
    k[..., n_k:] = 0.0
    return k


def mask(pattern):
    """Boolean keep-mask over the flat spectrum."""
    m = np.zeros(pattern.dims, dtype=bool)
    m[tuple(slice(0, c) for c in pattern.keep)] = True
    return m.ravel()


def apply_frequency_mask(kf, pattern):
    """Zero the pattern's slabs of a flat-layout kernel spectrum."""
    if kf.layout != "flat":
        raise ValueError("apply_frequency_mask needs a flat-layout spectrum")
    entries = np.array(kf.entries)
    if pattern.size != entries.shape[1]:
        raise ValueError(f"pattern covers {pattern.size} bins, spectrum has {entries.shape[1]}")
    shaped = entries.reshape((entries.shape[0],) + pattern.dims)
    for axis, c in enumerate(pattern.keep):
        index = [slice(None)] * shaped.ndim
        index[axis + 1] = slice(c, None)
        shaped[tuple(index)] = 0
    return KernelSpectrum(shaped.reshape(entries.shape), kf.n, "flat", kf.mode, None, None)


def pattern_dims(plan, ndim=4):
    """Pattern dims matching ``plan``: factors innermost-first, padded with ones."""
    rev = tuple(reversed(plan.factors))
    if len(rev) > ndim:
        raise ValueError(f"order-{plan.order} plan needs at least {plan.order} pattern dims")
    return rev + (1,) * (ndim - len(rev))


def stage_keeps(pattern, plan):
    """Per-stage count of leading frequency digits the pattern keeps."""
    if plan.real_input:
        raise ValueError("frequency-sparse execution needs a complex (real_input=False) plan")
    want = pattern_dims(plan, max(len(pattern.dims), plan.order))
    if pattern.dims != want:
        raise ValueError(f"pattern dims {pattern.dims} do not match plan factors (expected {want})")
    p = plan.order
    keeps = [pattern.keep[p - 1 - level] for level in range(p)]
    if any(c == 0 for c in pattern.keep[p:]):
        keeps = [0] * p
    return tuple(keeps)


def conv_frequency_sparse(u, kf_masked, pattern, plan, cfg=SPARSE_TILES, threads=1, stats=None):
    """Convolve with a frequency-masked kernel, skipping the work the mask makes dead.

    Stage ``i`` of the forward transform only produces the leading digits the
    pattern keeps (fewer outer-loop rows, fewer matmul rows/columns) and the
    inverse only reads them. Outputs are the real part of the inverse
    transform, exactly as for :func:`conv_forward` with the same kernel.
    """
    keeps = stage_keeps(pattern, plan)
    kf = kernel_to_plan(kf_masked, plan)
    if not any(keeps):
        u = np.asarray(u)
        n_out = plan.n // 2 if plan.causal else plan.n
        if u.ndim != 3 or u.shape[2] != n_out:
            raise ValueError("input shape does not match the plan")
        return np.zeros(u.shape, dtype=plan.real_dtype)
    return _execute(u, kf, plan, keeps=keeps, cfg=cfg, threads=threads, stats=stats)
