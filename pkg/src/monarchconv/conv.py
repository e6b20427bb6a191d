"""Monarch-decomposed FFT convolution engine.

The forward transform applies the outermost factor first (a column DFT over
the sequence viewed as ``factors[0] x rest``), multiplies by twiddles and
recurses into the rows. Its output is left in *plan layout*, where stage
``i``'s frequency digit indexes rows; kernels are stored in the same layout,
so the pointwise product needs no permutation. The inverse transform walks
the stages in reverse and lands back in natural time order.

Sequences are processed in fixed-size chunks of ``(batch, channel)`` rows.
Chunk boundaries depend only on the FFT length, so results are bit-identical
for any thread count.
"""

import weakref
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .dft import _roots
from .matmul import DEFAULT_TILES, left_apply, right_apply

# complex elements per chunk; a chunk always holds at least one sequence
CHUNK_ELEMENTS = 1 << 16


@dataclass
class ExecStats:
    """Instrumentation filled in by the execution functions.

    ``tiles`` counts tile products per ``(direction, stage)``; ``transforms``
    counts complex transforms per length; ``peak_rows`` is the largest number
    of sequences held in any working buffer.
    """

    tiles: Counter = field(default_factory=Counter)
    transforms: Counter = field(default_factory=Counter)
    peak_rows: int = 0
    chunks: int = 0

    def merge(self, other):
        self.tiles.update(other.tiles)
        self.transforms.update(other.transforms)
        self.peak_rows = max(self.peak_rows, other.peak_rows)
        self.chunks += other.chunks

    @property
    def total_tiles(self):
        return sum(self.tiles.values())

    def stage_tiles(self, stages):
        return sum(v for (_, s), v in self.tiles.items() if s in stages)


@dataclass(frozen=True, eq=False)
class KernelSpectrum:
    """Per-channel kernel spectrum.

    ``layout == "plan"``: ``entries`` has shape ``(h, fft_size)`` in the
    plan's layout; real-input plans also carry the Nyquist bin in ``nyquist``.
    ``layout == "flat"``: ``entries`` is the full length-``n`` spectrum in
    natural order.
    """

    entries: np.ndarray
    n: int
    layout: str
    mode: str
    plan_key: tuple = None
    nyquist: np.ndarray = None

    @property
    def h(self):
        return self.entries.shape[0]


# --------------------------------------------------------------------------
# stage recursion


def _forward_stages(plan, x, level, keeps, cfg, tally):
    """Forward DFT of the rows of ``x`` (shape ``(R, len)``) into plan layout.

    ``x`` may be shorter than the stage length; missing trailing samples are
    zero, which removes that share of the stage's inner dimension.
    ``keeps[level]`` is the number of leading frequency digits anyone will read.
    """
    f = plan.factors[level]
    cdt = plan.complex_dtype
    rows, avail = x.shape
    size = int(np.prod(plan.factors[level:]))
    rest = size // f
    keep = keeps[level]
    if level == plan.order - 1:
        y, t = right_apply(x, plan.forward_matrices[level], avail, keep, cfg)
        tally[("fwd", level)] += t
        out = np.zeros((rows, f), dtype=cdt)
        out[:, :keep] = y
        return out
    if avail % rest:
        raise ValueError("input does not align with the outer stage")
    xr = x.reshape(rows, avail // rest, rest)
    y, t = left_apply(plan.forward_matrices[level], xr, keep, avail // rest, cfg)
    tally[("fwd", level)] += t
    y *= plan.forward_twiddles[level][:keep]
    sub = _forward_stages(plan, y.astype(cdt, copy=False).reshape(rows * keep, rest), level + 1, keeps, cfg, tally)
    out = np.zeros((rows, f, rest), dtype=cdt)
    out[:, :keep] = sub.reshape(rows, keep, rest)
    return out.reshape(rows, size)


def _inverse_stages(plan, y, level, keeps, out_rows, cfg, tally):
    """Unscaled inverse of :func:`_forward_stages`.

    Only the leading ``keeps[level]`` digits of ``y`` may be nonzero. At the
    outermost stage only ``out_rows`` output rows are produced (all if None).
    """
    f = plan.factors[level]
    out_rows = f if out_rows is None else out_rows
    cdt = plan.complex_dtype
    rows, size = y.shape
    nz = keeps[level]
    if level == plan.order - 1:
        x, t = right_apply(y, plan.inverse_matrices[level], nz, f, cfg)
        tally[("inv", level)] += t
        return x.astype(cdt, copy=False)
    rest = size // f
    yr = y.reshape(rows, f, rest)[:, :nz]
    sub = _inverse_stages(plan, yr.reshape(rows * nz, rest), level + 1, keeps, None, cfg, tally)
    sub = sub.reshape(rows, nz, rest) * plan.inverse_twiddles[level][:nz]
    x, t = left_apply(plan.inverse_matrices[level], sub, out_rows, nz, cfg)
    tally[("inv", level)] += t
    return x.astype(cdt, copy=False).reshape(rows, out_rows * rest)


def _full_keeps(plan):
    return tuple(plan.factors)


def _forward(plan, z, keeps, cfg, tally):
    return _forward_stages(plan, z, 0, keeps, cfg, tally)


def _inverse(plan, Z, keeps, cfg, tally, half):
    f0 = plan.factors[0]
    out_rows = f0 // 2 if half else f0
    x = _inverse_stages(plan, Z, 0, keeps, out_rows, cfg, tally)
    return x / plan.fft_size


# --------------------------------------------------------------------------
# real-input packing in plan layout


class _Packing:
    """Split/merge of a half-length complex spectrum into a real signal's bins 0..n/2."""

    def __init__(self, plan):
        half = plan.fft_size
        freq = plan.layout
        self.partner = plan.position[(half - freq) % half]
        self.zero = int(plan.position[0])
        self.w = _roots(freq, plan.n, -1.0)
        self.w_inv = np.conj(self.w)

    def split(self, Z):
        Zc = np.conj(Z[:, self.partner])
        even = (Z + Zc) / 2
        odd = (Z - Zc) / 2j
        nyq = even[:, self.zero] - odd[:, self.zero]
        return even + self.w * odd, nyq

    def merge(self, Y, nyq):
        Yc = np.conj(Y[:, self.partner])
        Yc[:, self.zero] = np.conj(nyq)
        even = (Y + Yc) / 2
        odd = (Y - Yc) / 2 * self.w_inv
        return even + 1j * odd


_PACKINGS = weakref.WeakKeyDictionary()


def _packing(plan):
    pk = _PACKINGS.get(plan)
    if pk is None:
        pk = _PACKINGS[plan] = _Packing(plan)
    return pk


def _to_spectrum(plan, x, keeps, cfg, tally):
    """Real rows (R, len) -> (plan-layout spectrum, nyquist or None)."""
    if plan.real_input:
        z = np.empty((x.shape[0], x.shape[1] // 2), dtype=plan.complex_dtype)
        z.real = x[:, 0::2]
        z.imag = x[:, 1::2]
    else:
        z = x.astype(plan.complex_dtype)
    tally[("transform", plan.fft_size)] += z.shape[0]
    Z = _forward(plan, z, keeps, cfg, tally)
    if plan.real_input:
        return _packing(plan).split(Z)
    return Z, None


def _from_spectrum(plan, Y, nyq, keeps, cfg, tally, half):
    """Inverse of :func:`_to_spectrum`, returning real rows (first half only if ``half``)."""
    if plan.real_input:
        Y = _packing(plan).merge(Y, nyq)
    tally[("transform", plan.fft_size)] += Y.shape[0]
    z = _inverse(plan, Y.astype(plan.complex_dtype, copy=False), keeps, cfg, tally, half)
    if not plan.real_input:
        return np.ascontiguousarray(z.real, dtype=plan.real_dtype)
    x = np.empty((z.shape[0], 2 * z.shape[1]), dtype=plan.real_dtype)
    x[:, 0::2] = z.real
    x[:, 1::2] = z.imag
    return x


# --------------------------------------------------------------------------
# public transforms


def _as_rows(x, length, what):
    x = np.asarray(x)
    if x.shape[-1:] != (length,):
        raise ValueError(f"{what} has length {x.shape[-1] if x.ndim else 0}, plan expects {length}")
    return x.reshape(-1, length), x.shape


def monarch_fft(x, plan, cfg=DEFAULT_TILES, stats=None):
    """Forward DFT of complex sequences (last axis, length ``plan.fft_size``) in plan layout."""
    rows, shape = _as_rows(x, plan.fft_size, "input")
    tally = Counter({("transform", plan.fft_size): rows.shape[0]})
    Z = _forward(plan, rows.astype(plan.complex_dtype), _full_keeps(plan), cfg, tally)
    _record(stats, tally, rows.shape[0])
    return Z.reshape(shape)


def monarch_ifft(X, plan, cfg=DEFAULT_TILES, stats=None):
    """Inverse of :func:`monarch_fft`, including the single ``1/fft_size`` scaling."""
    rows, shape = _as_rows(X, plan.fft_size, "spectrum")
    tally = Counter({("transform", plan.fft_size): rows.shape[0]})
    x = _inverse(plan, rows.astype(plan.complex_dtype), _full_keeps(plan), cfg, tally, False)
    _record(stats, tally, rows.shape[0])
    return x.reshape(shape)


def _record(stats, tally, rows):
    if stats is None:
        return
    local = ExecStats(chunks=1, peak_rows=rows)
    for key, val in tally.items():
        if key[0] == "transform":
            local.transforms[key[1]] += val
        else:
            local.tiles[key] += val
    stats.merge(local)


# --------------------------------------------------------------------------
# kernels


def prepare_kernel(k, plan, mode=None):
    """FFT a real ``(h, n_k)`` filter bank into the plan's layout.

    ``mode`` defaults to ``"causal"`` for causal plans and ``"circular"``
    otherwise. Circular kernels must span the whole FFT; causal kernels may be
    at most ``plan.n // 2`` long and are zero-padded.
    """
    mode = mode or ("causal" if plan.causal else "circular")
    k = np.asarray(k, dtype=np.float64)
    if k.ndim == 1:
        k = k[None, :]
    if k.ndim != 2:
        raise ValueError("kernel must have shape (h, n_k)")
    nk = k.shape[1]
    if mode == "circular":
        if plan.causal:
            raise ValueError("circular kernels need a non-causal plan")
        if nk != plan.n:
            raise ValueError(f"circular kernel length {nk} != plan length {plan.n}")
    elif mode == "causal":
        if nk > plan.n // 2:
            raise ValueError(f"kernel exceeds causal budget ({nk} > {plan.n // 2})")
    else:
        raise ValueError(f"unknown convolution mode {mode!r}")
    padded = np.zeros((k.shape[0], plan.n))
    padded[:, :nk] = k
    exact = plan.with_flags(precision="real-64", causal=False)
    tally = Counter()
    Z, nyq = _to_spectrum(exact, padded, _full_keeps(exact), DEFAULT_TILES, tally)
    cdt = plan.complex_dtype
    return KernelSpectrum(
        entries=Z.astype(cdt),
        n=plan.n,
        layout="plan",
        mode=mode,
        plan_key=plan.key,
        nyquist=None if nyq is None else nyq.astype(cdt),
    )


def kernel_to_flat(kf, plan):
    """Natural-order full-length spectrum of a plan-layout kernel."""
    if kf.layout == "flat":
        return kf
    _check_kernel(kf, plan)
    entries = plan.to_flat(kf.entries.astype(np.complex128))
    if plan.real_input:
        half = plan.fft_size
        full = np.empty((kf.h, plan.n), dtype=np.complex128)
        full[:, :half] = entries
        full[:, half] = kf.nyquist
        full[:, half + 1:] = np.conj(entries[:, 1:][:, ::-1])
        entries = full
    return KernelSpectrum(entries, plan.n, "flat", kf.mode, None, None)


def kernel_to_plan(kf, plan):
    """Plan-layout copy of a flat kernel spectrum.

    Real-input plans read bins ``0..n/2`` only and assume Hermitian symmetry.
    """
    if kf.layout == "plan":
        _check_kernel(kf, plan)
        return kf
    entries = np.asarray(kf.entries)
    if entries.shape[1] != plan.n:
        raise ValueError(f"flat spectrum has length {entries.shape[1]}, plan expects {plan.n}")
    cdt = plan.complex_dtype
    nyq = None
    if plan.real_input:
        half = plan.fft_size
        nyq = entries[:, half].astype(cdt)
        entries = entries[:, :half]
    return KernelSpectrum(plan.to_plan(entries).astype(cdt), plan.n, "plan", kf.mode, plan.key, nyq)


def _check_kernel(kf, plan):
    if kf.layout != "plan" or kf.plan_key != plan.key:
        raise ValueError("kernel spectrum layout does not match the plan")


# --------------------------------------------------------------------------
# convolution drivers


def _input_length(plan):
    return plan.n // 2 if plan.causal else plan.n


def _check_input(u, plan, what="u"):
    u = np.asarray(u)
    if u.ndim != 3:
        raise ValueError(f"{what} must have shape (batch, channels, length)")
    want = _input_length(plan)
    if u.shape[2] != want:
        mode = "causal (half-length)" if plan.causal else "circular"
        raise ValueError(f"{what} has length {u.shape[2]}, {mode} plan of size {plan.n} expects {want}")
    return u


def _chunks(nrows, plan):
    step = max(1, CHUNK_ELEMENTS // plan.n)
    return [(r0, min(nrows, r0 + step)) for r0 in range(0, nrows, step)]


def _map_chunks(fn, chunks, threads):
    if threads is None or threads <= 1 or len(chunks) == 1:
        return [fn(c) for c in chunks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, chunks))


def _merge_tallies(stats, tallies, rows):
    if stats is None:
        return
    for tally, r in zip(tallies, rows):
        _record(stats, tally, r)


def _execute(u, kf, plan, *, keeps=None, pre=None, post=None, cfg=DEFAULT_TILES, threads=1, stats=None):
    """Shared convolution driver: ``post * conv(pre * u, kf)`` chunk by chunk."""
    u = _check_input(u, plan)
    _check_kernel(kf, plan)
    B, H, N = u.shape
    if kf.h != H:
        raise ValueError(f"kernel has {kf.h} channels, input has {H}")
    keeps = _full_keeps(plan) if keeps is None else tuple(keeps)
    rdt = plan.real_dtype
    uf = u.reshape(B * H, N)
    pre_f = None if pre is None else np.asarray(pre).reshape(B * H, N)
    post_f = None if post is None else np.asarray(post).reshape(B * H, N)
    out = np.empty((B * H, N), dtype=rdt)
    chunks = _chunks(B * H, plan)

    def run(chunk):
        r0, r1 = chunk
        tally = Counter()
        x = uf[r0:r1].astype(rdt)
        if pre_f is not None:
            x *= pre_f[r0:r1]
        X, nyq = _to_spectrum(plan, x, keeps, cfg, tally)
        h = np.arange(r0, r1) % H
        X *= kf.entries[h]
        if nyq is not None:
            nyq = nyq * kf.nyquist[h]
        y = _from_spectrum(plan, X, nyq, keeps, cfg, tally, plan.causal)
        if post_f is not None:
            y *= post_f[r0:r1]
        out[r0:r1] = y
        return tally

    tallies = _map_chunks(run, chunks, threads)
    _merge_tallies(stats, tallies, [r1 - r0 for r0, r1 in chunks])
    return out.reshape(B, H, N)


def conv_forward(u, kf, plan, cfg=DEFAULT_TILES, threads=1, stats=None):
    """Convolve every ``u[b, h]`` with kernel ``h``.

    Circular plans take length-``n`` inputs. Causal plans take length-``n/2``
    inputs, treat them as zero-padded to ``n`` and return the first ``n/2``
    outputs; the zero half is skipped in the outermost stage of both
    transforms.
    """
    return _execute(u, kf, plan, cfg=cfg, threads=threads, stats=stats)


def conv_gated(u, v, w, kf, plan, cfg=DEFAULT_TILES, threads=1, stats=None):
    """``v * conv(u * w, kf)`` with both gates applied inside the chunk loop."""
    u = np.asarray(u)
    if np.shape(v) != u.shape or np.shape(w) != u.shape:
        raise ValueError(f"gates must match the input shape {u.shape}")
    return _execute(u, kf, plan, pre=w, post=v, cfg=cfg, threads=threads, stats=stats)


def conv_backward(dy, u, kf, plan, cfg=DEFAULT_TILES, threads=1, stats=None):
    """Gradients of a forward convolution, recomputing every transform.

    Returns ``(du, dk)``: ``du`` has the input's shape; ``dk`` is the gradient
    with respect to the zero-padded time-domain kernel, shape ``(h, n)``
    (its second half is exactly zero for causal plans).
    """
    u = _check_input(u, plan)
    dy = _check_input(dy, plan, "dy")
    if dy.shape != u.shape:
        raise ValueError(f"dy shape {dy.shape} != input shape {u.shape}")
    _check_kernel(kf, plan)
    B, H, N = u.shape
    if kf.h != H:
        raise ValueError(f"kernel has {kf.h} channels, input has {H}")
    keeps = _full_keeps(plan)
    rdt = plan.real_dtype
    uf = u.reshape(B * H, N)
    dyf = dy.reshape(B * H, N)
    du = np.empty((B * H, N), dtype=rdt)
    kconj = np.conj(kf.entries)
    nconj = None if kf.nyquist is None else np.conj(kf.nyquist)
    chunks = _chunks(B * H, plan)

    def run(chunk):
        r0, r1 = chunk
        tally = Counter()
        h = np.arange(r0, r1) % H
        DY, dyn = _to_spectrum(plan, dyf[r0:r1].astype(rdt), keeps, cfg, tally)
        U, un = _to_spectrum(plan, uf[r0:r1].astype(rdt), keeps, cfg, tally)
        du[r0:r1] = _from_spectrum(
            plan, DY * kconj[h], None if dyn is None else dyn * nconj[h], keeps, cfg, tally, plan.causal
        )
        g = DY.astype(np.complex128) * np.conj(U)
        acc = np.zeros((H, g.shape[1]), dtype=np.complex128)
        np.add.at(acc, h, g)
        acc_n = None
        if dyn is not None:
            acc_n = np.zeros(H, dtype=np.complex128)
            np.add.at(acc_n, h, dyn.astype(np.complex128) * np.conj(un))
        return tally, acc, acc_n

    results = _map_chunks(run, chunks, threads)
    acc = np.zeros((H, plan.fft_size), dtype=np.complex128)
    acc_n = np.zeros(H, dtype=np.complex128) if plan.real_input else None
    for _, a, an in results:
        acc += a
        if an is not None:
            acc_n += an
    tally = Counter()
    dk_half = _from_spectrum(plan, acc, acc_n, keeps, cfg, tally, plan.causal)
    dk = np.zeros((H, plan.n), dtype=rdt)
    dk[:, : dk_half.shape[1]] = dk_half
    _merge_tallies(stats, [r[0] for r in results] + [tally], [r1 - r0 for r0, r1 in chunks] + [H])
    return du.reshape(B, H, N), dk
