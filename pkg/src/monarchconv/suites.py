"""Randomised oracle suites shared by ``monarchconv verify`` and the tests."""

from dataclasses import dataclass

import numpy as np

from . import dft
from .conv import ExecStats, conv_backward, conv_forward, kernel_to_flat, kernel_to_plan, monarch_fft, monarch_ifft, prepare_kernel
from .plan import ORDERS, build_plan
from .sparse import FrequencySparsityPattern, apply_frequency_mask, conv_frequency_sparse, pattern_dims

SUITES = ("fft", "real", "conv", "sparse", "grad")


@dataclass
class PropertyResult:
    name: str
    tolerance: float
    instances: int = 0
    worst: float = 0.0
    failure: dict = None

    @property
    def passed(self):
        return self.failure is None

    def record(self, err, **where):
        self.instances += 1
        if not err <= self.worst:
            self.worst = float(err)
        if self.failure is None and not err <= self.tolerance:
            self.failure = dict(where, error=float(err))


def admissible_orders(n, real_input=False):
    size = n // 2 if real_input else n
    return [p for p in ORDERS if size >= 2**p]


def _rng(seed):
    return np.random.default_rng(seed)


def fft_suite(lengths, seed, instances=3):
    layout = PropertyResult("monarch_fft == naive_dft (error / ||x||)", 1e-9)
    roundtrip = PropertyResult("monarch_ifft(monarch_fft(x)) == x", 1e-8)
    for n in lengths:
        for p in admissible_orders(n):
            plan = build_plan(n, p)
            for i in range(instances):
                s = seed + i
                rng = _rng(s)
                x = rng.standard_normal(n) + 1j * rng.standard_normal(n)
                X = monarch_fft(x, plan)
                scale = np.linalg.norm(x)
                layout.record(np.max(np.abs(plan.to_flat(X) - dft.naive_dft(x))) / scale, n=n, p=p, seed=s)
                roundtrip.record(np.max(np.abs(monarch_ifft(X, plan) - x)), n=n, p=p, seed=s)
    return [layout, roundtrip]


def real_suite(max_n, seed):
    res = PropertyResult("rfft_via_half == naive_dft bins 0..N/2", 1e-10)
    inv = PropertyResult("irfft_via_half(rfft_via_half(x)) == x", 1e-10)
    for n in range(2, max_n + 1, 2):
        s = seed + n
        x = _rng(s).standard_normal(n)
        X = dft.rfft_via_half(x)
        res.record(np.max(np.abs(X - dft.naive_dft(x)[: n // 2 + 1])), n=n, seed=s)
        inv.record(np.max(np.abs(dft.irfft_via_half(X) - x)), n=n, seed=s)
    return [res, inv]


def conv_suite(lengths, seed, batch=1, hidden=2, precisions=("real-64",)):
    results = {
        prec: PropertyResult(f"conv_forward == direct_conv ({prec}, rel)", 1e-8 if prec == "real-64" else 3e-3)
        for prec in precisions
    }
    for n in lengths:
        for causal in (False, True):
            length = n // 2 if causal else n
            mode = "causal" if causal else "circular"
            rng = _rng(seed + n + causal)
            u = rng.standard_normal((batch, hidden, length))
            k = rng.standard_normal((hidden, length))
            ref = dft.direct_conv(u, k, mode)
            for real in (False, True):
                for p in admissible_orders(n, real):
                    for prec in precisions:
                        plan = build_plan(n, p, prec, real, causal)
                        y = conv_forward(u, prepare_kernel(k, plan), plan)
                        results[prec].record(
                            dft.relative_error(y, ref), n=n, p=p, mode=mode, real=real, seed=seed + n + causal
                        )
    return list(results.values())


def sparse_suite(seed, count=50, lengths=(2**12,), batch=1, hidden=2):
    res = PropertyResult("conv_frequency_sparse == conv_forward(masked kernel)", 1e-10)
    mono = PropertyResult("tile count non-increasing as a cutoff drops", 0.0)
    rng = _rng(seed)
    configs = []
    for n in lengths:
        for p in admissible_orders(n):
            configs.append(build_plan(n, p))
    for i in range(count):
        plan = configs[i % len(configs)]
        s = seed + i
        r = _rng(s)
        dims = pattern_dims(plan)
        keep = tuple(int(r.integers(0, d + 1)) if d > 1 else 1 for d in dims)
        pattern = FrequencySparsityPattern(dims, keep)
        u = r.standard_normal((batch, hidden, plan.n))
        k = r.standard_normal((hidden, plan.n))
        flat = kernel_to_flat(prepare_kernel(k, plan), plan)
        masked = apply_frequency_mask(flat, pattern)
        dense = conv_forward(u, kernel_to_plan(masked, plan), plan)
        st = ExecStats()
        y = conv_frequency_sparse(u, masked, pattern, plan, stats=st)
        scale = max(1.0, float(np.max(np.abs(dense))))
        res.record(np.max(np.abs(y - dense)) / scale, n=plan.n, p=plan.order, pattern=str(pattern), seed=s)
        # drop one cutoff and make sure work does not grow
        axis = int(rng.integers(0, plan.order))
        if keep[axis] > 0:
            smaller = list(keep)
            smaller[axis] -= 1
            st2 = ExecStats()
            conv_frequency_sparse(u, masked, FrequencySparsityPattern(dims, tuple(smaller)), plan, stats=st2)
            mono.record(max(0, st2.total_tiles - st.total_tiles), n=plan.n, pattern=str(pattern), seed=s)
    return [res, mono]


def finite_difference_grads(u, k, mode, eps=1e-5):
    """Central differences of ``sum(direct_conv(u, k)**2)`` w.r.t. ``u`` and ``k``."""

    def loss(uu, kk):
        return float(np.sum(dft.direct_conv(uu, kk, mode) ** 2))

    du = np.zeros_like(u)
    for idx in np.ndindex(u.shape):
        up, dn = u.copy(), u.copy()
        up[idx] += eps
        dn[idx] -= eps
        du[idx] = (loss(up, k) - loss(dn, k)) / (2 * eps)
    dk = np.zeros_like(k)
    for idx in np.ndindex(k.shape):
        up, dn = k.copy(), k.copy()
        up[idx] += eps
        dn[idx] -= eps
        dk[idx] = (loss(u, up) - loss(u, dn)) / (2 * eps)
    return du, dk


def grad_suite(lengths, seed, batch=2, hidden=3, orders=(2, 3)):
    res = PropertyResult("conv_backward == finite differences (rel)", 1e-4)
    for n in lengths:
        for causal in (False, True):
            mode = "causal" if causal else "circular"
            length = n // 2 if causal else n
            s = seed + n + causal
            rng = _rng(s)
            u = rng.standard_normal((batch, hidden, length))
            k = rng.standard_normal((hidden, length))
            fd_u, fd_k = finite_difference_grads(u, k, mode)
            for p in orders:
                if p not in admissible_orders(n):
                    continue
                plan = build_plan(n, p, causal=causal)
                kf = prepare_kernel(k, plan)
                y = conv_forward(u, kf, plan)
                du, dk = conv_backward(2 * y, u, kf, plan)
                err = max(dft.relative_error(du, fd_u), dft.relative_error(dk[:, :length], fd_k))
                res.record(err, n=n, p=p, mode=mode, seed=s)
    return [res]


def run_suite(name, lengths, seed):
    if name == "fft":
        return fft_suite(lengths, seed)
    if name == "real":
        return real_suite(min(max(lengths), 1024), seed)
    if name == "conv":
        return conv_suite(lengths, seed)
    if name == "sparse":
        return sparse_suite(seed)
    if name == "grad":
        return grad_suite([n for n in lengths if n <= 256] or [64], seed)
    raise ValueError(f"unknown suite {name!r}")
