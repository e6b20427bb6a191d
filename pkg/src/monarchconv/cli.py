"""``monarchconv`` command line: verify, bench, plan and conv.

Exit codes: 0 on success, 1 when a verification or benchmark check fails,
2 for usage errors (bad flags, incompatible shapes, unreadable files).
"""

import argparse
import csv
import json
import statistics
import sys
import time
from dataclasses import asdict, dataclass, fields

import numpy as np
from threadpoolctl import threadpool_limits

from . import dft
from .conv import ExecStats, conv_forward, conv_gated, kernel_to_flat, prepare_kernel
from .matmul import DEFAULT_TILES
from .plan import ORDERS, PRECISIONS, build_plan, cost, factorize, is_power_of_two, load_profile, select_order
from .sparse import SPARSE_TILES, FrequencySparsityPattern, apply_frequency_mask, conv_frequency_sparse
from .suites import SUITES, admissible_orders, run_suite
from .tensor_io import TensorFormatError, read_tensor, write_tensor

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
TOLERANCES = {"real-64": 1e-8, "real-32": 3e-3}


class UsageError(Exception):
    pass


def parse_lengths(text):
    """``"256..4096"`` (powers of two, inclusive), ``"16,64"`` or a mix of both."""
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        lo, sep, hi = part.partition("..")
        try:
            lo = int(lo)
            hi = int(hi) if sep else lo
        except ValueError:
            raise UsageError(f"bad length {part!r}") from None
        for v in (lo, hi):
            if not is_power_of_two(v):
                raise UsageError(f"length {v} is not a power of two")
        if hi < lo:
            raise UsageError(f"empty range {part!r}")
        n = lo
        while n <= hi:
            out.append(n)
            n *= 2
    if not out:
        raise UsageError("no lengths given")
    return out


def parse_orders(text):
    try:
        ps = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"bad order list {text!r}") from None
    bad = [p for p in ps if p not in ORDERS]
    if bad or not ps:
        raise UsageError(f"orders must be drawn from {ORDERS}, got {text!r}")
    return ps


# --------------------------------------------------------------------------
# verify


def cmd_verify(args, out):
    lengths = parse_lengths(args.n)
    names = SUITES if args.suite == "all" else (args.suite,)
    print(f"seed={args.seed}", file=out)
    ok = True
    for name in names:
        for res in run_suite(name, lengths, args.seed):
            status = "PASS" if res.passed else "FAIL"
            print(
                f"{status} {name}: {res.name} instances={res.instances} "
                f"worst={res.worst:.3e} tol={res.tolerance:.0e}",
                file=out,
            )
            if not res.passed:
                ok = False
                where = " ".join(f"{k}={v}" for k, v in res.failure.items())
                print(f"  first failure: {where}", file=out)
    return EXIT_OK if ok else EXIT_FAIL


# --------------------------------------------------------------------------
# bench


@dataclass
class BenchRecord:
    op: str
    n: int
    p: str
    factors: str
    causal: bool
    real: bool
    gated: bool
    pattern: str
    precision: str
    batch: int
    hidden: int
    reps: int
    median_s: str
    modeled_s: str
    max_abs_err: str
    tiles: str
    status: str


BENCH_HEADER = [f.name for f in fields(BenchRecord)]


def _fmt(x):
    return "" if x is None else repr(float(x))


def _estimate_bytes(n, batch, hidden, oracle=False):
    # input, output, gates and a few complex128 work buffers per chunk
    elems = batch * hidden * n
    total = elems * 8 * 6 + min(elems, 1 << 16) * 16 * 8
    if oracle:
        total += elems * 8 * 2
    return total


def _time(fn, reps):
    fn()
    times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return max(statistics.median(times), 1e-12)


def _bench_rows(args):
    lengths = parse_lengths(args.n)
    orders = parse_orders(args.p) if args.p else None
    pattern = FrequencySparsityPattern.parse(args.pattern) if args.pattern else None
    if args.reps < 3:
        raise UsageError("--reps must be at least 3")
    if pattern is not None and args.real:
        raise UsageError("--pattern runs on complex plans; drop --real")
    causal = args.mode == "causal"
    cap = args.mem_cap * 2**30
    rdt = PRECISIONS[args.precision][0]
    rng = np.random.default_rng(args.seed)
    failed = False

    for n in lengths:
        length = n // 2 if causal else n
        u = rng.standard_normal((args.batch, args.hidden, length)).astype(rdt)
        k = rng.standard_normal((args.hidden, length))
        v = w = None
        if args.gated:
            v = rng.standard_normal(u.shape).astype(rdt)
            w = rng.standard_normal(u.shape).astype(rdt)
        ref = None
        base = dict(
            causal=causal, real=bool(args.real), gated=bool(args.gated), precision=args.precision,
            batch=args.batch, hidden=args.hidden, reps=args.reps,
        )
        too_big = _estimate_bytes(n, args.batch, args.hidden, args.oracle or args.check) > cap

        def oracle():
            x = u.astype(np.float64) * w if args.gated else u.astype(np.float64)
            y = dft.direct_conv(x, k, args.mode)
            return y * v if args.gated else y

        if args.check and not too_big:
            ref = oracle()

        if args.oracle:
            rec = BenchRecord("direct_conv", n, "", "", pattern="", median_s="", modeled_s="",
                              max_abs_err="", tiles="", status="skipped: exceeds memory cap", **base)
            if not too_big:
                rec.median_s = _fmt(_time(oracle, args.reps))
                rec.status = "ok"
            yield rec

        ps = orders or ([4] if pattern else [select_order(max(n, 16), args.batch, args.hidden)])
        for p in ps:
            if p not in admissible_orders(n, args.real):
                yield BenchRecord("monarch_conv", n, str(p), "", pattern="", median_s="", modeled_s="",
                                  max_abs_err="", tiles="", status="skipped: order not admissible", **base)
                continue
            plan = build_plan(n, p, args.precision, args.real, causal)
            factors = "x".join(map(str, plan.factors))
            modeled = _fmt(cost(n, p, args.batch, args.hidden).seconds)
            kf = prepare_kernel(k, plan)
            variants = [("monarch_conv", None)]
            if pattern is not None:
                variants.append(("monarch_conv_sparse", pattern))
            for op, pat in variants:
                rec = BenchRecord(op, n, str(p), factors, pattern="" if pat is None else str(pat),
                                  median_s="", modeled_s=modeled, max_abs_err="", tiles="",
                                  status="skipped: exceeds memory cap", **base)
                if too_big:
                    yield rec
                    continue
                if pat is None:
                    cfg = SPARSE_TILES if pattern is not None else DEFAULT_TILES
                    if args.gated:
                        def run(stats=None, cfg=cfg):
                            return conv_gated(u, v, w, kf, plan, cfg=cfg, threads=args.threads, stats=stats)
                    else:
                        def run(stats=None, cfg=cfg):
                            return conv_forward(u, kf, plan, cfg=cfg, threads=args.threads, stats=stats)
                    expected = ref
                else:
                    masked = apply_frequency_mask(kernel_to_flat(kf, plan), pat)

                    def run(stats=None, masked=masked, pat=pat):
                        return conv_frequency_sparse(u, masked, pat, plan, threads=args.threads, stats=stats)
                    expected = None
                stats = ExecStats()
                y = run(stats)
                rec.tiles = str(stats.total_tiles)
                rec.median_s = _fmt(_time(run, args.reps))
                rec.status = "ok"
                if expected is not None:
                    err = float(np.max(np.abs(y - expected)))
                    rec.max_abs_err = _fmt(err)
                    if args.check and dft.relative_error(y, expected) > TOLERANCES[args.precision]:
                        rec.status = "fail"
                        failed = True
                yield rec
    if failed:
        raise _BenchFailed()


class _BenchFailed(Exception):
    pass


def cmd_bench(args, out):
    writer = csv.DictWriter(out, fieldnames=BENCH_HEADER, lineterminator="\n")
    writer.writeheader()
    try:
        with threadpool_limits(limits=1):
            for rec in _bench_rows(args):
                writer.writerow(asdict(rec))
                out.flush()
    except _BenchFailed:
        return EXIT_FAIL
    return EXIT_OK


# --------------------------------------------------------------------------
# plan


def cmd_plan(args, out):
    lengths = parse_lengths(args.n)
    if min(lengths) < 16:
        raise UsageError("plan needs lengths >= 16")
    try:
        params = load_profile(args.profile)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    rows = []
    for n in lengths:
        row = {"n": n}
        for p in ORDERS:
            row[f"cost_p{p}"] = cost(n, p, args.batch, args.hidden, params).seconds
        row["selected"] = select_order(n, args.batch, args.hidden, params)
        row["factors"] = "x".join(map(str, factorize(n, row["selected"])))
        rows.append(row)
    if args.format == "json":
        json.dump({"profile": args.profile, "batch": args.batch, "hidden": args.hidden, "rows": rows}, out, indent=2)
        out.write("\n")
    else:
        writer = csv.DictWriter(out, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    return EXIT_OK


# --------------------------------------------------------------------------
# conv


def _as3d(a, what):
    if a.ndim == 1:
        return a[None, None, :]
    if a.ndim == 2:
        return a[None, :, :]
    if a.ndim == 3:
        return a
    raise UsageError(f"{what} must be 1-, 2- or 3-D, got shape {a.shape}")


def _read(path, what):
    try:
        a = read_tensor(path)
    except (OSError, TensorFormatError) as exc:
        raise UsageError(f"cannot read {what} {path!r}: {exc}") from None
    if np.iscomplexobj(a):
        raise UsageError(f"{what} must be real")
    return a


def cmd_conv(args, out):
    x = _read(args.input, "input")
    u = _as3d(x, "input")
    k = _read(args.kernel, "kernel")
    if k.ndim == 1:
        k = k[None, :]
    if k.ndim != 2:
        raise UsageError(f"kernel must be 1- or 2-D, got shape {k.shape}")
    B, H, L = u.shape
    if k.shape[0] != H:
        raise UsageError(f"kernel has {k.shape[0]} channels, input has {H}")
    if not is_power_of_two(L):
        raise UsageError(f"input length {L} is not a power of two")
    causal = args.mode == "causal"
    n = 2 * L if causal else L
    if causal and k.shape[1] > n // 2:
        raise UsageError(f"kernel exceeds causal budget ({k.shape[1]} > {n // 2})")
    if not causal and k.shape[1] != n:
        raise UsageError(f"circular kernel length {k.shape[1]} != input length {n}")
    pattern = FrequencySparsityPattern.parse(args.pattern) if args.pattern else None
    real = args.real
    if real is None:
        real = pattern is None
    if pattern is not None and real:
        raise UsageError("--pattern needs a complex plan; drop --real")
    v = w = None
    if args.gated:
        v = _as3d(_read(args.gated[0], "gate v"), "gate v")
        w = _as3d(_read(args.gated[1], "gate w"), "gate w")
        if v.shape != u.shape or w.shape != u.shape:
            raise UsageError(f"gates must match the input shape {u.shape}")
    p = args.p if args.p is not None else (4 if pattern is not None else select_order(max(n, 16), B, H))
    if p not in admissible_orders(n, real):
        raise UsageError(f"order {p} is not admissible for n={n}")
    plan = build_plan(n, p, args.precision, real, causal)
    if pattern is not None:
        pattern = _checked_pattern(pattern, plan)
    kf = prepare_kernel(k, plan)

    if pattern is not None:
        masked = apply_frequency_mask(kernel_to_flat(kf, plan), pattern)
        uu = u * w if args.gated else u
        y = conv_frequency_sparse(uu, masked, pattern, plan, threads=args.threads)
        if args.gated:
            y = y * v
    elif args.gated:
        y = conv_gated(u, v, w, kf, plan, threads=args.threads)
    else:
        y = conv_forward(u, kf, plan, threads=args.threads)
    write_tensor(args.out, y.reshape(x.shape))

    if args.check:
        if pattern is not None:
            print("note: --check compares against the unmasked kernel", file=out)
        uu = u.astype(np.float64) * w if args.gated else u.astype(np.float64)
        ref = dft.direct_conv(uu, k, args.mode)
        if args.gated:
            ref = ref * v
        err = dft.relative_error(y, ref)
        print(f"max_rel_err={err:.3e}", file=out)
        if pattern is None and err > TOLERANCES[args.precision]:
            return EXIT_FAIL
    return EXIT_OK


def _checked_pattern(pattern, plan):
    from .sparse import stage_keeps

    try:
        stage_keeps(pattern, plan)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return pattern


# --------------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(prog="monarchconv", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    v = sub.add_parser("verify", help="run randomised oracle suites")
    v.add_argument("--suite", choices=SUITES + ("all",), default="all")
    v.add_argument("--n", default="16..4096", help="lengths, e.g. 256..4096 or 16,64")
    v.add_argument("--seed", type=int, default=0)
    v.set_defaults(func=cmd_verify)

    b = sub.add_parser("bench", help="time convolutions and emit CSV")
    b.add_argument("--n", default="4096")
    b.add_argument("--p", default=None, help="comma-separated orders (default: cost model)")
    b.add_argument("--mode", choices=("circular", "causal"), default="circular")
    b.add_argument("--real", action="store_true", help="real-input packing")
    b.add_argument("--gated", action="store_true")
    b.add_argument("--pattern", default=None, help="'dims=..;keep=..' adds a frequency-sparse row")
    b.add_argument("--batch", type=int, default=1)
    b.add_argument("--hidden", type=int, default=1)
    b.add_argument("--reps", type=int, default=5)
    b.add_argument("--precision", choices=tuple(PRECISIONS), default="real-32")
    b.add_argument("--threads", type=int, default=1)
    b.add_argument("--mem-cap", type=float, default=8.0, help="GiB")
    b.add_argument("--oracle", action="store_true", help="also time the direct convolution")
    b.add_argument("--check", action="store_true", help="fill max_abs_err and fail on tolerance misses")
    b.add_argument("--seed", type=int, default=0)
    b.set_defaults(func=cmd_bench)

    pl = sub.add_parser("plan", help="cost-model sweep")
    pl.add_argument("--n", default="256..4194304")
    pl.add_argument("--profile", default="a100")
    pl.add_argument("--format", choices=("csv", "json"), default="csv")
    pl.add_argument("--batch", type=int, default=1)
    pl.add_argument("--hidden", type=int, default=1)
    pl.set_defaults(func=cmd_plan)

    c = sub.add_parser("conv", help="convolve tensor files")
    c.add_argument("input")
    c.add_argument("kernel")
    c.add_argument("--out", required=True)
    c.add_argument("--mode", choices=("circular", "causal"), default="circular")
    c.add_argument("--p", type=int, choices=ORDERS, default=None)
    c.add_argument("--real", action=argparse.BooleanOptionalAction, default=None)
    c.add_argument("--precision", choices=tuple(PRECISIONS), default="real-64")
    c.add_argument("--gated", nargs=2, metavar=("V", "W"))
    c.add_argument("--pattern", default=None)
    c.add_argument("--check", action="store_true")
    c.add_argument("--threads", type=int, default=1)
    c.set_defaults(func=cmd_conv)
    return parser


def main(argv=None, out=None):
    out = sys.stdout if out is None else out
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    for name in ("batch", "hidden", "threads"):
        if getattr(args, name, 1) < 1:
            print(f"error: --{name} must be >= 1", file=sys.stderr)
            return EXIT_USAGE
    try:
        return args.func(args, out)
    except (UsageError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
