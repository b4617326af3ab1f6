#!/usr/bin/env python3
"""Side-by-side timing of the two kernel lanes: pure numpy vs numba @njit.

Imports both lane modules directly, so one process can compare them
regardless of DIMSCORE_BACKEND. Each op runs on transformer-shaped
inputs; the reported time is the best of --repeats runs, and the
`max|diff|` column is the worst elementwise disagreement between lanes.
"""

import argparse
import time

import numpy as np

from dimscore.kernels import numpy_ops

try:
    from dimscore.kernels import numba_ops
except ImportError:
    raise SystemExit("numba lane not importable; install numba to benchmark")


def best_of(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def as_arrays(result):
    if isinstance(result, tuple):
        return result
    return (result,)


def cases(rng):
    # shapes follow the desk-scale models: seq ~104, d_model 32..64,
    # vocab a few thousand, 9 scoring bands
    att = rng.standard_normal((8192, 104))
    att_g = rng.standard_normal((8192, 104))
    logits = rng.standard_normal((8192, 9))
    logits_g = rng.standard_normal(8192)
    ln_x = rng.standard_normal((4096, 64))
    ln_g = rng.standard_normal((4096, 64))
    gain = rng.standard_normal(64)
    bias = rng.standard_normal(64)
    flat = rng.standard_normal(4096 * 256)
    flat_g = rng.standard_normal(4096 * 256)
    idx = rng.integers(0, 8192, size=16384)
    rows = rng.standard_normal((16384, 64))

    sm = numpy_ops.softmax_rows(att)
    lse = numpy_ops.logsumexp_rows(logits)
    _, mu, rstd = numpy_ops.layer_norm_fwd(ln_x, gain, bias, 1e-5)

    yield "softmax_rows", lambda m: m.softmax_rows(att)
    yield "softmax_rows_grad", lambda m: m.softmax_rows_grad(sm, att_g)
    yield "logsumexp_rows", lambda m: m.logsumexp_rows(logits)
    yield "logsumexp_rows_grad", lambda m: m.logsumexp_rows_grad(logits, lse, logits_g)
    yield "layer_norm_fwd", lambda m: m.layer_norm_fwd(ln_x, gain, bias, 1e-5)
    yield "layer_norm_bwd", lambda m: m.layer_norm_bwd(ln_x, ln_g, mu, rstd, gain)
    yield "gelu_fwd", lambda m: m.gelu_fwd(flat)
    yield "gelu_bwd", lambda m: m.gelu_bwd(flat, flat_g)

    def scatter(m):
        out = np.zeros((8192, 64))
        m.add_rows_at(out, idx, rows)
        return out

    yield "add_rows_at", scatter


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=30)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    t0 = time.perf_counter()
    numba_ops.warmup()
    print(f"numba JIT warmup: {time.perf_counter() - t0:.1f}s "
          f"(cached after first run)\n")

    rng = np.random.default_rng(args.seed)
    print(f"{'op':<20}  {'numpy (ms)':>10}  {'numba (ms)':>10}  "
          f"{'speedup':>8}  {'max|diff|':>9}")
    print("-" * 66)
    for name, call in cases(rng):
        t_np, out_np = best_of(lambda: call(numpy_ops), args.repeats)
        t_nb, out_nb = best_of(lambda: call(numba_ops), args.repeats)
        diff = max(np.abs(a - b).max()
                   for a, b in zip(as_arrays(out_np), as_arrays(out_nb)))
        print(f"{name:<20}  {t_np * 1e3:>10.3f}  {t_nb * 1e3:>10.3f}  "
              f"{t_np / t_nb:>7.1f}x  {diff:>9.1e}")


if __name__ == "__main__":
    main()
