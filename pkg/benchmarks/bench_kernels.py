"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 5]

Each kernel runs on inputs shaped like one training step of the desk
classification config. Prints best-of-N milliseconds and the speedup.
"""

import argparse
import time

import numpy as np

from eventcloud import _fallback, kernels


def best_ms(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append((time.perf_counter() - t0) * 1e3)
    return min(times)


def cases(rng):
    pts = rng.random((1024, 3))
    B, L, C, S = 32, 256, 32, 16
    u = rng.normal(size=(B, L, C)).astype(np.float32)
    delta = rng.uniform(0.001, 0.1, size=(B, L, C)).astype(np.float32)
    A = -np.tile(np.arange(1, S + 1, dtype=np.float32), (C, 1))
    Bm = rng.normal(size=(B, L, S)).astype(np.float32)
    Cm = rng.normal(size=(B, L, S)).astype(np.float32)
    D = np.ones(C, np.float32)
    x = delta[..., None] * A
    em1 = np.expm1(x)
    dy = rng.normal(size=u.shape).astype(np.float32)
    idx = rng.integers(0, 32 * 512, size=32 * 256 * 24)
    g = rng.normal(size=(len(idx), 16)).astype(np.float32)
    n = 20_000
    t = np.sort(rng.integers(0, 500_000, n))
    ex, ey = rng.integers(0, 128, n), rng.integers(0, 128, n)
    xb = rng.normal(size=(32 * 256 * 24, 16)).astype(np.float32)
    gamma, beta = np.ones(16, np.float32), np.zeros(16, np.float32)

    def make(mod):
        y, hs = mod.scan_forward(u, delta, Bm, Cm, D, x, em1)
        _, xhat, _, _, inv = mod.bn_train_forward(xb, gamma, beta, 1e-5)
        return {
            "fps 1024->512": lambda: mod.fps(pts, 512),
            "scan forward": lambda: mod.scan_forward(u, delta, Bm, Cm, D, x, em1),
            "scan backward": lambda: mod.scan_backward(dy, u, delta, A, Bm, Cm, D, x, em1, hs),
            "scatter-add rows": lambda: mod.scatter_add_rows(np.zeros((32 * 512, 16), np.float32), idx, g),
            "denoise 20k events": lambda: mod.denoise_mask(t, ex, ey, 2, 5000, 2),
            "batch norm forward": lambda: mod.bn_train_forward(xb, gamma, beta, 1e-5),
            "batch norm backward": lambda: mod.bn_train_backward(xb, xhat, gamma, inv, True),
        }
    return make


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if kernels.compiled is None:
        raise SystemExit("compiled kernels are not built; run `pip install -e .` first")
    make = cases(np.random.default_rng(0))
    fast, slow = make(kernels.compiled), make(_fallback)
    print(f"{'kernel':<22}{'compiled ms':>13}{'numpy ms':>11}{'speedup':>9}")
    for name in fast:
        a = best_ms(fast[name], args.repeat)
        b = best_ms(slow[name], args.repeat)
        print(f"{name:<22}{a:>13.2f}{b:>11.2f}{b / a:>8.1f}x")


if __name__ == "__main__":
    main()
