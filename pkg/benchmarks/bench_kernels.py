"""Time the numba kernels against the pure-numpy fallbacks.

    python benchmarks/bench_kernels.py [--repeat 5]

Reports the best wall time per call for each backend and the speedup.
The first numba call (JIT compile) is excluded.
"""
import argparse
import timeit

import numpy as np

from modeswitch import env, kernels


def cases(rng):
    x = rng.standard_normal((64, 334, 2))
    d = rng.standard_normal((64, 330, 2 * 5))
    z = rng.standard_normal((128, 4 * 128))
    c = rng.standard_normal((128, 128))
    gates = [rng.random((128, 128)) for _ in range(4)]
    tc = np.tanh(c)
    cfg = env.EpisodeConfig(Z=20)
    n = 20_000
    tapes = env.make_tapes(rng, n, cfg.Z)
    grid = np.arange(cfg.Z + 1) / cfg.Z
    eps_c = cfg.eps_c(grid)
    launch = np.clip(0.6 + grid, 0, 1)
    labels = rng.integers(0, 4, n)
    th = np.full(n, 0.7)
    return {
        "im2col (64x334x2, w=5)": lambda m: m.im2col(x, 5),
        "col2im (64x330x10)": lambda m: m.col2im(d, 5, 2),
        "lstm_cell_forward (128x128)": lambda m: m.lstm_cell_forward(z, c),
        "lstm_cell_backward (128x128)": lambda m: m.lstm_cell_backward(c, c, *gates, c, tc),
        f"simulate_threshold_batch ({n} episodes)":
            lambda m: m.simulate_threshold_batch(th, labels, tapes, eps_c, launch, 0.9, 0.05, 4),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    impls = kernels.implementations()
    if "numba" not in impls:
        print("numba is not installed; only the numpy timings are shown")
    print(f"{'kernel':42s} " + " ".join(f"{k:>12s}" for k in impls) + "     speedup")
    for name, fn in cases(np.random.default_rng(0)).items():
        times = {}
        for k, m in impls.items():
            fn(m)  # warm-up, compiles on the numba side
            times[k] = min(timeit.repeat(lambda: fn(m), number=1, repeat=args.repeat))
        cols = " ".join(f"{times[k] * 1e3:10.2f}ms" for k in impls)
        speed = f"{times['numpy'] / times['numba']:8.1f}x" if "numba" in times else ""
        print(f"{name:42s} {cols} {speed}")


if __name__ == "__main__":
    main()
