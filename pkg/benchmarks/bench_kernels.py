"""Time each kernel under the numba and numpy backends.

    python3 benchmarks/bench_kernels.py [--repeat 5]

The first numba call compiles (or loads the on-disk cache); it is run once
before timing so the numbers reflect steady-state cost.
"""

import argparse
import time

import numpy as np

from binfam import _accel, kernels
from binfam.core import make_rng


def cases(rng):
    d = 12
    B = np.tril(rng.normal(size=(d, d)))
    U = rng.random((200_000, d))
    Y = (rng.random((200_000, d)) < 0.5).astype(np.uint8)
    M = rng.normal(size=(d, d))
    A = M @ M.T / d
    y1, y2 = rng.normal(size=(2, 200_000))
    r = rng.uniform(-0.99, 0.99, 200_000)
    masks = rng.integers(1, 1 << 40, size=16)
    lam = rng.uniform(0.05, 1.0, 40)
    probs = rng.dirichlet(np.ones(1 << 16))
    return {
        "logistic_chain_sample": lambda be: kernels.logistic_chain_sample(B, U, backend=be),
        "logistic_chain_logpdf": lambda be: kernels.logistic_chain_logpdf(B, Y, backend=be),
        "linquad_chain (sample)": lambda be: kernels.linquad_chain(A, 1.0, U=U, backend=be),
        "bvn_cdf": lambda be: kernels.bvn_cdf(y1, y2, r, backend=be),
        "exclusion_sum (16 sets)": lambda be: kernels.exclusion_sum(masks, lam, backend=be),
        "alias_build (65536)": lambda be: kernels.alias_build(probs, backend=be),
    }


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    if not _accel.HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")

    print(f"{'kernel':<26}{'numba (ms)':>12}{'numpy (ms)':>12}{'ratio':>8}")
    for name, fn in cases(make_rng(args.seed)).items():
        fn("numba")  # compile / load cache
        t_nb = best_of(lambda: fn("numba"), args.repeat)
        t_np = best_of(lambda: fn("numpy"), args.repeat)
        print(f"{name:<26}{1e3 * t_nb:>12.2f}{1e3 * t_np:>12.2f}{t_np / t_nb:>8.1f}")


if __name__ == "__main__":
    main()
