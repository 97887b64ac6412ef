"""Time the compiled kernels against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--repeat N]

Prints one row per kernel with the best-of-N time for each backend and the
speed-up. Outputs of the two backends are checked for equality first.
"""

import argparse
import timeit

import numpy as np

from casesim import kernels
from casesim.kernels import pure


def cases():
    rng = np.random.default_rng(0)
    z = rng.uniform(-1, 1, size=(40, 40))
    lo, hi = float(z.min()), float(z.max())
    eps = lo + 0.8 * (hi - lo)
    img = rng.uniform(0, 255, size=(57, 57))
    a = rng.integers(0, 50, size=400).astype(np.int64)
    b = rng.integers(0, 50, size=400).astype(np.int64)
    labels = rng.integers(0, 20, size=600).astype(np.int64)
    return {
        "project_grey 40x40": lambda k: k.project_grey(z, lo, eps, hi),
        "bilinear 57x57->32x32": lambda k: k.bilinear_resize(img, 32, 32),
        "lcs 400x400": lambda k: k.lcs_length(a, b, -1),
        "reservoir N=600 (179700 pairs)": lambda k: k.reservoir_cluster_pairs(labels, 2000, 2000, 1),
        "splitmix 10000 draws": lambda k: [k.SplitMix64(3).below(1000) for _ in range(10000)],
    }


def same(x, y):
    if isinstance(x, tuple):
        return all(same(p, q) for p, q in zip(x, y))
    if isinstance(x, list) and x and isinstance(x[0], (tuple, np.ndarray)):
        return all(same(p, q) for p, q in zip(x, y))
    return np.array_equal(np.asarray(x), np.asarray(y))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if kernels.compiled is None:
        raise SystemExit("compiled kernels are not built; run `pip install -e . --no-build-isolation`")
    comp = kernels.compiled
    print(f"{'kernel':<32}{'pure (s)':>12}{'compiled (s)':>14}{'speed-up':>10}")
    for name, fn in cases().items():
        if not same(fn(pure), fn(comp)):
            raise SystemExit(f"{name}: backends disagree")
        t_pure = min(timeit.repeat(lambda: fn(pure), number=1, repeat=args.repeat))
        t_comp = min(timeit.repeat(lambda: fn(comp), number=1, repeat=args.repeat))
        print(f"{name:<32}{t_pure:>12.4f}{t_comp:>14.5f}{t_pure / t_comp:>9.0f}x")


if __name__ == "__main__":
    main()
