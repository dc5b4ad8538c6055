"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py --sizes 250 1000 4000 --repeat 3
"""

from __future__ import annotations

import argparse
import sys
import timeit

import numpy as np

from sgor import _kernels
from sgor.core import RigidTransform


def make_inputs(n: int, seed: int):
    rng = np.random.default_rng(seed)
    p = rng.uniform(-30, 30, size=(n, 3))
    q = p + rng.normal(0, 0.3, size=(n, 3))
    outlier = rng.uniform(size=n) < 0.7
    q[outlier] = rng.uniform(-30, 30, size=(int(outlier.sum()), 3))
    rots = np.stack([RigidTransform.identity().rotation] * 100)
    trans = rng.normal(0, 0.5, size=(100, 3))
    return p, q, rots, trans


CASES = {
    "length_diff": lambda p, q, r, t: _kernels.length_diff(p[:40], q[:40], p, q),
    "affinity_csr": lambda p, q, r, t: _kernels.affinity_csr(p, q, 0.6),
    "pair_weights": lambda p, q, r, t: _kernels.pair_weights(p, q, 0.6),
    "truncated_distance_sums": lambda p, q, r, t: _kernels.truncated_distance_sums(r, t, p, q, 0.6),
}


def bench(sizes, repeat: int, seed: int) -> list[tuple]:
    rows = []
    backends = _kernels.available_backends()
    previous = _kernels.BACKEND
    try:
        for n in sizes:
            inputs = make_inputs(n, seed)
            for name, fn in CASES.items():
                times = {}
                for backend in backends:
                    _kernels.use_backend(backend)
                    fn(*inputs)  # warm-up
                    times[backend] = min(timeit.repeat(lambda: fn(*inputs), number=1, repeat=repeat))
                rows.append((name, n, times))
    finally:
        _kernels.use_backend(previous)
    return rows


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[250, 1000, 4000])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    if "compiled" not in _kernels.available_backends():
        print("compiled kernels not built; timing the numpy fallback only", file=sys.stderr)
    print(f"{'kernel':<26}{'n':>7}{'compiled ms':>14}{'python ms':>12}{'speedup':>10}")
    for name, n, times in bench(args.sizes, args.repeat, args.seed):
        py = times["python"] * 1e3
        if "compiled" in times:
            c = times["compiled"] * 1e3
            print(f"{name:<26}{n:>7}{c:>14.2f}{py:>12.2f}{py / c:>9.1f}x")
        else:
            print(f"{name:<26}{n:>7}{'-':>14}{py:>12.2f}{'-':>10}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
