"""Compare the compiled and pure-Python restricted fold kernels.

Usage: python benchmarks/bench_fold.py [--instances N] [--labels L] [--items M] [--repeat R]
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from belief import _fold_py

try:
    from belief import _fold as _fold_c
except ImportError:
    _fold_c = None


def make_instances(rng: np.random.Generator, n: int, labels: int, items: int):
    return [
        (
            [int(h) for h in rng.integers(0, labels, size=items)],
            [float(m) for m in rng.uniform(0.05, 0.95, size=items)],
            labels,
        )
        for _ in range(n)
    ]


def run_all(fold, instances) -> None:
    for hyps, masses, labels in instances:
        fold(hyps, masses, labels)


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--instances", type=int, default=2000)
    parser.add_argument("--labels", type=int, default=4)
    parser.add_argument("--items", type=int, default=8)
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    instances = make_instances(np.random.default_rng(args.seed), args.instances, args.labels, args.items)
    kernels = {"python": _fold_py.restricted_fold}
    if _fold_c is not None:
        kernels["cython"] = _fold_c.restricted_fold
    else:
        print("compiled kernel unavailable; timing the Python fold only")

    best = {}
    for name, fold in kernels.items():
        times = timeit.repeat(lambda: run_all(fold, instances), number=1, repeat=args.repeat)
        best[name] = min(times)
        per_call = best[name] / args.instances * 1e6
        print(f"{name:>7}: {best[name] * 1e3:8.2f} ms total, {per_call:6.2f} us per fold")

    if "cython" in best:
        worst = 0.0
        for hyps, masses, labels in instances:
            a = _fold_py.restricted_fold(hyps, masses, labels)
            b = _fold_c.restricted_fold(hyps, masses, labels)
            worst = max(worst, max(abs(x - y) for x, y in zip([*a[0], a[1], a[2]], [*b[0], b[1], b[2]])))
        print(f"speedup: {best['python'] / best['cython']:.1f}x, max kernel disagreement {worst:.1e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
