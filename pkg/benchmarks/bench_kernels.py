"""Compare the compiled and NumPy kernels on the filter, likelihood and gradient.

Usage: python benchmarks/bench_kernels.py [--T 2000] [--m 3] [--n 3] [--repeat 5]
"""

import argparse
import timeit

import numpy as np

from matgarch._backend import compiled_kernels, python_kernels
from matgarch.core import Theta
from matgarch.simulate import simulate


def bench_theta(m, n):
    Im, In = np.eye(m), np.eye(n)
    return Theta.build(0.4, 0.3, 0.6, Im, 0.3 * Im, 0.6 * Im, In, 0.3 * In, 0.6 * In)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--T", type=int, default=2000)
    ap.add_argument("--m", type=int, default=3)
    ap.add_argument("--n", type=int, default=3)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    theta = bench_theta(args.m, args.n)
    X = np.ascontiguousarray(simulate(theta, args.T, seed=0).data)
    kargs = theta.kernel_args()
    backends = {"python": python_kernels}
    if compiled_kernels is not None:
        backends["compiled"] = compiled_kernels
    else:
        print("compiled kernels not built; timing the NumPy fallback only")

    print(f"T={args.T}, m={args.m}, n={args.n}, best of {args.repeat}")
    print(f"{'operation':<16}" + "".join(f"{b:>14}" for b in backends) + f"{'speedup':>10}")
    for op in ("filter_states", "loglik_terms", "loglik_grad"):
        times = {}
        for name, mod in backends.items():
            fn = getattr(mod, op)
            number = 1 if name == "python" else 20
            t = min(timeit.repeat(lambda: fn(X, *kargs), number=number, repeat=args.repeat))
            times[name] = t / number
        speed = times["python"] / times["compiled"] if "compiled" in times else float("nan")
        print(f"{op:<16}" + "".join(f"{times[b] * 1e3:>12.2f}ms" for b in backends)
              + f"{speed:>9.1f}x")


if __name__ == "__main__":
    main()
