"""Compare the numba and numpy kernel backends.

Times the raw kernels and a full Jacobian assembly (meancurv, SIPG) on a
range of mesh sizes.  Run with ``python3 benchmarks/bench_kernels.py``.
"""
import argparse
import time

import numpy as np

from quasidg import _kernels
from quasidg.mesh import build_structured
from quasidg.scheme import build_scheme


def best_of(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", default="8,16,32")
    ap.add_argument("--degree", type=int, default=2)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    if not _kernels.HAVE_NUMBA:
        print("numba is not installed; nothing to compare")
        return
    print(f"{'n':>4} {'kernel':>12} {'numpy [ms]':>11} {'numba [ms]':>11} {'speedup':>8}")
    for n in (int(s) for s in args.sizes.split(",")):
        scheme = build_scheme(build_structured(n), "meancurv", "sipg", args.degree)
        sp_ = scheme.space
        rng = np.random.default_rng(0)
        w = rng.random((sp_.n_elements, 2, 2, len(sp_.quad.weights)))
        u = rng.standard_normal(scheme.ndofs)
        cases = {
            "mass_blocks": lambda: _kernels.mass_blocks(sp_.phi, w),
            "moments": lambda: _kernels.moments(sp_.phi, w),
            "jacobian": lambda: scheme.jacobian(u),
        }
        for name, fn in cases.items():
            times = {}
            for b in ("numpy", "numba"):
                prev = _kernels.set_backend(b)
                fn()  # warm-up (JIT compile)
                times[b] = best_of(fn, args.repeat)
                _kernels.set_backend(prev)
            print(f"{n:>4} {name:>12} {1e3 * times['numpy']:>11.3f} "
                  f"{1e3 * times['numba']:>11.3f} {times['numpy'] / times['numba']:>8.2f}")


if __name__ == "__main__":
    main()
