"""Compare the compiled SOMP-NS kernel with the NumPy fallback.

Usage: ``python benchmarks/bench_kernels.py [--repeat N]``

Both kernels run the same greedy loop on the same inputs; the script checks
that they select the same atoms, then reports the median time per run.
"""

import argparse
import timeit

import numpy as np

from sompns import _kernels_py
from sompns._common import rank_tol_for
from sompns.dictionary import generate_gaussian_dictionary

try:
    from sompns import _kernels
except ImportError:  # extension not built
    _kernels = None

CASES = [
    # (m, n, K, iterations, precision)
    (64, 256, 2, 8, 32),
    (64, 256, 2, 8, 64),
    (250, 1000, 2, 10, 32),
    (250, 1000, 2, 30, 32),
    (250, 1000, 8, 30, 64),
]


def _inputs(m, n, K, iters, precision):
    dtype = np.float32 if precision == 32 else np.float64
    d = generate_gaussian_dictionary(m, n, 0)
    rng = np.random.default_rng(1)
    support = rng.choice(n, iters, replace=False)
    y = d.entries[:, support] @ rng.choice([-1.0, 1.0], (iters, K))
    y += 0.5 * rng.standard_normal((m, K))
    return (np.asfortranarray(d.as_dtype(dtype)), y.astype(dtype),
            np.ones(K, dtype=dtype), iters, rank_tol_for(dtype))


def _median_time(fn, args, repeat):
    number = max(1, int(0.05 / max(timeit.timeit(lambda: fn(*args), number=1), 1e-6)))
    times = timeit.repeat(lambda: fn(*args), number=number, repeat=repeat)
    return float(np.median(times)) / number


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    if _kernels is None:
        print("compiled extension not available; only the fallback is timed")
    print(f"{'m':>5} {'n':>5} {'K':>2} {'s':>3} {'bits':>4} "
          f"{'python us':>10} {'compiled us':>12} {'speedup':>8}")
    for case in CASES:
        inputs = _inputs(*case)
        t_py = _median_time(_kernels_py.somp_ns_kernel, inputs, args.repeat)
        if _kernels is not None:
            sel_py = _kernels_py.somp_ns_kernel(*inputs)[1]
            sel_c = _kernels.somp_ns_kernel(*inputs)[1]
            if not np.array_equal(sel_py, sel_c):
                raise SystemExit(f"kernels disagree on {case}: {sel_py} vs {sel_c}")
            t_c = _median_time(_kernels.somp_ns_kernel, inputs, args.repeat)
            print(f"{case[0]:>5} {case[1]:>5} {case[2]:>2} {case[3]:>3} {case[4]:>4} "
                  f"{t_py * 1e6:>10.1f} {t_c * 1e6:>12.1f} {t_py / t_c:>7.1f}x")
        else:
            print(f"{case[0]:>5} {case[1]:>5} {case[2]:>2} {case[3]:>3} {case[4]:>4} "
                  f"{t_py * 1e6:>10.1f} {'-':>12} {'-':>8}")


if __name__ == "__main__":
    main()
