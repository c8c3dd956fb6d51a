"""Benchmark: compiled kernel vs pure-Python reference.

Times the per-replication estimator chain (development factors, variance
estimators, MSEP statistics for three accident years) on a batch of
simulated squares, and verifies the two backends agree bit for bit.

Usage: python benchmarks/bench_kernels.py [reps] [alpha]
"""

import sys
import time

import numpy as np

from clmsep import _kernels as K
from clmsep._kernels import reference
from clmsep.harness import _year_inputs
from clmsep.presets import sec5_spec
from clmsep.simulate import simulate_batch

try:
    from clmsep._kernels import _fast
except ImportError:
    _fast = None


def run_backend(impl, cum, spec, inputs):
    f_hat, sigma2, colsum, ok = impl.chain_stats(cum, K.TAIL_RATIO, 0.0)
    outs = []
    for yi in inputs:
        out, _ = impl.year_stats(cum, f_hat, sigma2, colsum, ok, yi.year,
                                 spec.alpha, yi.esum, yi.esum2, yi.ec, yi.g,
                                 yi.pgt_term)
        outs.append(out)
    return f_hat, sigma2, np.stack(outs)


def main():
    reps = int(sys.argv[1]) if len(sys.argv) > 1 else 20_000
    alpha = float(sys.argv[2]) if len(sys.argv) > 2 else 10_000.0
    spec = sec5_spec(alpha)
    years = (3, 5, 8)
    inputs = [_year_inputs(spec, y) for y in years]

    print(f"simulating {reps} squares (T={spec.T}, alpha={alpha:g}) ...")
    t0 = time.perf_counter()
    cum = simulate_batch(spec, 1, 0, reps)
    print(f"  simulation: {time.perf_counter() - t0:.2f} s")

    backends = [("python", reference)]
    if _fast is not None:
        backends.append(("compiled", _fast))
    else:
        print("compiled kernel not built; timing the reference only")

    results = {}
    for name, impl in backends:
        best = float("inf")
        for _ in range(3):
            t0 = time.perf_counter()
            results[name] = run_backend(impl, cum, spec, inputs)
            best = min(best, time.perf_counter() - t0)
        print(f"  {name:8s} kernel: {best:.3f} s  "
              f"({reps / best:,.0f} replications/s)")
        results[f"{name}_time"] = best

    if _fast is not None:
        for a, b in zip(results["python"], results["compiled"]):
            assert np.array_equal(a, b, equal_nan=True), "backends disagree"
        print(f"  backends bit-identical; speedup "
              f"{results['python_time'] / results['compiled_time']:.1f}x")


if __name__ == "__main__":
    main()
