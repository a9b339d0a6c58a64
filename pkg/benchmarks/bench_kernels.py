"""Benchmark the compiled estimating-function kernel against the numpy one.

Times raw kernel evaluations and full Gehan solves on synthetic cohorts of
increasing size, and checks that both backends agree to near machine
precision.  Run as a script:

    python3 benchmarks/bench_kernels.py [--sizes 500,2000,10000] [--repeats 20]
"""
import argparse
import time

import numpy as np

from rankaft import Cohort, SolveOptions, WeightPlan, assign_weights, solve_gehan
from rankaft.backend import available_kernels, get_kernel, use_kernel


def make_cohort(n, d, seed):
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n, d))
    theta = np.linspace(0.5, -0.5, d)
    t = z @ theta + rng.logistic(size=n)
    c = rng.uniform(-2.0, 4.0, n)
    y = np.minimum(t, c)
    delta = (t <= c).astype(int)
    return Cohort(y=y, delta=delta, z=z)


def kernel_args(cohort, theta):
    eps = cohort.y - cohort.z @ theta
    order = np.argsort(eps, kind="stable")
    eps_s = eps[order]
    z_s = cohort.z[order]
    w_s = np.ones(cohort.n)
    ev = cohort.delta[order] == 1
    return eps_s, z_s, w_s, eps_s[ev], z_s[ev], np.ones(int(ev.sum()))


def time_call(fn, repeats):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--sizes", default="500,2000,10000")
    parser.add_argument("--repeats", type=int, default=20)
    parser.add_argument("--dim", type=int, default=2)
    args = parser.parse_args()
    sizes = [int(tok) for tok in args.sizes.split(",")]

    kernels = available_kernels()
    print("available kernels:", ", ".join(kernels))
    if "compiled" not in kernels:
        print("compiled kernel not built; benchmarking python only")

    theta = np.linspace(0.5, -0.5, args.dim)
    print(f"{'n':>7} {'kernel':>9} {'estfun (us)':>12} {'solve (ms)':>11}")
    for n in sizes:
        cohort = make_cohort(n, args.dim, seed=n)
        ka = kernel_args(cohort, theta)
        omega, w = assign_weights(cohort, WeightPlan("full_data"))
        results = {}
        for name in kernels:
            kern = get_kernel(name)
            results[name] = kern.estfun_core(*ka, True, 1e-12, True)
            t_eval = time_call(
                lambda: kern.estfun_core(*ka, True, 1e-12, True),
                args.repeats)
            previous = use_kernel(name)
            try:
                t_solve = time_call(
                    lambda: solve_gehan(cohort, omega, w, SolveOptions()),
                    max(3, args.repeats // 4))
            finally:
                use_kernel(previous)
            print(f"{n:>7} {name:>9} {t_eval * 1e6:>12.1f} "
                  f"{t_solve * 1e3:>11.2f}")
        if len(results) == 2:
            pa, la = results["python"][:2]
            pb, lb = results["compiled"][:2]
            dv = np.max(np.abs(pa - pb) / (1.0 + np.abs(pa)))
            dl = abs(la - lb) / (1.0 + abs(la))
            assert dv < 1e-12 and dl < 1e-12, (dv, dl)
            print(f"{'':>7} agreement: value {dv:.2e}, loss {dl:.2e}")


if __name__ == "__main__":
    main()
