"""Benchmark the JIT kernels against the pure-numpy fallback.

Runs the coupled-pair integrator and the reflected-path window kernel under
both backends on identical inputs, checks the outputs agree bit for bit,
and prints a timing table.

    python3 benchmarks/backend_bench.py [--reps 20000] [--rbm-reps 2000]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from prelimit import mm1
from prelimit.backends import get_kernels
from prelimit.coupling import _fill_pools
from prelimit.grids import difference_array, sample_dlip_higher


def time_call(fn, *args, repeat: int = 3) -> float:
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def bench_pair(kernels, reps: int):
    p = mm1.Mm1Params(1.0, 2.0, 1.0)
    spec = mm1.stein_solve_spec(p, 60)
    h = sample_dlip_higher(spec, 3, seed=1)
    dh = np.ascontiguousarray(difference_array(h, (3,)))
    pe, pu = _fill_pools(123, 0, np.arange(reps), 256)

    outs = lambda: (
        np.zeros(reps),
        np.zeros(reps),
        np.zeros(reps, dtype=np.int64),
        np.zeros(reps, dtype=np.int64),
    )

    def run(mod):
        integral, tau, steps, status = outs()
        mod.pair_integral_batch(1.0 / 3.0, 3.0, 5, dh, pe, pu, integral, tau, steps, status)
        return integral, tau, steps, status

    results = {name: run(mod) for name, mod in kernels.items()}
    times = {name: time_call(lambda m=mod: run(m)) for name, mod in kernels.items()}
    names = list(kernels)
    agree = all(
        np.array_equal(results[names[0]][i], results[n][i])
        for n in names[1:]
        for i in range(4)
    )
    return times, agree


def bench_rbm(kernels, reps: int):
    eps, x0 = 0.25, 1.0
    dt = eps**2 / 100.0
    nsteps = 20000
    rng = np.random.default_rng(7)
    dw = rng.standard_normal((reps, nsteps))
    sigma = np.sqrt(3.0)

    def run(mod):
        observed = np.zeros(reps, dtype=bool)
        ok = np.zeros(reps, dtype=bool)
        oks = np.zeros(reps, dtype=bool)
        clean = np.zeros(reps, dtype=bool)
        s1 = np.zeros(reps, dtype=np.int64)
        s2 = np.zeros(reps, dtype=np.int64)
        r0g1 = np.zeros(reps)
        r0g2 = np.zeros(reps)
        ident = np.zeros(reps)
        mod.rbm_window_batch(
            eps, x0, -1.0, sigma * np.sqrt(dt), dt,
            0.75 * eps, 0.25 * eps, -0.25 * eps + 0.13, -0.25 * eps,
            dw, observed, ok, oks, clean, s1, s2, r0g1, r0g2, ident,
        )
        return observed, ok, s1, s2, r0g1, r0g2, ident

    results = {name: run(mod) for name, mod in kernels.items()}
    times = {name: time_call(lambda m=mod: run(m)) for name, mod in kernels.items()}
    names = list(kernels)
    agree = all(
        np.array_equal(results[names[0]][i], results[n][i])
        for n in names[1:]
        for i in range(7)
    )
    return times, agree


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--reps", type=int, default=20000)
    ap.add_argument("--rbm-reps", type=int, default=1000)
    args = ap.parse_args()

    kernels = {"numpy": get_kernels("numpy")}
    try:
        kernels["numba"] = get_kernels("numba")
    except ImportError:
        print("numba unavailable; benchmarking the fallback only")

    print(f"pair coupling, {args.reps} replications x 256-event pools")
    times, agree = bench_pair(kernels, args.reps)
    for name, t in times.items():
        print(f"  {name:>6}: {t * 1e3:9.2f} ms")
    if len(times) == 2:
        print(f"  speedup: {times['numpy'] / times['numba']:.1f}x   bit-identical: {agree}")

    print(f"reflected paths, {args.rbm_reps} replications x 20000 steps")
    times, agree = bench_rbm(kernels, args.rbm_reps)
    for name, t in times.items():
        print(f"  {name:>6}: {t * 1e3:9.2f} ms")
    if len(times) == 2:
        print(f"  speedup: {times['numpy'] / times['numba']:.1f}x   bit-identical: {agree}")


if __name__ == "__main__":
    main()
