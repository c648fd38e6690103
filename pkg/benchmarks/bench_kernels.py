"""Compare the compiled and numpy particle kernels.

    python benchmarks/bench_kernels.py --particles 100000 --steps 200 --threads 1 2 4

Reports nanoseconds per particle-step for the Euler-Maruyama loop and per
sample for increment binning, and checks that both backends agree.
"""
import argparse
import time

import numpy as np

from nelsonlab import Harmonic, SimUnits, make_grid, solve_eigenstates, velocity_fields
from nelsonlab import _kernels
from nelsonlab.nelson import drift_row, sample_density


def _best(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--particles", type=int, default=100_000)
    ap.add_argument("--steps", type=int, default=200)
    ap.add_argument("--grid", type=int, default=256)
    ap.add_argument("--threads", type=int, nargs="+", default=[1])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    units = SimUnits()
    grid = make_grid(-8, 8, args.grid)
    psi = solve_eigenstates(Harmonic(1.0), grid, units, 1)[0][1]
    vel = velocity_fields(psi, units)
    table = np.ascontiguousarray(drift_row(vel, psi.density())[None, :])
    x0 = sample_density(psi.density(), grid, args.particles, seed=1).positions
    key = _kernels.seed_key(7)
    sigma, dt = np.sqrt(2 * units.d0), 0.01
    work = args.particles * args.steps

    names = ["python"] + (["cython"] if _kernels.BACKEND == "cython" else [])
    results, timings = {}, {}
    print(f"{args.particles} particles x {args.steps} steps on {args.grid} points")
    for name in names:
        mod = _kernels.backend(name)
        threads = [1] if name == "python" else args.threads
        for nt in threads:
            t, (pos, exited) = _best(lambda: mod.em_integrate(x0, table, grid.x_min, grid.dx, sigma, dt, key,
                                                              args.steps, 1, 0, nt), args.repeat)
            results[(name, nt)] = pos
            timings[(name, nt)] = t
            print(f"em_integrate   {name:7s} threads={nt}: {t:7.3f} s  {1e9 * t / work:6.1f} ns/particle-step")
        tb, _ = _best(lambda: mod.bin_increments(results[(name, threads[0])], 1, True, grid.x_min, grid.dx,
                                                 grid.n), args.repeat)
        print(f"bin_increments {name:7s}          : {tb:7.3f} s  {1e9 * tb / work:6.1f} ns/sample")

    ref = results[("python", 1)]
    for key_, pos in results.items():
        err = float(np.max(np.abs(pos - ref)))
        print(f"max |x - x_python| for {key_[0]} threads={key_[1]}: {err:.2e}")
    for key_, t in timings.items():
        if key_[0] == "cython":
            print(f"speedup over numpy, threads={key_[1]}: {timings[('python', 1)] / t:.2f}x")


if __name__ == "__main__":
    main()
