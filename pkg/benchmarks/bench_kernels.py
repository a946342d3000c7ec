"""Compare the compiled and numpy coordinate kernels.

Usage::

    python benchmarks/bench_kernels.py [--repeat 50] [--sizes 10,1000,100000]

Prints per-call time for each backend and size, then the mean time of a
full solver iteration on a GMV instance under each backend. Outputs of both
backends are also checked for bitwise equality.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from vqpd import kernels
from vqpd.instances import gen_gmv_l1
from vqpd.solvers import SolverConfig, run


def _inputs(n, seed=0):
    rng = np.random.default_rng(seed)
    return (
        rng.uniform(-1, 1, n), rng.normal(size=n), rng.uniform(0, 0.5, n),
        np.full(n, -1.0), np.full(n, 1.0),
    )


def time_kernel(backend, n, repeat):
    x, d, e, lo, hi = _inputs(n)
    out = np.empty(n)
    with kernels.use_backend(backend):
        kernels.soft_threshold_box(x, d, e, lo, hi, 2.0, out=out)
        t0 = time.perf_counter_ns()
        for _ in range(repeat):
            kernels.soft_threshold_box(x, d, e, lo, hi, 2.0, out=out)
        return (time.perf_counter_ns() - t0) / repeat, out.copy()


def time_solver(backend, n, iters):
    spec = gen_gmv_l1(n, 0, b=2.0)
    with kernels.use_backend(backend):
        r = run(spec, "new-constant", SolverConfig(max_iters=iters, stride=iters))
    return r.mean_iter_ns


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--repeat", type=int, default=50)
    ap.add_argument("--sizes", default="10,1000,100000,1000000")
    ap.add_argument("--solver-n", type=int, default=500)
    ap.add_argument("--solver-iters", type=int, default=200)
    a = ap.parse_args(argv)
    backends = kernels.available_backends()
    print(f"backends: {', '.join(backends)}")
    print(f"{'n':>9} " + " ".join(f"{b + ' us':>12}" for b in backends) + "   speedup  identical")
    for n in (int(s) for s in a.sizes.split(",")):
        res = {b: time_kernel(b, n, a.repeat) for b in backends}
        times = " ".join(f"{res[b][0] / 1e3:>12.2f}" for b in backends)
        if "cython" in res:
            speed = res["python"][0] / res["cython"][0]
            same = np.array_equal(res["python"][1].view(np.uint64), res["cython"][1].view(np.uint64))
            print(f"{n:>9} {times}   {speed:7.2f}  {same}")
        else:
            print(f"{n:>9} {times}")
    print(f"\nfull iteration, gmv-l1 n={a.solver_n}:")
    for b in backends:
        print(f"  {b:>7}: {time_solver(b, a.solver_n, a.solver_iters) / 1e3:.2f} us/iter")


if __name__ == "__main__":
    main()
