"""Compiled (numba) vs vectorized (numpy) kernels, plus an end-to-end solve.

Run:  python3 benchmarks/bench_kernels.py [--repeat 50]

Kernel timings come from both implementations in the same process.  The
end-to-end rows start one subprocess per backend, switching with
LEOALLOC_DISABLE_NUMBA, and time the whole alternating run.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from leoalloc import kernels
from leoalloc.convex import _Packed
from leoalloc.instance import ScenarioConfig, generate_scenario

E2E = """
import time
from leoalloc import run_algorithm1, generate_scenario, ScenarioConfig
from leoalloc.kernels import BACKEND
inst = generate_scenario(ScenarioConfig(seed=1))
run_algorithm1(inst)  # warm-up and JIT compile
t0 = time.perf_counter()
for s in range(1, 4):
    run_algorithm1(generate_scenario(ScenarioConfig(seed=s)))
print(BACKEND, (time.perf_counter() - t0) / 3)
"""


def barrier_case(K=10, N=10, M=3):
    inst = generate_scenario(ScenarioConfig(seed=3, K=K, N=N, M=M))
    weights = np.full((M, inst.T), 1.0 / M)
    pk = _Packed(inst, weights)
    p, W = pk.heuristic_start()
    return p, W, pk.kernel_args()


def simplex_case(rows=40, cols=60, seed=0):
    rng = np.random.default_rng(seed)
    A = rng.uniform(0.0, 1.0, (rows, cols))
    b = rng.uniform(1.0, 2.0, rows)
    c = -rng.uniform(0.0, 1.0, cols)
    tab = np.zeros((rows + 1, cols + rows + 1))
    tab[:rows, :cols] = A
    tab[:rows, cols : cols + rows] = np.eye(rows)
    tab[:rows, -1] = b
    tab[-1, :cols] = c
    basis = np.arange(cols, cols + rows, dtype=np.int64)
    return tab, basis


def bench(name, fn, repeat):
    fn()  # compile / warm
    t = min(timeit.repeat(fn, number=1, repeat=repeat))
    return t


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=50)
    ap.add_argument("--skip-e2e", action="store_true")
    args = ap.parse_args()

    x = np.linspace(0.0, 30.0, 20_000)
    p, W, kargs = barrier_case()
    tab, basis = simplex_case()
    cases = {
        "j1 (20k points)": lambda impl: impl(x),
        "barrier_value": lambda impl: impl(p, W, 0.0, *kargs),
        "barrier_derivs": lambda impl: impl(p, W, 0.0, False, *kargs),
        "simplex 40x60": lambda impl: impl(tab.copy(), basis.copy(), 10_000, 1e-10),
    }
    keys = {"j1 (20k points)": "j1", "barrier_value": "barrier_value", "barrier_derivs": "barrier_derivs", "simplex 40x60": "simplex"}

    print(f"{'kernel':<18}{'numpy [us]':>14}{'numba [us]':>14}{'speedup':>10}")
    for label, call in cases.items():
        impls = kernels.IMPLEMENTATIONS[keys[label]]
        t_np = bench(label, lambda: call(impls["numpy"]), args.repeat)
        t_nb = bench(label, lambda: call(impls["numba"]), args.repeat)
        print(f"{label:<18}{t_np * 1e6:>14.1f}{t_nb * 1e6:>14.1f}{t_np / t_nb:>10.2f}")

    if args.skip_e2e:
        return
    print("\nend-to-end alternating run (default scenario, mean of 3 seeds)")
    for flag in ("1", "0"):
        env = dict(os.environ, LEOALLOC_DISABLE_NUMBA=flag)
        out = subprocess.run([sys.executable, "-c", E2E], env=env, capture_output=True, text=True, check=True)
        backend, secs = out.stdout.split()
        print(f"  {backend:<6} {float(secs):.3f} s")


if __name__ == "__main__":
    main()
