"""Compare the numba kernels with the pure-numpy fallback.

    python3 benchmarks/bench_backends.py [--repeat 5]
"""

import argparse
import time

import numpy as np

from annuity_eq import _accel
from annuity_eq.experiments import homogeneous_spec
from annuity_eq.simulator import PathConfig, run_ensemble
from annuity_eq.solver import solve_truncated
from annuity_eq.special_functions import lambert_w0

from _bench_specs import hetero_spec


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases():
    z = np.logspace(-8, 8, 200_000)
    hetero = hetero_spec(n0=8, m=200)
    sol = solve_truncated(hetero)
    small = homogeneous_spec(0.6, 3, 20, 1.0, 1.0)
    small_sol = solve_truncated(small)
    cfg = PathConfig(horizon=20.0, dt=0.01, seed=1, num_paths=200,
                     perturbation_deltas=(0.05, -0.05))
    return {
        "lambert_w0, 2e5 points": lambda: lambert_w0(z),
        "solve_truncated, hetero m=200": lambda: solve_truncated(hetero),
        "run_ensemble, 200 paths + utility": lambda: run_ensemble(small, small_sol, cfg,
                                                                  utility_agents=(1, 2)),
        "holdings only, hetero, 50 paths": lambda: run_ensemble(
            hetero, sol, PathConfig(horizon=20.0, dt=0.01, seed=2, num_paths=50)),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if not _accel.HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")
    rows = []
    for name, fn in cases().items():
        timings = {}
        for be in ("numba", "numpy"):
            prev = _accel.set_backend(be)
            try:
                timings[be] = best_of(fn, args.repeat)
            finally:
                _accel.set_backend(prev)
        rows.append((name, timings["numba"], timings["numpy"]))
    print(f"{'case':38s} {'numba [s]':>10s} {'numpy [s]':>10s} {'ratio':>7s}")
    for name, a, b in rows:
        print(f"{name:38s} {a:10.4f} {b:10.4f} {b / a:7.2f}")


if __name__ == "__main__":
    main()
