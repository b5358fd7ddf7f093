"""Time every hot kernel in its numba and numpy flavour, plus one full DE run
under each backend.

    python benchmarks/bench_kernels.py [--repeat 200] [--dims 10 30]
"""

from __future__ import annotations

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from metabbo import kernels
from metabbo._accel import HAVE_NUMBA

POP = 100


def _cases(d: int, rng: np.random.Generator):
    lb, ub = np.full(d, -5.0), np.full(d, 5.0)
    X = rng.uniform(-5, 5, (POP, d))
    idx = [rng.integers(0, POP, POP) for _ in range(5)]
    de_args = (X, X, *idx, rng.random(POP), rng.random(POP), rng.random(POP), rng.random((POP, d)),
               rng.integers(0, d, POP), lb, ub)
    pso_args = (X, rng.normal(size=(POP, d)), X.copy(), X[0], 0.729, 1.49, 1.49, rng.random((POP, d)),
                rng.random((POP, d)), np.full(d, 2.0), lb, ub)
    raw = rng.integers(0, POP - 1 - np.arange(3), size=(POP, 3))
    front = rng.random((POP, 2))
    front = front[np.lexsort((front[:, 1], front[:, 0]))]
    return {
        "eval_family(rastrigin)": ((kernels.RASTRIGIN, X), kernels.eval_family_nb, kernels.eval_family_np),
        "eval_family(katsuura)": ((kernels.KATSUURA, X), kernels.eval_family_nb, kernels.eval_family_np),
        "de_trials": (de_args, kernels.de_trials_nb, kernels.de_trials_np),
        "distinct_indices": ((raw,), kernels.distinct_indices_nb, kernels.distinct_indices_np),
        "pso_update": (pso_args, kernels.pso_update_nb, kernels.pso_update_np),
        "mean_pairwise_distance": ((X,), kernels.mean_pairwise_distance_nb, kernels.mean_pairwise_distance_np),
        "hv_sweep": ((front, 1.1, 1.1), kernels.hv_sweep_nb, kernels.hv_sweep_np),
    }


def bench_kernels(dims, repeat: int):
    rng = np.random.default_rng(0)
    print(f"{'kernel':<26}{'dim':>5}{'numba us':>12}{'numpy us':>12}{'ratio':>8}")
    for d in dims:
        for name, (args, f_nb, f_np) in _cases(d, rng).items():
            f_nb(*args)  # compile outside the timing
            t_nb = min(timeit.repeat(lambda: f_nb(*args), number=repeat, repeat=3)) / repeat * 1e6
            t_np = min(timeit.repeat(lambda: f_np(*args), number=repeat, repeat=3)) / repeat * 1e6
            print(f"{name:<26}{d:>5}{t_nb:>12.1f}{t_np:>12.1f}{t_np / t_nb:>8.1f}")


_RUN_SNIPPET = """
import time
from metabbo.problems import make_soo_instance
from metabbo.optimizers import run_baseline
p = make_soo_instance("rastrigin", 10, 1)
run_baseline("DE", p.fresh(0), 0)
t = time.perf_counter()
for s in range(5):
    run_baseline("DE", p.fresh(s), s)
print((time.perf_counter() - t) / 5)
"""


def bench_end_to_end():
    print("\nfull DE run, rastrigin-10D, 2e4 evaluations")
    for backend in ("numba", "numpy"):
        env = dict(os.environ, METABBO_BACKEND=backend)
        out = subprocess.run([sys.executable, "-c", _RUN_SNIPPET], env=env, capture_output=True, text=True,
                             check=True)
        print(f"  {backend:<6} {float(out.stdout.strip()) * 1e3:8.1f} ms/run")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=200)
    ap.add_argument("--dims", type=int, nargs="+", default=[10, 30])
    ap.add_argument("--skip-runs", action="store_true", help="kernels only")
    args = ap.parse_args(argv)
    if not HAVE_NUMBA:
        print("numba is not installed; both columns time the numpy fallback")
    bench_kernels(args.dims, args.repeat)
    if not args.skip_runs:
        bench_end_to_end()


if __name__ == "__main__":
    main()
