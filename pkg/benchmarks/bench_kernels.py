"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--n-paths 4000] [--repeat 3]
"""
import argparse
import time

import numpy as np

from longliq import figure1_params, solve_infinite
from longliq.backend import compiled, get_backend
from longliq.simulator import INFINITE, SimConfig, simulate_optimal, simulate_strategy, twap


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n-paths", type=int, default=4000)
    ap.add_argument("--T", type=float, default=30.0)
    ap.add_argument("--dt", type=float, default=0.01)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    if compiled is None:
        print("compiled extension not built; only the fallback can be timed")
    params = figure1_params()
    inf = solve_infinite(params)
    cfg = SimConfig(args.T, args.dt, args.n_paths, seed=1, mode=INFINITE, record_every=int(round(args.T / args.dt)))
    n_steps = cfg.n_steps
    jobs = {
        "normals": lambda be: get_backend(be).normals(1, 0, 0, args.n_paths, 0, n_steps),
        "optimal_paths": lambda be: simulate_optimal(params, inf, cfg, backend=be).costs,
        "strategy_paths": lambda be: simulate_strategy(params, twap(params, cfg), cfg, backend=be).costs,
    }
    names = ["python"] + (["compiled"] if compiled is not None else [])
    print(f"{args.n_paths} paths x {n_steps} steps, best of {args.repeat}")
    print(f"{'kernel':<16}" + "".join(f"{n:>12}" for n in names) + f"{'speedup':>10}{'max diff':>12}")
    for job, fn in jobs.items():
        res = {n: best_of(lambda: fn(n), args.repeat) for n in names}
        line = f"{job:<16}" + "".join(f"{res[n][0]:>11.3f}s" for n in names)
        if len(names) == 2:
            diff = float(np.max(np.abs(np.asarray(res["python"][1]) - np.asarray(res["compiled"][1]))))
            line += f"{res['python'][0] / res['compiled'][0]:>9.1f}x{diff:>12.2e}"
        print(line)


if __name__ == "__main__":
    main()
