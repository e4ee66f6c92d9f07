"""Time the compiled kernel, the numpy fallback and the generic sparse-LU route.

    python benchmarks/bench_kernels.py [--cells 200] [--rho 100] [--steps 10000]
"""

import argparse
import time

import numpy as np

from kvdelay import kernels
from kvdelay.discretization import Mesh, assemble, initial_state
from kvdelay.params import SystemParams
from kvdelay.simulate import TimeGrid, integrate


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--cells", type=int, default=200)
    ap.add_argument("--rho", type=int, default=100)
    ap.add_argument("--steps", type=int, default=10000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    mesh = Mesh(args.cells, args.rho)
    params = SystemParams(alpha=0.1, mu1=1.0, mu2=0.5, tau=1.0, xi=1.0)
    pair = assemble(params, mesh)
    s0 = initial_state(lambda x: np.sin(np.pi * x / 2), lambda x: 0 * x, lambda x, s: 0 * x, mesh, 1.0)
    dt = 5e-3
    grid = TimeGrid(dt, args.steps * dt)

    routes = {name: (lambda b=fn: integrate(s0, pair, grid, backend=b)) for name, fn in kernels.available_backends().items()}
    routes["generic"] = lambda: integrate(s0, pair, grid, method="generic")

    print(f"state dimension {pair.size}, {grid.n_steps} steps")
    results = {}
    for name, fn in routes.items():
        t, tr = best_of(fn, args.repeat)
        results[name] = (t, tr)
    ref = results["generic"][1]
    base = results["python"][0]
    print(f"{'route':>8} {'seconds':>9} {'steps/s':>10} {'vs python':>10} {'max |dV|':>10}")
    for name, (t, tr) in results.items():
        dev = np.max(np.abs(tr.snapshots - ref.snapshots))
        print(f"{name:>8} {t:9.3f} {grid.n_steps / t:10.0f} {base / t:9.1f}x {dev:10.1e}")


if __name__ == "__main__":
    main()
