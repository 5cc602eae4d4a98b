"""Compare the compiled and numpy kernel backends.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Each row reports the best-of-``repeat`` wall time per call and the speedup of
the compiled backend. Results are also checked for agreement.
"""

from __future__ import annotations

import argparse
import contextlib
import importlib
import time

import numpy as np

from sbw import _pykernels, kernels
from sbw.game import StrategyProfile, random_game
from sbw.solver import cost_order, solve_equilibrium

try:
    _cykernels = importlib.import_module("sbw._kernels")
except ImportError:
    _cykernels = None

KERNEL_NAMES = ("best_response", "gauss_seidel_sweep", "grid_argmax", "draw_indices")


@contextlib.contextmanager
def use_backend(impl):
    saved = {name: getattr(kernels, name) for name in KERNEL_NAMES}
    try:
        for name in KERNEL_NAMES:
            setattr(kernels, name, getattr(impl, name))
        yield
    finally:
        for name, fn in saved.items():
            setattr(kernels, name, fn)


def best_time(fn, repeat: int, number: int) -> float:
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        for _ in range(number):
            out = fn()
        times.append((time.perf_counter() - start) / number)
    best_time.last = out
    return min(times)


def cases(impl):
    rng = np.random.default_rng(0)
    cfg = random_game(0, num_nodes=50, num_users=100)
    costs = np.ascontiguousarray(cfg.costs)
    orders = np.stack([cost_order(row) for row in costs]).astype(np.int64)
    caps = np.ascontiguousarray(cfg.capacities)
    residual = caps - 2.0 * (cfg.num_nodes - 1)
    profile = StrategyProfile.uniform(cfg, 2.0).purchases

    axes = [np.arange(0.0, 30.0 + 1e-9, 0.05) for _ in range(3)]
    c3 = rng.uniform(1, 2, 3)
    cumulative = np.cumsum(rng.uniform(0, 10, 75))
    uniforms = rng.random(100_000)
    small = random_game(3)

    def sweep():
        work = profile.copy()
        return impl.gauss_seidel_sweep(costs, orders, caps, work, cfg.block_reward)[0]

    def solve():
        with use_backend(impl):
            return solve_equilibrium(small, StrategyProfile.uniform(small, 2.0)).profile.purchases

    return [
        ("best_response (M=100)", lambda: impl.best_response(costs[0], orders[0], residual, 98.0, 1000.0), 2000),
        ("gauss_seidel_sweep (N=50, M=100)", sweep, 50),
        ("grid_argmax (601^3 points)", lambda: impl.grid_argmax(*axes, *c3, 40.0, 1000.0), 1),
        ("draw_indices (1e5 draws)", lambda: impl.draw_indices(cumulative, uniforms), 20),
        ("solve_equilibrium (N=4, M=6)", solve, 20),
    ]


def agree(a, b) -> bool:
    if isinstance(a, tuple):
        return all(agree(x, y) for x, y in zip(a, b))
    return bool(np.allclose(np.asarray(a, dtype=float), np.asarray(b, dtype=float), rtol=1e-9, atol=1e-9))


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)
    if _cykernels is None:
        print("compiled extension not built; run `pip install -e . --no-build-isolation` first")
        return 1

    print(f"{'kernel':36} {'python':>12} {'cython':>12} {'speedup':>9}  agree")
    for (label, py_fn, number), (_, cy_fn, _) in zip(cases(_pykernels), cases(_cykernels)):
        t_py = best_time(py_fn, args.repeat, number)
        out_py = best_time.last
        t_cy = best_time(cy_fn, args.repeat, number)
        out_cy = best_time.last
        print(f"{label:36} {t_py * 1e6:10.1f}us {t_cy * 1e6:10.1f}us {t_py / t_cy:8.1f}x  {agree(out_py, out_cy)}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
