"""Both kernel backends against each other and against hand-computed cases."""

import math
import os
import subprocess
import sys

import numpy as np
import pytest

from sbw import _pykernels, kernels
from sbw.game import StrategyProfile, random_game
from sbw.solver import cost_order, solve_equilibrium

from .conftest import _cykernels


def test_backend_selected():
    assert kernels.BACKEND in ("python", "cython")


def test_optimal_total_interior(backend):
    x = backend.optimal_total(np.array([1.0]), np.array([10000.0]), 100.0, 1000.0)
    assert x == pytest.approx(math.sqrt(1000 * 100) - 100, rel=1e-12)


def test_optimal_total_clamped(backend):
    assert backend.optimal_total(np.array([1.0]), np.array([50.0]), 100.0, 1000.0) == 50.0


def test_optimal_total_skips_empty_pieces(backend):
    x = backend.optimal_total(np.array([1.0, 1.5]), np.array([0.0, 1e6]), 100.0, 1000.0)
    assert x == pytest.approx(math.sqrt(1000 * 100 / 1.5) - 100, rel=1e-12)


def test_optimal_total_zero_when_unprofitable(backend):
    # marginal reward at x=0 is R/T = 0.5 < cost 1
    assert backend.optimal_total(np.array([1.0]), np.array([100.0]), 2000.0, 1000.0) == 0.0


def test_optimal_total_stops_at_kink(backend):
    T, R = 100.0, 1000.0
    assert math.sqrt(R * T / 2) - T > 100  # moves into the second piece
    x = backend.optimal_total(np.array([1.0, 2.0]), np.array([100.0, 1e6]), T, R)
    assert x == pytest.approx(math.sqrt(R * T / 2) - T, rel=1e-12)
    x = backend.optimal_total(np.array([1.0, 4.0]), np.array([100.0, 1e6]), T, R)
    assert x == 100.0  # sqrt(R T / 4) - T = 58 < 100: stop at the kink


def test_fill_greedy(backend):
    order = np.array([2, 0, 1], dtype=np.int64)
    out = np.empty(3)
    backend.fill_greedy(order, np.array([5.0, 5.0, 3.0]), 6.0, out)
    assert out.tolist() == [3.0, 0.0, 3.0]


def _random_game(rng, n, m):
    costs = rng.uniform(1, 2, (n, m))
    orders = np.vstack([cost_order(r) for r in costs])
    caps = rng.uniform(20, 150, m)
    profile = np.ascontiguousarray(rng.uniform(0.5, 1.0, (n, m)) * caps / n)
    return costs, orders, caps, profile


@pytest.mark.skipif(_cykernels is None, reason="extension not built")
def test_backends_agree_on_sweeps(rng):
    for _ in range(20):
        n, m = int(rng.integers(2, 8)), int(rng.integers(1, 12))
        costs, orders, caps, profile = _random_game(rng, n, m)
        reward = float(rng.uniform(300, 2000))
        p_py, p_cy = profile.copy(), profile.copy()
        for _ in range(5):
            c1, b1, a1 = _pykernels.gauss_seidel_sweep(costs, orders, caps, p_py, reward)
            c2, b2, a2 = _cykernels.gauss_seidel_sweep(costs, orders, caps, p_cy, reward)
            np.testing.assert_allclose(p_py, p_cy, rtol=1e-9, atol=1e-9)
            np.testing.assert_allclose(a1, a2, rtol=1e-9, atol=1e-9)
            assert c1 == pytest.approx(c2, rel=1e-6, abs=1e-9)


@pytest.mark.skipif(_cykernels is None, reason="extension not built")
def test_backends_agree_on_grid(rng):
    for _ in range(10):
        axes = [np.arange(0, rng.uniform(1, 30), 0.5) for _ in range(3)]
        c = rng.uniform(1, 2, 3)
        T, R = float(rng.uniform(5, 100)), float(rng.uniform(50, 2000))
        i1 = _pykernels.grid_argmax(*axes, *c, T, R)
        i2 = _cykernels.grid_argmax(*axes, *c, T, R)
        assert i1[:3] == i2[:3]
        assert i1[3] == pytest.approx(i2[3], rel=1e-13)


def test_grid_argmax_matches_enumeration(backend, rng):
    axes = [np.linspace(0, 4, 9), np.linspace(0, 3, 7), np.array([0.0])]
    c = (1.3, 1.1, 0.0)
    T, R = 3.0, 20.0
    i, j, k, best = backend.grid_argmax(*axes, *c, T, R)
    brute = max(
        ((R * (a + b) / (T + a + b) - c[0] * a - c[1] * b), (ia, ib))
        for ia, a in enumerate(axes[0])
        for ib, b in enumerate(axes[1])
    )
    assert (i, j) == brute[1]
    assert best == pytest.approx(brute[0], rel=1e-12)


def test_draw_indices(backend):
    cum = np.cumsum([0.0, 1.0, 0.0, 3.0, 0.0])
    u = np.array([0.0, 0.2499, 0.25, 0.999999, 1.0 - 2**-53])
    assert backend.draw_indices(cum, u).tolist() == [1, 1, 3, 3, 3]


@pytest.mark.skipif(_cykernels is None, reason="extension not built")
def test_backends_agree_on_draws(rng):
    w = rng.uniform(0, 5, 17)
    w[[3, 9]] = 0.0
    cum = np.cumsum(w)
    u = rng.random(50_000)
    assert np.array_equal(_pykernels.draw_indices(cum, u), _cykernels.draw_indices(cum, u))


def test_env_var_forces_fallback():
    code = "from sbw import kernels; print(kernels.BACKEND)"
    env = {**os.environ, "SBW_PURE_PYTHON": "1"}
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


def test_solve_agrees_across_backends(monkeypatch):
    cfg = random_game(12, num_nodes=6, num_users=9)
    native = solve_equilibrium(cfg, StrategyProfile.uniform(cfg, 2.0))
    for name in ("best_response", "gauss_seidel_sweep"):
        monkeypatch.setattr(kernels, name, getattr(_pykernels, name))
    fallback = solve_equilibrium(cfg, StrategyProfile.uniform(cfg, 2.0))
    assert native.iterations == fallback.iterations
    np.testing.assert_allclose(native.profile.purchases, fallback.profile.purchases, rtol=1e-9, atol=1e-9)
