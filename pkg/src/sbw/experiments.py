"""Desk-scale experiments: utility surface, convergence under cost perturbation,
block-reward sweep and the reward x node-count grid.

Every experiment is a pure function of its ``ExperimentSpec``; results come
back as a ``ResultTable`` that writes side-by-side CSV and JSON files.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from . import __version__, kernels
from .chain import digest
from .game import GameConfig, GameError, StrategyProfile, draw_costs, utility
from .solver import (
    DEFAULT_MAX_ITERS,
    best_response,
    deviation_gains,
    residual_capacities,
    solve_equilibrium,
)

KINDS = ("surface", "convergence", "reward_sweep", "scale_grid")

DEFAULT_SWEEPS: dict[str, dict[str, Any]] = {
    "surface": {"node": 0, "axes": [0, 1], "step": 1.0},
    "convergence": {"node": 0, "perturbations": [0.0, 0.1, 0.2]},
    "reward_sweep": {"rewards": {"start": 700.0, "stop": 1400.0, "step": 100.0}},
    "scale_grid": {
        "rewards": {"start": 700.0, "stop": 1700.0, "step": 100.0},
        "nodes": [10, 25, 50, 75],
        "num_users": 100,
        "max_iters": 5000,
    },
}


@dataclass(frozen=True)
class ExperimentSpec:
    kind: str
    base_config: GameConfig
    seed: int
    sweep: dict[str, Any] = field(default_factory=dict)
    initial_units: float = 2.0
    eps_strategy: float | None = None
    eps_dev_rel: float = 1e-4
    max_iters: int = DEFAULT_MAX_ITERS
    cost_range: tuple[float, float] = (1.0, 2.0)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown experiment kind {self.kind!r}; expected one of {KINDS}")
        merged = dict(DEFAULT_SWEEPS[self.kind])
        merged.update(self.sweep)
        object.__setattr__(self, "sweep", merged)

    def echo(self) -> dict:
        return {
            "kind": self.kind,
            "seed": self.seed,
            "sweep": _jsonable(self.sweep),
            "initial_units": self.initial_units,
            "eps_strategy": self.eps_strategy,
            "eps_dev_rel": self.eps_dev_rel,
            "max_iters": self.max_iters,
            "cost_range": list(self.cost_range),
            "base_config": self.base_config.to_dict(),
        }


@dataclass
class ResultTable:
    """Named columns (with units), numeric rows, and a metadata echo."""

    columns: list[tuple[str, str]]
    rows: list[list[Any]]
    metadata: dict[str, Any]

    @property
    def names(self) -> list[str]:
        return [name for name, _ in self.columns]

    def column(self, name: str) -> list[Any]:
        i = self.names.index(name)
        return [row[i] for row in self.rows]

    def records(self) -> list[dict[str, Any]]:
        return [dict(zip(self.names, row)) for row in self.rows]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\r\n")
        writer.writerow([f"{name} [{unit}]" if unit else name for name, unit in self.columns])
        for row in self.rows:
            writer.writerow([_csv_cell(v) for v in row])
        return buf.getvalue()

    def to_json(self) -> str:
        doc = {
            "columns": [{"name": n, "unit": u} for n, u in self.columns],
            "rows": [{k: _json_cell(v) for k, v in rec.items()} for rec in self.records()],
            "metadata": self.metadata,
        }
        return json.dumps(doc, sort_keys=True, indent=1, allow_nan=False) + "\n"

    def write(self, out_dir, kind: str, seed: int) -> tuple[Path, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        csv_path = out / f"{kind}_{seed}.csv"
        json_path = out / f"{kind}_{seed}.json"
        csv_path.write_bytes(self.to_csv().encode("utf-8"))
        json_path.write_bytes(self.to_json().encode("utf-8"))
        return csv_path, json_path


def _csv_cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return str(v)


def _jsonable(obj):
    """Copy of ``obj`` with non-finite floats (e.g. unlimited capacity) written as None."""
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return _json_cell(obj)


def _json_cell(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


def thread_cap() -> int:
    raw = os.environ.get("SBW_THREADS", "").strip()
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            raise ValueError(f"SBW_THREADS must be an integer, got {raw!r}") from None
    return os.cpu_count() or 1


def _pmap(fn: Callable, items: Sequence) -> list:
    workers = min(thread_cap(), len(items))
    if workers <= 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def axis_values(spec) -> list[float]:
    """Expand ``{"start", "stop", "step"}`` (inclusive) or pass a list through."""
    if isinstance(spec, dict):
        start, stop, step = float(spec["start"]), float(spec["stop"]), float(spec["step"])
        if step <= 0 or stop < start:
            raise ValueError(f"bad axis {spec}")
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        values = [start + i * step for i in range(count)]
    else:
        values = [float(v) for v in spec]
    if not values:
        raise ValueError("sweep axis is empty")
    return values


def provenance(spec: ExperimentSpec) -> str:
    return f"sbw {__version__} backend={kernels.BACKEND} spec:{digest(spec.echo())[:12]}"


def _metadata(spec: ExperimentSpec, **extra) -> dict:
    meta = {"spec": spec.echo(), "seed": spec.seed, "provenance": provenance(spec)}
    meta.update(_jsonable(extra))
    return meta


def _solve(config: GameConfig, spec: ExperimentSpec, max_iters: int | None = None):
    init = StrategyProfile.uniform(config, spec.initial_units)
    result = solve_equilibrium(config, init, spec.eps_strategy, max_iters or spec.max_iters)
    gains = deviation_gains(config, result.profile)
    eps_dev = spec.eps_dev_rel * config.block_reward
    return result, float(gains.max()), bool((gains <= eps_dev).all())


# -- surface ---------------------------------------------------------------


def run_surface(spec: ExperimentSpec) -> ResultTable:
    """Grid of one node's utility over two of its purchase coordinates.

    All other purchases stay at the initial value; the grid spans each free
    coordinate's residual capacity.
    """
    if spec.kind != "surface":
        raise ValueError("run_surface needs kind='surface'")
    cfg = spec.base_config
    node = int(spec.sweep["node"])
    a, b = (int(v) for v in spec.sweep["axes"])
    step = float(spec.sweep["step"])
    if a == b or not (0 <= a < cfg.num_users and 0 <= b < cfg.num_users):
        raise ValueError(f"surface axes must be two distinct users, got {(a, b)}")
    profile = StrategyProfile.uniform(cfg, spec.initial_units)
    if not profile.is_feasible(cfg):
        raise GameError("frozen profile is infeasible for the configured capacities")

    residual = residual_capacities(cfg, profile, node)
    if not (np.isfinite(residual[a]) and np.isfinite(residual[b])):
        raise ValueError("surface axes need finite capacities")
    grid_a = np.arange(0.0, residual[a] + 1e-9, step)
    grid_b = np.arange(0.0, residual[b] + 1e-9, step)
    row = profile.purchases[node].copy()
    fixed = np.delete(np.arange(cfg.num_users), [a, b])
    fixed_units = math.fsum(row[fixed])
    fixed_cost = math.fsum(cfg.costs[node, fixed] * row[fixed])
    T = math.fsum(np.delete(profile.totals(), node))

    A, B = np.meshgrid(grid_a, grid_b, indexing="ij")
    x = fixed_units + A + B
    grand = T + x
    with np.errstate(invalid="ignore", divide="ignore"):
        share = np.where(grand > 0, cfg.block_reward * x / grand, 0.0)
    U = share - (fixed_cost + cfg.costs[node, a] * A + cfg.costs[node, b] * B)
    best = np.unravel_index(int(np.argmax(U)), U.shape)

    rows = []
    for i, va in enumerate(grid_a):
        for j, vb in enumerate(grid_b):
            rows.append([float(va), float(vb), float(U[i, j]), int((i, j) == best)])
    br = best_response(cfg, profile, node)
    argmax = {
        f"s_{node}_{a}": float(grid_a[best[0]]),
        f"s_{node}_{b}": float(grid_b[best[1]]),
        "utility": float(U[best]),
    }
    return ResultTable(
        [(f"s_{node}_{a}", "units"), (f"s_{node}_{b}", "units"), (f"utility_{node}", "tokens"), ("is_argmax", "")],
        rows,
        _metadata(
            spec,
            argmax=argmax,
            residual=[float(residual[a]), float(residual[b])],
            best_response_utility=br.achieved_utility,
            best_response_allocation=br.allocation.tolist(),
            grid_gap=step * (cfg.block_reward / T + cfg.costs[node, a] + cfg.costs[node, b]),
            costs=cfg.costs.tolist(),
        ),
    )


# -- convergence -----------------------------------------------------------


def run_convergence(spec: ExperimentSpec) -> ResultTable:
    """Equilibrium trace for each multiplicative raise of one node's cost row."""
    if spec.kind != "convergence":
        raise ValueError("run_convergence needs kind='convergence'")
    cfg = spec.base_config
    node = int(spec.sweep["node"])
    perturbations = [float(p) for p in spec.sweep["perturbations"]]
    if not perturbations:
        raise ValueError("perturbation list is empty")

    runs = []
    for p in perturbations:
        costs = cfg.costs.copy()
        costs[node] *= 1.0 + p
        runs.append((p, _solve(cfg.with_costs(costs), spec)))
    base_result = runs[0][1][0]
    base_totals = base_result.profile.totals()
    base_utils = base_result.utilities

    rows = []
    summary = []
    for p, (result, max_gain, verified) in runs:
        for rec in result.trace:
            for n in range(cfg.num_nodes):
                rows.append([p, rec.iteration, n, float(rec.utilities[n]), float(rec.totals[n]), 0, None, None])
        totals = result.profile.totals()
        for n in range(cfg.num_nodes):
            dt = _pct(totals[n], base_totals[n])
            du = _pct(result.utilities[n], base_utils[n])
            rows.append([p, result.iterations, n, float(result.utilities[n]), float(totals[n]), 1, dt, du])
        summary.append(
            {
                "perturbation": p,
                "converged": result.converged,
                "iterations": result.iterations,
                "verified": verified,
                "max_deviation_gain": max_gain,
                "profile": result.profile.purchases.tolist(),
            }
        )
    return ResultTable(
        [
            ("perturbation", "fraction"),
            ("iteration", "sweeps"),
            ("node", ""),
            ("utility", "tokens"),
            ("total_purchased", "units"),
            ("is_final", ""),
            ("total_change_vs_baseline", "percent"),
            ("utility_change_vs_baseline", "percent"),
        ],
        rows,
        _metadata(spec, runs=summary, costs=cfg.costs.tolist()),
    )


def _pct(value, base) -> float | None:
    return None if base == 0 else float(100.0 * (value - base) / abs(base))


# -- reward sweep ----------------------------------------------------------


def _reward_cell(args):
    cfg, spec = args
    result, max_gain, verified = _solve(cfg, spec)
    return result, max_gain, verified


def linear_fit_r2(x, y) -> tuple[float, float, float]:
    """Least-squares line through (x, y); returns (slope, intercept, R^2)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - float(np.sum(resid**2)) / ss_tot
    return float(slope), float(intercept), r2


def run_reward_sweep(spec: ExperimentSpec) -> ResultTable:
    if spec.kind != "reward_sweep":
        raise ValueError("run_reward_sweep needs kind='reward_sweep'")
    cfg = spec.base_config
    rewards = axis_values(spec.sweep["rewards"])
    results = _pmap(_reward_cell, [(cfg.with_reward(r), spec) for r in rewards])
    rows = []
    for r, (result, max_gain, verified) in zip(rewards, results):
        totals = result.profile.totals()
        rows.append(
            [r, math.fsum(totals), *map(float, totals), result.iterations, int(result.converged), int(verified), max_gain]
        )
    totals_col = [row[1] for row in rows]
    fit = None
    if len(set(rewards)) >= 2:
        slope, intercept, r2 = linear_fit_r2(rewards, totals_col)
        fit = {"slope": slope, "intercept": intercept, "r2": r2}
    columns = [("block_reward", "tokens"), ("total_purchased", "units")]
    columns += [(f"node_{n}_purchased", "units") for n in range(cfg.num_nodes)]
    columns += [("iterations", "sweeps"), ("converged", ""), ("verified", ""), ("max_deviation_gain", "tokens")]
    return ResultTable(
        columns,
        rows,
        _metadata(
            spec,
            fit=fit,
            costs=cfg.costs.tolist(),
            profiles={repr(r): res[0].profile.purchases.tolist() for r, res in zip(rewards, results)},
        ),
    )


# -- scale grid ------------------------------------------------------------


def _scale_cell(args):
    n_nodes, reward, costs, caps, spec, max_iters = args
    try:
        cfg = GameConfig.build(costs, caps, reward)
        result, max_gain, verified = _solve(cfg, spec, max_iters)
    except (GameError, ValueError, ArithmeticError) as exc:
        return [n_nodes, reward, None, None, 0, 0, None, 1], f"{type(exc).__name__}: {exc}"
    total = math.fsum(result.profile.totals())
    return [n_nodes, reward, total, result.iterations, int(result.converged), int(verified), max_gain, 0], None


def run_scale_grid(spec: ExperimentSpec) -> ResultTable:
    """Total equilibrium purchase on the reward x node-count grid.

    Costs are drawn once per node count so the reward axis varies nothing
    else. A cell whose solve fails is kept as a flagged row.
    """
    if spec.kind != "scale_grid":
        raise ValueError("run_scale_grid needs kind='scale_grid'")
    rewards = axis_values(spec.sweep["rewards"])
    node_counts = [int(n) for n in spec.sweep["nodes"]]
    if not node_counts or min(node_counts) < 1:
        raise ValueError("scale grid needs positive node counts")
    m = int(spec.sweep["num_users"])
    caps = spec.sweep.get("capacity")
    if caps is None:
        base_caps = spec.base_config.capacities
        caps = float(base_caps[0]) if np.all(base_caps == base_caps[0]) else 150.0
    max_iters = int(spec.sweep.get("max_iters", spec.max_iters))
    lo, hi = spec.cost_range

    cost_tables = {n: draw_costs(spec.seed, n, m, lo, hi) for n in node_counts}
    cells = [(n, r, cost_tables[n], caps, spec, max_iters) for n in node_counts for r in rewards]
    outputs = _pmap(_scale_cell, cells)
    rows = sorted((row for row, _ in outputs), key=lambda row: (row[0], row[1]))
    failures = {f"{n}x{r!r}": err for (n, r, *_), (_, err) in zip(cells, outputs) if err}
    return ResultTable(
        [
            ("num_nodes", ""),
            ("block_reward", "tokens"),
            ("total_purchased", "units"),
            ("iterations", "sweeps"),
            ("converged", ""),
            ("verified", ""),
            ("max_deviation_gain", "tokens"),
            ("failed", ""),
        ],
        rows,
        _metadata(
            spec,
            num_users=m,
            capacity=caps,
            failures=failures,
            costs={str(n): c.tolist() for n, c in cost_tables.items()},
        ),
    )


RUNNERS = {
    "surface": run_surface,
    "convergence": run_convergence,
    "reward_sweep": run_reward_sweep,
    "scale_grid": run_scale_grid,
}


def run_experiment(spec: ExperimentSpec) -> ResultTable:
    return RUNNERS[spec.kind](spec)
