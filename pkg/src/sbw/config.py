"""Run configuration: JSON file, schema-validated, unknown keys rejected."""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import jsonschema
import numpy as np

from .experiments import DEFAULT_SWEEPS, ExperimentSpec
from .game import GameConfig, GameError, draw_costs
from .rng import check_seed

DEFAULT_SEED = 1
DEFAULT_GAME = {
    "num_nodes": 4,
    "num_users": 6,
    "block_reward": 1000.0,
    "capacities": 150.0,
    "cost_distribution": {"law": "uniform", "lo": 1.0, "hi": 2.0},
    "initial_units": 2.0,
}
DEFAULT_SOLVER = {"eps_strategy": None, "eps_dev": 1e-4, "max_iters": 1000}
DEFAULT_CHAIN = {"initial_balance": 10000.0, "contracts_price_share": 1.0, "epoch_window": 100, "rounds": 10000}
EXTRA_SWEEP_KEYS = {"scale_grid": {"capacity"}}


class ConfigError(ValueError):
    """Config problem, formatted as ``path:line: message``."""


def _schema() -> dict:
    text = resources.files("sbw").joinpath("schema/run_config.schema.json").read_text("utf-8")
    return json.loads(text)


def _locate(text: str, path) -> int | None:
    """Best-effort 1-based line of the JSON key/index at ``path``."""
    pos = 0
    line_hint = None
    for part in path:
        if isinstance(part, str):
            m = re.compile(r'"%s"\s*:' % re.escape(part)).search(text, pos)
            if m is None:
                break
            pos = m.start()
            line_hint = text.count("\n", 0, pos) + 1
    return line_hint


@dataclass
class RunConfig:
    """Everything one CLI invocation needs; ``eps_dev`` is a fraction of the block reward."""

    game: dict[str, Any]
    solver: dict[str, Any]
    chain: dict[str, Any]
    experiment: dict[str, Any] | None
    seed: int = DEFAULT_SEED
    output_dir: str = "results"
    source: str = "<defaults>"
    _text: str = field(default="", repr=False)

    def error(self, message: str, *path) -> ConfigError:
        line = _locate(self._text, path) if path else None
        where = f"{self.source}:{line}" if line else self.source
        return ConfigError(f"{where}: {message}")

    def game_config(self) -> GameConfig:
        g = self.game
        if "costs" in g:
            costs = np.asarray(g["costs"], dtype=float)
            if costs.ndim != 2:
                raise self.error("costs must be a rectangular matrix", "game", "costs")
            n = g.get("num_nodes", costs.shape[0])
            m = g.get("num_users", costs.shape[1])
            if costs.shape != (n, m):
                raise self.error(f"costs shape {costs.shape} does not match num_nodes x num_users = ({n}, {m})", "game", "costs")
        else:
            n, m = g["num_nodes"], g["num_users"]
            dist = g["cost_distribution"]
            if dist["lo"] > dist["hi"]:
                raise self.error("cost_distribution needs lo <= hi", "game", "cost_distribution")
            costs = draw_costs(self.seed, n, m, dist["lo"], dist["hi"])
        caps = g.get("capacities", 150.0)
        if caps is None:
            caps = math.inf
        elif isinstance(caps, list):
            if len(caps) != m:
                raise self.error(f"capacities has {len(caps)} entries, expected num_users = {m}", "game", "capacities")
            caps = [math.inf if c is None else c for c in caps]
        try:
            return GameConfig.build(costs, caps, g["block_reward"])
        except GameError as exc:
            raise self.error(str(exc), "game") from None

    def cost_range(self) -> tuple[float, float]:
        dist = self.game.get("cost_distribution") or DEFAULT_GAME["cost_distribution"]
        return float(dist["lo"]), float(dist["hi"])

    def experiment_spec(self) -> ExperimentSpec:
        if self.experiment is None:
            raise self.error("config has no experiment section")
        kind = self.experiment["kind"]
        sweep = dict(self.experiment.get("sweep", {}))
        allowed = set(DEFAULT_SWEEPS[kind]) | EXTRA_SWEEP_KEYS.get(kind, set())
        unknown = sorted(set(sweep) - allowed)
        if unknown:
            raise self.error(f"unknown sweep keys for {kind}: {unknown}; allowed {sorted(allowed)}", "experiment", "sweep", unknown[0])
        try:
            return ExperimentSpec(
                kind=kind,
                base_config=self.game_config(),
                seed=self.seed,
                sweep=sweep,
                initial_units=float(self.game.get("initial_units", 2.0)),
                eps_strategy=self.solver["eps_strategy"],
                eps_dev_rel=float(self.solver["eps_dev"]),
                max_iters=int(self.solver["max_iters"]),
                cost_range=self.cost_range(),
            )
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise self.error(str(exc), "experiment") from None


def parse_config(text: str, source: str = "<string>", seed: int | None = None, output_dir: str | None = None) -> RunConfig:
    try:
        raw = json.loads(text) if text.strip() else {}
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}:{exc.lineno}: invalid JSON: {exc.msg} (column {exc.colno})") from None
    validator = jsonschema.Draft202012Validator(_schema())
    errors = sorted(validator.iter_errors(raw), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        path = list(err.absolute_path)
        line = _locate(text, path)
        where = f"{source}:{line}" if line else source
        dotted = ".".join(str(p) for p in path) or "<root>"
        raise ConfigError(f"{where}: {dotted}: {err.message}")

    game = dict(DEFAULT_GAME) if "game" not in raw else dict(raw["game"])
    if "game" in raw:
        game.setdefault("block_reward", DEFAULT_GAME["block_reward"])
        if "costs" not in game:
            game.setdefault("num_nodes", DEFAULT_GAME["num_nodes"])
            game.setdefault("num_users", DEFAULT_GAME["num_users"])
    cfg = RunConfig(
        game=game,
        solver={**DEFAULT_SOLVER, **raw.get("solver", {})},
        chain={**DEFAULT_CHAIN, **raw.get("chain", {})},
        experiment=raw.get("experiment"),
        seed=check_seed(raw.get("seed", DEFAULT_SEED) if seed is None else seed),
        output_dir=output_dir or raw.get("output_dir", "results"),
        source=source,
        _text=text,
    )
    return cfg


def load_config(path: str | Path | None, seed: int | None = None, output_dir: str | None = None) -> RunConfig:
    if path is None:
        return parse_config("", "<defaults>", seed, output_dir)
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{p}: cannot read config: {exc.strerror}") from None
    return parse_config(text, str(p), seed, output_dir)
