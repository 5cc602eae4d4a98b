"""Command-line entry point: ``sbw solve|chain|experiment``.

Exit codes: 0 success, 1 usage or config error, 2 solver did not converge.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

from . import __version__, kernels
from .chain import Ledger, LedgerError, node_ids, provision_contracts, run_epoch, user_ids
from .config import ConfigError, RunConfig, load_config
from .experiments import run_experiment
from .game import GameError, StrategyProfile
from .solver import EquilibriumResult, deviation_gains, solve_equilibrium

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NOT_CONVERGED = 2

log = logging.getLogger("sbw")


def _seed(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sbw", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"sbw {__version__} ({kernels.BACKEND} kernels)")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("solve", "compute a Nash equilibrium by iterated best response"),
        ("chain", "solve, then simulate contracts, purchases and block production"),
        ("experiment", "run the configured experiment and write CSV + JSON tables"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON run configuration (defaults used if omitted)")
        p.add_argument("--seed", type=_seed, help="override the config seed")
        p.add_argument("--out", help="output directory (overrides output_dir)")
    return parser


def _solve(cfg: RunConfig):
    game = cfg.game_config()
    init = StrategyProfile.uniform(game, cfg.game.get("initial_units", 2.0))
    result = solve_equilibrium(game, init, cfg.solver["eps_strategy"], cfg.solver["max_iters"])
    return game, result


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(text.encode("utf-8"))


def _equilibrium_doc(cfg: RunConfig, game, result: EquilibriumResult) -> dict:
    gains = deviation_gains(game, result.profile)
    eps_dev = cfg.solver["eps_dev"] * game.block_reward
    doc = result.to_dict()
    doc.update(
        seed=cfg.seed,
        game=game.to_dict(),
        eps_dev=eps_dev,
        max_deviation_gain=float(gains.max()),
        verified=bool((gains <= eps_dev).all()),
    )
    return doc


def cmd_solve(cfg: RunConfig) -> int:
    game, result = _solve(cfg)
    out = Path(cfg.output_dir) / f"equilibrium_{cfg.seed}.json"
    _write(out, json.dumps(_equilibrium_doc(cfg, game, result), sort_keys=True, indent=1, allow_nan=False) + "\n")
    log.info("wrote %s (converged=%s, iterations=%d)", out, result.converged, result.iterations)
    return EXIT_OK if result.converged else EXIT_NOT_CONVERGED


def cmd_chain(cfg: RunConfig) -> int:
    game, result = _solve(cfg)
    out_dir = Path(cfg.output_dir)
    _write(
        out_dir / f"equilibrium_{cfg.seed}.json",
        json.dumps(_equilibrium_doc(cfg, game, result), sort_keys=True, indent=1, allow_nan=False) + "\n",
    )
    if not result.converged:
        log.error("equilibrium did not converge; chain simulation skipped")
        return EXIT_NOT_CONVERGED

    chain = cfg.chain
    nodes, users = node_ids(game.num_nodes), user_ids(game.num_users)
    balance = chain["initial_balance"]
    balances = dict(balance) if isinstance(balance, dict) else {n: balance for n in nodes}
    try:
        ledger = Ledger(nodes, users, game.block_reward, balances, chain["epoch_window"])
    except LedgerError as exc:
        raise cfg.error(f"genesis: {exc}", "chain") from None
    try:
        provision_contracts(ledger, game, chain["contracts_price_share"], result.profile)
    except LedgerError as exc:
        raise LedgerError(f"step 0 (create contracts): {exc}") from None
    tally = run_epoch(ledger, game, result, chain["contracts_price_share"], chain["rounds"], cfg.seed)

    _write(out_dir / f"ledger_{cfg.seed}.json", ledger.to_json())
    rounds = chain["rounds"]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(
        [
            "node",
            "blocks_won",
            "leader_probability",
            "empirical_share",
            "rewards [tokens]",
            "on_chain_spend [tokens]",
            "off_chain_cost [tokens]",
            "net [tokens]",
        ]
    )
    for t in tally:
        share = t.blocks_won / rounds if rounds else 0.0
        writer.writerow(
            [t.node_id, t.blocks_won, repr(t.stake_probability), repr(share), repr(t.rewards),
             repr(t.on_chain_spend), repr(t.off_chain_cost), repr(t.net)]
        )
    _write(out_dir / f"rewards_{cfg.seed}.csv", buf.getvalue())
    return EXIT_OK


def cmd_experiment(cfg: RunConfig) -> int:
    spec = cfg.experiment_spec()
    table = run_experiment(spec)
    paths = table.write(cfg.output_dir, spec.kind, spec.seed)
    log.info("wrote %s", ", ".join(map(str, paths)))
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "chain": cmd_chain, "experiment": cmd_experiment}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.seed, args.out)
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (GameError, LedgerError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
