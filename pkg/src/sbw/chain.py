"""Ledger simulation: contracts, escrowed purchases, contribution-weighted leader election.

Token amounts are held as integers in base units (``TOKEN_SCALE`` per token)
so conservation checks are exact. Leader rewards are minted; contract payouts
move tokens from the node to the shared ``escrow`` account on submission and
from escrow to the user when the transaction is sealed into a block.
"""

from __future__ import annotations

import hashlib
import json
import math
from collections import deque
from dataclasses import asdict, dataclass, replace
from typing import Iterable, Mapping

import numpy as np

from . import kernels
from .game import DegenerateProfileError, GameConfig, leader_probability
from .rng import check_seed, hashed_uniform
from .solver import EquilibriumResult

TOKEN_SCALE = 10**9
ESCROW = "escrow"
ZERO_DIGEST = "0" * 64
DEFAULT_EPOCH_WINDOW = 100

PENDING = "pending"
CONFIRMED = "confirmed"
REJECTED = "rejected"


class LedgerError(Exception):
    pass


class InvalidTransaction(LedgerError):
    pass


def to_units(tokens: float) -> int:
    return int(round(tokens * TOKEN_SCALE))


def to_tokens(units: int) -> float:
    return units / TOKEN_SCALE


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False, allow_nan=False)


def digest(obj) -> str:
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()


def payload_digest(payload: str) -> str:
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class SmartContract:
    contract_id: str
    node_id: str
    user_id: str
    unit_price: float


@dataclass(frozen=True)
class PurchaseTransaction:
    tx_id: str
    contract_id: str
    quantity: float
    info_digest: str
    escrow_units: int
    seq: int
    status: str = PENDING

    def content_digest(self) -> str:
        return digest([self.contract_id, self.quantity, self.info_digest, self.escrow_units, self.seq])


@dataclass(frozen=True)
class Block:
    height: int
    parent_digest: str
    leader_id: str | None
    transactions: tuple[str, ...]
    block_digest: str

    @staticmethod
    def compute_digest(height, parent_digest, leader_id, transactions) -> str:
        return digest([height, parent_digest, leader_id, list(transactions)])

    def to_dict(self) -> dict:
        return {
            "height": self.height,
            "parent_digest": self.parent_digest,
            "leader_id": self.leader_id,
            "transactions": list(self.transactions),
            "block_digest": self.block_digest,
        }


class Ledger:
    """Single-writer ledger state machine.

    ``epoch_window`` is the number of most recent blocks whose confirmed
    quantities form each node's stake; ``None`` accumulates over all blocks.
    """

    def __init__(
        self,
        nodes: Iterable[str],
        users: Iterable[str],
        block_reward: float,
        initial_balances: Mapping[str, float] | None = None,
        epoch_window: int | None = DEFAULT_EPOCH_WINDOW,
    ):
        self.nodes = list(nodes)
        self.users = list(users)
        if not self.nodes:
            raise LedgerError("ledger needs at least one node")
        parties = self.nodes + self.users
        if len(set(parties)) != len(parties) or ESCROW in parties:
            raise LedgerError("party identifiers must be unique and must not be 'escrow'")
        if not block_reward > 0:
            raise LedgerError("block reward must be positive")
        if epoch_window is not None and epoch_window < 1:
            raise LedgerError("epoch_window must be positive or None")
        self.block_reward = float(block_reward)
        self.reward_units = to_units(block_reward)
        self.epoch_window = epoch_window

        initial_balances = dict(initial_balances or {})
        unknown = set(initial_balances) - set(parties)
        if unknown:
            raise LedgerError(f"initial balance for unknown parties: {sorted(unknown)}")
        self.initial_balances = {p: to_units(initial_balances.get(p, 0.0)) for p in parties}
        if any(v < 0 for v in self.initial_balances.values()):
            raise LedgerError("initial balances must be non-negative")
        self.balances: dict[str, int] = dict(self.initial_balances)
        self.balances[ESCROW] = 0
        self.initial_supply = sum(self.balances.values())

        self.contracts: dict[str, SmartContract] = {}
        self._pair_index: dict[tuple[str, str], str] = {}
        self.transactions: dict[str, PurchaseTransaction] = {}
        self.pending: list[str] = []
        self.website: dict[str, str] = {}
        self._tx_seq = 0

        genesis_digest = Block.compute_digest(0, ZERO_DIGEST, None, ())
        self.blocks: list[Block] = [Block(0, ZERO_DIGEST, None, (), genesis_digest)]
        # (height, {node: quantity}) for blocks that confirmed something
        self._contrib_log: deque[tuple[int, dict[str, float]]] = deque()
        self._epoch_cache: dict[str, float] | None = None

    # -- queries --------------------------------------------------------

    @property
    def height(self) -> int:
        return self.blocks[-1].height

    def balance(self, party: str) -> float:
        return to_tokens(self.balances[party])

    def total_supply_units(self) -> int:
        return sum(self.balances.values())

    def minted_units(self) -> int:
        return self.reward_units * (len(self.blocks) - 1)

    def conservation_drift(self) -> int:
        """Zero when the supply equals the initial supply plus minted rewards (base units)."""
        return self.total_supply_units() - self.initial_supply - self.minted_units()

    def contract_for(self, node_id: str, user_id: str) -> SmartContract | None:
        cid = self._pair_index.get((node_id, user_id))
        return None if cid is None else self.contracts[cid]

    @property
    def epoch_contributions(self) -> dict[str, float]:
        if self._epoch_cache is None:
            self._expire_contributions()
            per_node: dict[str, list[float]] = {n: [] for n in self.nodes}
            for _, contrib in self._contrib_log:
                for node, q in contrib.items():
                    per_node[node].append(q)
            self._epoch_cache = {n: math.fsum(v) for n, v in per_node.items()}
        return dict(self._epoch_cache)

    def _expire_contributions(self) -> None:
        if self.epoch_window is None:
            return
        oldest = self.height - self.epoch_window + 1
        while self._contrib_log and self._contrib_log[0][0] < oldest:
            self._contrib_log.popleft()

    # -- transitions ----------------------------------------------------

    def create_contract(self, node_id: str, user_id: str, unit_price: float) -> str:
        if node_id not in self.nodes:
            raise LedgerError(f"unknown node {node_id!r}")
        if user_id not in self.users:
            raise LedgerError(f"unknown user {user_id!r}")
        if not (unit_price > 0 and math.isfinite(unit_price)):
            raise LedgerError(f"unit price must be positive, got {unit_price}")
        if (node_id, user_id) in self._pair_index:
            raise LedgerError(f"contract already active for ({node_id}, {user_id})")
        cid = f"C{len(self.contracts):06d}"
        self.contracts[cid] = SmartContract(cid, node_id, user_id, float(unit_price))
        self._pair_index[(node_id, user_id)] = cid
        return cid

    def submit_purchase(self, contract_id: str, quantity: float, info_digest: str) -> str:
        """Escrow the payment for ``quantity`` units and queue the transaction."""
        contract = self.contracts.get(contract_id)
        if contract is None:
            raise LedgerError(f"unknown contract {contract_id!r}")
        if not (quantity > 0 and math.isfinite(quantity)):
            raise InvalidTransaction(f"invalid transaction: quantity must be positive, got {quantity}")
        amount = to_units(quantity * contract.unit_price)
        if self.balances[contract.node_id] < amount:
            raise InvalidTransaction(
                f"invalid transaction: insufficient balance for {contract.node_id} "
                f"({self.balance(contract.node_id)} < {to_tokens(amount)})"
            )
        tx = PurchaseTransaction("", contract_id, float(quantity), info_digest, amount, self._tx_seq)
        tx = replace(tx, tx_id=tx.content_digest())
        self._tx_seq += 1
        self.balances[contract.node_id] -= amount
        self.balances[ESCROW] += amount
        self.transactions[tx.tx_id] = tx
        self.pending.append(tx.tx_id)
        return tx.tx_id

    def stakes(self) -> np.ndarray:
        contrib = self.epoch_contributions
        return np.array([contrib[n] for n in self.nodes])

    def election_uniform(self, rng_seed: int, height: int | None = None) -> float:
        h = self.height + 1 if height is None else height
        return hashed_uniform(rng_seed, "election", h)

    def elect_leader(self, rng_seed: int, stakes=None) -> str:
        """Pick the next leader with probability proportional to stake.

        Raises ``DegenerateProfileError`` if every stake is zero.
        """
        weights = self.stakes() if stakes is None else np.asarray(stakes, dtype=np.float64)
        leader_probability(weights)  # validates, raises on all-zero
        u = self.election_uniform(rng_seed)
        idx = kernels.draw_indices(np.cumsum(weights), np.array([u]))[0]
        return self.nodes[int(idx)]

    def seal_block(self, rng_seed: int, stakes=None, allow_empty: bool = False) -> Block:
        """Elect a leader, confirm every pending purchase and pay out its escrow.

        While no node has stake (the first epoch) the leader is drawn uniformly.
        """
        check_seed(rng_seed)
        if not self.pending and not allow_empty:
            raise LedgerError("empty block refused")
        try:
            leader = self.elect_leader(rng_seed, stakes)
        except DegenerateProfileError:
            u = self.election_uniform(rng_seed)
            leader = self.nodes[min(int(u * len(self.nodes)), len(self.nodes) - 1)]
        return self._append_block(leader)

    def _append_block(self, leader: str) -> Block:
        if leader not in self.nodes:
            raise LedgerError(f"leader {leader!r} is not a node")
        height = self.height + 1
        confirmed = tuple(self.pending)
        contrib: dict[str, float] = {}
        for tx_id in confirmed:
            tx = self.transactions[tx_id]
            contract = self.contracts[tx.contract_id]
            if self.balances[ESCROW] < tx.escrow_units:
                raise LedgerError(f"escrow underflow releasing {tx_id}")
            self.balances[ESCROW] -= tx.escrow_units
            self.balances[contract.user_id] += tx.escrow_units
            self.transactions[tx_id] = replace(tx, status=CONFIRMED)
            self.website[f"{contract.user_id}/{tx_id}"] = tx.info_digest
            contrib[contract.node_id] = contrib.get(contract.node_id, 0.0) + tx.quantity
        self.pending = []
        self.balances[leader] += self.reward_units
        block = Block(
            height,
            self.blocks[-1].block_digest,
            leader,
            confirmed,
            Block.compute_digest(height, self.blocks[-1].block_digest, leader, confirmed),
        )
        self.blocks.append(block)
        if contrib:
            self._contrib_log.append((height, contrib))
        self._epoch_cache = None
        return block

    # -- integrity ------------------------------------------------------

    def verify_chain(self) -> bool:
        """Recompute every transaction id and block digest and check the parent links."""
        prev = ZERO_DIGEST
        for expected_height, block in enumerate(self.blocks):
            if block.height != expected_height or block.parent_digest != prev:
                return False
            if Block.compute_digest(block.height, block.parent_digest, block.leader_id, block.transactions) != block.block_digest:
                return False
            for tx_id in block.transactions:
                tx = self.transactions.get(tx_id)
                if tx is None or tx.status != CONFIRMED or tx.content_digest() != tx_id:
                    return False
            prev = block.block_digest
        for tx_id in self.pending:
            tx = self.transactions.get(tx_id)
            if tx is None or tx.status != PENDING or tx.content_digest() != tx_id:
                return False
        return True

    def escrow_consistent(self) -> bool:
        """Escrow holds exactly the payments of pending transactions."""
        held = sum(self.transactions[t].escrow_units for t in self.pending)
        return held == self.balances[ESCROW]

    # -- serialization --------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "genesis": {
                "nodes": self.nodes,
                "users": self.users,
                "block_reward": self.block_reward,
                "epoch_window": self.epoch_window,
                "initial_balances": self.initial_balances,
            },
            "token_scale": TOKEN_SCALE,
            "blocks": [b.to_dict() for b in self.blocks],
            "balances": self.balances,
            "contracts": {cid: asdict(c) for cid, c in self.contracts.items()},
            "transactions": {tid: asdict(t) for tid, t in self.transactions.items()},
            "pending": self.pending,
            "website": self.website,
            "epoch_contributions": self.epoch_contributions,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1, ensure_ascii=False, allow_nan=False) + "\n"

    @classmethod
    def replay(cls, data: Mapping) -> "Ledger":
        """Rebuild a ledger from genesis by re-applying an exported block log.

        Raises ``LedgerError`` if any recomputed digest disagrees with the log.
        """
        if data.get("token_scale", TOKEN_SCALE) != TOKEN_SCALE:
            raise LedgerError("token scale mismatch")
        g = data["genesis"]
        ledger = cls(g["nodes"], g["users"], g["block_reward"], epoch_window=g["epoch_window"])
        ledger.initial_balances = {p: int(v) for p, v in g["initial_balances"].items()}
        ledger.balances = dict(ledger.initial_balances)
        ledger.balances[ESCROW] = 0
        ledger.initial_supply = sum(ledger.balances.values())

        for cid in sorted(data["contracts"]):
            c = data["contracts"][cid]
            if ledger.create_contract(c["node_id"], c["user_id"], c["unit_price"]) != cid:
                raise LedgerError(f"contract id mismatch at {cid}")
        txs = data["transactions"]

        def resubmit(tx_id):
            t = txs[tx_id]
            new_id = ledger.submit_purchase(t["contract_id"], t["quantity"], t["info_digest"])
            if new_id != tx_id:
                raise LedgerError(f"transaction digest mismatch at {tx_id}")

        for b in data["blocks"][1:]:
            for tx_id in b["transactions"]:
                resubmit(tx_id)
            block = ledger._append_block(b["leader_id"])
            if block.block_digest != b["block_digest"]:
                raise LedgerError(f"block digest mismatch at height {b['height']}")
        for tx_id in data["pending"]:
            resubmit(tx_id)
        return ledger

    @classmethod
    def from_json(cls, text: str) -> "Ledger":
        return cls.replay(json.loads(text))


def node_ids(n: int) -> list[str]:
    return [f"n{i}" for i in range(n)]


def user_ids(m: int) -> list[str]:
    return [f"u{j}" for j in range(m)]


def provision_contracts(ledger: Ledger, config: GameConfig, price_share: float = 1.0, profile=None) -> list[str]:
    """One contract per node/user pair (or per pair with a positive purchase in ``profile``).

    The on-chain unit price is ``price_share * C[n, m]``; the rest of the cost
    is the off-chain transmission share and never touches balances.
    """
    if not 0 < price_share <= 1:
        raise LedgerError(f"contracts_price_share must be in (0, 1], got {price_share}")
    created = []
    for n, node in enumerate(ledger.nodes):
        for m, user in enumerate(ledger.users):
            if profile is not None and profile.purchases[n, m] <= 0:
                continue
            if ledger.contract_for(node, user) is None:
                created.append(ledger.create_contract(node, user, price_share * float(config.costs[n, m])))
    return created


@dataclass(frozen=True)
class NodeTally:
    node_id: str
    blocks_won: int
    rewards: float
    on_chain_spend: float
    off_chain_cost: float
    stake_probability: float

    @property
    def net(self) -> float:
        return self.rewards - self.on_chain_spend - self.off_chain_cost


def run_epoch(
    ledger: Ledger,
    config: GameConfig,
    equilibrium: EquilibriumResult,
    contracts_price_share: float,
    rounds: int,
    rng_seed: int,
) -> list[NodeTally]:
    """Submit the equilibrium purchases, then seal ``rounds`` blocks.

    Every round elects its leader from the equilibrium totals. The first block
    confirms the purchases; later rounds seal reward-only blocks.
    """
    check_seed(rng_seed)
    if rounds < 0:
        raise LedgerError("rounds must be non-negative")
    profile = equilibrium.profile
    if profile.shape != (len(ledger.nodes), len(ledger.users)):
        raise LedgerError("equilibrium profile does not match ledger parties")
    if not profile.is_feasible(config):
        raise LedgerError("equilibrium profile is infeasible")

    spend = {n: 0 for n in ledger.nodes}
    off_chain = {n: 0.0 for n in ledger.nodes}
    for n, node in enumerate(ledger.nodes):
        for m, user in enumerate(ledger.users):
            q = float(profile.purchases[n, m])
            if q <= 0:
                continue
            contract = ledger.contract_for(node, user)
            if contract is None:
                raise LedgerError(f"step 0 (contract lookup): missing contract for ({node}, {user})")
            payload = payload_digest(f"{node}|{user}|{ledger.height}|{q!r}")
            try:
                tx_id = ledger.submit_purchase(contract.contract_id, q, payload)
            except LedgerError as exc:
                raise type(exc)(f"step 2 (broadcast purchase): {exc}") from None
            spend[node] += ledger.transactions[tx_id].escrow_units
            off_chain[node] += (1.0 - contracts_price_share) * float(config.costs[n, m]) * q

    stakes = profile.totals()
    probs = leader_probability(stakes)
    wins = {n: 0 for n in ledger.nodes}
    for _ in range(rounds):
        block = ledger.seal_block(rng_seed, stakes=stakes, allow_empty=True)
        wins[block.leader_id] += 1
    return [
        NodeTally(
            node,
            wins[node],
            to_tokens(wins[node] * ledger.reward_units),
            to_tokens(spend[node]),
            off_chain[node],
            float(probs[n]),
        )
        for n, node in enumerate(ledger.nodes)
    ]
