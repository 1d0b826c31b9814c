"""Parent-chain models.

Two pieces live here.  ``MainChain`` is a linear proof-of-work ledger with a
mempool, used by the simulator to hold peg locks and withdrawals.  The
block-timing helpers (``mainchain_extend`` and ``mainchain_race``) model
exponential inter-block times and the orphaning that competing miners cause.
"""

from __future__ import annotations

import bisect
import random
from dataclasses import dataclass, field
from typing import Sequence

from strongfed.ledger.block import Block, BlockHeader, block_merkle_root, solve_work
from strongfed.ledger.script import PegLock
from strongfed.ledger.state import (
    ChainRules,
    ChainState,
    ValidationResult,
    block_apply,
    genesis,
    tx_validate,
)
from strongfed.ledger.tx import OutPoint, PeginData, Transaction, TxOutput


@dataclass(frozen=True)
class MainChainClock:
    height: int = 0
    tip_time: float = 0.0


def mainchain_extend(chain: MainChainClock, rng: random.Random, mean_interval: float) -> tuple[MainChainClock, float]:
    """Next block time: the tip time plus an exponential delay."""
    if mean_interval <= 0:
        raise ValueError("mean_interval must be positive")
    t = chain.tip_time + rng.expovariate(1.0 / mean_interval)
    return MainChainClock(chain.height + 1, t), t


@dataclass
class _TreeBlock:
    ident: int
    parent: int
    height: int
    miner: int
    found_at: float


@dataclass
class RaceResult:
    blocks: int
    best_height: int
    orphans: int
    reorgs: int
    block_times: list[float] = field(default_factory=list)


def mainchain_race(
    rng: random.Random,
    n_blocks: int,
    mean_interval: float = 600.0,
    hash_shares: Sequence[float] = (0.5, 0.5),
    propagation_delay: float = 10.0,
) -> RaceResult:
    """Mine ``n_blocks`` with competing miners and a longest-chain rule.

    Each miner extends its own view of the best tip.  A block reaches the
    other miners ``propagation_delay`` seconds after it is found, so two
    blocks found within that window fork the tree.  A miner switches to a
    received tip only if it is strictly higher (first-seen wins ties).
    """
    if n_blocks < 0 or mean_interval <= 0 or not hash_shares:
        raise ValueError("bad race parameters")
    total = float(sum(hash_shares))
    tree = [_TreeBlock(0, -1, 0, -1, 0.0)]
    tips = [0] * len(hash_shares)
    arrivals: list[tuple[float, int, int]] = []  # (time, miner, block)
    t = 0.0
    reorgs = 0

    def is_ancestor(a: int, b: int) -> bool:
        while b != -1 and tree[b].height >= tree[a].height:
            if b == a:
                return True
            b = tree[b].parent
        return False

    def deliver_until(until: float) -> None:
        nonlocal reorgs
        arrivals.sort()
        while arrivals and arrivals[0][0] <= until:
            _, m, b = arrivals.pop(0)
            if tree[b].height > tree[tips[m]].height:
                if not is_ancestor(tips[m], b):
                    reorgs += 1
                tips[m] = b

    for _ in range(n_blocks):
        t += rng.expovariate(1.0 / mean_interval)
        deliver_until(t)
        r = rng.random() * total
        miner = 0
        acc = hash_shares[0]
        while r >= acc and miner < len(hash_shares) - 1:
            miner += 1
            acc += hash_shares[miner]
        parent = tips[miner]
        b = _TreeBlock(len(tree), parent, tree[parent].height + 1, miner, t)
        tree.append(b)
        tips[miner] = b.ident
        for m in range(len(hash_shares)):
            if m != miner:
                arrivals.append((t + propagation_delay, m, b.ident))
    deliver_until(float("inf"))

    best = max(tree, key=lambda b: (b.height, -b.found_at))
    on_best = set()
    cur = best.ident
    while cur != -1:
        on_best.add(cur)
        cur = tree[cur].parent
    orphans = sum(1 for b in tree[1:] if b.ident not in on_best)
    return RaceResult(len(tree) - 1, best.height, orphans, reorgs, [b.found_at for b in tree[1:]])


class MainChain:
    """A single-tip proof-of-work ledger with a mempool.

    Not immutable: the simulator owns one instance and appends to it.  Every
    block is still checked by ``block_apply``.
    """

    def __init__(
        self,
        rules: ChainRules,
        allocations: Sequence[TxOutput] = (),
        genesis_time_ms: int = 0,
    ) -> None:
        self.rules = rules
        state, blk = genesis(rules, allocations, genesis_time_ms, tag=b"main")
        self.state: ChainState = state
        self.blocks: list[Block] = [blk]
        self.states: list[ChainState] = [state]
        self._times: list[int] = [genesis_time_ms]
        self.tx_height: dict[bytes, int] = {t.txid: 0 for t in blk.txs}
        self.txs: dict[bytes, Transaction] = {t.txid: t for t in blk.txs}
        self.mempool: list[Transaction] = []

    @property
    def height(self) -> int:
        return self.state.height

    def submit(self, tx: Transaction, now_ms: int | None = None) -> ValidationResult:
        res = tx_validate(tx, self.state, self.rules, now_ms)
        if res and all(m.txid != tx.txid for m in self.mempool) and tx.txid not in self.tx_height:
            self.mempool.append(tx)
        return res

    def mine(self, time_ms: int, miner: int = 0) -> Block:
        """Build, solve and apply a block from mempool transactions valid in sequence."""
        time_ms = max(time_ms, self.state.timestamp)
        chosen: list[Transaction] = []
        spent: set[OutPoint] = set()
        keep: list[Transaction] = []
        probe = self.state
        for tx in self.mempool:
            ops = {i.prevout for i in tx.inputs}
            if ops & spent:
                continue  # conflicts with an earlier pick; dropped
            if tx_validate(tx, probe, self.rules, time_ms):
                chosen.append(tx)
                spent |= ops
            elif not any(i.prevout in self.state.spent for i in tx.inputs):
                keep.append(tx)  # may become valid later (timelocks)
        txs = tuple(chosen)
        header = BlockHeader(self.height + 1, self.state.tip, block_merkle_root(txs), time_ms, miner)
        blk = Block(header, txs, solve_work(header.digest, miner, self.rules.difficulty_bits))
        self.append(blk)
        self.mempool = [t for t in keep if t.txid not in self.tx_height]
        return blk

    def append(self, blk: Block) -> None:
        self.state = block_apply(self.state, blk, self.rules)
        self.blocks.append(blk)
        self.states.append(self.state)
        self._times.append(blk.header.timestamp)
        for t in blk.txs:
            self.tx_height[t.txid] = blk.height
            self.txs[t.txid] = t

    def height_at(self, time_ms: int) -> int:
        """Tip height among blocks stamped no later than ``time_ms``."""
        return bisect.bisect_right(self._times, time_ms) - 1

    def state_at(self, time_ms: int) -> ChainState:
        return self.states[max(0, self.height_at(time_ms))]

    def confirmations(self, txid: bytes, time_ms: int | None = None) -> int:
        h = self.tx_height.get(txid)
        if h is None:
            return 0
        tip = self.height if time_ms is None else self.height_at(time_ms)
        return max(0, tip - h + 1)


def find_peg_lock(main: MainChain, lock: OutPoint, peg_condition: PegLock) -> PeginData | None:
    """Main-chain peg-in data for ``lock`` if it pays the federation peg lock."""
    tx = main.txs.get(lock.txid)
    if tx is None or tx.pegin is None or lock.index != 0 or not tx.outputs:
        return None
    out = tx.outputs[0]
    if out.condition != peg_condition or out.asset != main.rules.pegged_asset or not isinstance(out.amount, int):
        return None
    if out.amount != tx.pegin.amount:
        return None
    return PeginData(lock, out.amount, tx.pegin.destination)


def pegin_checker(main: MainChain, peg_condition: PegLock, depth: int):
    """Sidechain rule: a claim must match a lock at least ``depth`` blocks deep.

    Depth is measured over main-chain blocks stamped no later than the
    sidechain block, so replaying history gives the same verdict.
    """

    def check(claim: PeginData, now_ms: int) -> bool:
        if claim.lock is None:
            return False
        found = find_peg_lock(main, claim.lock, peg_condition)
        if found is None or found != claim:
            return False
        return main.confirmations(claim.lock.txid, now_ms) >= depth

    return check
