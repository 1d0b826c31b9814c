"""A desk-scale peg: one main chain, one stamped sidechain, synchronous watchmen."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

from strongfed.crypto import Scalar, authorize_key, keypair_generate, sign
from strongfed.ledger import Block, BlockHeader, KeyLock, MainChain, MultisigLock, OutPoint, SignatureStamp, TxOutput, header_message, pegin_checker
from strongfed.ledger.block import block_merkle_root
from strongfed.ledger.state import MAIN, SIDE, BlockRejected, ChainRules, block_apply, genesis, tx_validate
from strongfed.ledger.tx import PEGGED_ASSET
from strongfed.ledger.wallet import Coin, Payment, build_transfer, sign_inputs
from strongfed.peg import federation_peg_lock, make_watchmen, pegin_create, pegin_process, pegout_build
from strongfed.peg.watchman import PegView, SubmitMain, WatchBroadcast, WatchLog, WithdrawalProposal

MAIN_MS = 600_000
SIDE_MS = 60_000
WATCH_MS = 30_000


class DeskReject(Exception):
    pass


@dataclass
class Member:
    index: int
    key: object
    online: object
    offline: object


class PegDesk:
    def __init__(self, n: int = 11, k: int = 8, depth: int = 2, users: int = 3, timelock_ms: int = 86_400_000, tag: str = "desk"):
        self.n, self.k, self.depth = n, k, depth
        self.signers = [keypair_generate(f"{tag}/signer/{i}") for i in range(4)]
        self.watch = [keypair_generate(f"{tag}/watchman/{i}") for i in range(n)]
        self.backup = [keypair_generate(f"{tag}/backup/{i}") for i in range(3)]
        self.members = [
            Member(i, keypair_generate(f"{tag}/u{i}"), keypair_generate(f"{tag}/u{i}/on"), keypair_generate(f"{tag}/u{i}/off"))
            for i in range(users)
        ]
        self.P = tuple(m.online.public for m in self.members)
        self.Q = tuple(m.offline.public for m in self.members)
        self.lock = federation_peg_lock([w.public for w in self.watch], k, [b.public for b in self.backup], 2, timelock_ms)
        self.main = MainChain(ChainRules(MAIN, difficulty_bits=2), [TxOutput(PEGGED_ASSET, 100, KeyLock(m.key.public)) for m in self.members])
        keys = tuple(s.public for s in self.signers)
        self.rules = ChainRules(
            SIDE,
            signer_keys=keys,
            threshold=3,
            members_P=self.P,
            members_Q=self.Q,
            fee_condition=MultisigLock(3, keys),
            pegin_check=pegin_checker(self.main, self.lock, depth),
        )
        self.side, _ = genesis(self.rules, (), 0, tag=b"desk")
        self.side_txs: dict = {}
        self.now = 0
        g = self.main.blocks[0].txs[0]
        self.main_coins = {m.index: self._coin(g, m.index, m.key) for m in self.members}
        self.side_coins: dict[int, Coin] = {}
        self.watchmen = make_watchmen([w.secret for w in self.watch], k, self.lock, depth, self.P, self.Q, WATCH_MS)
        self._nonce = 0

    # -- chains ---------------------------------------------------------------

    @staticmethod
    def _coin(tx, index, owner, opening=None) -> Coin:
        o = tx.outputs[index]
        value, blinder = opening if opening is not None else (o.amount, Scalar(0))
        return Coin(OutPoint(tx.txid, index), TxOutput(tx.asset_of(o), o.amount, o.condition), value, blinder, owner)

    def mine(self, count: int = 1) -> None:
        for _ in range(count):
            self.now += MAIN_MS
            self.main.mine(self.now)

    def submit_main(self, tx) -> None:
        res = self.main.submit(tx, self.now)
        if not res:
            raise DeskReject(f"main: {res.reason} {res.detail}")

    def side_block(self, txs) -> None:
        self.now += SIDE_MS
        for tx in txs:
            res = tx_validate(tx, self.side, self.rules, self.now)
            if not res:
                raise DeskReject(f"side: {res.reason} {res.detail}")
        header = BlockHeader(self.side.height + 1, self.side.tip, block_merkle_root(txs), self.now, 0)
        msg = header_message(header.digest)
        stamp = SignatureStamp(tuple((i, sign(self.signers[i].secret, msg).to_bytes()) for i in range(3)))
        try:
            self.side = block_apply(self.side, Block(header, tuple(txs), stamp), self.rules)
        except BlockRejected as e:  # pragma: no cover
            raise DeskReject(str(e)) from None
        for tx in txs:
            self.side_txs[tx.txid] = tx

    def view(self) -> PegView:
        return PegView(self.now, self.main, self.side, self.side_txs.get)

    # -- peg steps -----------------------------------------------------------------

    def lock_value(self, user: int, amount: int, destination: bytes | None = None):
        m = self.members[user]
        coin = self.main_coins[user]
        dest = m.key.public.to_bytes() if destination is None else destination
        self._nonce += 1
        tx = pegin_create([coin], amount, dest, self.lock, nonce=self._nonce)
        self.submit_main(tx)
        if len(tx.outputs) > 1:
            self.main_coins[user] = self._coin(tx, 1, m.key)
        return tx

    def mint_all(self) -> list:
        mints = pegin_process(self.main, self.side, self.lock, self.depth, self.now)
        if mints:
            self.side_block(mints)
            for tx in mints:
                for m in self.members:
                    if tx.outputs[0].condition == KeyLock(m.key.public):
                        self._merge_side(m.index, tx, 0)
        return mints

    def _merge_side(self, user: int, tx, index: int, opening=None) -> None:
        # one coin per user keeps the bookkeeping trivial
        coin = self._coin(tx, index, self.members[user].key, opening)
        old = self.side_coins.get(user)
        if old is None:
            self.side_coins[user] = coin
            return
        merged, openings = build_transfer([old, coin], [Payment(PEGGED_ASSET, old.value + coin.value, KeyLock(self.members[user].key.public))])
        merged = sign_inputs(merged, [old, coin])
        self.side_block([merged])
        self.side_coins[user] = self._coin(merged, 0, self.members[user].key, openings[0])

    def withdraw_key(self, user: int, label: str = "w"):
        m = self.members[user]
        w = keypair_generate(f"withdraw/{user}/{label}")
        proof = authorize_key(user, m.online.secret, w.secret + m.offline.secret, w.public, self.P, self.Q)
        return w, proof

    def request_pegout(self, user: int, amount: int, label: str = "w"):
        w, proof = self.withdraw_key(user, label)
        coin = self.side_coins[user]
        self._nonce += 1
        tx, openings = pegout_build([coin], amount, w.public, proof, self.P, self.Q, salt=f"po/{self._nonce}".encode())
        self.side_block([tx])
        if len(tx.outputs) > 1:
            self.side_coins[user] = self._coin(tx, 1, self.members[user].key, openings[1])
        else:
            del self.side_coins[user]
        return w, tx

    # -- watchmen --------------------------------------------------------------------

    def to_leader(self, j: int) -> None:
        while self.watchmen[0].leader(self.now) != j:
            self.now += WATCH_MS

    def watch_pass(self, online=None, leader: int = 0, inject=None):
        """One leader tick with synchronous delivery among ``online`` watchmen.

        Returns (submitted main-chain txs, log records).  ``inject`` replaces
        the leader's proposal with a crafted one.
        """
        online = set(range(self.n)) if online is None else set(online)
        self.to_leader(leader)
        view = self.view()
        logs, submitted = [], []
        if inject is not None:
            first = [WatchBroadcast(WithdrawalProposal(leader, inject))]
        else:
            first = self.watchmen[leader].tick(view) if leader in online else []
        queue = deque((leader, o) for o in first)
        while queue:
            src, o = queue.popleft()
            if isinstance(o, WatchBroadcast):
                for w in self.watchmen:
                    if w.id != src and w.id in online:
                        queue.extend((w.id, r) for r in w.receive(o.msg, view))
            elif isinstance(o, SubmitMain):
                submitted.append(o.tx)
            elif isinstance(o, WatchLog):
                logs.append((src, o))
        return submitted, logs
