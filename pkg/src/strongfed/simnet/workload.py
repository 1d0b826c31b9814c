"""Simulated users: wallets on both chains and the transactions they make."""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Callable

from strongfed.crypto.authproof import authorize_key
from strongfed.crypto.group import Scalar, base_mul, hash_to_scalar
from strongfed.crypto.schnorr import Keypair, keypair_generate
from strongfed.ledger.assets import asset_issue
from strongfed.ledger.script import KeyLock, PegLock
from strongfed.ledger.tx import PEGGED_ASSET, OutPoint, Transaction, TxOutput
from strongfed.ledger.wallet import Coin, Payment, WalletError, build_transfer, sign_inputs
from strongfed.peg.ops import PegError, pegin_create, pegout_build

MAIN = "main"
SIDE = "side"


@dataclass
class User:
    index: int
    key: Keypair  # spends on both chains
    online: Keypair  # P_i
    offline: Keypair  # Q_i
    side: list[Coin] = field(default_factory=list)
    main: list[Coin] = field(default_factory=list)


class Users:
    """Wallet bookkeeping for every simulated user.

    Coins enter a wallet when the paying transaction is built (or observed,
    for mints and withdrawals) and become spendable once ``confirmed`` says
    their transaction is on the relevant chain.  A coin leaves the wallet as
    soon as a transaction spending it is built.
    """

    def __init__(self, seed: int, count: int, confirmed: Callable[[str, bytes], bool]) -> None:
        self.seed = seed
        self.users = [
            User(
                i,
                keypair_generate(f"{seed}/user/{i}"),
                keypair_generate(f"{seed}/user/{i}/online"),
                keypair_generate(f"{seed}/user/{i}/offline"),
            )
            for i in range(count)
        ]
        self.owners: dict = {u.key.public: (u.index, u.key) for u in self.users}
        self.confirmed = confirmed
        self.counter = 0
        self.seen: set[tuple[str, OutPoint]] = set()

    @property
    def all_P(self):
        return tuple(u.online.public for u in self.users)

    @property
    def all_Q(self):
        return tuple(u.offline.public for u in self.users)

    def _salt(self) -> bytes:
        self.counter += 1
        return self.counter.to_bytes(8, "little")

    # -- coin tracking ---------------------------------------------------------

    def adopt(self, chain: str, tx: Transaction, openings=None) -> None:
        """Add every output of ``tx`` paying a known key (once per outpoint)."""
        for i, o in enumerate(tx.outputs):
            if not isinstance(o.condition, KeyLock) or o.condition.key not in self.owners:
                continue
            idx, kp = self.owners[o.condition.key]
            if isinstance(o.amount, int):
                value, blinder = o.amount, Scalar(0)
            elif openings is not None:
                value, blinder = openings[i]
            else:
                continue
            op = OutPoint(tx.txid, i)
            if (chain, op) in self.seen:
                continue
            self.seen.add((chain, op))
            coin = Coin(op, TxOutput(tx.asset_of(o), o.amount, o.condition), value, blinder, kp)
            (self.users[idx].side if chain == SIDE else self.users[idx].main).append(coin)

    def available(self, user: int, chain: str, asset: bytes | None = None) -> list[Coin]:
        coins = self.users[user].side if chain == SIDE else self.users[user].main
        return [c for c in coins if (asset is None or c.asset == asset) and self.confirmed(chain, c.outpoint.txid)]

    def balance(self, user: int, chain: str, asset: bytes) -> int:
        return sum(c.value for c in self.available(user, chain, asset))

    def assets_held(self, user: int, chain: str = SIDE) -> list[bytes]:
        return sorted({c.asset for c in self.available(user, chain)})

    def _take(self, user: int, chain: str, coins: list[Coin]) -> None:
        u = self.users[user]
        drop = {c.outpoint for c in coins}
        if chain == SIDE:
            u.side = [c for c in u.side if c.outpoint not in drop]
        else:
            u.main = [c for c in u.main if c.outpoint not in drop]

    def _pick(self, user: int, chain: str, asset: bytes, amount: int) -> list[Coin] | None:
        chosen, total = [], 0
        for c in self.available(user, chain, asset):
            chosen.append(c)
            total += c.value
            if total >= amount:
                return chosen
        return None

    # -- operations --------------------------------------------------------------

    def transfer(self, rng: random.Random, user: int, chain: str, confidential: bool, amount_max: int) -> Transaction | None:
        assets = [a for a in self.assets_held(user, chain) if self.balance(user, chain, a) > 0]
        if not assets or len(self.users) < 2:
            return None
        asset = rng.choice(assets)
        bal = self.balance(user, chain, asset)
        amount = rng.randint(1, min(bal, amount_max))
        coins = self._pick(user, chain, asset, amount)
        to = rng.choice([u for u in range(len(self.users)) if u != user])
        have = sum(c.value for c in coins)
        conf = confidential and chain == SIDE
        conf_in = any(not c.blinder.is_zero() for c in coins)
        payments = [Payment(asset, amount, KeyLock(self.users[to].key.public), conf)]
        if have > amount or (conf_in and not conf):
            payments.append(Payment(asset, have - amount, KeyLock(self.users[user].key.public), conf or conf_in))
        try:
            tx, openings = build_transfer(coins, payments, salt=self._salt())
        except WalletError:
            return None
        tx = sign_inputs(tx, coins)
        self._take(user, chain, coins)
        self.adopt(chain, tx, openings)
        return tx

    def swap(self, rng: random.Random, a: int, b: int, confidential: bool, amount_max: int) -> Transaction | None:
        """Atomic exchange of two different assets between users ``a`` and ``b``."""
        held_a = [x for x in self.assets_held(a) if self.balance(a, SIDE, x) > 0]
        held_b = [x for x in self.assets_held(b) if self.balance(b, SIDE, x) > 0]
        pairs = [(x, y) for x in held_a for y in held_b if x != y]
        if not pairs:
            return None
        xa, xb = rng.choice(pairs)
        va = rng.randint(1, min(self.balance(a, SIDE, xa), amount_max))
        vb = rng.randint(1, min(self.balance(b, SIDE, xb), amount_max))
        ca, cb = self._pick(a, SIDE, xa, va), self._pick(b, SIDE, xb, vb)
        ka, kb = self.users[a].key.public, self.users[b].key.public
        payments = [Payment(xa, va, KeyLock(kb), confidential), Payment(xb, vb, KeyLock(ka), confidential)]
        for coins, asset, value, owner in ((ca, xa, va, ka), (cb, xb, vb, kb)):
            rest = sum(c.value for c in coins) - value
            conf_in = any(not c.blinder.is_zero() for c in coins)
            if rest or (conf_in and not confidential):
                payments.append(Payment(asset, rest, KeyLock(owner), confidential or conf_in))
        try:
            tx, openings = build_transfer(ca + cb, payments, salt=self._salt())
        except WalletError:
            return None
        tx = sign_inputs(tx, ca + cb)
        self._take(a, SIDE, ca)
        self._take(b, SIDE, cb)
        self.adopt(SIDE, tx, openings)
        return tx

    def issue(self, user: int, amount: int) -> Transaction:
        tx = asset_issue(self.users[user].key, amount, entropy=hash_to_scalar(b"strongfed/sim-issue", self._salt()).to_bytes())
        self.adopt(SIDE, tx)
        return tx

    def pegin(self, rng: random.Random, user: int, lock: PegLock, amount_max: int, destination: bytes | None = None) -> Transaction | None:
        bal = self.balance(user, MAIN, PEGGED_ASSET)
        if bal <= 0:
            return None
        amount = rng.randint(1, min(bal, amount_max))
        coins = self._pick(user, MAIN, PEGGED_ASSET, amount)
        dest = self.users[user].key.public.to_bytes() if destination is None else destination
        try:
            tx = pegin_create(coins, amount, dest, lock, nonce=self.counter)
        except PegError:
            return None
        self._salt()
        self._take(user, MAIN, coins)
        self.adopt(MAIN, tx)
        return tx

    def pegout(self, rng: random.Random, user: int, amount_max: int) -> Transaction | None:
        bal = self.balance(user, SIDE, PEGGED_ASSET)
        if bal <= 0:
            return None
        amount = rng.randint(1, min(bal, amount_max))
        coins = self._pick(user, SIDE, PEGGED_ASSET, amount)
        u = self.users[user]
        salt = self._salt()
        # fresh withdrawal key w; the offline key contributes w + q_i
        w = hash_to_scalar(b"strongfed/sim-withdraw", self.seed.to_bytes(8, "little"), salt)
        W = Keypair.from_secret(w)
        proof = authorize_key(user, u.online.secret, w + u.offline.secret, W.public, self.all_P, self.all_Q)
        tx, openings = pegout_build(coins, amount, W.public, proof, self.all_P, self.all_Q, salt=salt)
        self.owners[W.public] = (user, W)
        self._take(user, SIDE, coins)
        self.adopt(SIDE, tx, openings)
        return tx

    def garbage_pegout(self, rng: random.Random, user: int, amount_max: int) -> tuple[Transaction, bytes] | None:
        """Peg-out to ``W = t·G - Q_i`` signed with the online key alone.

        The proof verifies, but nobody knows the discrete log of ``W``.
        Returns the request and ``t`` (the only extra secret the user holds).
        """
        bal = self.balance(user, SIDE, PEGGED_ASSET)
        if bal <= 0:
            return None
        amount = rng.randint(1, min(bal, amount_max))
        coins = self._pick(user, SIDE, PEGGED_ASSET, amount)
        u = self.users[user]
        salt = self._salt()
        t = hash_to_scalar(b"strongfed/sim-garbage", self.seed.to_bytes(8, "little"), salt)
        W = base_mul(t) - u.offline.public
        proof = authorize_key(user, u.online.secret, t, W, self.all_P, self.all_Q)
        tx, openings = pegout_build(coins, amount, W, proof, self.all_P, self.all_Q, salt=salt)
        self._take(user, SIDE, coins)
        self.adopt(SIDE, tx, openings)
        return tx, t.to_bytes()

    def genesis_outputs(self, asset: bytes, amount: int) -> list[TxOutput]:
        if amount <= 0:
            return []
        return [TxOutput(asset, amount, KeyLock(u.key.public)) for u in self.users]
