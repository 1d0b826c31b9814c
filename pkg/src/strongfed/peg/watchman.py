"""Watchman actors: mint matured peg-ins and co-sign withdrawals.

A watchman is driven by the simulator through ``tick`` (periodic work) and
``receive`` (messages from other watchmen).  Both return output records and
leave every chain object untouched.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

from strongfed.crypto.group import GroupElement, Scalar
from strongfed.crypto.schnorr import verify
from strongfed.ledger.mainchain import MainChain
from strongfed.ledger.script import KeyLock, PegLock, Unspendable, sighash
from strongfed.ledger.state import ChainState
from strongfed.ledger.tx import PEGGED_ASSET, OutPoint, Transaction, TxOutput
from strongfed.peg.ops import (
    RequestInfo,
    attach_signatures,
    build_withdrawal,
    check_withdrawal,
    confiscation_transaction,
    decode_memo,
    lock_utxos,
    paid_requests,
    pegin_process,
    sign_withdrawal,
)

HONEST = "honest"
COMPROMISED = "compromised"


@dataclass(frozen=True)
class WithdrawalProposal:
    kind = "withdrawal-proposal"
    proposer: int
    tx: Transaction


@dataclass(frozen=True)
class WithdrawalSig:
    kind = "withdrawal-sig"
    signer: int
    txid: bytes
    sig: bytes


@dataclass(frozen=True)
class SubmitSide:
    tx: Transaction


@dataclass(frozen=True)
class SubmitMain:
    tx: Transaction


@dataclass(frozen=True)
class WatchBroadcast:
    msg: object


@dataclass(frozen=True)
class WatchLog:
    kind: str
    data: dict


@dataclass
class PegView:
    """What a watchman can see when it acts."""

    now_ms: int
    main: MainChain
    side: ChainState
    side_tx: Callable[[bytes], Transaction | None]


@dataclass
class Watchman:
    id: int
    secret: Scalar
    keys: tuple[GroupElement, ...]
    threshold: int
    lock: PegLock
    depth: int
    members_P: tuple[GroupElement, ...]
    members_Q: tuple[GroupElement, ...]
    interval_ms: int = 30_000
    behavior: str = HONEST
    attacker: GroupElement | None = None
    minted: set[OutPoint] = field(default_factory=set)
    # request -> txids of withdrawals this watchman signed that cover it
    reserved: dict[OutPoint, set[bytes]] = field(default_factory=dict)
    signed: dict[bytes, Transaction] = field(default_factory=dict)
    sigs: dict[bytes, dict[int, bytes]] = field(default_factory=dict)
    proposals: dict[bytes, Transaction] = field(default_factory=dict)
    submitted: set[bytes] = field(default_factory=set)

    # -- helpers -------------------------------------------------------------

    def leader(self, now_ms: int) -> int:
        return (now_ms // self.interval_ms) % len(self.keys)

    def _requests(self, view: PegView) -> dict[OutPoint, RequestInfo]:
        out = {}
        for r in view.side.pegouts:
            tx = view.side_tx(r.burn.txid)
            proof = tx.pegout.proof if tx is not None and tx.pegout is not None else None
            out[r.burn] = RequestInfo(r, proof)
        return out

    def _still_possible(self, txid: bytes, mstate: ChainState) -> bool:
        tx = self.signed.get(txid)
        return tx is not None and all(i.prevout in mstate.utxos for i in tx.inputs)

    def _policy(self, tx: Transaction, view: PegView) -> str | None:
        mstate = view.main.state_at(view.now_ms)
        paid = paid_requests(view.main, self.lock, view.now_ms)
        reason = check_withdrawal(tx, self._requests(view), mstate, self.lock, self.members_P, self.members_Q, paid)
        if reason is not None:
            return reason
        ins = {i.prevout for i in tx.inputs}
        # never cover a request twice unless the withdrawals conflict on inputs
        for op in self._covered(tx):
            for other in self.reserved.get(op, ()):
                if other == tx.txid or not self._still_possible(other, mstate):
                    continue
                if not ins & {i.prevout for i in self.signed[other].inputs}:
                    return "request reserved by a pending withdrawal"
        return None

    @staticmethod
    def _covered(tx: Transaction) -> list[OutPoint]:
        for o in tx.outputs:
            if isinstance(o.condition, Unspendable):
                return decode_memo(o.condition.data) or []
        return []

    def _sign(self, tx: Transaction) -> list:
        sig = sign_withdrawal(tx, self.id, self.secret)
        self.signed[tx.txid] = tx
        for op in self._covered(tx):
            self.reserved.setdefault(op, set()).add(tx.txid)
        out = [WatchBroadcast(WithdrawalSig(self.id, tx.txid, sig))]
        out += self._collect(tx.txid, self.id, sig)
        return out

    def _collect(self, txid: bytes, signer: int, sig: bytes) -> list:
        self.sigs.setdefault(txid, {})[signer] = sig
        tx = self.proposals.get(txid)
        have = self.sigs[txid]
        if tx is None or txid in self.submitted or len(have) < self.threshold:
            return []
        self.submitted.add(txid)
        chosen = dict(sorted(have.items())[: self.threshold])
        return [SubmitMain(attach_signatures(tx, chosen)), WatchLog("withdrawal-submit", {"txid": txid.hex()})]

    # -- entry points ----------------------------------------------------------

    def tick(self, view: PegView) -> list:
        out: list = []
        for mint in pegin_process(view.main, view.side, self.lock, self.depth, view.now_ms, self.minted):
            out.append(SubmitSide(mint))
        if self.leader(view.now_ms) != self.id:
            return out
        mstate = view.main.state_at(view.now_ms)
        utxos = lock_utxos(mstate, self.lock)
        if self.behavior == COMPROMISED and self.attacker is not None:
            tx = self._malicious(view, utxos)
        else:
            paid = paid_requests(view.main, self.lock, view.now_ms)
            todo = [r for r in view.side.pegouts if r.burn not in paid]
            tx = build_withdrawal(todo, utxos, self.lock)
        if tx is None:
            return out
        out.append(WatchLog("withdrawal-propose", {"txid": tx.txid.hex(), "outputs": len(tx.outputs)}))
        out.append(WatchBroadcast(WithdrawalProposal(self.id, tx)))
        out += self.receive(WithdrawalProposal(self.id, tx), view)
        return out

    def _malicious(self, view: PegView, utxos) -> Transaction | None:
        if not utxos:
            return None
        paid = paid_requests(view.main, self.lock, view.now_ms)
        todo = [r for r in view.side.pegouts if r.burn not in paid]
        if todo:
            extra = (TxOutput(PEGGED_ASSET, 1, KeyLock(self.attacker)),)
            return build_withdrawal(todo, utxos, self.lock, extra_outputs=extra)
        return confiscation_transaction(utxos, self.attacker, ())

    def receive(self, msg: object, view: PegView) -> list:
        if isinstance(msg, WithdrawalProposal):
            tx = msg.tx
            self.proposals[tx.txid] = tx
            if tx.txid in self.signed:
                sig = sign_withdrawal(tx, self.id, self.secret)
                return [WatchBroadcast(WithdrawalSig(self.id, tx.txid, sig))] + self._collect(tx.txid, self.id, sig)
            if self.behavior == COMPROMISED:
                return self._sign(tx)
            reason = self._policy(tx, view)
            if reason is not None:
                return [WatchLog("withdrawal-refuse", {"txid": tx.txid.hex(), "reason": reason})]
            return self._sign(tx)
        if isinstance(msg, WithdrawalSig):
            if not 0 <= msg.signer < len(self.keys):
                return []
            if not verify(self.keys[msg.signer], sighash(msg.txid), msg.sig):
                return []
            return self._collect(msg.txid, msg.signer, msg.sig)
        return []


def make_watchmen(
    secrets: Sequence[Scalar],
    threshold: int,
    lock: PegLock,
    depth: int,
    members_P: Sequence[GroupElement],
    members_Q: Sequence[GroupElement],
    interval_ms: int = 30_000,
) -> list[Watchman]:
    keys = tuple(lock.keys)
    return [
        Watchman(i, s, keys, threshold, lock, depth, tuple(members_P), tuple(members_Q), interval_ms)
        for i, s in enumerate(secrets)
    ]
