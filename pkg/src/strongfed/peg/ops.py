"""Peg transactions and the watchman policy, as pure functions."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from strongfed.crypto.authproof import AuthorizationError, AuthorizationProof, authorize_verify
from strongfed.crypto.group import GroupElement, Scalar
from strongfed.encoding import DecodeError, Reader, Writer
from strongfed.ledger.mainchain import MainChain
from strongfed.ledger.script import (
    BRANCH_BACKUP,
    KeyLock,
    MultisigLock,
    PegLock,
    Unspendable,
    make_witness,
)
from strongfed.ledger.state import ChainState, PegoutRequest
from strongfed.ledger.tx import PEGGED_ASSET, OutPoint, PeginData, PegoutData, Transaction, TxInput, TxOutput
from strongfed.ledger.wallet import Coin, Payment, WalletError, build_transfer, sign_inputs

MEMO_TAG = b"strongfed/withdraw"


class PegError(ValueError):
    pass


def federation_peg_lock(
    watch_keys: Sequence[GroupElement],
    threshold: int,
    backup_keys: Sequence[GroupElement],
    backup_threshold: int,
    backup_locktime_ms: int,
) -> PegLock:
    if not 1 <= threshold <= len(watch_keys):
        raise PegError("watchman threshold out of range")
    if not 1 <= backup_threshold <= len(backup_keys):
        raise PegError("backup threshold out of range")
    return PegLock(threshold, tuple(watch_keys), backup_locktime_ms, backup_threshold, tuple(backup_keys))


def backup_condition(lock: PegLock) -> MultisigLock:
    return MultisigLock(lock.backup_threshold, lock.backup_keys)


# --- peg-in -----------------------------------------------------------------


def pegin_create(coins: Sequence[Coin], amount: int, destination: bytes, lock: PegLock, *, nonce: int = 0) -> Transaction:
    """Main-chain transaction freezing ``amount`` under the federation peg lock."""
    if amount <= 0:
        raise PegError("peg-in amount must be positive")
    have = sum(c.value for c in coins if c.asset == PEGGED_ASSET)
    if have < amount:
        raise PegError(f"insufficient funds: have {have}, need {amount}")
    payments = [Payment(PEGGED_ASSET, amount, lock)]
    if have > amount:
        payments.append(Payment(PEGGED_ASSET, have - amount, KeyLock(coins[0].owner.public)))
    tx, _ = build_transfer(coins, payments, nonce=nonce)
    tx = Transaction(tx.inputs, tx.outputs, pegin=PeginData(None, amount, destination), nonce=nonce)
    return sign_inputs(tx, coins)


def destination_key(destination: bytes) -> GroupElement | None:
    try:
        return GroupElement(destination)
    except ValueError:
        return None


def mint_transaction(claim: PeginData) -> Transaction:
    """The sidechain mint for a matured lock; identical for every watchman."""
    key = destination_key(claim.destination)
    if key is None or claim.lock is None:
        raise PegError("claim has no usable destination")
    return Transaction(outputs=(TxOutput(PEGGED_ASSET, claim.amount, KeyLock(key)),), pegin=claim)


def peg_locks(main: MainChain, lock: PegLock, upto_ms: int | None = None) -> list[PeginData]:
    """Every peg-in lock on the main chain (optionally stamped no later than ``upto_ms``)."""
    top = main.height if upto_ms is None else main.height_at(upto_ms)
    out = []
    for blk in main.blocks[1 : top + 1]:
        for tx in blk.txs:
            if tx.pegin is None or not tx.outputs:
                continue
            o = tx.outputs[0]
            if o.condition == lock and o.asset == PEGGED_ASSET and o.amount == tx.pegin.amount:
                out.append(PeginData(OutPoint(tx.txid, 0), tx.pegin.amount, tx.pegin.destination))
    return out


def pegin_process(
    main: MainChain,
    side: ChainState,
    lock: PegLock,
    depth: int,
    now_ms: int,
    already: set[OutPoint] | None = None,
) -> list[Transaction]:
    """Mints for locks at least ``depth`` deep that are not yet claimed.

    ``already`` suppresses locks this watchman has submitted before; it is
    updated in place.  Locks with an undecodable destination are skipped.
    """
    already = set() if already is None else already
    mints = []
    for claim in peg_locks(main, lock, now_ms):
        if claim.lock in side.claimed_pegins or claim.lock in already:
            continue
        if main.confirmations(claim.lock.txid, now_ms) < depth:
            continue
        if destination_key(claim.destination) is None:
            continue
        already.add(claim.lock)
        mints.append(mint_transaction(claim))
    return mints


# --- peg-out ----------------------------------------------------------------


def pegout_build(
    coins: Sequence[Coin],
    amount: int,
    W: GroupElement,
    proof: AuthorizationProof | None,
    all_P: Sequence[GroupElement],
    all_Q: Sequence[GroupElement],
    *,
    fee: int = 0,
    salt: bytes = b"",
) -> tuple[Transaction, list[tuple[int, Scalar]]]:
    """Signed peg-out transaction and the openings of its outputs."""
    if amount <= 0:
        raise PegError("peg-out amount must be positive")
    if proof is None or proof.whitelist_key != W or not authorize_verify(proof, all_P, all_Q):
        raise AuthorizationError("authorization proof does not verify for W")
    have = sum(c.value for c in coins if c.asset == PEGGED_ASSET)
    change = have - amount - fee
    if change < 0:
        raise WalletError(f"insufficient pegged balance: have {have}, need {amount + fee}")
    payments = [Payment(PEGGED_ASSET, amount, Unspendable(b"pegout"))]
    confidential_in = any(not c.blinder.is_zero() for c in coins)
    if change or confidential_in:
        payments.append(Payment(PEGGED_ASSET, change, KeyLock(coins[0].owner.public), confidential_in))
    tx, openings = build_transfer(coins, payments, {PEGGED_ASSET: fee} if fee else None, salt=salt)
    tx = Transaction(tx.inputs, tx.outputs, fee=tx.fee, pegout=PegoutData(0, W, proof), nonce=tx.nonce)
    return sign_inputs(tx, coins), openings


def pegout_request(
    coins: Sequence[Coin],
    amount: int,
    W: GroupElement,
    proof: AuthorizationProof | None,
    all_P: Sequence[GroupElement],
    all_Q: Sequence[GroupElement],
    *,
    fee: int = 0,
    salt: bytes = b"",
) -> Transaction:
    """Sidechain transaction burning ``amount`` pegged units for payout to ``W``."""
    return pegout_build(coins, amount, W, proof, all_P, all_Q, fee=fee, salt=salt)[0]


def encode_memo(requests: Sequence[OutPoint]) -> bytes:
    w = Writer().raw(MEMO_TAG).u32(len(requests))
    for op in requests:
        w.raw(op.txid).u32(op.index)
    return w.bytes()


def decode_memo(data: bytes) -> list[OutPoint] | None:
    if not data.startswith(MEMO_TAG):
        return None
    try:
        r = Reader(data[len(MEMO_TAG) :])
        n = r.u32()
        if n > 10_000:
            return None
        ops = [OutPoint(r.raw(32), r.u32()) for _ in range(n)]
        r.finish()
        return ops
    except DecodeError:
        return None


def lock_utxos(state: ChainState, lock: PegLock) -> list[tuple[OutPoint, TxOutput]]:
    return sorted((op, o) for op, o in state.utxos.items() if o.condition == lock)


def build_withdrawal(
    requests: Sequence[PegoutRequest],
    utxos: Sequence[tuple[OutPoint, TxOutput]],
    lock: PegLock,
    *,
    extra_outputs: Sequence[TxOutput] = (),
) -> Transaction | None:
    """Unsigned main-chain payout of ``requests`` from peg-lock outputs.

    Inputs are taken in outpoint order until they cover the payout, so two
    watchmen building from the same view produce conflicting (input-sharing)
    transactions.  ``extra_outputs`` exists to model malicious proposals.
    """
    if not requests:
        return None
    need = sum(r.amount for r in requests) + sum(o.amount for o in extra_outputs)
    picked, total = [], 0
    for op, o in utxos:
        if total >= need:
            break
        picked.append(op)
        total += o.amount
    if total < need:
        return None
    outs = [TxOutput(PEGGED_ASSET, r.amount, KeyLock(r.destination)) for r in requests]
    outs.extend(extra_outputs)
    if total > need:
        outs.append(TxOutput(PEGGED_ASSET, total - need, lock))
    outs.append(TxOutput(PEGGED_ASSET, 0, Unspendable(encode_memo([r.burn for r in requests]))))
    return Transaction(inputs=tuple(TxInput(op) for op in picked), outputs=tuple(outs))


def paid_requests(main: MainChain, lock: PegLock, upto_ms: int | None = None) -> dict[OutPoint, bytes]:
    """Burn outpoint -> paying main-chain txid, from federation-signed memos."""
    top = main.height if upto_ms is None else main.height_at(upto_ms)
    paid: dict[OutPoint, bytes] = {}
    for blk in main.blocks[1 : top + 1]:
        for tx in blk.txs:
            if not _spends_lock(main, tx, lock):
                continue
            for o in tx.outputs:
                if isinstance(o.condition, Unspendable):
                    ops = decode_memo(o.condition.data)
                    for op in ops or ():
                        paid.setdefault(op, tx.txid)
    return paid


def _spends_lock(main: MainChain, tx: Transaction, lock: PegLock) -> bool:
    for i in tx.inputs:
        prev = main.txs.get(i.prevout.txid)
        if prev is not None and i.prevout.index < len(prev.outputs) and prev.outputs[i.prevout.index].condition == lock:
            return True
    return False


@dataclass(frozen=True)
class RequestInfo:
    request: PegoutRequest
    proof: AuthorizationProof | None


def check_withdrawal(
    tx: Transaction,
    requests: Mapping[OutPoint, RequestInfo],
    main_state: ChainState,
    lock: PegLock,
    all_P: Sequence[GroupElement],
    all_Q: Sequence[GroupElement],
    paid: Iterable[OutPoint] = (),
) -> str | None:
    """Watchman policy.  None when every output is federation change, an
    authorized payout of a confirmed unpaid request, or the matching memo."""
    paid = set(paid)
    if not tx.inputs:
        return "no inputs"
    for i in tx.inputs:
        o = main_state.utxos.get(i.prevout)
        if o is None or o.condition != lock:
            return "input is not an unspent peg lock"
    memo_ops = None
    payouts: list[TxOutput] = []
    for o in tx.outputs:
        if o.condition == lock and o.asset == PEGGED_ASSET:
            continue
        if isinstance(o.condition, Unspendable):
            if memo_ops is not None or o.amount != 0:
                return "unexpected unspendable output"
            memo_ops = decode_memo(o.condition.data)
            if memo_ops is None:
                return "malformed memo"
            continue
        payouts.append(o)
    if memo_ops is None:
        return "missing memo"
    if len(memo_ops) != len(payouts) or len(set(memo_ops)) != len(memo_ops):
        return "memo does not match payouts"
    for op, o in zip(memo_ops, payouts):
        info = requests.get(op)
        if info is None:
            return "payout without a confirmed request"
        if op in paid:
            return "request already paid"
        req = info.request
        if o.asset != PEGGED_ASSET or o.amount != req.amount or o.condition != KeyLock(req.destination):
            return "payout does not match request"
        if info.proof is None or info.proof.whitelist_key != req.destination:
            return "missing authorization"
        if not authorize_verify(info.proof, all_P, all_Q):
            return "authorization proof invalid"
    return None


def sign_withdrawal(tx: Transaction, index: int, secret: Scalar) -> bytes:
    return make_witness(tx.txid, [(index, secret)])[0][1]


def attach_signatures(tx: Transaction, sigs: Mapping[int, bytes], branch: int = 0) -> Transaction:
    wit = tuple(sorted(sigs.items()))
    return tx.with_inputs(tuple(TxInput(i.prevout, wit, branch) for i in tx.inputs))


# --- backup and attacks -------------------------------------------------------


@dataclass(frozen=True)
class NotYet:
    unlock_at: int
    reason: str = "not-yet"

    def __bool__(self) -> bool:
        return False


def backup_withdrawal(
    locked: Sequence[tuple[OutPoint, TxOutput]],
    lock: PegLock,
    signers: Sequence[tuple[int, Scalar]],
    now_ms: int,
) -> Transaction | NotYet:
    """Sweep every locked output to the backup quorum's multisig.

    Refuses before the timelock.  ``signers`` are (backup key index, secret);
    too few of them yields a transaction that ledger validation rejects.
    """
    if now_ms < lock.backup_locktime:
        return NotYet(lock.backup_locktime)
    if not locked:
        raise PegError("nothing locked")
    total = sum(o.amount for _, o in locked)
    unsigned = Transaction(
        inputs=tuple(TxInput(op, (), BRANCH_BACKUP) for op, _ in locked),
        outputs=(TxOutput(PEGGED_ASSET, total, backup_condition(lock)),),
    )
    wit = make_witness(unsigned.txid, signers)
    return unsigned.with_inputs(tuple(TxInput(op, wit, BRANCH_BACKUP) for op, _ in locked))


def confiscation_transaction(
    locked: Sequence[tuple[OutPoint, TxOutput]],
    attacker: GroupElement,
    colluders: Sequence[tuple[int, Scalar]],
) -> Transaction:
    """All locked value to ``attacker``, signed by whichever watchmen collude."""
    total = sum(o.amount for _, o in locked)
    unsigned = Transaction(
        inputs=tuple(TxInput(op) for op, _ in locked),
        outputs=(TxOutput(PEGGED_ASSET, total, KeyLock(attacker)),),
    )
    return attach_signatures(unsigned, dict(make_witness(unsigned.txid, colluders)))
