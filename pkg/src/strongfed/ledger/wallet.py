"""Client-side helpers: coin openings, blinder selection and signing."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from strongfed.crypto.group import Scalar, hash_to_scalar
from strongfed.crypto.pedersen import commit
from strongfed.crypto.rangeproof import DEFAULT_BITS, range_prove
from strongfed.crypto.schnorr import Keypair
from strongfed.ledger.script import Condition, KeyLock, make_witness
from strongfed.ledger.tx import ConfidentialAmount, OutPoint, Transaction, TxInput, TxOutput

_TAG_BLIND = b"strongfed/wallet-blinder"


class WalletError(ValueError):
    pass


@dataclass(frozen=True)
class Coin:
    """An unspent output together with its opening and its owner."""

    outpoint: OutPoint
    output: TxOutput
    value: int
    blinder: Scalar
    owner: Keypair

    @property
    def asset(self) -> bytes:
        return self.output.asset


@dataclass(frozen=True)
class Payment:
    asset: bytes
    value: int
    condition: Condition
    confidential: bool = False


def build_transfer(
    coins: Sequence[Coin],
    payments: Sequence[Payment],
    fee: dict[bytes, int] | None = None,
    *,
    salt: bytes = b"",
    bits: int = DEFAULT_BITS,
    nonce: int = 0,
) -> tuple[Transaction, list[tuple[int, Scalar]]]:
    """Unsigned transaction paying ``payments`` from ``coins``.

    Returns the transaction and the (value, blinder) opening of each output.
    For every asset the last confidential output absorbs the blinder
    remainder so that commitments balance; an asset with confidential inputs
    needs at least one confidential output.
    """
    fee = dict(fee or {})
    need: dict[bytes, int] = {}
    have: dict[bytes, int] = {}
    r_in: dict[bytes, Scalar] = {}
    for c in coins:
        have[c.asset] = have.get(c.asset, 0) + c.value
        r_in[c.asset] = r_in.get(c.asset, Scalar(0)) + c.blinder
    for p in payments:
        need[p.asset] = need.get(p.asset, 0) + p.value
    for a, f in fee.items():
        need[a] = need.get(a, 0) + f
    for a in set(need) | set(have):
        if have.get(a, 0) != need.get(a, 0):
            raise WalletError(f"asset {a.hex()[:12]}: inputs {have.get(a, 0)} != outputs+fee {need.get(a, 0)}")

    last_conf: dict[bytes, int] = {}
    for i, p in enumerate(payments):
        if p.confidential:
            last_conf[p.asset] = i
    for a, r in r_in.items():
        if not r.is_zero() and a not in last_conf:
            raise WalletError("confidential inputs require a confidential output of the same asset")

    seed = b"".join(c.outpoint.to_bytes() for c in coins) + salt
    blinders: list[Scalar] = []
    r_out: dict[bytes, Scalar] = {}
    for i, p in enumerate(payments):
        if not p.confidential:
            blinders.append(Scalar(0))
            continue
        if last_conf[p.asset] == i:
            r = r_in.get(p.asset, Scalar(0)) - r_out.get(p.asset, Scalar(0))
        else:
            r = hash_to_scalar(_TAG_BLIND, seed, i.to_bytes(4, "little"))
        r_out[p.asset] = r_out.get(p.asset, Scalar(0)) + r
        blinders.append(r)

    outs = []
    for p, r in zip(payments, blinders):
        if p.confidential:
            amt = ConfidentialAmount(commit(p.value, r, p.asset), range_prove(p.value, r, p.asset, bits))
            outs.append(TxOutput(p.asset, amt, p.condition))
        else:
            outs.append(TxOutput(p.asset, p.value, p.condition))
    tx = Transaction(
        inputs=tuple(TxInput(c.outpoint) for c in coins),
        outputs=tuple(outs),
        fee=tuple(sorted((a, f) for a, f in fee.items() if f)),
        nonce=nonce,
    )
    return tx, [(p.value, r) for p, r in zip(payments, blinders)]


def sign_inputs(tx: Transaction, coins: Sequence[Coin], skip: Iterable[int] = ()) -> Transaction:
    """Attach single-key witnesses from each coin's owner, except indices in ``skip``."""
    skip = set(skip)
    inputs = []
    for i, (inp, c) in enumerate(zip(tx.inputs, coins)):
        if i in skip or not isinstance(c.output.condition, KeyLock):
            inputs.append(inp)
        else:
            inputs.append(TxInput(inp.prevout, make_witness(tx.txid, [(0, c.owner.secret)]), inp.branch))
    return tx.with_inputs(tuple(inputs))


def coins_from(tx: Transaction, openings: Sequence[tuple[int, Scalar]], owners: dict) -> list[Coin]:
    """Coins created by ``tx`` for which ``owners`` (public key -> Keypair) has a key."""
    out = []
    for i, (o, (v, r)) in enumerate(zip(tx.outputs, openings)):
        if isinstance(o.condition, KeyLock) and o.condition.key in owners:
            resolved = TxOutput(tx.asset_of(o), o.amount, o.condition)
            out.append(Coin(OutPoint(tx.txid, i), resolved, v, r, owners[o.condition.key]))
    return out
