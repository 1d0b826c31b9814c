"""Native asset issuance and destruction."""

from __future__ import annotations

import hashlib
from typing import Sequence

from strongfed.crypto.schnorr import Keypair
from strongfed.ledger.script import KeyLock, Unspendable, make_witness
from strongfed.ledger.tx import (
    IssuanceInput,
    OutPoint,
    Transaction,
    TxInput,
    TxOutput,
    issuance_placeholder,
)


class AssetError(ValueError):
    pass


def asset_issue(
    issuer: Keypair,
    amount: int,
    policy: bytes = b"",
    *,
    split: Sequence[int] | None = None,
    recipients: Sequence[Keypair] | None = None,
    entropy: bytes | None = None,
) -> Transaction:
    """Create ``amount`` units of a fresh asset.

    ``split`` divides the issuance across several outputs, paid to
    ``recipients`` (default: the issuer).  The asset id is only fixed once the
    txid is known; outputs carry a placeholder that validation resolves.
    """
    if amount <= 0:
        raise AssetError("issuance amount must be positive")
    parts = list(split) if split is not None else [amount]
    if sum(parts) != amount or any(p <= 0 for p in parts):
        raise AssetError("split must be positive and sum to the amount")
    keys = [r.public for r in recipients] if recipients is not None else [issuer.public] * len(parts)
    if len(keys) != len(parts):
        raise AssetError("one recipient per split part")
    if entropy is None:
        entropy = hashlib.sha256(b"strongfed/issue" + issuer.public.to_bytes() + policy + amount.to_bytes(8, "little")).digest()
    ph = issuance_placeholder(0)
    outs = tuple(TxOutput(ph, p, KeyLock(k)) for p, k in zip(parts, keys))
    return Transaction(outputs=outs, issuances=(IssuanceInput(entropy, amount, policy),))


def asset_destroy(
    holder: Keypair,
    coins: Sequence[tuple[OutPoint, TxOutput]],
    amount: int | None = None,
    memo: bytes = b"burn",
) -> Transaction:
    """Burn ``amount`` (default: everything) of the holder's coins.

    Any remainder returns to the holder.  All coins must be explicit, of one
    asset and locked to the holder's key.
    """
    if not coins:
        raise AssetError("nothing to destroy")
    asset = coins[0][1].asset
    total = 0
    for op, out in coins:
        if out.condition != KeyLock(holder.public):
            raise AssetError(f"{op} is not held by this key")
        if out.asset != asset:
            raise AssetError("coins of different assets")
        if not isinstance(out.amount, int):
            raise AssetError("confidential coins cannot be burned publicly")
        total += out.amount
    burn = total if amount is None else amount
    if not 0 < burn <= total:
        raise AssetError("burn amount out of range")
    outs = [TxOutput(asset, burn, Unspendable(memo))]
    if burn < total:
        outs.append(TxOutput(asset, total - burn, KeyLock(holder.public)))
    unsigned = Transaction(inputs=tuple(TxInput(op) for op, _ in coins), outputs=tuple(outs))
    wit = make_witness(unsigned.txid, [(0, holder.secret)])
    return unsigned.with_inputs(tuple(TxInput(op, wit) for op, _ in coins))
