"""Chain state and the transaction/block validity rules for both chains.

``ChainState`` is an immutable value.  ``block_apply`` returns a fresh state
and leaves its argument untouched, raising ``BlockRejected`` on any failure.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Callable, Mapping, Sequence

from strongfed.crypto.authproof import authorize_verify
from strongfed.crypto.group import GroupElement
from strongfed.crypto.pedersen import Commitment, balance_check, explicit_commitment
from strongfed.crypto.rangeproof import range_verify
from strongfed.encoding import digest
from strongfed.ledger.block import Block, BlockHeader, SignatureStamp, WorkStamp, block_merkle_root
from strongfed.ledger.script import Condition, KeyLock, Unspendable, check_condition
from strongfed.ledger.tx import (
    PEGGED_ASSET,
    ConfidentialAmount,
    OutPoint,
    PeginData,
    Transaction,
    TxOutput,
    placeholder_position,
)

SIDE = "side"
MAIN = "main"

# Rejection reasons.
DOUBLE_SPEND = "double-spend"
MISSING_INPUT = "missing-input"
BALANCE = "balance"
PROOF = "proof"
SIGNATURE = "signature"
SCRIPT = "script"
ISSUANCE = "issuance"
PEG = "peg"
AUTHORIZATION = "authorization"
MALFORMED = "malformed"
STAMP = "stamp"
HEADER = "header"


@dataclass(frozen=True)
class ChainRules:
    kind: str
    signer_keys: tuple[GroupElement, ...] = ()
    threshold: int = 0
    difficulty_bits: int = 0
    pegged_asset: bytes = PEGGED_ASSET
    members_P: tuple[GroupElement, ...] = ()
    members_Q: tuple[GroupElement, ...] = ()
    fee_condition: Condition | None = None
    max_range_bits: int = 64
    # (pegin data, chain time ms) -> lock exists, is mature and well-formed
    pegin_check: Callable[[PeginData, int], bool] | None = field(default=None, compare=False, repr=False)

    @property
    def is_side(self) -> bool:
        return self.kind == SIDE


@dataclass(frozen=True)
class PegoutRequest:
    burn: OutPoint
    destination: GroupElement
    amount: int
    height: int


@dataclass(frozen=True)
class ChainState:
    utxos: Mapping[OutPoint, TxOutput]
    spent: Mapping[OutPoint, bytes]
    burned: Mapping[OutPoint, TxOutput]
    headers: tuple[BlockHeader, ...]
    supply: Mapping[bytes, int]
    assets: Mapping[bytes, bytes]
    claimed_pegins: frozenset[OutPoint] = frozenset()
    pegouts: tuple[PegoutRequest, ...] = ()

    @property
    def height(self) -> int:
        return len(self.headers) - 1

    @property
    def tip(self) -> bytes:
        return self.headers[-1].digest

    @property
    def timestamp(self) -> int:
        return self.headers[-1].timestamp

    def circulating(self, asset: bytes) -> int:
        return self.supply.get(asset, 0)


@dataclass(frozen=True)
class ValidationResult:
    ok: bool
    reason: str | None = None
    detail: str = ""

    def __bool__(self) -> bool:
        return self.ok


ACCEPT = ValidationResult(True)


def _reject(reason: str, detail: str = "") -> ValidationResult:
    return ValidationResult(False, reason, detail)


class BlockRejected(Exception):
    def __init__(self, reason: str, detail: str = "", height: int | None = None, tx_index: int | None = None):
        super().__init__(f"{reason}: {detail}" if detail else reason)
        self.reason = reason
        self.detail = detail
        self.height = height
        self.tx_index = tx_index


def _freeze(d: dict) -> Mapping:
    return MappingProxyType(d)


def genesis(
    rules: ChainRules,
    allocations: Sequence[TxOutput] = (),
    timestamp: int = 0,
    tag: bytes = b"",
) -> tuple[ChainState, Block]:
    """Genesis block carrying explicit allocations, accepted by fiat."""
    tx = Transaction(outputs=tuple(allocations), nonce=int.from_bytes(digest(b"genesis", rules.kind.encode(), tag)[:8], "little"))
    txs = (tx,) if allocations else ()
    header = BlockHeader(0, bytes(32), block_merkle_root(txs), timestamp)
    utxos: dict[OutPoint, TxOutput] = {}
    supply: dict[bytes, int] = {}
    for i, out in enumerate(allocations):
        if not isinstance(out.amount, int):
            raise ValueError("genesis allocations must be explicit")
        utxos[OutPoint(tx.txid, i)] = out
        supply[out.asset] = supply.get(out.asset, 0) + out.amount
    state = ChainState(_freeze(utxos), _freeze({}), _freeze({}), (header,), _freeze(supply), _freeze({}))
    return state, Block(header, txs)


class _Working:
    """Mutable scratch copy of a state used while applying one block."""

    def __init__(self, s: ChainState) -> None:
        self.utxos = dict(s.utxos)
        self.spent = dict(s.spent)
        self.burned = dict(s.burned)
        self.supply = dict(s.supply)
        self.assets = dict(s.assets)
        self.claimed = set(s.claimed_pegins)
        self.pegouts = list(s.pegouts)


def _check(
    tx: Transaction,
    utxos: Mapping[OutPoint, TxOutput],
    spent: Mapping[OutPoint, bytes],
    burned: Mapping[OutPoint, TxOutput],
    assets: Mapping[bytes, bytes],
    claimed,
    rules: ChainRules,
    now_ms: int,
) -> ValidationResult:
    if not tx.outputs:
        return _reject(MALFORMED, "no outputs")
    side = rules.is_side

    # (a) inputs exist, are unspent and their conditions are met
    seen: set[OutPoint] = set()
    prev_outs: list[TxOutput] = []
    for inp in tx.inputs:
        op = inp.prevout
        if op in seen:
            return _reject(DOUBLE_SPEND, f"{op} spent twice in one transaction")
        seen.add(op)
        out = utxos.get(op)
        if out is None:
            if op in burned:
                return _reject(SCRIPT, f"{op} is unspendable")
            if op in spent:
                return _reject(DOUBLE_SPEND, f"{op} already spent")
            return _reject(MISSING_INPUT, f"{op} unknown")
        prev_outs.append(out)
    for inp, out in zip(tx.inputs, prev_outs):
        fail = check_condition(out.condition, inp.branch, inp.signatures, tx.txid, now_ms)
        if fail is not None:
            return _reject(fail, f"input {inp.prevout}")

    # (d) issuance
    new_assets: dict[int, bytes] = {}
    if tx.issuances:
        if not side:
            return _reject(ISSUANCE, "issuance not allowed on this chain")
        for pos, iss in enumerate(tx.issuances):
            if iss.amount <= 0:
                return _reject(ISSUANCE, "zero issuance")
            aid = tx.issued_asset(pos)
            if aid in assets:
                return _reject(ISSUANCE, "asset already issued")
            new_assets[pos] = aid
    for o in tx.outputs:
        pos = placeholder_position(o.asset)
        if pos is not None and pos not in new_assets:
            return _reject(ISSUANCE, "output references a missing issuance slot")

    # (e) peg metadata
    if tx.pegin is not None:
        p = tx.pegin
        if side:
            if tx.inputs or tx.issuances or tx.fee or len(tx.outputs) != 1 or p.lock is None:
                return _reject(PEG, "malformed peg-in claim")
            if p.lock in claimed:
                return _reject(PEG, "lock already claimed")
            out = tx.outputs[0]
            try:
                dest = GroupElement(p.destination)
            except ValueError:
                return _reject(PEG, "malformed destination")
            if out.asset != rules.pegged_asset or out.amount != p.amount or out.condition != KeyLock(dest):
                return _reject(PEG, "mint does not match claim")
            if rules.pegin_check is None or not rules.pegin_check(p, now_ms):
                return _reject(PEG, "lock not found or immature")
        elif p.lock is not None:
            return _reject(PEG, "claims are sidechain-only")
    if tx.pegout is not None:
        q = tx.pegout
        if not side:
            return _reject(PEG, "peg-out requests are sidechain-only")
        if not 0 <= q.output_index < len(tx.outputs):
            return _reject(PEG, "bad peg-out output index")
        out = tx.outputs[q.output_index]
        if out.asset != rules.pegged_asset or not isinstance(out.amount, int) or out.amount <= 0:
            return _reject(PEG, "peg-out must burn an explicit pegged amount")
        if not isinstance(out.condition, Unspendable):
            return _reject(PEG, "peg-out output must be unspendable")
        if q.proof is None or q.proof.whitelist_key != q.destination:
            return _reject(AUTHORIZATION, "missing or mismatched authorization proof")
        if not authorize_verify(q.proof, rules.members_P, rules.members_Q):
            return _reject(AUTHORIZATION, "authorization proof does not verify")

    # (c) range proofs, and burns must be public
    for i, o in enumerate(tx.outputs):
        if isinstance(o.amount, ConfidentialAmount):
            if not side:
                return _reject(PROOF, "confidential amounts not allowed on this chain")
            if isinstance(o.condition, Unspendable):
                return _reject(SCRIPT, "burned amounts must be explicit")
            if o.amount.proof.bits > rules.max_range_bits:
                return _reject(PROOF, f"output {i} range too wide")
            if not range_verify(o.amount.commitment, o.amount.proof, tx.asset_of(o)):
                return _reject(PROOF, f"output {i} range proof invalid")

    # (b) per-asset accounting
    fee = tx.fee_map()
    if fee and not side and rules.fee_condition is None:
        return _reject(BALANCE, "fees not accepted on this chain")
    exp_in: dict[bytes, int] = {}
    exp_out: dict[bytes, int] = {}
    conf_in: dict[bytes, list[Commitment]] = {}
    conf_out: dict[bytes, list[Commitment]] = {}
    for out in prev_outs:
        if isinstance(out.amount, int):
            exp_in[out.asset] = exp_in.get(out.asset, 0) + out.amount
        else:
            conf_in.setdefault(out.asset, []).append(out.amount.commitment)
    for pos, iss in enumerate(tx.issuances):
        aid = new_assets[pos]
        exp_in[aid] = exp_in.get(aid, 0) + iss.amount
    if tx.pegin is not None and side:
        exp_in[rules.pegged_asset] = exp_in.get(rules.pegged_asset, 0) + tx.pegin.amount
    for o in tx.outputs:
        a = tx.asset_of(o)
        if isinstance(o.amount, int):
            exp_out[a] = exp_out.get(a, 0) + o.amount
        else:
            conf_out.setdefault(a, []).append(o.amount.commitment)
    for asset in set(exp_in) | set(exp_out) | set(conf_in) | set(conf_out) | set(fee):
        f = fee.get(asset, 0)
        if f < 0:
            return _reject(BALANCE, "negative fee")
        if asset not in conf_in and asset not in conf_out:
            if exp_in.get(asset, 0) != exp_out.get(asset, 0) + f:
                return _reject(BALANCE, f"asset {asset.hex()[:12]} does not balance")
        else:
            ins = conf_in.get(asset, []) + [explicit_commitment(exp_in.get(asset, 0), asset)]
            outs = conf_out.get(asset, []) + [explicit_commitment(exp_out.get(asset, 0), asset)]
            if not balance_check(ins, outs, {asset: f} if f else None):
                return _reject(BALANCE, f"asset {asset.hex()[:12]} commitments do not balance")
    return ACCEPT


def tx_validate(tx: Transaction, state: ChainState, rules: ChainRules, now_ms: int | None = None) -> ValidationResult:
    """Check ``tx`` against ``state``; never raises."""
    now = state.timestamp if now_ms is None else now_ms
    try:
        return _check(tx, state.utxos, state.spent, state.burned, state.assets, state.claimed_pegins, rules, now)
    except (ValueError, TypeError, AttributeError) as exc:
        return _reject(MALFORMED, str(exc))


def _apply_tx(w: _Working, tx: Transaction, rules: ChainRules, height: int) -> None:
    for inp in tx.inputs:
        del w.utxos[inp.prevout]
        w.spent[inp.prevout] = tx.txid
    for pos, iss in enumerate(tx.issuances):
        aid = tx.issued_asset(pos)
        w.assets[aid] = tx.txid
        w.supply[aid] = w.supply.get(aid, 0) + iss.amount
    if tx.pegin is not None and rules.is_side:
        w.claimed.add(tx.pegin.lock)
        w.supply[rules.pegged_asset] = w.supply.get(rules.pegged_asset, 0) + tx.pegin.amount
    for i, o in enumerate(tx.outputs):
        asset = tx.asset_of(o)
        resolved = o if asset == o.asset else TxOutput(asset, o.amount, o.condition)
        op = OutPoint(tx.txid, i)
        if isinstance(o.condition, Unspendable):
            w.burned[op] = resolved
            w.supply[asset] = w.supply.get(asset, 0) - o.amount  # explicit by validation
        else:
            w.utxos[op] = resolved
    if tx.pegout is not None:
        q = tx.pegout
        w.pegouts.append(PegoutRequest(OutPoint(tx.txid, q.output_index), q.destination, tx.outputs[q.output_index].amount, height))


def fee_outpoint(header_digest: bytes, index: int) -> OutPoint:
    return OutPoint(digest(b"strongfed/fees", header_digest), index)


def check_stamp(block: Block, rules: ChainRules) -> bool:
    if rules.is_side:
        if not isinstance(block.stamp, SignatureStamp):
            return False
        return len(block.stamp.valid_signers(block.digest, rules.signer_keys)) >= rules.threshold
    if not isinstance(block.stamp, WorkStamp):
        return False
    return block.stamp.meets(block.digest, rules.difficulty_bits)


def block_apply(state: ChainState, block: Block, rules: ChainRules, *, check_stamp_: bool = True) -> ChainState:
    h = block.header
    if h.height != state.height + 1:
        raise BlockRejected(HEADER, f"height {h.height} does not follow {state.height}", h.height)
    if h.prev != state.tip:
        raise BlockRejected(HEADER, "predecessor digest mismatch", h.height)
    if h.timestamp < state.timestamp:
        raise BlockRejected(HEADER, "timestamp goes backwards", h.height)
    if h.merkle_root != block_merkle_root(block.txs):
        raise BlockRejected(HEADER, "merkle root mismatch", h.height)
    if check_stamp_ and not check_stamp(block, rules):
        raise BlockRejected(STAMP, "insufficient or invalid stamp", h.height)

    w = _Working(state)
    fees: dict[bytes, int] = {}
    for i, tx in enumerate(block.txs):
        try:
            res = _check(tx, w.utxos, w.spent, w.burned, w.assets, w.claimed, rules, h.timestamp)
        except (ValueError, TypeError, AttributeError) as exc:
            res = _reject(MALFORMED, str(exc))
        if not res:
            raise BlockRejected(res.reason or MALFORMED, res.detail, h.height, i)
        _apply_tx(w, tx, rules, h.height)
        for asset, amt in tx.fee:
            fees[asset] = fees.get(asset, 0) + amt
    idx = 0
    for asset in sorted(fees):
        amt = fees[asset]
        if amt <= 0:
            continue
        if rules.fee_condition is None:
            w.supply[asset] = w.supply.get(asset, 0) - amt
        else:
            w.utxos[fee_outpoint(h.digest, idx)] = TxOutput(asset, amt, rules.fee_condition)
            idx += 1
    return ChainState(
        _freeze(w.utxos),
        _freeze(w.spent),
        _freeze(w.burned),
        state.headers + (h,),
        _freeze(w.supply),
        _freeze(w.assets),
        frozenset(w.claimed),
        tuple(w.pegouts),
    )
