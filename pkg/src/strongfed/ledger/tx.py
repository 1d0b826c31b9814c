"""Transactions, outputs and their canonical encoding."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Union

from strongfed.crypto.authproof import AuthorizationProof
from strongfed.crypto.group import GroupElement
from strongfed.crypto.pedersen import Commitment
from strongfed.crypto.rangeproof import RangeProof
from strongfed.encoding import DecodeError, Reader, Writer, digest
from strongfed.ledger.script import Condition, read_condition, write_condition

PEGGED_ASSET = digest(b"strongfed/pegged-asset")
_ISSUE_PREFIX = b"strongfed/issued"  # 16 bytes


def issuance_placeholder(position: int) -> bytes:
    """Stand-in asset field for outputs of an asset created by this tx."""
    return _ISSUE_PREFIX + position.to_bytes(16, "little")


def placeholder_position(asset: bytes) -> int | None:
    if asset[:16] == _ISSUE_PREFIX:
        return int.from_bytes(asset[16:], "little")
    return None


def derive_asset_id(txid: bytes, position: int) -> bytes:
    return digest(b"strongfed/asset-id", txid, position.to_bytes(4, "little"))


@dataclass(frozen=True, order=True)
class OutPoint:
    txid: bytes
    index: int

    def to_bytes(self) -> bytes:
        return self.txid + self.index.to_bytes(4, "little")

    def __repr__(self) -> str:
        return f"OutPoint({self.txid.hex()[:12]}:{self.index})"


@dataclass(frozen=True)
class ConfidentialAmount:
    commitment: Commitment
    proof: RangeProof


Amount = Union[int, ConfidentialAmount]


@dataclass(frozen=True)
class TxOutput:
    asset: bytes
    amount: Amount
    condition: Condition

    @property
    def is_explicit(self) -> bool:
        return isinstance(self.amount, int)


@dataclass(frozen=True)
class TxInput:
    prevout: OutPoint
    signatures: tuple[tuple[int, bytes], ...] = ()
    branch: int = 0


@dataclass(frozen=True)
class IssuanceInput:
    entropy: bytes
    amount: int
    policy: bytes = b""


@dataclass(frozen=True)
class PeginData:
    """On the main chain: ``lock`` is None and output 0 holds the locked coins.

    On the sidechain: ``lock`` names the main-chain lock output being claimed.
    ``destination`` is the raw encoding of the sidechain key to credit; it is
    deliberately not validated at this layer.
    """

    lock: OutPoint | None
    amount: int
    destination: bytes


@dataclass(frozen=True)
class PegoutData:
    output_index: int
    destination: GroupElement
    proof: AuthorizationProof | None


@dataclass(frozen=True)
class Transaction:
    inputs: tuple[TxInput, ...] = ()
    outputs: tuple[TxOutput, ...] = ()
    issuances: tuple[IssuanceInput, ...] = ()
    fee: tuple[tuple[bytes, int], ...] = ()
    pegin: PeginData | None = None
    pegout: PegoutData | None = None
    nonce: int = field(default=0)

    def write(self, w: Writer, *, witness: bool = True) -> Writer:
        w.u32(len(self.inputs))
        for i in self.inputs:
            w.raw(i.prevout.txid).u32(i.prevout.index)
            if witness:
                w.u8(i.branch).u32(len(i.signatures))
                for idx, sig in i.signatures:
                    w.u32(idx).var(sig)
        w.u32(len(self.outputs))
        for o in self.outputs:
            w.raw(o.asset)
            if isinstance(o.amount, int):
                w.u8(0).u64(o.amount)
            else:
                w.u8(1).element(o.amount.commitment.point)
                o.amount.proof.write(w)
            write_condition(w, o.condition)
        w.u32(len(self.issuances))
        for iss in self.issuances:
            w.raw(iss.entropy).u64(iss.amount).var(iss.policy)
        w.u32(len(self.fee))
        for asset, amt in self.fee:
            w.raw(asset).u64(amt)
        if self.pegin is None:
            w.u8(0)
        else:
            p = self.pegin
            w.u8(1)
            if p.lock is None:
                w.u8(0)
            else:
                w.u8(1).raw(p.lock.txid).u32(p.lock.index)
            w.u64(p.amount).var(p.destination)
        if self.pegout is None:
            w.u8(0)
        else:
            q = self.pegout
            w.u8(1).u32(q.output_index).element(q.destination)
            if q.proof is None:
                w.u8(0)
            else:
                w.u8(1)
                q.proof.write(w)
        w.u64(self.nonce)
        return w

    def to_bytes(self) -> bytes:
        return self.write(Writer()).bytes()

    @cached_property
    def txid(self) -> bytes:
        """Digest of the witness-free encoding; what signatures commit to."""
        return digest(b"strongfed/txid", self.write(Writer(), witness=False).bytes())

    @cached_property
    def wtxid(self) -> bytes:
        """Digest of the full encoding; what block merkle trees commit to."""
        return digest(b"strongfed/wtxid", self.to_bytes())

    def asset_of(self, out: TxOutput) -> bytes:
        pos = placeholder_position(out.asset)
        if pos is None:
            return out.asset
        return derive_asset_id(self.txid, pos)

    def issued_asset(self, position: int) -> bytes:
        return derive_asset_id(self.txid, position)

    def fee_map(self) -> dict[bytes, int]:
        out: dict[bytes, int] = {}
        for asset, amt in self.fee:
            out[asset] = out.get(asset, 0) + amt
        return out

    def with_inputs(self, inputs: tuple[TxInput, ...]) -> "Transaction":
        return Transaction(inputs, self.outputs, self.issuances, self.fee, self.pegin, self.pegout, self.nonce)

    @classmethod
    def read(cls, r: Reader) -> "Transaction":
        n_in = r.u32()
        if n_in > 10_000:
            raise DecodeError("too many inputs")
        inputs = []
        for _ in range(n_in):
            txid = r.raw(32)
            idx = r.u32()
            branch = r.u8()
            n_sig = r.u32()
            if n_sig > 1024:
                raise DecodeError("too many signatures")
            sigs = tuple((r.u32(), r.var(128)) for _ in range(n_sig))
            inputs.append(TxInput(OutPoint(txid, idx), sigs, branch))
        n_out = r.u32()
        if n_out > 10_000:
            raise DecodeError("too many outputs")
        outputs = []
        for _ in range(n_out):
            asset = r.raw(32)
            kind = r.u8()
            if kind == 0:
                amount: Amount = r.u64()
            elif kind == 1:
                c = Commitment(r.element())
                amount = ConfidentialAmount(c, RangeProof.read(r))
            else:
                raise DecodeError("unknown amount kind")
            outputs.append(TxOutput(asset, amount, read_condition(r)))
        issuances = tuple(IssuanceInput(r.raw(32), r.u64(), r.var()) for _ in range(r.u32()))
        fee = tuple((r.raw(32), r.u64()) for _ in range(r.u32()))
        pegin = None
        if r.u8():
            lock = OutPoint(r.raw(32), r.u32()) if r.u8() else None
            pegin = PeginData(lock, r.u64(), r.var(1024))
        pegout = None
        if r.u8():
            oi = r.u32()
            dest = r.element()
            proof = AuthorizationProof.read(r) if r.u8() else None
            pegout = PegoutData(oi, dest, proof)
        nonce = r.u64()
        return cls(tuple(inputs), tuple(outputs), issuances, fee, pegin, pegout, nonce)

    @classmethod
    def from_bytes(cls, data: bytes) -> "Transaction":
        r = Reader(data)
        tx = cls.read(r)
        r.finish()
        return tx
