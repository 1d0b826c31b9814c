"""Merkle trees, block headers and the two kinds of block stamp."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence, Union

from strongfed.crypto.schnorr import verify
from strongfed.crypto.group import GroupElement
from strongfed.encoding import DecodeError, Reader, Writer, digest
from strongfed.ledger.tx import Transaction

EMPTY_ROOT = bytes(32)


def _node(left: bytes, right: bytes) -> bytes:
    return hashlib.sha256(b"strongfed/merkle" + left + right).digest()


def merkle_root(tx_digests: Sequence[bytes]) -> bytes:
    """Binary tree; an odd layer duplicates its last element.

    A single leaf is therefore hashed with itself.
    """
    if not tx_digests:
        raise ValueError("merkle_root of an empty list")
    layer = list(tx_digests)
    while True:
        if len(layer) % 2:
            layer.append(layer[-1])
        layer = [_node(layer[i], layer[i + 1]) for i in range(0, len(layer), 2)]
        if len(layer) == 1:
            return layer[0]


def block_merkle_root(txs: Sequence[Transaction]) -> bytes:
    if not txs:
        return EMPTY_ROOT
    return merkle_root([t.wtxid for t in txs])


@dataclass(frozen=True)
class BlockHeader:
    height: int
    prev: bytes
    merkle_root: bytes
    timestamp: int  # ms
    proposer: int = 0

    def to_bytes(self) -> bytes:
        return (
            Writer()
            .u64(self.height)
            .raw(self.prev)
            .raw(self.merkle_root)
            .u64(self.timestamp)
            .u32(self.proposer)
            .bytes()
        )

    @classmethod
    def read(cls, r: Reader) -> "BlockHeader":
        return cls(r.u64(), r.raw(32), r.raw(32), r.u64(), r.u32())

    @cached_property
    def digest(self) -> bytes:
        return digest(b"strongfed/header", self.to_bytes())


def header_message(header_digest: bytes) -> bytes:
    return b"strongfed/blocksign" + header_digest


@dataclass(frozen=True)
class SignatureStamp:
    """Sidechain stamp: signer index → signature over the header digest."""

    signatures: tuple[tuple[int, bytes], ...]

    def valid_signers(self, header_digest: bytes, keys: Sequence[GroupElement]) -> frozenset[int]:
        msg = header_message(header_digest)
        good = set()
        for idx, sig in self.signatures:
            if idx in good or not 0 <= idx < len(keys):
                continue
            if verify(keys[idx], msg, sig):
                good.add(idx)
        return frozenset(good)


@dataclass(frozen=True)
class WorkStamp:
    miner: int
    nonce: int

    def work_digest(self, header_digest: bytes) -> bytes:
        return digest(b"strongfed/work", header_digest, self.miner.to_bytes(4, "little"), self.nonce.to_bytes(8, "little"))

    def meets(self, header_digest: bytes, difficulty_bits: int) -> bool:
        v = int.from_bytes(self.work_digest(header_digest), "big")
        return v >> (256 - difficulty_bits) == 0 if difficulty_bits else True


Stamp = Union[SignatureStamp, WorkStamp, None]


def solve_work(header_digest: bytes, miner: int, difficulty_bits: int) -> WorkStamp:
    nonce = 0
    while True:
        stamp = WorkStamp(miner, nonce)
        if stamp.meets(header_digest, difficulty_bits):
            return stamp
        nonce += 1


@dataclass(frozen=True)
class Block:
    header: BlockHeader
    txs: tuple[Transaction, ...]
    stamp: Stamp = None

    @property
    def height(self) -> int:
        return self.header.height

    @property
    def digest(self) -> bytes:
        return self.header.digest

    def with_stamp(self, stamp: Stamp) -> "Block":
        return Block(self.header, self.txs, stamp)

    def to_bytes(self) -> bytes:
        w = Writer().raw(self.header.to_bytes())
        w.u32(len(self.txs))
        for t in self.txs:
            w.var(t.to_bytes())
        if self.stamp is None:
            w.u8(0)
        elif isinstance(self.stamp, SignatureStamp):
            w.u8(1).u32(len(self.stamp.signatures))
            for idx, sig in self.stamp.signatures:
                w.u32(idx).var(sig)
        else:
            w.u8(2).u32(self.stamp.miner).u64(self.stamp.nonce)
        return w.bytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "Block":
        r = Reader(data)
        header = BlockHeader.read(r)
        n = r.u32()
        if n > 100_000:
            raise DecodeError("too many transactions")
        txs = tuple(Transaction.from_bytes(r.var()) for _ in range(n))
        kind = r.u8()
        stamp: Stamp
        if kind == 0:
            stamp = None
        elif kind == 1:
            m = r.u32()
            if m > 4096:
                raise DecodeError("too many stamp signatures")
            stamp = SignatureStamp(tuple((r.u32(), r.var(128)) for _ in range(m)))
        elif kind == 2:
            stamp = WorkStamp(r.u32(), r.u64())
        else:
            raise DecodeError("unknown stamp kind")
        r.finish()
        return cls(header, txs, stamp)

