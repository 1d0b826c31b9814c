"""Bit-decomposition range proofs.

A proof for ``C = v·H + r·G`` over ``B`` bits publishes per-bit commitments
``C_i = b_i·2^i·H + r_i·G`` with ``Σ r_i = r`` and, for each bit, a 2-member
ring signature over ``{C_i, C_i − 2^i·H}``.  Whichever bit value is used, the
prover knows the discrete log (base G) of exactly one ring member.  The
verifier checks ``Σ C_i = C`` and every ring.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from functools import lru_cache

from strongfed.crypto.group import Scalar, element_sum, hash_to_scalar
from strongfed.crypto.pedersen import Commitment, RangeError, commit, generator_powers
from strongfed.crypto.ring import RingSignature, ring_sign, ring_verify
from strongfed.encoding import DecodeError, Reader, Writer

DEFAULT_BITS = 16
SUPPORTED_BITS = range(1, 65)

_TAG_BLIND = b"strongfed/rangeproof-blinder"


@dataclass(frozen=True)
class RangeProof:
    bits: int
    bit_commitments: tuple[Commitment, ...]
    bit_proofs: tuple[RingSignature, ...]

    def write(self, w: Writer) -> Writer:
        w.u8(self.bits)
        for c in self.bit_commitments:
            w.element(c.point)
        for sig in self.bit_proofs:
            w.scalar(sig.seed)
            for s in sig.responses:
                w.scalar(s)
        return w

    def to_bytes(self) -> bytes:
        return self.write(Writer()).bytes()

    @classmethod
    def read(cls, r: Reader) -> "RangeProof":
        bits = r.u8()
        if bits not in SUPPORTED_BITS:
            raise DecodeError("unsupported bit width")
        comms = tuple(Commitment(r.element()) for _ in range(bits))
        sigs = tuple(RingSignature(r.scalar(), (r.scalar(), r.scalar())) for _ in range(bits))
        return cls(bits, comms, sigs)

    @classmethod
    def from_bytes(cls, data: bytes) -> "RangeProof":
        r = Reader(data)
        proof = cls.read(r)
        r.finish()
        return proof


def _transcript(commitment: Commitment, asset_id: bytes, bits: int, comms) -> bytes:
    h = hashlib.sha256(b"strongfed/rangeproof")
    h.update(commitment.to_bytes())
    h.update(asset_id)
    h.update(bits.to_bytes(1, "little"))
    for c in comms:
        h.update(c.to_bytes())
    return h.digest()


def range_prove(value: int, blinder: Scalar | int, asset_id: bytes, bits: int = DEFAULT_BITS) -> RangeProof:
    if bits not in SUPPORTED_BITS:
        raise ValueError(f"unsupported bit width {bits}")
    if not 0 <= value < (1 << bits):
        raise RangeError(f"value {value} outside [0, 2^{bits})")
    blinder = blinder if isinstance(blinder, Scalar) else Scalar(blinder)
    powers = generator_powers(asset_id, bits)
    seed = blinder.to_bytes() + value.to_bytes(8, "little") + asset_id

    blinders: list[Scalar] = []
    for i in range(bits - 1):
        blinders.append(hash_to_scalar(_TAG_BLIND, seed, i.to_bytes(1, "little")))
    blinders.append(blinder - sum((b.value for b in blinders), 0))

    comms = []
    for i in range(bits):
        bit = (value >> i) & 1
        point = commit(0, blinders[i], asset_id).point
        if bit:
            point = point + powers[i]
        comms.append(Commitment(point))

    c_total = commit(value, blinder, asset_id)
    base_msg = _transcript(c_total, asset_id, bits, comms)
    sigs = []
    for i in range(bits):
        bit = (value >> i) & 1
        ring = (comms[i].point, comms[i].point - powers[i])
        sigs.append(ring_sign(ring, bit, blinders[i], base_msg + i.to_bytes(1, "little")))
    return RangeProof(bits, tuple(comms), tuple(sigs))


@lru_cache(maxsize=1 << 14)
def _verify_cached(commitment: bytes, proof: bytes, asset_id: bytes) -> bool:
    try:
        c = Commitment.from_bytes(commitment)
        p = RangeProof.from_bytes(proof)
    except ValueError:
        return False
    return _verify(c, p, asset_id)


def _verify(commitment: Commitment, proof: RangeProof, asset_id: bytes) -> bool:
    bits = proof.bits
    if bits not in SUPPORTED_BITS or len(proof.bit_commitments) != bits or len(proof.bit_proofs) != bits:
        return False
    if element_sum(c.point for c in proof.bit_commitments) != commitment.point:
        return False
    powers = generator_powers(asset_id, bits)
    base_msg = _transcript(commitment, asset_id, bits, proof.bit_commitments)
    for i in range(bits):
        ci = proof.bit_commitments[i].point
        if len(proof.bit_proofs[i].responses) != 2:
            return False
        if not ring_verify((ci, ci - powers[i]), base_msg + i.to_bytes(1, "little"), proof.bit_proofs[i]):
            return False
    return True


def range_verify(commitment: Commitment, proof: RangeProof, asset_id: bytes) -> bool:
    """True iff ``proof`` shows ``commitment`` opens to a value in [0, 2^bits).

    Deterministic and side-effect free; results are memoized on the
    canonical encodings.
    """
    try:
        return _verify_cached(commitment.to_bytes(), proof.to_bytes(), bytes(asset_id))
    except (AttributeError, TypeError, ValueError):
        return False
