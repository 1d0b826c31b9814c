"""1-of-n discrete-log ring signatures (Abe-Ohkubo-Suzuki chain).

The challenge chain is seeded by the message and a digest of the ordered
ring, so a signature is bound to one ring in one order and one message.  The
transcript is ``(c0, s_0..s_{n-1})``; nothing in it depends on which member
signed.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Sequence

from strongfed.crypto.group import GroupElement, GroupError, Scalar, base_mul, hash_to_scalar
from strongfed.encoding import DecodeError, Reader, Writer

_TAG_CHAIN = b"strongfed/ring-chain"
_TAG_NONCE = b"strongfed/ring-nonce"


class RingError(ValueError):
    pass


@dataclass(frozen=True)
class RingSignature:
    seed: Scalar
    responses: tuple[Scalar, ...]

    def to_bytes(self) -> bytes:
        w = Writer().u32(len(self.responses)).scalar(self.seed)
        for s in self.responses:
            w.scalar(s)
        return w.bytes()

    @classmethod
    def read(cls, r: Reader) -> "RingSignature":
        n = r.u32()
        if n == 0 or n > 4096:
            raise DecodeError("bad ring size")
        seed = r.scalar()
        return cls(seed, tuple(r.scalar() for _ in range(n)))

    @classmethod
    def from_bytes(cls, data: bytes) -> "RingSignature":
        r = Reader(data)
        sig = cls.read(r)
        r.finish()
        return sig


def ring_digest(ring: Sequence[GroupElement]) -> bytes:
    h = hashlib.sha256(b"strongfed/ring")
    h.update(len(ring).to_bytes(4, "little"))
    for p in ring:
        h.update(p.to_bytes())
    return h.digest()


def _link(rd: bytes, message: bytes, point: GroupElement) -> Scalar:
    return hash_to_scalar(_TAG_CHAIN, rd, message, point.to_bytes())


def ring_sign(
    ring: Sequence[GroupElement],
    signer_index: int,
    signer_secret: Scalar,
    message: bytes,
) -> RingSignature:
    n = len(ring)
    if n == 0:
        raise RingError("ring must be non-empty")
    if not 0 <= signer_index < n:
        raise RingError("signer index out of range")
    if base_mul(signer_secret) != ring[signer_index]:
        raise RingError("secret does not match ring[signer_index]")

    rd = ring_digest(ring)
    sk = signer_secret.to_bytes()
    alpha = hash_to_scalar(_TAG_NONCE, sk, rd, message, b"alpha")
    responses: list[Scalar | None] = [None] * n
    challenges: list[Scalar | None] = [None] * n

    j = (signer_index + 1) % n
    challenges[j] = _link(rd, message, base_mul(alpha))
    while j != signer_index:
        s_j = hash_to_scalar(_TAG_NONCE, sk, rd, message, j.to_bytes(4, "little"))
        responses[j] = s_j
        nxt = (j + 1) % n
        challenges[nxt] = _link(rd, message, base_mul(s_j) + ring[j].mul(challenges[j]))
        j = nxt
    responses[signer_index] = alpha - challenges[signer_index] * signer_secret
    return RingSignature(challenges[0], tuple(responses))  # type: ignore[arg-type]


def ring_verify(ring: Sequence[GroupElement], message: bytes, sig: RingSignature) -> bool:
    n = len(ring)
    if n == 0 or not isinstance(sig, RingSignature) or len(sig.responses) != n:
        return False
    rd = ring_digest(ring)
    c = sig.seed
    try:
        for p, s in zip(ring, sig.responses):
            c = _link(rd, message, base_mul(s) + p.mul(c))
    except GroupError:
        return False
    return c == sig.seed
