"""Peg-out authorization proofs.

Every sidechain member ``j`` registers an online key ``P_j`` and an offline
key ``Q_j``.  To whitelist a destination key ``W`` a member derives, for every
``j``,

    L_j = P_j + H(W + Q_j)·(W + Q_j)

and ring-signs over ``(L_0 … L_{n-1})`` with the message binding all ``P``,
all ``Q`` and ``W``.  The signer needs ``p_i`` and the discrete log of
``W + Q_i`` only, so ``q_i`` can stay offline.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

from strongfed.crypto.group import GroupElement, Scalar, base_mul, hash_to_scalar
from strongfed.crypto.ring import RingSignature, ring_sign, ring_verify
from strongfed.encoding import DecodeError, Reader, Writer

_TAG_TWEAK = b"strongfed/pegout-auth-tweak"
_TAG_MESSAGE = b"strongfed/pegout-auth-message"


class AuthorizationError(ValueError):
    pass


def auth_tweak(point: GroupElement) -> Scalar:
    """The random-oracle map from a group element to a scalar."""
    return hash_to_scalar(_TAG_TWEAK, point.to_bytes())


def derive_auth_key(P_j: GroupElement, Q_j: GroupElement, W: GroupElement) -> GroupElement:
    wq = W + Q_j
    return P_j + wq.mul(auth_tweak(wq))


def auth_message(all_P: Sequence[GroupElement], all_Q: Sequence[GroupElement], W: GroupElement) -> bytes:
    w = Writer().raw(_TAG_MESSAGE).u32(len(all_P))
    for p in all_P:
        w.element(p)
    w.u32(len(all_Q))
    for q in all_Q:
        w.element(q)
    w.element(W)
    return w.bytes()


@dataclass(frozen=True)
class AuthorizationProof:
    whitelist_key: GroupElement
    ring: tuple[GroupElement, ...]
    signature: RingSignature

    def write(self, w: Writer) -> Writer:
        w.element(self.whitelist_key).u32(len(self.ring))
        for L in self.ring:
            w.element(L)
        w.raw(self.signature.to_bytes())
        return w

    def to_bytes(self) -> bytes:
        return self.write(Writer()).bytes()

    @classmethod
    def read(cls, r: Reader) -> "AuthorizationProof":
        W = r.element()
        n = r.u32()
        if n == 0 or n > 4096:
            raise DecodeError("bad ring size")
        ring = tuple(r.element() for _ in range(n))
        return cls(W, ring, RingSignature.read(r))

    @classmethod
    def from_bytes(cls, data: bytes) -> "AuthorizationProof":
        r = Reader(data)
        proof = cls.read(r)
        r.finish()
        return proof


def auth_ring(all_P: Sequence[GroupElement], all_Q: Sequence[GroupElement], W: GroupElement) -> tuple[GroupElement, ...]:
    return tuple(derive_auth_key(P, Q, W) for P, Q in zip(all_P, all_Q))


def authorize_key(
    participant_index: int,
    online_secret: Scalar,
    offline_sum_secret: Scalar,
    W: GroupElement,
    all_P: Sequence[GroupElement],
    all_Q: Sequence[GroupElement],
) -> AuthorizationProof:
    """Produce a proof that ``W`` is whitelisted by some registered member.

    ``offline_sum_secret`` is the discrete log of ``W + Q_i`` (that is,
    ``w + q_i`` for an honest member).
    """
    if len(all_P) != len(all_Q) or not all_P:
        raise AuthorizationError("key lists must be non-empty and of equal length")
    i = participant_index
    if not 0 <= i < len(all_P):
        raise AuthorizationError("participant index out of range")
    if base_mul(online_secret) != all_P[i]:
        raise AuthorizationError("online secret does not match P_i")
    wq = W + all_Q[i]
    if base_mul(offline_sum_secret) != wq:
        raise AuthorizationError("offline sum secret does not match W + Q_i")
    ring = auth_ring(all_P, all_Q, W)
    x = online_secret + auth_tweak(wq) * offline_sum_secret
    sig = ring_sign(ring, i, x, auth_message(all_P, all_Q, W))
    return AuthorizationProof(W, ring, sig)


def authorize_verify(
    proof: AuthorizationProof,
    all_P: Sequence[GroupElement],
    all_Q: Sequence[GroupElement],
) -> bool:
    """Check ``proof`` against the registered keys.  Results are memoized."""
    try:
        if len(all_P) != len(all_Q) or len(proof.ring) != len(all_P):
            return False
        return _verify_cached(proof.to_bytes(), tuple(all_P), tuple(all_Q))
    except (AttributeError, TypeError, ValueError):
        return False


@lru_cache(maxsize=4096)
def _verify_cached(proof_bytes: bytes, all_P: tuple, all_Q: tuple) -> bool:
    proof = AuthorizationProof.from_bytes(proof_bytes)
    ring = auth_ring(all_P, all_Q, proof.whitelist_key)
    if ring != tuple(proof.ring):
        return False
    return ring_verify(ring, auth_message(all_P, all_Q, proof.whitelist_key), proof.signature)


def recover_whitelisted_secret(offline_sum_secret: Scalar, offline_secret: Scalar) -> Scalar:
    """w = (w + q_i) − q_i, computed offline when the member spends W."""
    return offline_sum_secret - offline_secret
