"""Keypairs and deterministic Schnorr signatures."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

from strongfed.crypto.group import (
    GroupElement,
    GroupError,
    Scalar,
    base_mul,
    hash_to_scalar,
)

SIGNATURE_BYTES = 64

_TAG_KEYGEN = b"strongfed/keygen"
_TAG_NONCE = b"strongfed/schnorr-nonce"
_TAG_CHALLENGE = b"strongfed/schnorr-challenge"


@dataclass(frozen=True)
class Keypair:
    secret: Scalar
    public: GroupElement

    @classmethod
    def from_secret(cls, secret: Scalar | int) -> "Keypair":
        s = secret if isinstance(secret, Scalar) else Scalar(secret)
        if s.is_zero():
            raise GroupError("secret key must be nonzero")
        return cls(s, base_mul(s))


def _seed_bytes(seed: bytes | str | int) -> bytes:
    if isinstance(seed, bytes):
        return seed
    if isinstance(seed, str):
        return seed.encode()
    return int(seed).to_bytes(16, "little", signed=True)


def keypair_generate(seed: bytes | str | int) -> Keypair:
    """Derive a keypair from a seed; equal seeds give equal keypairs.

    The secret is the first nonzero value of a counter-indexed SHA-512 stream,
    reduced mod q, which is uniform on [1, q) up to negligible bias.
    """
    sb = _seed_bytes(seed)
    ctr = 0
    while True:
        s = hash_to_scalar(_TAG_KEYGEN, sb, ctr.to_bytes(4, "little"))
        if not s.is_zero():
            return Keypair(s, base_mul(s))
        ctr += 1


@dataclass(frozen=True)
class SchnorrSignature:
    nonce_point: GroupElement
    response: Scalar

    def to_bytes(self) -> bytes:
        return self.nonce_point.to_bytes() + self.response.to_bytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "SchnorrSignature":
        if len(data) != SIGNATURE_BYTES:
            raise GroupError("signature must be 64 bytes")
        return cls(GroupElement(data[:32]), Scalar.from_bytes(data[32:]))


def _challenge(r: bytes, pk: bytes, message: bytes) -> Scalar:
    return hash_to_scalar(_TAG_CHALLENGE, r, pk, message)


def sign(secret: Scalar, message: bytes) -> SchnorrSignature:
    """Sign ``message``; the nonce is derived from (secret, message) only."""
    nonce = hash_to_scalar(_TAG_NONCE, secret.to_bytes(), message)
    if nonce.is_zero():  # pragma: no cover - probability 2^-252
        nonce = Scalar(1)
    r = base_mul(nonce)
    e = _challenge(r.to_bytes(), _public_of(secret.value), message)
    return SchnorrSignature(r, nonce + e * secret)


@lru_cache(maxsize=4096)
def _public_of(secret: int) -> bytes:
    return base_mul(secret).to_bytes()


@lru_cache(maxsize=4096)
def _decode_public(pk: bytes) -> GroupElement | None:
    try:
        public = GroupElement(pk)
    except ValueError:
        return None
    return None if public.is_identity() else public


@lru_cache(maxsize=1 << 16)
def _verify_cached(pk: bytes, message: bytes, sig: bytes) -> bool:
    public = _decode_public(pk)
    if public is None or len(sig) != SIGNATURE_BYTES:
        return False
    try:
        s = Scalar.from_bytes(sig[32:])
    except ValueError:
        return False
    # s*G - e*P is always a canonical encoding, so matching bytes also
    # validates the nonce point without decoding it.
    e = _challenge(sig[:32], pk, message)
    return (base_mul(s) - public.mul(e)).to_bytes() == sig[:32]


def verify(public: GroupElement | bytes, message: bytes, sig: SchnorrSignature | bytes) -> bool:
    """True iff ``sig`` is a valid signature on ``message`` under ``public``.

    Malformed inputs return False.  Verification is a pure function of its
    arguments, so results are memoized.
    """
    try:
        pk = public.to_bytes() if isinstance(public, GroupElement) else bytes(public)
        sb = sig.to_bytes() if isinstance(sig, SchnorrSignature) else bytes(sig)
    except (TypeError, AttributeError):
        return False
    return _verify_cached(pk, bytes(message), sb)

