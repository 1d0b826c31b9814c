"""Prime-order group arithmetic.

The group is the prime-order subgroup of edwards25519, with arithmetic
delegated to libsodium through PyNaCl.  Elements are carried around as their
canonical 32-byte encodings; every decode path validates subgroup membership,
so any ``GroupElement`` in memory is a genuine member of the group.

libsodium refuses to represent the neutral element as a "valid point", so
the identity is special-cased here.
"""

from __future__ import annotations

import hashlib
import secrets
from typing import Iterable

from nacl import bindings as _na
from nacl.exceptions import RuntimeError as _NaclRuntimeError

ORDER = 2**252 + 27742317777372353535851937790883648493
ELEMENT_BYTES = 32
SCALAR_BYTES = 32

_IDENTITY_BYTES = b"\x01" + b"\x00" * 31


class GroupError(ValueError):
    """Raised for malformed encodings or invalid scalar/element arguments."""


class Scalar:
    """Integer modulo the group order."""

    __slots__ = ("value",)

    def __init__(self, value: int) -> None:
        self.value = value % ORDER

    @classmethod
    def from_bytes(cls, data: bytes) -> "Scalar":
        if len(data) != SCALAR_BYTES:
            raise GroupError("scalar encoding must be 32 bytes")
        v = int.from_bytes(data, "little")
        if v >= ORDER:
            raise GroupError("non-canonical scalar encoding")
        return cls(v)

    @classmethod
    def random(cls) -> "Scalar":
        return cls(secrets.randbelow(ORDER - 1) + 1)

    def to_bytes(self) -> bytes:
        return self.value.to_bytes(SCALAR_BYTES, "little")

    def __add__(self, other: "Scalar | int") -> "Scalar":
        return Scalar(self.value + _sv(other))

    __radd__ = __add__

    def __sub__(self, other: "Scalar | int") -> "Scalar":
        return Scalar(self.value - _sv(other))

    def __rsub__(self, other: int) -> "Scalar":
        return Scalar(_sv(other) - self.value)

    def __mul__(self, other):
        if isinstance(other, GroupElement):
            return other.mul(self)
        return Scalar(self.value * _sv(other))

    def __rmul__(self, other: int) -> "Scalar":
        return Scalar(self.value * _sv(other))

    def __neg__(self) -> "Scalar":
        return Scalar(-self.value)

    def inverse(self) -> "Scalar":
        if self.value == 0:
            raise GroupError("zero has no inverse")
        return Scalar(pow(self.value, -1, ORDER))

    def is_zero(self) -> bool:
        return self.value == 0

    def __eq__(self, other: object) -> bool:
        if isinstance(other, Scalar):
            return self.value == other.value
        if isinstance(other, int):
            return self.value == other % ORDER
        return NotImplemented

    def __hash__(self) -> int:
        return hash(("Scalar", self.value))

    def __int__(self) -> int:
        return self.value

    def __repr__(self) -> str:
        return f"Scalar({self.value:#x})"


def _sv(x: "Scalar | int") -> int:
    return x.value if isinstance(x, Scalar) else int(x)


class GroupElement:
    """An element of the prime-order group, identified by its encoding."""

    __slots__ = ("_enc",)

    def __init__(self, encoding: bytes, *, _trusted: bool = False) -> None:
        if not _trusted:
            if len(encoding) != ELEMENT_BYTES:
                raise GroupError("element encoding must be 32 bytes")
            if encoding != _IDENTITY_BYTES and not _na.crypto_core_ed25519_is_valid_point(encoding):
                raise GroupError("encoding is not a canonical prime-order group element")
        self._enc = bytes(encoding)

    @classmethod
    def from_bytes(cls, data: bytes) -> "GroupElement":
        return cls(data)

    def to_bytes(self) -> bytes:
        return self._enc

    def is_identity(self) -> bool:
        return self._enc == _IDENTITY_BYTES

    def __add__(self, other: "GroupElement") -> "GroupElement":
        if not isinstance(other, GroupElement):
            return NotImplemented
        if self._enc == _IDENTITY_BYTES:
            return other
        if other._enc == _IDENTITY_BYTES:
            return self
        return GroupElement(_na.crypto_core_ed25519_add(self._enc, other._enc), _trusted=True)

    def __neg__(self) -> "GroupElement":
        if self._enc == _IDENTITY_BYTES:
            return self
        # x has its sign in the top bit; the prime-order subgroup has no
        # non-identity element with x = 0, so flipping is always a negation.
        b = bytearray(self._enc)
        b[31] ^= 0x80
        return GroupElement(bytes(b), _trusted=True)

    def __sub__(self, other: "GroupElement") -> "GroupElement":
        if not isinstance(other, GroupElement):
            return NotImplemented
        return self + (-other)

    def mul(self, k: "Scalar | int") -> "GroupElement":
        kv = _sv(k) % ORDER
        if kv == 0 or self._enc == _IDENTITY_BYTES:
            return IDENTITY
        if kv == 1:
            return self
        return GroupElement(
            _na.crypto_scalarmult_ed25519_noclamp(kv.to_bytes(32, "little"), self._enc),
            _trusted=True,
        )

    def __mul__(self, k: "Scalar | int") -> "GroupElement":
        if isinstance(k, (Scalar, int)):
            return self.mul(k)
        return NotImplemented

    __rmul__ = __mul__

    def double(self) -> "GroupElement":
        return self + self

    def __eq__(self, other: object) -> bool:
        if isinstance(other, GroupElement):
            return self._enc == other._enc
        return NotImplemented

    def __hash__(self) -> int:
        return hash(self._enc)

    def __repr__(self) -> str:
        return f"GroupElement({self._enc.hex()[:16]}…)"


IDENTITY = GroupElement(_IDENTITY_BYTES, _trusted=True)
GENERATOR = GroupElement(
    _na.crypto_scalarmult_ed25519_base_noclamp((1).to_bytes(32, "little")), _trusted=True
)


def base_mul(k: "Scalar | int") -> GroupElement:
    """k·G₀ using libsodium's fixed-base path."""
    kv = _sv(k) % ORDER
    if kv == 0:
        return IDENTITY
    return GroupElement(_na.crypto_scalarmult_ed25519_base_noclamp(kv.to_bytes(32, "little")), _trusted=True)


def element_sum(elements: Iterable[GroupElement]) -> GroupElement:
    acc = IDENTITY
    for e in elements:
        acc = acc + e
    return acc


def hash_to_scalar(tag: bytes, *parts: bytes) -> Scalar:
    """Domain-separated SHA-512 digest reduced mod the group order."""
    h = hashlib.sha512()
    h.update(len(tag).to_bytes(2, "little"))
    h.update(tag)
    for p in parts:
        h.update(len(p).to_bytes(4, "little"))
        h.update(p)
    return Scalar(int.from_bytes(h.digest(), "little"))


def hash_to_group(tag: bytes, data: bytes) -> GroupElement:
    """Nothing-up-my-sleeve element: Elligator over a counter-indexed digest.

    Retries with an incremented counter until the result is neither the
    identity nor the canonical generator.
    """
    counter = 0
    while True:
        h = hashlib.sha256()
        h.update(len(tag).to_bytes(2, "little"))
        h.update(tag)
        h.update(counter.to_bytes(4, "little"))
        h.update(data)
        try:
            enc = _na.crypto_core_ed25519_from_uniform(h.digest())
        except _NaclRuntimeError:
            enc = None
        if enc is not None and enc != _IDENTITY_BYTES and enc != GENERATOR.to_bytes():
            if _na.crypto_core_ed25519_is_valid_point(enc):
                return GroupElement(enc, _trusted=True)
        counter += 1
