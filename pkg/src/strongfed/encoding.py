"""Canonical byte encoding shared by every serialized type.

Integers are little-endian and fixed width, variable-length fields carry a
u32 length prefix, group elements and scalars are fixed 32-byte fields.
"""

from __future__ import annotations

import hashlib
import struct

from strongfed.crypto.group import ELEMENT_BYTES, GroupElement, Scalar


class DecodeError(ValueError):
    pass


class Writer:
    __slots__ = ("_parts",)

    def __init__(self) -> None:
        self._parts: list[bytes] = []

    def u8(self, v: int) -> "Writer":
        self._parts.append(struct.pack("<B", v))
        return self

    def u32(self, v: int) -> "Writer":
        self._parts.append(struct.pack("<I", v))
        return self

    def u64(self, v: int) -> "Writer":
        self._parts.append(struct.pack("<Q", v))
        return self

    def f64(self, v: float) -> "Writer":
        self._parts.append(struct.pack("<d", v))
        return self

    def raw(self, b: bytes) -> "Writer":
        self._parts.append(b)
        return self

    def var(self, b: bytes) -> "Writer":
        self._parts.append(struct.pack("<I", len(b)))
        self._parts.append(b)
        return self

    def element(self, e: GroupElement) -> "Writer":
        self._parts.append(e.to_bytes())
        return self

    def scalar(self, s: Scalar) -> "Writer":
        self._parts.append(s.to_bytes())
        return self

    def bytes(self) -> bytes:
        return b"".join(self._parts)


class Reader:
    __slots__ = ("_buf", "_pos")

    def __init__(self, data: bytes) -> None:
        self._buf = memoryview(data)
        self._pos = 0

    def _take(self, n: int) -> bytes:
        if n < 0 or self._pos + n > len(self._buf):
            raise DecodeError("truncated input")
        out = self._buf[self._pos:self._pos + n].tobytes()
        self._pos += n
        return out

    def u8(self) -> int:
        return self._take(1)[0]

    def u32(self) -> int:
        return struct.unpack("<I", self._take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self._take(8))[0]

    def f64(self) -> float:
        return struct.unpack("<d", self._take(8))[0]

    def raw(self, n: int) -> bytes:
        return self._take(n)

    def var(self, limit: int = 1 << 24) -> bytes:
        n = self.u32()
        if n > limit:
            raise DecodeError("length prefix exceeds limit")
        return self._take(n)

    def element(self) -> GroupElement:
        try:
            return GroupElement(self._take(ELEMENT_BYTES))
        except ValueError as exc:
            raise DecodeError(str(exc)) from exc

    def scalar(self) -> Scalar:
        try:
            return Scalar.from_bytes(self._take(32))
        except ValueError as exc:
            raise DecodeError(str(exc)) from exc

    def done(self) -> bool:
        return self._pos == len(self._buf)

    def finish(self) -> None:
        if not self.done():
            raise DecodeError("trailing bytes")


def digest(tag: bytes, *parts: bytes) -> bytes:
    """Tagged SHA-256 over length-prefixed parts."""
    h = hashlib.sha256()
    h.update(len(tag).to_bytes(2, "little"))
    h.update(tag)
    for p in parts:
        h.update(len(p).to_bytes(4, "little"))
        h.update(p)
    return h.digest()
