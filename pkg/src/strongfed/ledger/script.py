"""The five spend conditions an output may carry."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

from strongfed.crypto.group import GroupElement
from strongfed.crypto.schnorr import sign, verify
from strongfed.encoding import DecodeError, Reader, Writer

SIGHASH_TAG = b"strongfed/sighash"


def sighash(txid: bytes) -> bytes:
    return SIGHASH_TAG + txid


@dataclass(frozen=True)
class KeyLock:
    key: GroupElement


@dataclass(frozen=True)
class MultisigLock:
    threshold: int
    keys: tuple[GroupElement, ...]


@dataclass(frozen=True)
class TimelockLock:
    locktime: int  # ms of chain time
    threshold: int
    keys: tuple[GroupElement, ...]


@dataclass(frozen=True)
class Unspendable:
    data: bytes = b""


@dataclass(frozen=True)
class PegLock:
    """Watchman k-of-n, or after ``backup_locktime`` a backup m-of-M quorum."""

    threshold: int
    keys: tuple[GroupElement, ...]
    backup_locktime: int
    backup_threshold: int
    backup_keys: tuple[GroupElement, ...]


Condition = Union[KeyLock, MultisigLock, TimelockLock, Unspendable, PegLock]

_KIND = {KeyLock: 0, MultisigLock: 1, TimelockLock: 2, Unspendable: 3, PegLock: 4}

BRANCH_PRIMARY = 0
BRANCH_BACKUP = 1


def _write_keys(w: Writer, keys: Sequence[GroupElement]) -> None:
    w.u32(len(keys))
    for k in keys:
        w.element(k)


def _read_keys(r: Reader) -> tuple[GroupElement, ...]:
    n = r.u32()
    if n > 1024:
        raise DecodeError("too many keys")
    return tuple(r.element() for _ in range(n))


def write_condition(w: Writer, c: Condition) -> None:
    w.u8(_KIND[type(c)])
    if isinstance(c, KeyLock):
        w.element(c.key)
    elif isinstance(c, MultisigLock):
        w.u32(c.threshold)
        _write_keys(w, c.keys)
    elif isinstance(c, TimelockLock):
        w.u64(c.locktime).u32(c.threshold)
        _write_keys(w, c.keys)
    elif isinstance(c, Unspendable):
        w.var(c.data)
    else:
        w.u32(c.threshold)
        _write_keys(w, c.keys)
        w.u64(c.backup_locktime).u32(c.backup_threshold)
        _write_keys(w, c.backup_keys)


def read_condition(r: Reader) -> Condition:
    kind = r.u8()
    if kind == 0:
        return KeyLock(r.element())
    if kind == 1:
        t = r.u32()
        return MultisigLock(t, _read_keys(r))
    if kind == 2:
        lt = r.u64()
        t = r.u32()
        return TimelockLock(lt, t, _read_keys(r))
    if kind == 3:
        return Unspendable(r.var())
    if kind == 4:
        t = r.u32()
        keys = _read_keys(r)
        lt = r.u64()
        bt = r.u32()
        return PegLock(t, keys, lt, bt, _read_keys(r))
    raise DecodeError(f"unknown condition kind {kind}")


def _count_valid(keys: Sequence[GroupElement], sigs, message: bytes) -> int:
    seen = set()
    for idx, sig in sigs:
        if idx in seen or not 0 <= idx < len(keys):
            continue
        if verify(keys[idx], message, sig):
            seen.add(idx)
    return len(seen)


def check_condition(c: Condition, branch: int, sigs, txid: bytes, now_ms: int) -> str | None:
    """None when the witness satisfies ``c``; otherwise a short failure tag.

    Tags are ``"signature"`` for missing/invalid signatures and ``"script"``
    for structurally unsatisfiable conditions (unspendable, early timelock).
    """
    msg = sighash(txid)
    if isinstance(c, Unspendable):
        return "script"
    if isinstance(c, KeyLock):
        return None if _count_valid((c.key,), sigs, msg) >= 1 else "signature"
    if isinstance(c, MultisigLock):
        return None if _count_valid(c.keys, sigs, msg) >= c.threshold else "signature"
    if isinstance(c, TimelockLock):
        if now_ms < c.locktime:
            return "script"
        return None if _count_valid(c.keys, sigs, msg) >= c.threshold else "signature"
    if isinstance(c, PegLock):
        if branch == BRANCH_PRIMARY:
            return None if _count_valid(c.keys, sigs, msg) >= c.threshold else "signature"
        if branch == BRANCH_BACKUP:
            if now_ms < c.backup_locktime:
                return "script"
            return None if _count_valid(c.backup_keys, sigs, msg) >= c.backup_threshold else "signature"
        return "script"
    return "script"


def make_witness(txid: bytes, signers) -> tuple[tuple[int, bytes], ...]:
    """Signatures for ``signers``: an iterable of (key index, secret scalar)."""
    msg = sighash(txid)
    return tuple((idx, sign(secret, msg).to_bytes()) for idx, secret in signers)
