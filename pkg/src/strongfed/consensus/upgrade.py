"""Software upgrade packages and the supermajority acceptance rule."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

from strongfed.crypto.group import GroupElement, Scalar
from strongfed.crypto.schnorr import Keypair, sign, verify
from strongfed.encoding import Writer

_TAG = b"strongfed/upgrade"


def upgrade_message(version: int, image_digest: bytes) -> bytes:
    return Writer().raw(_TAG).u32(version).raw(image_digest).bytes()


@dataclass(frozen=True)
class UpgradePackage:
    version: int
    image_digest: bytes
    usp_sig: bytes
    auditor_sig: bytes | None = None
    functionary_sigs: tuple[tuple[int, bytes], ...] = ()

    @property
    def message(self) -> bytes:
        return upgrade_message(self.version, self.image_digest)

    def with_signatures(self, sigs) -> "UpgradePackage":
        return replace(self, functionary_sigs=tuple(sorted(sigs)))


@dataclass(frozen=True)
class UpgradeResult:
    accepted: bool
    reason: str | None = None
    signers: frozenset[int] = frozenset()

    def __bool__(self) -> bool:
        return self.accepted


def usp_publish(usp: Keypair, version: int, image_digest: bytes, auditor: Keypair | None = None) -> UpgradePackage:
    msg = upgrade_message(version, image_digest)
    aud = sign(auditor.secret, msg).to_bytes() if auditor else None
    return UpgradePackage(version, image_digest, sign(usp.secret, msg).to_bytes(), aud)


def functionary_sign(secret: Scalar, index: int, package: UpgradePackage) -> tuple[int, bytes]:
    return index, sign(secret, package.message).to_bytes()


def usp_valid(package: UpgradePackage, usp_key: GroupElement, auditor_key: GroupElement | None = None) -> bool:
    if not verify(usp_key, package.message, package.usp_sig):
        return False
    if auditor_key is not None and package.auditor_sig is not None:
        return verify(auditor_key, package.message, package.auditor_sig)
    return True


def upgrade_apply(
    package: UpgradePackage,
    federation_keys: Sequence[GroupElement],
    supermajority: int,
    usp_key: GroupElement,
    auditor_key: GroupElement | None = None,
) -> UpgradeResult:
    if not 1 <= supermajority <= len(federation_keys):
        raise ValueError("supermajority must be between 1 and n")
    if not usp_valid(package, usp_key, auditor_key):
        return UpgradeResult(False, "signature")
    good = set()
    for idx, sig in package.functionary_sigs:
        if 0 <= idx < len(federation_keys) and verify(federation_keys[idx], package.message, sig):
            good.add(idx)
    if len(good) < supermajority:
        return UpgradeResult(False, "quorum", frozenset(good))
    return UpgradeResult(True, None, frozenset(good))
