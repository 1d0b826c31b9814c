"""Equivocation evidence: two validly stamped headers at one height."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from strongfed.crypto.group import GroupElement
from strongfed.ledger.block import BlockHeader, SignatureStamp


@dataclass(frozen=True)
class ForkProof:
    header_a: BlockHeader
    stamp_a: SignatureStamp
    header_b: BlockHeader
    stamp_b: SignatureStamp
    overlap: frozenset[int]

    @property
    def height(self) -> int:
        return self.header_a.height


def make_fork_proof(
    a: tuple[BlockHeader, SignatureStamp],
    b: tuple[BlockHeader, SignatureStamp],
    keys: Sequence[GroupElement],
    k: int,
) -> ForkProof | None:
    (ha, sa), (hb, sb) = a, b
    if ha.height != hb.height or ha.digest == hb.digest:
        return None
    va = sa.valid_signers(ha.digest, keys)
    vb = sb.valid_signers(hb.digest, keys)
    if len(va) < k or len(vb) < k:
        return None
    return ForkProof(ha, sa, hb, sb, va & vb)


def verify_fork_proof(proof: ForkProof, keys: Sequence[GroupElement], k: int) -> bool:
    try:
        again = make_fork_proof((proof.header_a, proof.stamp_a), (proof.header_b, proof.stamp_b), keys, k)
    except (AttributeError, TypeError, ValueError):
        return False
    return again is not None and again.overlap == proof.overlap


def detect_equivocation(
    headers: Iterable[tuple[BlockHeader, SignatureStamp]],
    keys: Sequence[GroupElement],
    k: int,
) -> ForkProof | None:
    """First pair of distinct, validly stamped headers sharing a height."""
    seen: dict[int, tuple[BlockHeader, SignatureStamp]] = {}
    for h, s in headers:
        if s is None or len(s.valid_signers(h.digest, keys)) < k:
            continue
        prior = seen.get(h.height)
        if prior is None:
            seen[h.height] = (h, s)
        elif prior[0].digest != h.digest:
            return make_fork_proof(prior, (h, s), keys, k)
    return None
