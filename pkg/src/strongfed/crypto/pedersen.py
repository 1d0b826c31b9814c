"""Pedersen commitments to amounts, one value generator per asset."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Mapping

from strongfed.crypto.group import (
    GENERATOR,
    IDENTITY,
    GroupElement,
    Scalar,
    base_mul,
    element_sum,
    hash_to_group,
)

MAX_VALUE_BITS = 64

_TAG_ASSET = b"strongfed/asset-generator"


class RangeError(ValueError):
    """Value outside the representable/provable range."""


@lru_cache(maxsize=4096)
def _asset_generator(asset_id: bytes) -> GroupElement:
    return hash_to_group(_TAG_ASSET, asset_id)


def asset_generator(asset_id: bytes) -> GroupElement:
    """Value generator H_a for an asset; nobody knows its log base G₀."""
    if len(asset_id) != 32:
        raise ValueError("asset id must be a 32-byte digest")
    return _asset_generator(bytes(asset_id))


@lru_cache(maxsize=4096)
def generator_powers(asset_id: bytes, bits: int) -> tuple[GroupElement, ...]:
    """(2^0·H_a, 2^1·H_a, …) by repeated doubling."""
    h = asset_generator(asset_id)
    out = [h]
    for _ in range(bits - 1):
        out.append(out[-1].double())
    return tuple(out)


@dataclass(frozen=True)
class Commitment:
    point: GroupElement

    def __add__(self, other: "Commitment") -> "Commitment":
        return Commitment(self.point + other.point)

    def __sub__(self, other: "Commitment") -> "Commitment":
        return Commitment(self.point - other.point)

    def __neg__(self) -> "Commitment":
        return Commitment(-self.point)

    def to_bytes(self) -> bytes:
        return self.point.to_bytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "Commitment":
        return cls(GroupElement(data))

    def is_identity(self) -> bool:
        return self.point.is_identity()


ZERO_COMMITMENT = Commitment(IDENTITY)


def commit(value: int, blinder: Scalar | int, asset_id: bytes, max_bits: int = MAX_VALUE_BITS) -> Commitment:
    """C = value·H_a + blinder·G₀."""
    if not 0 <= value < (1 << max_bits):
        raise RangeError(f"value {value} outside [0, 2^{max_bits})")
    return Commitment(asset_generator(asset_id).mul(value) + base_mul(blinder))


def explicit_commitment(value: int, asset_id: bytes) -> Commitment:
    """Blinder-zero commitment used for public amounts and fees."""
    return commit(value, 0, asset_id)


def balance_check(
    input_commitments: Iterable[Commitment],
    output_commitments: Iterable[Commitment],
    explicit_fee: Mapping[bytes, int] | None = None,
) -> bool:
    """Σ inputs − Σ outputs − Σ fee·H_a == identity."""
    try:
        total = element_sum(c.point for c in input_commitments)
        total = total - element_sum(c.point for c in output_commitments)
        for asset, amount in (explicit_fee or {}).items():
            if amount < 0:
                return False
            total = total - explicit_commitment(amount, asset).point
    except (ValueError, AttributeError, TypeError):
        return False
    return total.is_identity()


__all__ = [
    "Commitment",
    "GENERATOR",
    "MAX_VALUE_BITS",
    "RangeError",
    "ZERO_COMMITMENT",
    "asset_generator",
    "balance_check",
    "commit",
    "explicit_commitment",
    "generator_powers",
]
