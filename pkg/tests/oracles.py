"""Independent reference implementations used only by the tests.

Nothing here imports the package's arithmetic; each routine is a second,
deliberately naive route to a value the package computes another way.
"""

from __future__ import annotations

import hashlib

# Twisted Edwards curve -x^2 + y^2 = 1 + d x^2 y^2 over GF(2^255 - 19).
P = 2**255 - 19
L = 2**252 + 27742317777372353535851937790883648493
D = (-121665 * pow(121666, P - 2, P)) % P
_SQRT_M1 = pow(2, (P - 1) // 4, P)


def _inv(x: int) -> int:
    return pow(x, P - 2, P)


def _recover_x(y: int, sign: int) -> int:
    x2 = (y * y - 1) * _inv(D * y * y + 1) % P
    x = pow(x2, (P + 3) // 8, P)
    if (x * x - x2) % P:
        x = x * _SQRT_M1 % P
    if (x * x - x2) % P:
        raise ValueError("not on curve")
    if x & 1 != sign:
        x = P - x
    return x


BY = 4 * _inv(5) % P
BASE = (_recover_x(BY, 0), BY)
NEUTRAL = (0, 1)


def ed_add(a, b):
    (x1, y1), (x2, y2) = a, b
    t = D * x1 * x2 * y1 * y2 % P
    x3 = (x1 * y2 + x2 * y1) * _inv(1 + t) % P
    y3 = (y1 * y2 + x1 * x2) * _inv(1 - t) % P
    return (x3, y3)


def ed_mul(k: int, pt=BASE):
    acc = NEUTRAL
    k %= L
    while k:
        if k & 1:
            acc = ed_add(acc, pt)
        pt = ed_add(pt, pt)
        k >>= 1
    return acc


def ed_encode(pt) -> bytes:
    x, y = pt
    return (y | ((x & 1) << 255)).to_bytes(32, "little")


def ed_decode(b: bytes):
    v = int.from_bytes(b, "little")
    y = v & ((1 << 255) - 1)
    return (_recover_x(y, v >> 255), y)


def merkle_root_reference(leaves: list[bytes]) -> bytes:
    """Recursive formulation of the duplicate-last-leaf tree."""

    def node(a: bytes, b: bytes) -> bytes:
        return hashlib.sha256(b"strongfed/merkle" + a + b).digest()

    def level(xs: list[bytes]) -> list[bytes]:
        padded = xs + [xs[-1]] if len(xs) % 2 else xs
        return [node(padded[2 * i], padded[2 * i + 1]) for i in range(len(padded) // 2)]

    xs = list(leaves)
    xs = level(xs)
    while len(xs) > 1:
        xs = level(xs)
    return xs[0]


def plaintext_balanced(inputs, outputs, fee) -> bool:
    """Per-asset sums over (asset, value) pairs; ``fee`` maps asset -> amount."""
    totals: dict[bytes, int] = {}
    for a, v in inputs:
        totals[a] = totals.get(a, 0) + v
    for a, v in outputs:
        totals[a] = totals.get(a, 0) - v
    for a, v in fee.items():
        totals[a] = totals.get(a, 0) - v
    return all(v == 0 for v in totals.values())
