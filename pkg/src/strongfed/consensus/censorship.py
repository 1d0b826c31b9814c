"""Proposal-outcome monitoring for censored blocksigners."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence


@dataclass(frozen=True)
class RoundRecord:
    """One proposal: who made it, what it carried and whether it was accepted."""

    height: int
    attempt: int
    proposer: int
    txids: tuple[bytes, ...] = ()
    accepted: bool = False
    precommitters: frozenset[int] = frozenset()


def censorship_monitor(history: Sequence[RoundRecord], window: int) -> set[int]:
    """Proposers whose last ``window`` proposals all failed while someone else's
    proposal succeeded in the span those failures cover."""
    if window < 1:
        raise ValueError("window must be at least 1")
    by_proposer: dict[int, list[int]] = {}
    for pos, rec in enumerate(history):
        by_proposer.setdefault(rec.proposer, []).append(pos)
    flagged = set()
    for proposer, positions in by_proposer.items():
        if len(positions) < window:
            continue
        last = positions[-window:]
        if any(history[p].accepted for p in last):
            continue
        lo, hi = last[0], last[-1]
        if any(history[p].accepted and history[p].proposer != proposer for p in range(lo, hi + 1)):
            flagged.add(proposer)
    return flagged


def first_flag(history: Sequence[RoundRecord], window: int, proposer: int) -> int | None:
    """Number of ``proposer``'s proposals seen when it is first flagged, if ever."""
    count = 0
    for pos, rec in enumerate(history):
        if rec.proposer != proposer:
            continue
        count += 1
        if proposer in censorship_monitor(history[: pos + 1], window):
            return count
    return None


def non_precommitters(history: Iterable[RoundRecord], proposer: int, members: Iterable[int]) -> set[int]:
    """Signers that withheld their precommit from every failed proposal of ``proposer``."""
    members = set(members)
    out: set[int] | None = None
    for rec in history:
        if rec.proposer != proposer or rec.accepted:
            continue
        missing = members - set(rec.precommitters)
        out = missing if out is None else out & missing
    return out or set()
