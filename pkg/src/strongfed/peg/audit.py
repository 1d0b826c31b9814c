"""Two-way peg accounting across both ledgers."""

from __future__ import annotations

from dataclasses import dataclass

from strongfed.ledger.mainchain import MainChain
from strongfed.ledger.script import PegLock
from strongfed.ledger.state import ChainState
from strongfed.ledger.tx import PEGGED_ASSET
from strongfed.peg.ops import backup_condition, destination_key, paid_requests, peg_locks


@dataclass(frozen=True)
class PegAudit:
    """Snapshot of where pegged value sits.

    ``locked`` is value under the federation peg lock and ``recovered`` is
    value the backup quorum has swept.  Between them they back the sidechain
    supply plus everything in transit or stranded, so ``delta`` is zero when
    the peg is sound.
    """

    time_ms: int
    locked: int
    recovered: int
    circulating: int
    in_flight_in: int
    in_flight_out: int
    stranded: int

    @property
    def in_flight(self) -> int:
        return self.in_flight_in + self.in_flight_out

    @property
    def delta(self) -> int:
        return self.locked + self.recovered - self.circulating - self.in_flight - self.stranded

    def as_dict(self) -> dict:
        return {
            "time_ms": self.time_ms,
            "locked": self.locked,
            "recovered": self.recovered,
            "circulating": self.circulating,
            "in_flight": self.in_flight,
            "in_flight_in": self.in_flight_in,
            "in_flight_out": self.in_flight_out,
            "stranded": self.stranded,
            "delta": self.delta,
        }


def peg_audit(main: MainChain, side: ChainState, lock: PegLock, now_ms: int | None = None) -> PegAudit:
    """Audit the peg from main-chain history up to ``now_ms`` and a sidechain state."""
    mstate = main.state if now_ms is None else main.state_at(now_ms)
    backup = backup_condition(lock)
    locked = recovered = 0
    for o in mstate.utxos.values():
        if o.asset != PEGGED_ASSET or not isinstance(o.amount, int):
            continue
        if o.condition == lock:
            locked += o.amount
        elif o.condition == backup:
            recovered += o.amount
    in_in = stranded = 0
    for claim in peg_locks(main, lock, now_ms):
        if claim.lock in side.claimed_pegins:
            continue
        if destination_key(claim.destination) is None:
            stranded += claim.amount
        else:
            in_in += claim.amount
    paid = paid_requests(main, lock, now_ms)
    in_out = sum(r.amount for r in side.pegouts if r.burn not in paid)
    return PegAudit(
        time_ms=mstate.timestamp if now_ms is None else now_ms,
        locked=locked,
        recovered=recovered,
        circulating=side.circulating(PEGGED_ASSET),
        in_flight_in=in_in,
        in_flight_out=in_out,
        stranded=stranded,
    )
