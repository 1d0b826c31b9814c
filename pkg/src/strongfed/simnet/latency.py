"""Confirmation latency of a sidechain workload against a main-chain-only one."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Sequence

from strongfed.simnet.engine import sim_run
from strongfed.simnet.scenario import Scenario, scenario_from_dict


@dataclass(frozen=True)
class LatencyComparison:
    confirmations: int
    side_mean: float | None
    main_mean: float | None
    side_count: int
    main_count: int
    ratio: float | None  # main_mean / side_mean

    def as_dict(self) -> dict:
        return asdict(self)


def trace_latencies(records: Sequence[dict], confirmations: int = 1) -> list[float]:
    """Seconds from each user submission to its confirmation.

    A sidechain transaction is final in its first block.  On the main chain
    it counts once ``confirmations`` blocks sit on top of (and including)
    the block that mined it; transactions still short of that are skipped.
    """
    header = records[0]
    mode = header["scenario"]["workload"]["mode"]
    submits: dict[str, int] = {}
    done: dict[str, int] = {}
    main_at: dict[int, int] = {}
    main_tx: dict[str, int] = {}
    side_seen: set[int] = set()
    for r in records[1:]:
        kind = r["kind"]
        if kind == "tx-submit" and r["actor"].startswith("user:"):
            submits.setdefault(r["payload"], r["t"])
        elif kind == "side-block" and mode == "side":
            if r["height"] in side_seen:
                continue
            side_seen.add(r["height"])
            for txid in r.get("txids", []):
                done.setdefault(txid, r["t"])
        elif kind == "main-block":
            main_at[r["height"]] = r["t"]
            for txid in r.get("txids", []):
                main_tx.setdefault(txid, r["height"])
    if mode == "main":
        for txid, h in main_tx.items():
            t = main_at.get(h + confirmations - 1)
            if t is not None:
                done[txid] = t
    return [(done[t] - s) / 1000.0 for t, s in submits.items() if t in done]


def latency_compare(side: Scenario, main: Scenario, *, confirmations: int = 1) -> LatencyComparison:
    """Run both scenarios and compare their mean confirmation latency."""
    if side.seed != main.seed:
        raise ValueError("latency comparison needs both scenarios on one workload seed")
    if confirmations < 1:
        raise ValueError("confirmations must be at least 1")
    _, side_trace = sim_run(side)
    _, main_trace = sim_run(main)
    a = trace_latencies(side_trace, confirmations)
    b = trace_latencies(main_trace, confirmations)
    sm = sum(a) / len(a) if a else None
    mm = sum(b) / len(b) if b else None
    ratio = mm / sm if sm and mm is not None else None
    return LatencyComparison(confirmations, sm, mm, len(a), len(b), ratio)


def latency_pair(seed: int = 0, users: int = 5, side_duration: float = 12100.0, main_duration: float = 140000.0) -> tuple[Scenario, Scenario]:
    """A closed-loop transfer workload on 60 s sidechain blocks and on 600 s main-chain blocks."""
    wl = {"users": users, "closed_loop": True, "confidential": False, "side_balance": 1000, "main_balance": 1000}
    side = scenario_from_dict(
        {
            "name": "latency-side",
            "seed": seed,
            "duration": side_duration,
            "mainchain": {"enabled": False},
            "audit": False,
            "workload": {**wl, "mode": "side"},
        }
    )
    main = scenario_from_dict(
        {
            "name": "latency-main",
            "seed": seed,
            "duration": main_duration,
            "federation": {"block_interval": main_duration},
            "mainchain": {"mean_interval": 600.0, "difficulty_bits": 0},
            "watchmen": {"process_interval": main_duration},
            "audit": False,
            "workload": {**wl, "mode": "main"},
        }
    )
    return side, main
