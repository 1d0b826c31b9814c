"""Run metrics and their recomputation from a trace."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

METRICS_SCHEMA = "strongfed-metrics/1"


def percentile(values: Sequence[float], q: float) -> float | None:
    """Nearest-rank percentile; None for an empty sample."""
    if not values:
        return None
    xs = sorted(values)
    rank = max(1, math.ceil(q / 100.0 * len(xs)))
    return xs[rank - 1]


def latency_summary(latencies_ms: Sequence[int]) -> dict:
    secs = [x / 1000.0 for x in latencies_ms]
    return {
        "count": len(secs),
        "mean": (sum(secs) / len(secs)) if secs else None,
        "p50": percentile(secs, 50),
        "p95": percentile(secs, 95),
    }


def stall_intervals(accept_times_ms: Iterable[int], end_ms: int, threshold_ms: int, start_ms: int = 0) -> list[list[float]]:
    """Gaps longer than ``threshold_ms`` between consecutive blocks (and the run edges)."""
    pts = [start_ms, *sorted(accept_times_ms), end_ms]
    out = []
    for a, b in zip(pts, pts[1:]):
        if b - a > threshold_ms:
            out.append([a / 1000.0, b / 1000.0])
    return out


@dataclass
class Metrics:
    schema: str = METRICS_SCHEMA
    scenario: dict = field(default_factory=dict)
    duration: float = 0.0
    blocks: int = 0
    block_times: list[float] = field(default_factory=list)
    forks: int = 0
    fork_heights: list[int] = field(default_factory=list)
    max_headers_per_height: int = 0
    fork_proof_constructed: bool = False
    fork_proof_overlap: list[int] = field(default_factory=list)
    fork_proof_time: float | None = None
    halted: dict = field(default_factory=dict)  # node -> [time, reason]
    halt_lag_max: float | None = None  # slowest honest halt after the first proof broadcast
    stalls: list[list[float]] = field(default_factory=list)
    stall_time: float = 0.0
    latency: dict = field(default_factory=dict)
    unconfirmed: int = 0
    proposals: int = 0
    failed_proposals: int = 0
    censorship_flags: list[int] = field(default_factory=list)
    censorship_first_flag: dict = field(default_factory=dict)  # proposer -> proposals seen
    non_precommitters: dict = field(default_factory=dict)
    messages: dict = field(default_factory=dict)
    dropped_messages: int = 0
    node_heights: list[int] = field(default_factory=list)
    main_height: int = 0
    main_race: dict | None = None
    peg: dict = field(default_factory=dict)
    audits: list[dict] = field(default_factory=list)
    audit_max_abs_delta: int = 0
    audit_final: dict | None = None
    upgrades: dict = field(default_factory=dict)
    workload: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return asdict(self)


# --- expectations -----------------------------------------------------------------


def _lookup(doc: dict, path: str):
    cur = doc
    for part in path.split("."):
        if isinstance(cur, dict) and part in cur:
            cur = cur[part]
        else:
            raise KeyError(path)
    return cur


def check_expectations(metrics: dict, expectations: dict) -> list[dict]:
    """Evaluate declared expectations against a metrics document.

    A value is either an exact target or a mapping with ``min``/``max``.
    Dotted keys reach into nested metrics; a ``len:`` prefix compares the
    length of a list.
    """
    rows = []
    for key, want in sorted(expectations.items()):
        path = key[4:] if key.startswith("len:") else key
        try:
            got = _lookup(metrics, path)
            if key.startswith("len:"):
                got = len(got)
        except (KeyError, TypeError):
            rows.append({"metric": key, "expected": want, "actual": None, "ok": False})
            continue
        if isinstance(want, dict):
            ok = got is not None
            if ok and "min" in want:
                ok = got >= want["min"]
            if ok and "max" in want:
                ok = got <= want["max"]
        else:
            ok = got == want
        rows.append({"metric": key, "expected": want, "actual": got, "ok": bool(ok)})
    return rows


# --- trace recomputation ---------------------------------------------------------------


def metrics_from_trace(records: Sequence[dict]) -> dict:
    """Recompute the block, fork, stall, latency and message metrics from a trace."""
    header = records[0] if records and records[0].get("kind") == "header" else {}
    sc = header.get("scenario", {})
    end_ms = round(sc.get("duration", 0) * 1000)
    first: dict[int, tuple[int, str]] = {}
    digests: dict[int, set[str]] = {}
    submits: dict[str, int] = {}
    inclusions: dict[str, int] = {}
    messages: dict[str, int] = {}
    halted: dict[str, list] = {}
    dropped = 0
    for r in records[1:]:
        kind = r["kind"]
        if kind == "side-block":
            h = r["height"]
            digests.setdefault(h, set()).add(r["payload"])
            if h not in first:
                first[h] = (r["t"], r["payload"])
                for txid in r.get("txids", []):
                    inclusions.setdefault(txid, r["t"])
        elif kind == "tx-submit":
            submits.setdefault(r["payload"], r["t"])
        elif kind == "msg":
            messages[r["type"]] = messages.get(r["type"], 0) + 1
            dropped += bool(r.get("dropped"))
        elif kind == "halt":
            halted.setdefault(r["actor"].split(":")[1], [r["t"] / 1000.0, r["reason"]])
    lat = [inclusions[t] - s for t, s in submits.items() if t in inclusions]
    fed = sc.get("federation", {})
    thr = stall_threshold_ms(sc)
    out = {
        "blocks": len(first),
        "forks": sum(1 for d in digests.values() if len(d) > 1),
        "max_headers_per_height": max((len(d) for d in digests.values()), default=0),
        "stalls": stall_intervals([t for t, _ in first.values()], end_ms, thr) if fed else [],
        "latency": latency_summary(lat),
        "halted": halted,
    }
    if messages:
        out["messages"] = dict(sorted(messages.items()))
        out["dropped_messages"] = dropped
    return out


def stall_threshold_ms(sc: dict) -> int:
    if sc.get("stall_threshold") is not None:
        return round(sc["stall_threshold"] * 1000)
    fed = sc.get("federation", {})
    return round(max(2 * fed.get("block_interval", 60.0), 10 * fed.get("proposal_timeout", 0.6)) * 1000)
