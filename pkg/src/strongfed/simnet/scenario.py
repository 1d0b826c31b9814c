"""Scenario description, strict loading and validation."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

SCHEMA_VERSION = 1

FAULT_KINDS = (
    "crash",
    "recover",
    "equivocate",
    "censor",
    "withhold",
    "partition",
    "compromise_keys",
    "tamper_alarm",
)
SIGNER = "signer"
WATCHMAN = "watchman"


class ScenarioError(ValueError):
    pass


@dataclass
class FederationSpec:
    n: int = 11
    k: int = 8
    precommit_threshold: int | None = None
    block_interval: float = 60.0
    proposal_timeout: float = 0.6
    max_backoff: int = 4
    supermajority: int | None = None  # upgrade quorum; None: k


@dataclass
class NetworkSpec:
    delay_min: float = 0.05
    delay_max: float = 0.15
    drop_rate: float = 0.0


@dataclass
class MainChainSpec:
    enabled: bool = True
    mean_interval: float = 600.0
    miners: int = 1
    confirmation_depth: int = 2
    difficulty_bits: int = 4
    propagation_delay: float = 10.0
    race_blocks: int = 0  # blocks for the orphan-rate race model; 0 skips it


@dataclass
class WatchmenSpec:
    count: int | None = None  # None: one per blocksigner
    threshold: int | None = None  # None: the block-signing k
    shared: bool = True  # hosted on the blocksigner with the same id
    process_interval: float = 30.0
    schedules: dict[int, list[list[float]]] = field(default_factory=dict)
    schedule_period: float | None = None
    schedule_online: float | None = None
    backup_count: int = 3
    backup_threshold: int = 2
    timelock: float = 86_400.0
    backup_claim: bool = False  # the backup quorum tries to sweep once per main block


@dataclass
class IssuanceEvent:
    t: float
    user: int
    amount: int


@dataclass
class WorkloadSpec:
    mode: str = "side"  # "side" or "main" (main-chain-only transfers)
    users: int = 4
    start: float = 1.0
    tx_rate: float = 0.0
    closed_loop: bool = False
    pegin_rate: float = 0.0
    pegout_rate: float = 0.0
    swap_rate: float = 0.0
    issuances: list[IssuanceEvent] = field(default_factory=list)
    confidential: bool = True
    gateways: dict[int, list[int]] = field(default_factory=dict)
    main_balance: int = 1000
    side_balance: int = 0
    amount_max: int = 20
    malformed_pegins: list[float] = field(default_factory=list)  # times of bad-destination locks
    garbage_pegouts: list[float] = field(default_factory=list)  # times of online-key-only peg-outs


@dataclass
class UpgradeEvent:
    t: float
    version: int
    refuse: list[int] = field(default_factory=list)  # functionaries that withhold their signature
    auditor: bool = False


@dataclass
class Fault:
    kind: str
    t: float = 0.0
    ids: list[int] = field(default_factory=list)
    role: str = SIGNER
    duration: float = 0.0
    groups: list[list[int]] = field(default_factory=list)
    bridges: list[int] = field(default_factory=list)
    split: list[int] | None = None
    filter: dict[str, Any] = field(default_factory=dict)
    phase: str = "sign"


@dataclass
class AdversarySpec:
    """Shorthand for the split-brain equivocation attack.

    ``equivocators`` signers (ids 0..e-1) equivocate from t=0 and bridge a
    partition that splits the honest signers into two halves until ``heal``.
    """

    equivocators: int = 0
    heal: float | None = None


@dataclass
class Scenario:
    name: str = "unnamed"
    description: str = ""
    schema: int = SCHEMA_VERSION
    seed: int = 0
    duration: float = 3600.0
    federation: FederationSpec = field(default_factory=FederationSpec)
    network: NetworkSpec = field(default_factory=NetworkSpec)
    mainchain: MainChainSpec = field(default_factory=MainChainSpec)
    watchmen: WatchmenSpec = field(default_factory=WatchmenSpec)
    workload: WorkloadSpec = field(default_factory=WorkloadSpec)
    faults: list[Fault] = field(default_factory=list)
    adversary: AdversarySpec | None = None
    upgrades: list[UpgradeEvent] = field(default_factory=list)
    observer: bool = True  # an external full node relays fork proofs
    censorship_window: int = 10
    audit: bool = True
    stall_threshold: float | None = None  # seconds without a block; default 2 intervals
    expectations: dict[str, Any] = field(default_factory=dict)

    # -- derived -----------------------------------------------------------

    @property
    def n_watchmen(self) -> int:
        return self.federation.n if self.watchmen.count is None else self.watchmen.count

    @property
    def k_watchmen(self) -> int:
        return self.federation.k if self.watchmen.threshold is None else self.watchmen.threshold

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, **changes) -> "Scenario":
        return dataclasses.replace(self, **changes)


# --- loading -------------------------------------------------------------------


_NESTED = {
    "federation": FederationSpec,
    "network": NetworkSpec,
    "mainchain": MainChainSpec,
    "watchmen": WatchmenSpec,
    "workload": WorkloadSpec,
    "adversary": AdversarySpec,
}


def _build(cls, data: Any, where: str):
    if not isinstance(data, dict):
        raise ScenarioError(f"{where or 'scenario'}: expected a mapping")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ScenarioError(f"{where or 'scenario'}: unknown key(s) {', '.join(map(str, unknown))}")
    kw = {}
    for key, value in data.items():
        path = f"{where}.{key}" if where else key
        if cls is Scenario and key in _NESTED and value is not None:
            value = _build(_NESTED[key], value, path)
        elif cls is Scenario and key == "faults":
            if not isinstance(value, list):
                raise ScenarioError(f"{path}: expected a list")
            value = [_build(Fault, f, f"{path}[{i}]") for i, f in enumerate(value)]
        elif cls is Scenario and key == "upgrades":
            value = [_build(UpgradeEvent, e, f"{path}[{i}]") for i, e in enumerate(value or [])]
        elif cls is WorkloadSpec and key == "issuances":
            value = [_build(IssuanceEvent, e, f"{path}[{i}]") for i, e in enumerate(value or [])]
        elif cls in (WorkloadSpec, WatchmenSpec) and key in ("gateways", "schedules"):
            if not isinstance(value, dict):
                raise ScenarioError(f"{path}: expected a mapping")
            value = {int(k): v for k, v in value.items()}
        kw[key] = value
    try:
        return cls(**kw)
    except TypeError as e:
        raise ScenarioError(f"{where or 'scenario'}: {e}") from None


def scenario_from_dict(data: dict) -> Scenario:
    sc = _build(Scenario, data, "")
    validate(sc)
    return sc


def load_scenario(path: str | Path) -> Scenario:
    text = Path(path).read_text()
    try:
        data = json.loads(text) if str(path).endswith(".json") else yaml.safe_load(text)
    except (yaml.YAMLError, json.JSONDecodeError) as e:
        raise ScenarioError(f"cannot parse {path}: {e}") from None
    if data is None:
        data = {}
    return scenario_from_dict(data)


# --- validation ------------------------------------------------------------------


def _int(v, name: str, lo: int | None = None, hi: int | None = None) -> None:
    if isinstance(v, bool) or not isinstance(v, int):
        raise ScenarioError(f"{name} must be an integer")
    if lo is not None and v < lo:
        raise ScenarioError(f"{name} must be >= {lo} (got {v})")
    if hi is not None and v > hi:
        raise ScenarioError(f"{name} must be <= {hi} (got {v})")


def _num(v, name: str, lo: float | None = None) -> None:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ScenarioError(f"{name} must be a number")
    if lo is not None and v < lo:
        raise ScenarioError(f"{name} must be >= {lo} (got {v})")


def validate(sc: Scenario) -> None:
    """Raise ``ScenarioError`` naming the first violated invariant."""
    if sc.schema != SCHEMA_VERSION:
        raise ScenarioError(f"unsupported schema version {sc.schema}")
    _int(sc.seed, "seed", 0, 2**64 - 1)
    _num(sc.duration, "duration", 0)
    f = sc.federation
    _int(f.n, "federation.n", 1)
    _int(f.k, "federation.k", 1)
    if f.k > f.n:
        raise ScenarioError(f"federation.k must satisfy 1 <= k <= n (k={f.k}, n={f.n})")
    if f.precommit_threshold is not None:
        _int(f.precommit_threshold, "federation.precommit_threshold")
        if not f.k <= f.precommit_threshold <= f.n:
            raise ScenarioError("federation.precommit_threshold must satisfy k <= X <= n")
    _num(f.block_interval, "federation.block_interval", 0)
    _num(f.proposal_timeout, "federation.proposal_timeout", 0)
    if f.proposal_timeout <= 0:
        raise ScenarioError("federation.proposal_timeout must be > 0")
    _int(f.max_backoff, "federation.max_backoff", 0, 20)
    if f.supermajority is not None:
        _int(f.supermajority, "federation.supermajority", 1, f.n)

    net = sc.network
    _num(net.delay_min, "network.delay_min", 0)
    _num(net.delay_max, "network.delay_max", 0)
    if net.delay_max < net.delay_min:
        raise ScenarioError("network.delay_max must be >= network.delay_min")
    if not 0 <= net.drop_rate < 1:
        raise ScenarioError("network.drop_rate must be in [0, 1)")

    m = sc.mainchain
    if m.mean_interval <= 0:
        raise ScenarioError("mainchain.mean_interval must be > 0")
    _int(m.miners, "mainchain.miners", 1)
    _int(m.confirmation_depth, "mainchain.confirmation_depth", 1)
    _int(m.difficulty_bits, "mainchain.difficulty_bits", 0, 16)
    _int(m.race_blocks, "mainchain.race_blocks", 0)

    w = sc.watchmen
    nw, kw = sc.n_watchmen, sc.k_watchmen
    _int(nw, "watchmen.count", 1)
    if w.shared and nw != f.n:
        raise ScenarioError("shared watchmen need watchmen.count == federation.n")
    if not 1 <= kw <= nw:
        raise ScenarioError(f"watchmen.threshold must satisfy 1 <= k <= count (k={kw}, count={nw})")
    _int(w.backup_count, "watchmen.backup_count", 1)
    if not 1 <= w.backup_threshold <= w.backup_count:
        raise ScenarioError("watchmen.backup_threshold must satisfy 1 <= m <= M")
    _num(w.process_interval, "watchmen.process_interval", 0)
    if w.process_interval <= 0:
        raise ScenarioError("watchmen.process_interval must be > 0")
    _num(w.timelock, "watchmen.timelock", 0)
    for wid, windows in w.schedules.items():
        if not 0 <= wid < nw:
            raise ScenarioError(f"watchmen.schedules: unknown watchman id {wid}")
        for win in windows:
            if len(win) != 2 or win[0] > win[1]:
                raise ScenarioError(f"watchmen.schedules[{wid}]: windows are [start, end]")
    if (w.schedule_period is None) != (w.schedule_online is None):
        raise ScenarioError("watchmen.schedule_period and schedule_online go together")
    if w.schedule_period is not None and not 0 < w.schedule_online <= w.schedule_period:
        raise ScenarioError("watchmen.schedule_online must be in (0, schedule_period]")

    wl = sc.workload
    if wl.mode not in ("side", "main"):
        raise ScenarioError("workload.mode must be 'side' or 'main'")
    _int(wl.users, "workload.users", 0)
    for name in ("tx_rate", "pegin_rate", "pegout_rate", "swap_rate", "start"):
        _num(getattr(wl, name), f"workload.{name}", 0)
    _int(wl.amount_max, "workload.amount_max", 1, 2**16 - 1)
    _int(wl.main_balance, "workload.main_balance", 0)
    _int(wl.side_balance, "workload.side_balance", 0)
    if wl.swap_rate and wl.users < 2:
        raise ScenarioError("workload.swap_rate needs at least two users")
    for u, gws in wl.gateways.items():
        if not 0 <= u < wl.users:
            raise ScenarioError(f"workload.gateways: unknown user {u}")
        if not gws or any(not 0 <= g < f.n for g in gws):
            raise ScenarioError(f"workload.gateways[{u}]: signer ids must be < n")
    for i, ev in enumerate(wl.issuances):
        if not 0 <= ev.user < wl.users:
            raise ScenarioError(f"workload.issuances[{i}]: unknown user {ev.user}")
        if ev.amount <= 0:
            raise ScenarioError(f"workload.issuances[{i}]: amount must be positive")
        _check_time(ev.t, sc, f"workload.issuances[{i}].t")
    for i, t in enumerate(wl.malformed_pegins):
        _check_time(t, sc, f"workload.malformed_pegins[{i}]")
    for i, t in enumerate(wl.garbage_pegouts):
        _check_time(t, sc, f"workload.garbage_pegouts[{i}]")

    for i, fault in enumerate(sc.faults):
        _check_fault(fault, sc, f"faults[{i}]")
    if sc.adversary is not None:
        e = sc.adversary.equivocators
        _int(e, "adversary.equivocators", 0, f.n)
        if sc.adversary.heal is not None:
            _check_time(sc.adversary.heal, sc, "adversary.heal")
    for i, up in enumerate(sc.upgrades):
        _check_time(up.t, sc, f"upgrades[{i}].t")
        _int(up.version, f"upgrades[{i}].version", 1)
        if any(not 0 <= r < f.n for r in up.refuse):
            raise ScenarioError(f"upgrades[{i}]: refuse ids must be < n")
    _int(sc.censorship_window, "censorship_window", 1)
    if not isinstance(sc.expectations, dict):
        raise ScenarioError("expectations must be a mapping")


def _check_time(t, sc: Scenario, name: str) -> None:
    _num(t, name, 0)
    if t > sc.duration:
        raise ScenarioError(f"{name} = {t} lies beyond duration {sc.duration}")


def _check_fault(fault: Fault, sc: Scenario, where: str) -> None:
    if fault.kind not in FAULT_KINDS:
        raise ScenarioError(f"{where}: unknown fault kind {fault.kind!r}")
    _check_time(fault.t, sc, f"{where}.t")
    if fault.role not in (SIGNER, WATCHMAN):
        raise ScenarioError(f"{where}: role must be 'signer' or 'watchman'")
    pop = sc.federation.n if fault.role == SIGNER else sc.n_watchmen
    for i in fault.ids:
        if not isinstance(i, int) or not 0 <= i < pop:
            raise ScenarioError(f"{where}: unknown {fault.role} id {i} (population {pop})")
    if fault.kind == "partition":
        _num(fault.duration, f"{where}.duration", 0)
        if fault.role != SIGNER:
            raise ScenarioError(f"{where}: partitions apply to signers")
        seen: set[int] = set()
        for g in fault.groups:
            for i in g:
                if not isinstance(i, int) or not 0 <= i < pop:
                    raise ScenarioError(f"{where}: unknown signer id {i} in groups")
                if i in seen:
                    raise ScenarioError(f"{where}: overlapping groups (id {i})")
                seen.add(i)
        for b in fault.bridges:
            if b in seen:
                raise ScenarioError(f"{where}: bridge {b} also appears in a group")
            if not 0 <= b < pop:
                raise ScenarioError(f"{where}: unknown bridge id {b}")
        if seen | set(fault.bridges) != set(range(pop)):
            raise ScenarioError(f"{where}: groups and bridges must cover every signer")
    elif not fault.ids:
        raise ScenarioError(f"{where}: {fault.kind} needs ids")
    if fault.kind == "withhold" and fault.phase not in ("sign", "precommit", "all"):
        raise ScenarioError(f"{where}: phase must be sign, precommit or all")
    if fault.kind in ("equivocate", "censor", "withhold") and fault.role != SIGNER:
        raise ScenarioError(f"{where}: {fault.kind} applies to signers")
    if fault.kind == "censor":
        unknown = set(fault.filter) - {"users", "kind"}
        if unknown or not fault.filter:
            raise ScenarioError(f"{where}: censor filter takes 'users' and/or 'kind'")
        for u in fault.filter.get("users", []):
            if not 0 <= u < sc.workload.users:
                raise ScenarioError(f"{where}: unknown user {u} in filter")
        if fault.filter.get("kind", "pegout") not in ("pegout", "pegin", "issuance", "transfer"):
            raise ScenarioError(f"{where}: unknown filter kind")
    if fault.split is not None and any(not 0 <= i < pop for i in fault.split):
        raise ScenarioError(f"{where}: split ids must be < n")


def expand_adversary(sc: Scenario) -> list[Fault]:
    """Faults implied by ``sc.adversary`` (empty when absent)."""
    adv = sc.adversary
    if adv is None or adv.equivocators == 0:
        return []
    n, e = sc.federation.n, adv.equivocators
    eq = list(range(e))
    honest = list(range(e, n))
    half = (len(honest) + 1) // 2
    side_a, side_b = honest[:half], honest[half:]
    heal = sc.duration if adv.heal is None else adv.heal
    faults = [Fault("equivocate", 0.0, eq, split=side_a)]
    groups = [g for g in (side_a, side_b) if g]
    faults.append(Fault("partition", 0.0, [], duration=heal, groups=groups, bridges=eq))
    return faults
