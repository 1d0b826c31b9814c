"""The discrete-event simulator.

One virtual clock in integer milliseconds drives every actor: blocksigners
(``ConsensusNode``), watchmen, the main-chain miner, simulated users and an
optional external observer that relays fork proofs.  Events are ordered by
(time, scheduling sequence) and every random draw comes from generators
seeded by the scenario, so equal scenarios give byte-identical traces.
"""

from __future__ import annotations

import heapq
import random
from dataclasses import dataclass
from typing import Any, Callable

from strongfed.consensus.censorship import RoundRecord, censorship_monitor, first_flag, non_precommitters
from strongfed.consensus.forks import make_fork_proof
from strongfed.consensus.messages import (
    Accepted,
    Broadcast,
    Deliver,
    ForkProofMsg,
    Log,
    Precommit,
    Reconnect,
    RoundStart,
    Send,
    SetTimer,
    SubmitTx,
    TamperAlarm,
    UpgradeOffer,
)
from strongfed.consensus.node import CENSOR, CRASHED, EQUIVOCATOR, WITHHOLDER, Behavior, ConsensusNode
from strongfed.consensus.params import FederationParams
from strongfed.consensus.upgrade import usp_publish
from strongfed.crypto.schnorr import keypair_generate
from strongfed.encoding import digest
from strongfed.ledger.block import Block, SignatureStamp
from strongfed.ledger.mainchain import MainChain, mainchain_race, pegin_checker
from strongfed.ledger.script import KeyLock, MultisigLock
from strongfed.ledger.state import MAIN, SIDE, ChainRules, ChainState, genesis
from strongfed.ledger.tx import PEGGED_ASSET, Transaction
from strongfed.peg.audit import peg_audit
from strongfed.peg.ops import (
    RequestInfo,
    backup_withdrawal,
    check_withdrawal,
    federation_peg_lock,
    lock_utxos,
    paid_requests,
)
from strongfed.peg.watchman import (
    COMPROMISED,
    PegView,
    SubmitMain,
    SubmitSide,
    WatchBroadcast,
    WatchLog,
    Watchman,
)
from strongfed.simnet.metrics import Metrics, latency_summary, stall_intervals, stall_threshold_ms
from strongfed.simnet.scenario import SIGNER, Fault, Scenario, expand_adversary, validate
from strongfed.simnet.trace import TRACE_SCHEMA
from strongfed.simnet.workload import Users

TEST_ASSET = digest(b"strongfed/test-asset")
MALFORMED_DESTINATION = b"\xff" * 32
OBSERVER = -1
USER = -2


def _ms(seconds: float) -> int:
    return int(round(seconds * 1000))


@dataclass
class _Proposal:
    t: int
    proposer: int
    height: int
    attempt: int
    digests: tuple[str, ...]
    txids: tuple[str, ...]


class Simulation:
    def __init__(self, scenario: Scenario, *, trace_messages: bool = False) -> None:
        validate(scenario)
        self.sc = sc = scenario
        self.trace_messages = trace_messages
        seed = sc.seed.to_bytes(8, "little")

        def rng(tag: str) -> random.Random:
            return random.Random(int.from_bytes(digest(b"strongfed/rng", seed, tag.encode())[:8], "little"))

        self.rng_net, self.rng_work, self.rng_main = rng("net"), rng("work"), rng("main")
        self.end = _ms(sc.duration)
        self.now = 0
        self._queue: list = []
        self._seq = 0
        self.records: list[dict] = []

        f = sc.federation
        self.params = FederationParams(f.n, f.k, f.precommit_threshold, f.block_interval, f.proposal_timeout, f.max_backoff)
        self.n = f.n
        tag = str(sc.seed)
        self.signer_kp = [keypair_generate(f"{tag}/signer/{i}") for i in range(f.n)]
        self.signer_keys = tuple(k.public for k in self.signer_kp)
        self.watch_kp = [keypair_generate(f"{tag}/watchman/{j}") for j in range(sc.n_watchmen)]
        self.backup_kp = [keypair_generate(f"{tag}/backup/{j}") for j in range(sc.watchmen.backup_count)]
        self.usp = keypair_generate(f"{tag}/usp")
        self.auditor = keypair_generate(f"{tag}/auditor")
        self.attacker = keypair_generate(f"{tag}/attacker")
        self.lock = federation_peg_lock(
            [k.public for k in self.watch_kp],
            sc.k_watchmen,
            [k.public for k in self.backup_kp],
            sc.watchmen.backup_threshold,
            _ms(sc.watchmen.timelock),
        )

        # chains
        self.side_txids: dict[bytes, int] = {}
        self.users = Users(sc.seed, sc.workload.users, self._confirmed)
        main_rules = ChainRules(MAIN, difficulty_bits=sc.mainchain.difficulty_bits)
        self.main_alloc = self.users.genesis_outputs(PEGGED_ASSET, sc.workload.main_balance)
        self.main = MainChain(main_rules, self.main_alloc)
        self.side_rules = ChainRules(
            SIDE,
            signer_keys=self.signer_keys,
            threshold=f.k,
            members_P=self.users.all_P,
            members_Q=self.users.all_Q,
            fee_condition=MultisigLock(f.k, self.signer_keys),
            pegin_check=pegin_checker(self.main, self.lock, sc.mainchain.confirmation_depth),
        )
        self.side_alloc = self.users.genesis_outputs(TEST_ASSET, sc.workload.side_balance)
        state0, blk0 = genesis(self.side_rules, self.side_alloc, 0, tag=b"side")
        for t in blk0.txs:
            self.side_txids[t.txid] = 0
            self.users.adopt(SIDE, t)
        for t in self.main.blocks[0].txs:
            self.users.adopt(MAIN, t)
        self.canon: list[Block] = [blk0]
        self.canon_states: list[ChainState] = [state0]
        self.canon_times: list[int] = [0]
        self.side_tx_obj: dict[bytes, Transaction] = {t.txid: t for t in blk0.txs}
        self.digests_at: dict[int, dict[bytes, Block]] = {}

        sm = f.supermajority if f.supermajority is not None else f.k
        self.nodes = [
            ConsensusNode(
                i,
                self.signer_kp[i].secret,
                self.signer_keys,
                self.side_rules,
                state0,
                [blk0],
                usp_key=self.usp.public,
                supermajority=sm,
            )
            for i in range(f.n)
        ]
        self.base_behavior: dict[int, Behavior] = {}
        self.watchmen = [
            Watchman(
                j,
                self.watch_kp[j].secret,
                tuple(self.lock.keys),
                sc.k_watchmen,
                self.lock,
                sc.mainchain.confirmation_depth,
                self.users.all_P,
                self.users.all_Q,
                _ms(sc.watchmen.process_interval),
                attacker=self.attacker.public,
            )
            for j in range(sc.n_watchmen)
        ]
        self.watch_down: set[int] = set()
        self.partitions: list[tuple[int, int, dict[int, int], frozenset[int]]] = []

        # bookkeeping
        self.msg_counts: dict[str, int] = {}
        self.dropped = 0
        self.proposals: list[_Proposal] = []
        self.precommitters: dict[tuple[int, int, str], set[int]] = {}
        self.halts: dict[int, tuple[int, str]] = {}
        self.fork_proof = None
        self.fork_proof_time: int | None = None
        self.submitted: dict[bytes, int] = {}
        self.included: dict[bytes, int] = {}
        self.main_included: dict[bytes, int] = {}
        self.closed_loop_pending: dict[bytes, int] = {}
        self.audits: list[dict] = []
        self.peg = {
            "pegins": 0,
            "pegins_malformed": 0,
            "mints": 0,
            "pegouts": 0,
            "withdrawals": 0,
            "withdrawal_refusals": 0,
            "unauthorized_withdrawals": 0,
            "backup_attempts_before_T": 0,
            "backup_recovered": 0,
            "backup_recovered_at": None,
            "backup_swept_all": None,
            "pegouts_paid": 0,
        }
        self.work = {"transfers": 0, "swaps": 0, "issuances": 0, "skipped": 0}
        self.upgrade_log: list[dict] = []
        self.garbage: list[dict] = []
        self.pegout_users: set[int] = set()

    # --- queue ------------------------------------------------------------------

    def _at(self, t: int, fn: Callable, *args: Any) -> None:
        if t > self.end:
            return
        self._seq += 1
        heapq.heappush(self._queue, (t, self._seq, fn, args))

    def _record(self, kind: str, actor: str, payload: str = "", **extra) -> None:
        rec = {"t": self.now, "actor": actor, "kind": kind, "payload": payload}
        rec.update(extra)
        self.records.append(rec)

    # --- setup ------------------------------------------------------------------

    def _schedule_initial(self) -> None:
        sc = self.sc
        faults = expand_adversary(sc) + list(sc.faults)
        for f in sorted(faults, key=lambda f: f.t):
            self._at(_ms(f.t), self._apply_fault, f)
        for i in range(self.n):
            self._at(0, self._node_event, i, RoundStart(1))
        if sc.mainchain.enabled:
            self._at(self._next_mine(0), self._mine)
        if sc.watchmen.process_interval and sc.mainchain.enabled:
            iv = _ms(sc.watchmen.process_interval)
            self._at(iv, self._watch_tick)
        wl = sc.workload
        start = _ms(wl.start)
        if wl.users:
            if wl.closed_loop:
                for u in range(wl.users):
                    self._at(start, self._closed_loop_submit, u)
            else:
                for op, rate in (("transfer", wl.tx_rate), ("swap", wl.swap_rate), ("pegin", wl.pegin_rate), ("pegout", wl.pegout_rate)):
                    if rate > 0:
                        self._at(start + self._exp(rate), self._op, op, rate)
            for ev in wl.issuances:
                self._at(_ms(ev.t), self._issue, ev.user, ev.amount)
            for t in wl.malformed_pegins:
                self._at(_ms(t), self._malformed_pegin)
            for t in wl.garbage_pegouts:
                self._at(_ms(t), self._garbage_pegout)
        for up in sc.upgrades:
            self._at(_ms(up.t), self._upgrade, up)

    def _exp(self, rate: float) -> int:
        return max(1, _ms(self.rng_work.expovariate(rate)))

    def _next_mine(self, now: int) -> int:
        return now + max(1, _ms(self.rng_main.expovariate(1.0 / self.sc.mainchain.mean_interval)))

    # --- network ------------------------------------------------------------------

    def _partitioned(self, a: int, b: int) -> bool:
        for start, stop, group, bridges in self.partitions:
            if start <= self.now < stop and a not in bridges and b not in bridges:
                if group.get(a) != group.get(b):
                    return True
        return False

    def _delay(self) -> int:
        net = self.sc.network
        return self.rng_net.randint(_ms(net.delay_min), _ms(net.delay_max))

    def _send(self, src: int, dst: int, msg: Any) -> None:
        kind = msg.kind
        self.msg_counts[kind] = self.msg_counts.get(kind, 0) + 1
        lost = src >= 0 and self._partitioned(src, dst)
        if not lost and self.sc.network.drop_rate:
            lost = self.rng_net.random() < self.sc.network.drop_rate
        if self.trace_messages:
            extra = {"dropped": True} if lost else {}
            self._record("msg", f"signer:{src}", _msg_payload(msg), to=dst, type=kind, **extra)
        if lost:
            self.dropped += 1
            return
        self._at(self.now + self._delay(), self._deliver, dst, src, msg)

    def _deliver(self, dst: int, src: int, msg: Any) -> None:
        self._node_event(dst, Deliver(src, msg))

    # --- signers ------------------------------------------------------------------

    def _node_event(self, i: int, event: Any) -> None:
        node = self.nodes[i]
        out = node.handle(event, self.params, self.now)
        if out:
            self._outputs(i, out)

    def _outputs(self, i: int, out: list) -> None:
        for o in out:
            if isinstance(o, Broadcast):
                if isinstance(o.msg, Precommit):
                    key = (o.msg.height, o.msg.attempt, o.msg.digest.hex())
                    self.precommitters.setdefault(key, set()).add(i)
                targets = range(self.n) if o.only is None else sorted(o.only)
                for j in targets:
                    if j != i:
                        self._send(i, j, o.msg)
            elif isinstance(o, Send):
                self._send(i, o.to, o.msg)
            elif isinstance(o, SetTimer):
                self._at(max(o.at, self.now), self._node_event, i, o.event)
            elif isinstance(o, Accepted):
                self._accepted(i, o.block, o.state)
            elif isinstance(o, Log):
                self._log(i, o)

    def _log(self, i: int, log: Log) -> None:
        d = log.data
        if log.kind == "propose":
            self.proposals.append(_Proposal(self.now, i, d["h"], d["a"], tuple(d["digests"]), tuple(d["txs"])))
            self._record("propose", f"signer:{i}", d["digests"][0], height=d["h"], attempt=d["a"], variants=len(d["digests"]))
        elif log.kind == "halt":
            self.halts.setdefault(i, (self.now, "fork-proof"))
            self._record("halt", f"signer:{i}", "", reason="fork-proof", height=d["h"])
        elif log.kind == "tamper-shutdown":
            self.halts.setdefault(i, (self.now, "tamper"))
            self._record("halt", f"signer:{i}", "", reason="tamper")
        elif log.kind in ("upgrade-applied", "upgrade-refused"):
            self.upgrade_log.append({"t": self.now, "node": i, "event": log.kind, **d})

    def _accepted(self, i: int, blk: Block, state: ChainState) -> None:
        h = blk.height
        seen = self.digests_at.setdefault(h, {})
        d = blk.digest
        if d in seen:
            return
        seen[d] = blk
        self._record(
            "side-block",
            f"signer:{i}",
            d.hex(),
            height=h,
            hex=blk.to_bytes().hex(),
            txids=[t.txid.hex() for t in blk.txs],
        )
        if len(seen) > 1:
            self._fork_seen(h)
            return
        if h != len(self.canon):
            return
        self.canon.append(blk)
        self.canon_states.append(state)
        self.canon_times.append(self.now)
        for t in blk.txs:
            self.side_txids[t.txid] = h
            self.side_tx_obj[t.txid] = t
            if t.txid in self.submitted and t.txid not in self.included:
                self.included[t.txid] = self.now
            if t.pegin is not None:
                self.peg["mints"] += 1
                self.users.adopt(SIDE, t)
            if t.txid in self.closed_loop_pending:
                u = self.closed_loop_pending.pop(t.txid)
                self._at(self.now, self._closed_loop_submit, u)
        self._audit()

    def _fork_seen(self, h: int) -> None:
        blocks = list(self.digests_at[h].values())
        a, b = blocks[0], blocks[1]
        if self.fork_proof is not None:
            return
        if not (isinstance(a.stamp, SignatureStamp) and isinstance(b.stamp, SignatureStamp)):
            return
        proof = make_fork_proof((a.header, a.stamp), (b.header, b.stamp), self.signer_keys, self.sc.federation.k)
        if proof is None:
            return
        self.fork_proof = proof
        self.fork_proof_time = self.now
        self._record("fork-proof", "observer", a.digest.hex() + b.digest.hex(), height=h, overlap=sorted(proof.overlap))
        if self.sc.observer:
            for j in range(self.n):
                self._send(OBSERVER, j, ForkProofMsg(proof))

    # --- faults ------------------------------------------------------------------------

    def _apply_fault(self, f: Fault) -> None:
        self._record("fault", "scenario", f.kind, ids=list(f.ids), role=f.role)
        if f.role != SIGNER:
            self._watch_fault(f)
            return
        if f.kind == "partition":
            if f.duration <= 0:
                return
            group = {i: g for g, members in enumerate(f.groups) for i in members}
            stop = self.now + _ms(f.duration)
            self.partitions.append((self.now, stop, group, frozenset(f.bridges)))
            self._at(stop, self._heal)
            return
        for i in f.ids:
            node = self.nodes[i]
            if f.kind == "crash":
                if node.behavior.kind != CRASHED:
                    self.base_behavior[i] = node.behavior
                node.behavior = Behavior(CRASHED)
            elif f.kind == "recover":
                if node.behavior.kind == CRASHED:
                    node.behavior = self.base_behavior.pop(i, Behavior())
                    self._node_event(i, Reconnect())
            elif f.kind in ("equivocate", "compromise_keys"):
                split = frozenset(f.split) if f.split is not None else None
                node.behavior = Behavior(EQUIVOCATOR, split=split, colluders=frozenset(f.ids))
            elif f.kind == "censor":
                node.behavior = Behavior(CENSOR, censor_filter=self._censor_filter(f.filter))
            elif f.kind == "withhold":
                node.behavior = Behavior(WITHHOLDER, withhold_phase=f.phase)
            elif f.kind == "tamper_alarm":
                self._node_event(i, TamperAlarm())

    def _heal(self) -> None:
        self._record("heal", "scenario")
        for i in range(self.n):
            self._node_event(i, Reconnect())

    def _censor_filter(self, spec: dict) -> Callable[[Transaction], bool]:
        keys = {self.users.users[u].key.public for u in spec.get("users", [])}
        kind = spec.get("kind")

        def kind_of(tx: Transaction) -> str:
            if tx.pegout is not None:
                return "pegout"
            if tx.pegin is not None:
                return "pegin"
            if tx.issuances:
                return "issuance"
            return "transfer"

        def hit(tx: Transaction) -> bool:
            if kind is not None and kind_of(tx) != kind:
                return False
            if keys:
                return any(isinstance(o.condition, KeyLock) and o.condition.key in keys for o in tx.outputs)
            return True

        return hit

    def _watch_fault(self, f: Fault) -> None:
        for j in f.ids:
            if f.kind in ("crash", "tamper_alarm"):
                self.watch_down.add(j)
            elif f.kind == "recover":
                self.watch_down.discard(j)
            elif f.kind == "compromise_keys":
                self.watchmen[j].behavior = COMPROMISED

    # --- watchmen ------------------------------------------------------------------------

    def _watch_online(self, j: int) -> bool:
        if j in self.watch_down:
            return False
        w = self.sc.watchmen
        t = self.now / 1000.0
        if j in w.schedules:
            return any(a <= t < b for a, b in w.schedules[j])
        if w.schedule_period is not None:
            return (t % w.schedule_period) < w.schedule_online
        return True

    def _view(self) -> PegView:
        return PegView(self.now, self.main, self.canon_states[-1], self.side_tx_obj.get)

    def _watch_tick(self) -> None:
        view = self._view()
        for w in self.watchmen:
            if self._watch_online(w.id):
                self._watch_outputs(w.id, w.tick(view))
        self._at(self.now + _ms(self.sc.watchmen.process_interval), self._watch_tick)

    def _watch_deliver(self, j: int, msg: Any) -> None:
        if self._watch_online(j):
            self._watch_outputs(j, self.watchmen[j].receive(msg, self._view()))

    def _watch_outputs(self, j: int, out: list) -> None:
        for o in out:
            if isinstance(o, SubmitSide):
                self._submit_side(o.tx, range(self.n), f"watchman:{j}")
            elif isinstance(o, SubmitMain):
                res = self.main.submit(o.tx, self.now)
                self._record("main-submit", f"watchman:{j}", o.tx.txid.hex(), ok=bool(res), reason=res.reason)
            elif isinstance(o, WatchBroadcast):
                kind = o.msg.kind
                for k in range(len(self.watchmen)):
                    if k != j:
                        self.msg_counts[kind] = self.msg_counts.get(kind, 0) + 1
                        if self.trace_messages:
                            self._record("msg", f"watchman:{j}", getattr(o.msg, "txid", b"").hex(), to=k, type=kind)
                        self._at(self.now + self._delay(), self._watch_deliver, k, o.msg)
            elif isinstance(o, WatchLog):
                if o.kind == "withdrawal-refuse":
                    self.peg["withdrawal_refusals"] += 1
                self._record(o.kind, f"watchman:{j}", o.data.get("txid", ""), **{k: v for k, v in o.data.items() if k != "txid"})

    # --- main chain ------------------------------------------------------------------------

    def _mine(self) -> None:
        sc = self.sc
        pre = self.main.state
        miner = self.rng_main.randrange(sc.mainchain.miners)
        blk = self.main.mine(self.now, miner)
        self._record(
            "main-block",
            "miner",
            blk.digest.hex(),
            height=blk.height,
            hex=blk.to_bytes().hex(),
            txids=[t.txid.hex() for t in blk.txs],
        )
        for t in blk.txs:
            self.main_included[t.txid] = blk.height
            if t.txid in self.submitted and t.txid not in self.included and sc.workload.mode == "main":
                self.included[t.txid] = self.now
            self._main_tx_effects(t, pre)
            if t.txid in self.closed_loop_pending:
                u = self.closed_loop_pending.pop(t.txid)
                self._at(self.now, self._closed_loop_submit, u)
        if sc.watchmen.backup_claim:
            self._backup_claim()
        self._audit()
        self._at(self._next_mine(self.now), self._mine)

    def _main_tx_effects(self, tx: Transaction, pre: ChainState) -> None:
        spends_lock = any(pre.utxos.get(i.prevout) is not None and pre.utxos[i.prevout].condition == self.lock for i in tx.inputs)
        if spends_lock:
            primary = all(i.branch == 0 for i in tx.inputs)
            if primary:
                self.peg["withdrawals"] += 1
                reqs = self._request_infos(self.canon_states[-1])
                paid_before = paid_requests(self.main, self.lock, self.now - 1)
                if check_withdrawal(tx, reqs, pre, self.lock, self.users.all_P, self.users.all_Q, paid_before) is not None:
                    self.peg["unauthorized_withdrawals"] += 1
                else:
                    self.peg["pegouts_paid"] += sum(1 for o in tx.outputs if isinstance(o.condition, KeyLock))
            else:
                self.peg["backup_recovered"] += sum(o.amount for o in tx.outputs if isinstance(o.amount, int))
                if self.peg["backup_recovered_at"] is None:
                    self.peg["backup_recovered_at"] = self.now / 1000.0
                    held = {op for op, _ in lock_utxos(pre, self.lock)}
                    self.peg["backup_swept_all"] = held == {i.prevout for i in tx.inputs}
        self.users.adopt(MAIN, tx)

    def _request_infos(self, state: ChainState) -> dict:
        out = {}
        for r in state.pegouts:
            tx = self.side_tx_obj.get(r.burn.txid)
            proof = tx.pegout.proof if tx is not None and tx.pegout is not None else None
            out[r.burn] = RequestInfo(r, proof)
        return out

    def _backup_claim(self) -> None:
        utxos = lock_utxos(self.main.state, self.lock)
        if not utxos:
            return
        m = self.sc.watchmen.backup_threshold
        signers = [(j, self.backup_kp[j].secret) for j in range(m)]
        res = backup_withdrawal(utxos, self.lock, signers, self.now)
        if not res:
            self.peg["backup_attempts_before_T"] += 1
            return
        ok = self.main.submit(res, self.now)
        self._record("backup-submit", "backup", res.txid.hex(), ok=bool(ok))

    # --- workload ------------------------------------------------------------------------

    def _confirmed(self, chain: str, txid: bytes) -> bool:
        if chain == SIDE:
            return txid in self.side_txids
        return txid in self.main.tx_height

    def _gateways(self, user: int) -> list[int]:
        return self.sc.workload.gateways.get(user, list(range(self.n)))

    def _submit_side(self, tx: Transaction, gateways, actor: str) -> None:
        self._record("tx-submit", actor, tx.txid.hex())
        self.submitted.setdefault(tx.txid, self.now)
        for g in gateways:
            self._at(self.now + self._delay(), self._node_event, g, SubmitTx(tx))

    def _submit_user(self, user: int, tx: Transaction, chain: str) -> None:
        if chain == SIDE:
            self._submit_side(tx, self._gateways(user), f"user:{user}")
        else:
            self._record("tx-submit", f"user:{user}", tx.txid.hex())
            self.submitted.setdefault(tx.txid, self.now)
            self.main.submit(tx, self.now)

    def _op(self, op: str, rate: float) -> None:
        self._at(self.now + self._exp(rate), self._op, op, rate)
        wl = self.sc.workload
        rng = self.rng_work
        users = list(range(wl.users))
        rng.shuffle(users)
        chain = SIDE if wl.mode == "side" else MAIN
        for u in users:
            tx = None
            if op == "transfer":
                tx = self.users.transfer(rng, u, chain, wl.confidential, wl.amount_max)
                kind = "transfers"
            elif op == "swap":
                v = rng.choice([x for x in range(wl.users) if x != u])
                tx = self.users.swap(rng, u, v, wl.confidential, wl.amount_max)
                kind = "swaps"
            elif op == "pegin":
                tx = self.users.pegin(rng, u, self.lock, wl.amount_max)
                kind = "pegins"
                if tx is not None:
                    self.peg["pegins"] += 1
                    self._submit_user(u, tx, MAIN)
                    return
            elif op == "pegout":
                tx = self.users.pegout(rng, u, wl.amount_max)
                kind = "pegouts"
                if tx is not None:
                    self.peg["pegouts"] += 1
                    self.pegout_users.add(u)
            if tx is not None:
                if kind in self.work:
                    self.work[kind] += 1
                self._submit_user(u, tx, chain)
                return
        self.work["skipped"] += 1

    def _closed_loop_submit(self, u: int) -> None:
        wl = self.sc.workload
        chain = SIDE if wl.mode == "side" else MAIN
        tx = self.users.transfer(self.rng_work, u, chain, wl.confidential, wl.amount_max)
        if tx is None:
            self.work["skipped"] += 1
            self._at(self.now + 1000, self._closed_loop_submit, u)
            return
        self.work["transfers"] += 1
        self.closed_loop_pending[tx.txid] = u
        self._submit_user(u, tx, chain)

    def _issue(self, user: int, amount: int) -> None:
        tx = self.users.issue(user, amount)
        self.work["issuances"] += 1
        self._submit_user(user, tx, SIDE)

    def _malformed_pegin(self) -> None:
        for u in range(self.sc.workload.users):
            tx = self.users.pegin(self.rng_work, u, self.lock, self.sc.workload.amount_max, MALFORMED_DESTINATION)
            if tx is not None:
                self.peg["pegins_malformed"] += 1
                self._submit_user(u, tx, MAIN)
                return

    def _garbage_pegout(self) -> None:
        for u in range(self.sc.workload.users):
            res = self.users.garbage_pegout(self.rng_work, u, self.sc.workload.amount_max)
            if res is not None:
                tx, t = res
                self.peg["pegouts"] += 1
                self.garbage.append({"user": u, "burn": tx.txid.hex(), "W": tx.pegout.proof.whitelist_key.to_bytes().hex(), "t": t.hex()})
                self._submit_user(u, tx, SIDE)
                return
        self.work["skipped"] += 1

    def _upgrade(self, up) -> None:
        digest_ = digest(b"strongfed/image", up.version.to_bytes(4, "little"))
        pkg = usp_publish(self.usp, up.version, digest_, self.auditor if up.auditor else None)
        self._record("upgrade-offer", "usp", digest_.hex(), version=up.version, refuse=list(up.refuse))
        for i in range(self.n):
            self.nodes[i].refuse_upgrade = i in up.refuse
            self._send(OBSERVER, i, UpgradeOffer(pkg))

    # --- audit ------------------------------------------------------------------------

    def _audit(self) -> None:
        if not (self.sc.audit and self.sc.mainchain.enabled):
            return
        a = peg_audit(self.main, self.canon_states[-1], self.lock, self.now).as_dict()
        if self.audits and {k: v for k, v in a.items() if k != "time_ms"} == {
            k: v for k, v in self.audits[-1].items() if k != "time_ms"
        }:
            return
        self.audits.append(a)

    # --- run ------------------------------------------------------------------------

    def run(self) -> tuple[Metrics, list[dict]]:
        sc = self.sc
        self.records.append(self._header())
        if self.end > 0:
            self._schedule_initial()
        q = self._queue
        while q:
            t, _, fn, args = heapq.heappop(q)
            self.now = t
            fn(*args)
        self.now = self.end
        return self._metrics(), self.records

    def _header(self) -> dict:
        return {
            "kind": "header",
            "schema": TRACE_SCHEMA,
            "scenario": self.sc.to_dict(),
            "signer_keys": [k.to_bytes().hex() for k in self.signer_keys],
            "threshold": self.sc.federation.k,
            "members_P": [k.to_bytes().hex() for k in self.users.all_P],
            "members_Q": [k.to_bytes().hex() for k in self.users.all_Q],
            "watch_keys": [k.to_bytes().hex() for k in self.lock.keys],
            "watch_threshold": self.lock.threshold,
            "backup_keys": [k.to_bytes().hex() for k in self.lock.backup_keys],
            "backup_threshold": self.lock.backup_threshold,
            "backup_locktime": self.lock.backup_locktime,
            "confirmation_depth": self.sc.mainchain.confirmation_depth,
            "difficulty_bits": self.sc.mainchain.difficulty_bits,
            "side_genesis": self.canon[0].to_bytes().hex(),
            "main_genesis": self.main.blocks[0].to_bytes().hex(),
        }

    def round_records(self) -> list[RoundRecord]:
        out = []
        for p in self.proposals:
            canon = self.canon[p.height].digest.hex() if p.height < len(self.canon) else None
            pcs = set()
            for d in p.digests:
                pcs |= self.precommitters.get((p.height, p.attempt, d), set())
            txids = tuple(bytes.fromhex(t) for t in p.txids)
            out.append(RoundRecord(p.height, p.attempt, p.proposer, txids, canon in p.digests, frozenset(pcs)))
        return out

    def _metrics(self) -> Metrics:
        sc = self.sc
        m = Metrics(scenario=sc.to_dict(), duration=sc.duration)
        m.blocks = len(self.canon) - 1
        m.block_times = [t / 1000.0 for t in self.canon_times[1:]]
        m.forks = sum(1 for d in self.digests_at.values() if len(d) > 1)
        m.fork_heights = sorted(h for h, d in self.digests_at.items() if len(d) > 1)
        m.max_headers_per_height = max((len(d) for d in self.digests_at.values()), default=0)
        m.fork_proof_constructed = self.fork_proof is not None
        if self.fork_proof is not None:
            m.fork_proof_overlap = sorted(self.fork_proof.overlap)
            m.fork_proof_time = self.fork_proof_time / 1000.0
        m.halted = {str(i): [t / 1000.0, r] for i, (t, r) in sorted(self.halts.items())}
        if self.fork_proof_time is not None:
            honest = [i for i, nd in enumerate(self.nodes) if nd.behavior.kind not in (CRASHED, EQUIVOCATOR)]
            lags = [self.halts[i][0] - self.fork_proof_time for i in honest if i in self.halts]
            if honest and len(lags) == len(honest):
                m.halt_lag_max = max(lags) / 1000.0
        thr = stall_threshold_ms(sc.to_dict())
        m.stalls = stall_intervals(self.canon_times[1:], self.end, thr)
        m.stall_time = sum(b - a for a, b in m.stalls)
        lat = [self.included[t] - s for t, s in self.submitted.items() if t in self.included]
        m.latency = latency_summary(lat)
        m.unconfirmed = sum(1 for t in self.submitted if t not in self.included)
        rounds = self.round_records()
        m.proposals = len(rounds)
        m.failed_proposals = sum(1 for r in rounds if not r.accepted)
        flags = censorship_monitor(rounds, sc.censorship_window)
        m.censorship_flags = sorted(flags)
        for p in m.censorship_flags:
            m.censorship_first_flag[str(p)] = first_flag(rounds, sc.censorship_window, p)
            m.non_precommitters[str(p)] = sorted(non_precommitters(rounds, p, range(self.n)) - {p})
        m.messages = dict(sorted(self.msg_counts.items()))
        m.dropped_messages = self.dropped
        m.node_heights = [nd.height - 1 for nd in self.nodes]
        m.main_height = self.main.height
        if sc.mainchain.race_blocks:
            race = mainchain_race(
                random.Random(sc.seed),
                sc.mainchain.race_blocks,
                sc.mainchain.mean_interval,
                [1.0] * max(2, sc.mainchain.miners),
                sc.mainchain.propagation_delay,
            )
            m.main_race = {"blocks": race.blocks, "best_height": race.best_height, "orphans": race.orphans, "reorgs": race.reorgs}
        m.peg = dict(self.peg)
        m.peg["pegout_users"] = sorted(self.pegout_users)
        m.peg["garbage_pegouts"] = self.garbage
        m.audits = self.audits
        m.audit_max_abs_delta = max((abs(a["delta"]) for a in self.audits), default=0)
        m.audit_final = self.audits[-1] if self.audits else None
        m.upgrades = {
            "versions": [nd.version for nd in self.nodes],
            "events": self.upgrade_log,
        }
        m.workload = dict(self.work)
        return m


def _msg_payload(msg: Any) -> str:
    d = getattr(msg, "digest", None)
    if isinstance(d, bytes):
        return d.hex()
    return ""


def sim_run(scenario: Scenario, *, trace_messages: bool = False) -> tuple[Metrics, list[dict]]:
    """Run ``scenario`` to completion; returns its metrics and event trace."""
    return Simulation(scenario, trace_messages=trace_messages).run()
