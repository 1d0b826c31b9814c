"""The blocksigner state machine.

A round for height ``h`` runs in attempts.  In attempt ``a`` the proposer
``(h + a) mod n`` broadcasts a candidate; signers precommit to it, sign its
header once ``X`` precommits are seen, and accept it once ``k`` signatures
are seen.  An honest signer signs at most one digest per height, which is
what makes two accepted blocks at one height require ``2k - n``
equivocators.

``ConsensusNode.handle`` mutates the node in place and returns its outputs;
``consensus_step`` is the pure form used by tests.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Callable, Sequence

from strongfed.consensus.forks import ForkProof, make_fork_proof, verify_fork_proof
from strongfed.consensus.messages import (
    Accepted,
    Announce,
    BlockSig,
    Broadcast,
    Deliver,
    ForkProofMsg,
    IntegrityWarning,
    Log,
    Precommit,
    Proposal,
    Reconnect,
    RoundStart,
    Send,
    SetTimer,
    SubmitTx,
    SyncRequest,
    TamperAlarm,
    Timeout,
    UpgradeOffer,
    UpgradeVote,
    precommit_message,
    proposal_message,
)
from strongfed.consensus.params import FederationParams, round_proposer
from strongfed.consensus.upgrade import UpgradePackage, upgrade_apply, upgrade_message, usp_valid
from strongfed.crypto.group import GroupElement, Scalar
from strongfed.crypto.schnorr import sign, verify
from strongfed.ledger.block import Block, BlockHeader, SignatureStamp, block_merkle_root, header_message
from strongfed.ledger.state import BlockRejected, ChainRules, ChainState, block_apply, check_stamp, tx_validate
from strongfed.ledger.tx import OutPoint, Transaction

HONEST = "honest"
CRASHED = "crashed"
EQUIVOCATOR = "equivocator"
CENSOR = "censor"
WITHHOLDER = "withholder"

MAX_BLOCK_TXS = 200
MAX_SYNC_BLOCKS = 64
REBROADCAST_DEPTH = 3
CLOCK_DRIFT_MS = 2000


@dataclass(frozen=True)
class Behavior:
    kind: str = HONEST
    censor_filter: Callable[[Transaction], bool] | None = field(default=None, compare=False)
    withhold_phase: str = "sign"  # "sign", "precommit" or "all"
    split: frozenset[int] | None = None  # equivocator: recipients of variant A
    colluders: frozenset[int] = frozenset()  # equivocator: receive both variants

    def censors(self, tx: Transaction) -> bool:
        return self.kind == CENSOR and self.censor_filter is not None and self.censor_filter(tx)

    @property
    def precommits(self) -> bool:
        return not (self.kind == WITHHOLDER and self.withhold_phase in ("precommit", "all"))

    @property
    def signs(self) -> bool:
        return not (self.kind == WITHHOLDER and self.withhold_phase in ("sign", "all"))


@dataclass
class ConsensusNode:
    id: int
    secret: Scalar | None
    keys: tuple[GroupElement, ...]
    rules: ChainRules
    state: ChainState
    blocks: list[Block]
    behavior: Behavior = field(default_factory=Behavior)
    usp_key: GroupElement | None = None
    supermajority: int = 0
    refuse_upgrade: bool = False

    height: int = 1
    attempt: int = 0
    active: bool = False
    candidates: dict = field(default_factory=dict)  # digest -> Block
    validated: dict = field(default_factory=dict)  # digest -> ChainState | None
    proposals: dict = field(default_factory=dict)  # attempt -> digest
    my_precommits: dict = field(default_factory=dict)  # attempt -> set of digests
    precommits: dict = field(default_factory=dict)  # (attempt, digest) -> set of signers
    lock: bytes | None = None
    sigs: dict = field(default_factory=dict)  # digest -> {signer: sig}
    future: list = field(default_factory=list)  # (sender, msg) for later heights
    future_blocks: dict = field(default_factory=dict)  # height -> Block
    sync_asked: int = -1
    mempool: dict = field(default_factory=dict)  # txid -> tx, arrival order
    halted: bool = False
    halt_reason: str | None = None
    fork_proof: ForkProof | None = None
    version: int = 0
    upgrade_offers: dict = field(default_factory=dict)  # (version, digest) -> package
    upgrade_votes: dict = field(default_factory=dict)  # (version, digest) -> {signer: sig}

    @property
    def n(self) -> int:
        return len(self.keys)

    @property
    def tip(self) -> Block:
        return self.blocks[-1]

    def clone(self) -> "ConsensusNode":
        c = copy.copy(self)
        c.blocks = list(self.blocks)
        c.candidates = dict(self.candidates)
        c.validated = dict(self.validated)
        c.proposals = dict(self.proposals)
        c.my_precommits = {a: set(d) for a, d in self.my_precommits.items()}
        c.precommits = {key: set(v) for key, v in self.precommits.items()}
        c.sigs = {d: dict(v) for d, v in self.sigs.items()}
        c.future = list(self.future)
        c.future_blocks = dict(self.future_blocks)
        c.mempool = dict(self.mempool)
        c.upgrade_offers = dict(self.upgrade_offers)
        c.upgrade_votes = {key: dict(v) for key, v in self.upgrade_votes.items()}
        return c

    # --- dispatch -----------------------------------------------------------

    def handle(self, event, params: FederationParams, now: int) -> list:
        out: list = []
        if self.behavior.kind == CRASHED:
            return out
        if isinstance(event, Deliver):
            self._on_message(event.sender, event.msg, params, now, out)
        elif isinstance(event, Timeout):
            self._on_timeout(event, params, now, out)
        elif isinstance(event, RoundStart):
            self._on_round_start(event.height, params, now, out)
        elif isinstance(event, SubmitTx):
            self._on_submit(event.tx, now, out)
        elif isinstance(event, Reconnect):
            self._on_reconnect(params, now, out)
        elif isinstance(event, TamperAlarm):
            self._on_tamper(out)
        return out

    def _on_message(self, sender: int, msg, params, now, out) -> None:
        if isinstance(msg, ForkProofMsg):
            self._on_fork_proof(msg.proof, params, out)
            return
        if isinstance(msg, IntegrityWarning):
            out.append(Log("integrity-warning", {"from": msg.node}))
            return
        if self.halted:
            return
        if isinstance(msg, UpgradeOffer):
            self._on_upgrade_offer(msg.package, out)
            return
        if isinstance(msg, UpgradeVote):
            self._on_upgrade_vote(msg, out)
            return
        if isinstance(msg, Announce):
            self._on_announce(sender, msg.block, params, now, out)
            return
        if isinstance(msg, SyncRequest):
            self._on_sync_request(sender, msg.from_height, out)
            return
        h = msg.height
        if h < self.height:
            return
        if h > self.height:
            self._buffer(sender, msg, out)
            return
        if isinstance(msg, Proposal):
            self._on_proposal(msg, params, now, out)
        elif isinstance(msg, Precommit):
            self._on_precommit(msg, params, now, out)
        elif isinstance(msg, BlockSig):
            self._on_block_sig(msg, params, now, out)

    def _buffer(self, sender: int, msg, out) -> None:
        if len(self.future) < 20_000:
            self.future.append((sender, msg))
        if msg.height > self.height + 1 and self.sync_asked < self.height:
            self.sync_asked = self.height
            out.append(Send(sender, SyncRequest(self.height)))

    # --- rounds -------------------------------------------------------------

    def _on_round_start(self, height: int, params, now, out) -> None:
        if self.halted or height != self.height or self.active:
            return
        self.active = True
        a = self.attempt  # a proposal may already have moved us past attempt 0
        out.append(SetTimer(now + params.attempt_timeout_ms(a), Timeout(height, a)))
        if round_proposer(height, a, self.n) == self.id and a not in self.proposals:
            self._propose(params, now, out)

    def _on_timeout(self, ev: Timeout, params, now, out) -> None:
        if self.halted or ev.height != self.height or ev.attempt != self.attempt or not self.active:
            return
        self.attempt += 1
        out.append(SetTimer(now + params.attempt_timeout_ms(self.attempt), Timeout(self.height, self.attempt)))
        if any(m.height > self.height for _, m in self.future):
            out.append(Broadcast(SyncRequest(self.height)))
        mine = self.sigs.get(self.lock, {}).get(self.id) if self.lock is not None else None
        if mine is not None:
            # resend, in case it was lost; the same bytes, not a new signature
            out.append(Broadcast(BlockSig(self.height, self.id, self.lock, mine)))
        if round_proposer(self.height, self.attempt, self.n) == self.id:
            self._propose(params, now, out)

    def _advance_attempt(self, attempt: int, params, now, out) -> None:
        if attempt > self.attempt:
            self.attempt = attempt
            out.append(SetTimer(now + params.attempt_timeout_ms(attempt), Timeout(self.height, attempt)))

    # --- proposing ----------------------------------------------------------

    def _select_txs(self, timestamp: int) -> list[Transaction]:
        chosen: list[Transaction] = []
        spent: set[OutPoint] = set()
        locks: set[OutPoint] = set()
        for txid, tx in list(self.mempool.items()):
            if len(chosen) >= MAX_BLOCK_TXS:
                break
            if self.behavior.censors(tx):
                continue
            ops = {i.prevout for i in tx.inputs}
            if ops & spent:
                continue
            lock = tx.pegin.lock if tx.pegin is not None else None
            if lock is not None and lock in locks:
                continue
            res = tx_validate(tx, self.state, self.rules, timestamp)
            if not res:
                # inputs may still confirm, timelocks and peg-in depth may still mature
                stale = lock is not None and lock in self.state.claimed_pegins
                if stale or res.reason not in ("missing-input", "script", "peg"):
                    del self.mempool[txid]
                continue
            chosen.append(tx)
            spent |= ops
            if lock is not None:
                locks.add(lock)
        return chosen

    def _build(self, timestamp: int, txs: Sequence[Transaction]) -> Block:
        txs = tuple(txs)
        header = BlockHeader(self.height, self.state.tip, block_merkle_root(txs), timestamp, self.id)
        return Block(header, txs)

    def _propose(self, params, now, out) -> None:
        if self.secret is None:
            return
        h, a = self.height, self.attempt
        ts = max(now, self.state.timestamp)
        if self.lock is not None and self.lock in self.candidates:
            blocks = [self.candidates[self.lock]]
        else:
            txs = self._select_txs(ts)
            blk = self._build(ts, txs)
            while True:
                try:
                    self.validated[blk.digest] = block_apply(self.state, blk, self.rules, check_stamp_=False)
                    break
                except BlockRejected as e:
                    if e.tx_index is None:
                        raise
                    txs = txs[: e.tx_index] + txs[e.tx_index + 1 :]
                    blk = self._build(ts, txs)
            blocks = [blk]
            if self.behavior.kind == EQUIVOCATOR:
                blocks.append(self._build(ts + 1, txs))
        out.append(Log("propose", {"h": h, "a": a, "digests": [b.digest.hex() for b in blocks], "txs": [t.txid.hex() for t in blocks[0].txs]}))
        if len(blocks) == 1:
            msg = Proposal(h, a, self.id, blocks[0], sign(self.secret, proposal_message(h, a, blocks[0].digest)).to_bytes())
            out.append(Broadcast(msg))
            self._on_proposal(msg, params, now, out)
            return
        split = self.behavior.split or frozenset(range(0, self.n, 2))
        others = frozenset(range(self.n)) - split
        both = self.behavior.colluders
        for blk, group in ((blocks[0], split | both), (blocks[1], others | both)):
            msg = Proposal(h, a, self.id, blk, sign(self.secret, proposal_message(h, a, blk.digest)).to_bytes())
            out.append(Broadcast(msg, only=group - {self.id}))
            self._on_proposal(msg, params, now, out)

    # --- voting -------------------------------------------------------------

    def _valid_candidate(self, blk: Block, now: int) -> bool:
        d = blk.digest
        if d not in self.validated:
            try:
                if blk.header.timestamp > now + CLOCK_DRIFT_MS:
                    raise BlockRejected("header", "timestamp from the future")
                self.validated[d] = block_apply(self.state, blk, self.rules, check_stamp_=False)
            except BlockRejected:
                self.validated[d] = None
        return self.validated[d] is not None

    def _on_proposal(self, msg: Proposal, params, now, out) -> None:
        h, a = msg.height, msg.attempt
        blk = msg.block
        # a locked proposer re-proposes the block an earlier proposer built
        built_by_round = any(round_proposer(h, x, self.n) == blk.header.proposer for x in range(min(a, self.n - 1) + 1))
        if msg.proposer != round_proposer(h, a, self.n) or not built_by_round or blk.height != h:
            out.append(Log("bad-proposal", {"h": h, "a": a, "from": msg.proposer}))
            return
        if not verify(self.keys[msg.proposer], proposal_message(h, a, blk.digest), msg.sig):
            out.append(Log("bad-proposal", {"h": h, "a": a, "from": msg.proposer}))
            return
        d = blk.digest
        if a < self.attempt and self.behavior.kind != EQUIVOCATOR:
            self.candidates.setdefault(d, blk)
            self._maybe_accept(d, params, now, out)
            return
        self._advance_attempt(a, params, now, out)
        first = self.proposals.setdefault(a, d)
        if first != d:
            out.append(Log("proposal-equivocation", {"h": h, "a": a, "from": msg.proposer}))
        self.candidates.setdefault(d, blk)
        if self.secret is None:
            return
        if self.behavior.kind == EQUIVOCATOR:
            if self._valid_candidate(blk, now):
                self._precommit(h, a, d, out)
                self._sign(h, d, out)
        elif (
            first == d
            and a not in self.my_precommits
            and (self.lock is None or self.lock == d)
            and self.behavior.precommits
            and not any(self.behavior.censors(t) for t in blk.txs)
            and self._valid_candidate(blk, now)
        ):
            self._precommit(h, a, d, out)
        self._maybe_sign(d, params, now, out)
        self._maybe_accept(d, params, now, out)

    def _precommit(self, h: int, a: int, d: bytes, out) -> None:
        mine = self.my_precommits.setdefault(a, set())
        if d in mine:
            return
        mine.add(d)
        msg = Precommit(h, a, self.id, d, sign(self.secret, precommit_message(h, a, d)).to_bytes())
        out.append(Broadcast(msg))
        self.precommits.setdefault((a, d), set()).add(self.id)

    def _on_precommit(self, msg: Precommit, params, now, out) -> None:
        if not 0 <= msg.signer < self.n:
            return
        if not verify(self.keys[msg.signer], precommit_message(msg.height, msg.attempt, msg.digest), msg.sig):
            out.append(Log("bad-precommit", {"from": msg.signer}))
            return
        self.precommits.setdefault((msg.attempt, msg.digest), set()).add(msg.signer)
        self._maybe_sign(msg.digest, params, now, out)

    def _maybe_sign(self, d: bytes, params, now, out) -> None:
        if self.secret is None or not self.behavior.signs:
            return
        if d not in self.candidates or not self._valid_candidate(self.candidates[d], now):
            return
        if self.behavior.kind == EQUIVOCATOR:
            self._sign(self.height, d, out)
            self._maybe_accept(d, params, now, out)
            return
        if self.lock is not None:
            return
        if any(len(s) >= params.X for (a, dd), s in self.precommits.items() if dd == d):
            self._sign(self.height, d, out)
            self._maybe_accept(d, params, now, out)

    def _sign(self, h: int, d: bytes, out) -> None:
        mine = self.sigs.setdefault(d, {})
        if self.id in mine:
            return
        if self.behavior.kind != EQUIVOCATOR:
            self.lock = d
        sig = sign(self.secret, header_message(d)).to_bytes()
        mine[self.id] = sig
        out.append(Broadcast(BlockSig(h, self.id, d, sig)))

    def _on_block_sig(self, msg: BlockSig, params, now, out) -> None:
        if not 0 <= msg.signer < self.n:
            return
        if not verify(self.keys[msg.signer], header_message(msg.digest), msg.sig):
            out.append(Log("bad-signature", {"from": msg.signer}))
            return
        self.sigs.setdefault(msg.digest, {})[msg.signer] = msg.sig
        self._maybe_accept(msg.digest, params, now, out)

    def _maybe_accept(self, d: bytes, params, now, out) -> None:
        sigs = self.sigs.get(d)
        if not sigs or len(sigs) < self.rules.threshold or d not in self.candidates:
            return
        if self.height != self.candidates[d].height:
            return
        stamp = SignatureStamp(tuple(sorted(sigs.items())))
        self._accept(self.candidates[d].with_stamp(stamp), params, now, out)

    # --- acceptance and sync ------------------------------------------------

    def _accept(self, blk: Block, params, now, out) -> bool:
        if blk.height != self.height:
            return False
        pre = self.validated.get(blk.digest)
        try:
            if pre is not None and blk.header.prev == self.state.tip:
                if not check_stamp(blk, self.rules):
                    raise BlockRejected("stamp", "insufficient stamp", blk.height)
                new = pre
            else:
                new = block_apply(self.state, blk, self.rules)
        except BlockRejected as e:
            out.append(Log("reject-block", {"h": blk.height, "reason": e.reason}))
            return False
        self.state = new
        self.blocks.append(blk)
        for t in blk.txs:
            self.mempool.pop(t.txid, None)
        self.height += 1
        self.attempt = 0
        self.active = False
        self.candidates = {}
        self.validated = {}
        self.proposals = {}
        self.my_precommits = {}
        self.precommits = {}
        self.sigs = {}
        self.lock = None
        out.append(Accepted(blk, new))
        out.append(SetTimer(params.next_round_start(now), RoundStart(self.height)))
        for stale in [h for h in self.future_blocks if h < self.height]:
            del self.future_blocks[stale]
        nxt = self.future_blocks.pop(self.height, None)
        if nxt is not None and self._accept(nxt, params, now, out):
            return True
        pending, self.future = self.future, []
        for sender, msg in pending:
            self._on_message(sender, msg, params, now, out)
        return True

    def _on_announce(self, sender: int, blk: Block, params, now, out) -> None:
        h = blk.height
        if h <= 0:
            return
        if h < self.height:
            mine = self.blocks[h]
            if mine.digest != blk.digest and isinstance(blk.stamp, SignatureStamp) and isinstance(mine.stamp, SignatureStamp):
                proof = make_fork_proof((mine.header, mine.stamp), (blk.header, blk.stamp), self.keys, self.rules.threshold)
                if proof is not None:
                    self._halt_with(proof, out)
            return
        if h > self.height:
            if len(self.future_blocks) < 4096:
                self.future_blocks.setdefault(h, blk)
            if self.sync_asked < self.height:
                self.sync_asked = self.height
                out.append(Send(sender, SyncRequest(self.height)))
            return
        self._accept(blk, params, now, out)

    def _on_sync_request(self, sender: int, from_height: int, out) -> None:
        top = min(len(self.blocks), max(from_height, 1) + MAX_SYNC_BLOCKS)
        for h in range(max(from_height, 1), top):
            out.append(Send(sender, Announce(self.blocks[h])))

    def _on_reconnect(self, params, now, out) -> None:
        if self.halted:
            return
        # timers may have been lost while crashed or cut off
        if self.active:
            out.append(SetTimer(now + params.attempt_timeout_ms(self.attempt), Timeout(self.height, self.attempt)))
        else:
            out.append(SetTimer(max(now, params.next_round_start(self.state.timestamp + 1)), RoundStart(self.height)))
        for blk in self.blocks[max(1, len(self.blocks) - REBROADCAST_DEPTH) :]:
            out.append(Broadcast(Announce(blk)))
        out.append(Broadcast(SyncRequest(self.height)))

    def _on_submit(self, tx: Transaction, now, out) -> None:
        if self.halted or tx.txid in self.mempool:
            return
        res = tx_validate(tx, self.state, self.rules, max(now, self.state.timestamp))
        if res or res.reason == "missing-input":
            self.mempool[tx.txid] = tx
        else:
            out.append(Log("reject-tx", {"txid": tx.txid.hex(), "reason": res.reason}))

    # --- faults -------------------------------------------------------------

    def _halt_with(self, proof: ForkProof, out) -> None:
        if self.halted:
            return
        self.halted = True
        self.halt_reason = "fork-proof"
        self.fork_proof = proof
        out.append(Log("halt", {"h": proof.height, "overlap": sorted(proof.overlap)}))
        out.append(Broadcast(ForkProofMsg(proof)))

    def _on_fork_proof(self, proof: ForkProof, params, out) -> None:
        if self.halted:
            return
        if verify_fork_proof(proof, self.keys, self.rules.threshold):
            self._halt_with(proof, out)

    def _on_tamper(self, out) -> None:
        self.secret = None
        was = self.halted
        self.halted = True
        self.halt_reason = self.halt_reason or "tamper"
        if not was:
            out.append(Log("tamper-shutdown", {}))
            out.append(Broadcast(IntegrityWarning(self.id)))

    # --- upgrades -----------------------------------------------------------

    def _on_upgrade_offer(self, pkg: UpgradePackage, out) -> None:
        if self.usp_key is None or not usp_valid(pkg, self.usp_key):
            out.append(Log("upgrade-rejected", {"reason": "signature"}))
            return
        key = (pkg.version, pkg.image_digest)
        self.upgrade_offers.setdefault(key, pkg)
        if self.refuse_upgrade or self.secret is None:
            out.append(Log("upgrade-refused", {"version": pkg.version}))
            return
        sig = sign(self.secret, upgrade_message(*key)).to_bytes()
        vote = UpgradeVote(pkg.version, pkg.image_digest, self.id, sig)
        out.append(Broadcast(vote))
        self._on_upgrade_vote(vote, out)

    def _on_upgrade_vote(self, vote: UpgradeVote, out) -> None:
        key = (vote.version, vote.image_digest)
        self.upgrade_votes.setdefault(key, {})[vote.signer] = vote.sig
        pkg = self.upgrade_offers.get(key)
        if pkg is None or self.version >= vote.version or self.usp_key is None:
            return
        full = pkg.with_signatures(self.upgrade_votes[key].items())
        if upgrade_apply(full, self.keys, self.supermajority, self.usp_key):
            self.version = vote.version
            out.append(Log("upgrade-applied", {"version": vote.version}))


def consensus_step(node: ConsensusNode, event, params: FederationParams, now: int) -> tuple[ConsensusNode, list]:
    """Pure transition: the input node is left untouched."""
    nxt = node.clone()
    return nxt, nxt.handle(event, params, now)
