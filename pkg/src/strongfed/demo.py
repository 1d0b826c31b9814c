"""Scripted end-to-end peg cycle on an 8-of-11 federation.

Sidechain blocks are stamped directly by the first ``k`` signers and
watchmen exchange messages synchronously, so the run is short and fully
deterministic.  Every transaction still passes the ledger's validation
and every withdrawal passes the watchman policy.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Callable

from strongfed.crypto.authproof import authorize_key
from strongfed.crypto.group import Scalar
from strongfed.crypto.schnorr import Keypair, keypair_generate, sign
from strongfed.ledger.assets import asset_issue
from strongfed.ledger.block import Block, BlockHeader, SignatureStamp, block_merkle_root, header_message
from strongfed.ledger.mainchain import MainChain, pegin_checker
from strongfed.ledger.script import KeyLock, MultisigLock
from strongfed.ledger.state import MAIN, SIDE, BlockRejected, ChainRules, block_apply, genesis, tx_validate
from strongfed.ledger.tx import PEGGED_ASSET, OutPoint, PegoutData, Transaction, TxOutput
from strongfed.ledger.wallet import Coin, Payment, build_transfer, sign_inputs
from strongfed.peg.audit import PegAudit, peg_audit
from strongfed.peg.ops import federation_peg_lock, pegin_create, pegin_process, pegout_build
from strongfed.peg.watchman import PegView, SubmitMain, WatchBroadcast, make_watchmen

N, K = 11, 8
DEPTH = 2
MAIN_INTERVAL_MS = 600_000
SIDE_INTERVAL_MS = 60_000


class DemoFailure(Exception):
    def __init__(self, stage: str, detail: str) -> None:
        super().__init__(f"stage {stage} failed: {detail}")
        self.stage = stage
        self.detail = detail


@dataclass
class Member:
    index: int
    key: Keypair
    online: Keypair
    offline: Keypair


@dataclass
class DemoResult:
    lines: list[str] = field(default_factory=list)
    audit: PegAudit | None = None
    failed_stage: str | None = None


class _Desk:
    def __init__(self, say: Callable[[str], None]) -> None:
        self.say = say
        self.signers = [keypair_generate(f"demo/signer/{i}") for i in range(N)]
        self.watch = [keypair_generate(f"demo/watchman/{i}") for i in range(N)]
        backup = [keypair_generate(f"demo/backup/{i}") for i in range(3)]
        self.members = [
            Member(i, keypair_generate(f"demo/{name}"), keypair_generate(f"demo/{name}/online"), keypair_generate(f"demo/{name}/offline"))
            for i, name in enumerate(("alice", "bob", "carol"))
        ]
        self.alice, self.bob, self.carol = self.members
        self.P = tuple(m.online.public for m in self.members)
        self.Q = tuple(m.offline.public for m in self.members)
        self.lock = federation_peg_lock([k.public for k in self.watch], K, [k.public for k in backup], 2, 86_400_000)
        self.main = MainChain(ChainRules(MAIN, difficulty_bits=4), [TxOutput(PEGGED_ASSET, 10, KeyLock(self.alice.key.public))])
        keys = tuple(k.public for k in self.signers)
        self.rules = ChainRules(
            SIDE,
            signer_keys=keys,
            threshold=K,
            members_P=self.P,
            members_Q=self.Q,
            fee_condition=MultisigLock(K, keys),
            pegin_check=pegin_checker(self.main, self.lock, DEPTH),
        )
        self.side, blk0 = genesis(self.rules, (), 0, tag=b"demo")
        self.side_txs: dict[bytes, Transaction] = {}
        self.now = 0

    # -- chains --------------------------------------------------------------

    def mine(self) -> None:
        self.now += MAIN_INTERVAL_MS
        blk = self.main.mine(self.now)
        self.say(f"      main block {blk.height} mined at t={self.now // 1000}s with {len(blk.txs)} tx")

    def side_block(self, txs: list[Transaction], stage: str) -> None:
        self.now += SIDE_INTERVAL_MS
        for tx in txs:
            res = tx_validate(tx, self.side, self.rules, self.now)
            if not res:
                raise DemoFailure(stage, f"sidechain rejected {tx.txid.hex()[:16]}: {res.reason} ({res.detail})")
        header = BlockHeader(self.side.height + 1, self.side.tip, block_merkle_root(txs), self.now, 0)
        sigs = tuple((i, sign(self.signers[i].secret, header_message(header.digest)).to_bytes()) for i in range(K))
        blk = Block(header, tuple(txs), SignatureStamp(sigs))
        try:
            self.side = block_apply(self.side, blk, self.rules)
        except BlockRejected as e:  # pragma: no cover - txs were validated above
            raise DemoFailure(stage, str(e)) from None
        for tx in txs:
            self.side_txs[tx.txid] = tx
        self.say(f"      side block {blk.height} stamped by {K} of {N} signers")

    def coin(self, tx: Transaction, index: int, owner: Keypair, opening=None) -> Coin:
        o = tx.outputs[index]
        value, blinder = opening if opening is not None else (o.amount, Scalar(0))
        return Coin(OutPoint(tx.txid, index), TxOutput(tx.asset_of(o), o.amount, o.condition), value, blinder, owner)


def demo_pegcycle(*, break_auth: bool = False, say: Callable[[str], None] | None = None) -> DemoResult:
    """Run the six-step peg cycle; ``break_auth`` strips the peg-out proof."""
    result = DemoResult()

    def out(line: str) -> None:
        result.lines.append(line)
        if say is not None:
            say(line)

    d = _Desk(out)
    try:
        _run(d, break_auth, out)
    except DemoFailure as e:
        result.failed_stage = e.stage
        out(f"FAILED at stage {e.stage}: {e.detail}")
    result.audit = peg_audit(d.main, d.side, d.lock, d.now)
    a = result.audit
    out(f"audit: locked {a.locked}, circulating {a.circulating}, in flight {a.in_flight}, delta {a.delta}")
    return result


def _run(d: _Desk, break_auth: bool, out: Callable[[str], None]) -> None:
    alice, bob, carol = d.alice, d.bob, d.carol

    out("[1/6] lock: alice sends 5 units to the federation peg lock on the main chain")
    genesis_tx = d.main.blocks[0].txs[0]
    lock_tx = pegin_create([d.coin(genesis_tx, 0, alice.key)], 5, alice.key.public.to_bytes(), d.lock)
    res = d.main.submit(lock_tx, d.now)
    if not res:
        raise DemoFailure("lock", f"main chain rejected the lock: {res.reason}")
    for _ in range(DEPTH):
        d.mine()

    out(f"[2/6] mint: watchmen see the lock {DEPTH} blocks deep and create 5 pegged units on the sidechain")
    mints = pegin_process(d.main, d.side, d.lock, DEPTH, d.now)
    if len(mints) != 1:
        raise DemoFailure("mint", f"expected one mint, got {len(mints)}")
    d.side_block(mints, "mint")
    a_coin = d.coin(mints[0], 0, alice.key)

    out("[3/6] transfer: alice pays bob 5 units with a confidential amount")
    tx, openings = build_transfer([a_coin], [Payment(PEGGED_ASSET, 5, KeyLock(bob.key.public), True)], salt=b"demo/transfer")
    tx = sign_inputs(tx, [a_coin])
    d.side_block([tx], "transfer")
    b_coin = d.coin(tx, 0, bob.key, openings[0])
    if any(isinstance(o.amount, int) for o in tx.outputs):
        raise DemoFailure("transfer", "amount left explicit")

    out("[4/6] swap: carol issues 100 units of a new asset and swaps 10 of them for 1 pegged unit from bob")
    issue = asset_issue(carol.key, 100, b"demo-asset", entropy=b"demo/issue".ljust(32, b"\0"))
    d.side_block([issue], "swap")
    asset = issue.issued_asset(0)
    c_coin = d.coin(issue, 0, carol.key)
    payments = [
        Payment(PEGGED_ASSET, 1, KeyLock(carol.key.public), True),
        Payment(PEGGED_ASSET, 4, KeyLock(bob.key.public), True),
        Payment(asset, 10, KeyLock(bob.key.public)),
        Payment(asset, 90, KeyLock(carol.key.public)),
    ]
    swap, openings = build_transfer([b_coin, c_coin], payments, salt=b"demo/swap")
    swap = sign_inputs(swap, [b_coin, c_coin])
    d.side_block([swap], "swap")
    b_coin = d.coin(swap, 1, bob.key, openings[1])
    out(f"      asset {asset.hex()[:16]} issued; swap settled atomically in one transaction")

    out("[5/6] peg-out: bob burns 3 pegged units for a fresh main-chain key W with an authorization proof")
    w = keypair_generate("demo/bob/withdraw")
    proof = authorize_key(bob.index, bob.online.secret, w.secret + bob.offline.secret, w.public, d.P, d.Q)
    request, _ = pegout_build([b_coin], 3, w.public, proof, d.P, d.Q, salt=b"demo/pegout")
    if break_auth:
        out("      --break-auth: the request is sent without its proof")
        bare = Transaction(request.inputs, request.outputs, fee=request.fee, pegout=PegoutData(0, w.public, None), nonce=request.nonce)
        request = sign_inputs(bare, [b_coin])
    d.side_block([request], "authorization")

    out("[6/6] withdrawal: watchmen check the request, co-sign a payout to W and the main chain confirms it")
    watchmen = make_watchmen([k.secret for k in d.watch], K, d.lock, DEPTH, d.P, d.Q, SIDE_INTERVAL_MS)
    view = PegView(d.now, d.main, d.side, d.side_txs.get)
    leader = watchmen[0].leader(d.now)
    queue = deque((leader, o) for o in watchmen[leader].tick(view))
    submitted: list[Transaction] = []
    while queue:
        src, o = queue.popleft()
        if isinstance(o, WatchBroadcast):
            for w_ in watchmen:
                if w_.id != src:
                    queue.extend((w_.id, r) for r in w_.receive(o.msg, view))
        elif isinstance(o, SubmitMain):
            submitted.append(o.tx)
    if not submitted:
        raise DemoFailure("withdrawal", "watchmen did not gather enough signatures")
    res = d.main.submit(submitted[0], d.now)
    if not res:
        raise DemoFailure("withdrawal", f"main chain rejected the withdrawal: {res.reason}")
    d.mine()
    paid = [o for o in submitted[0].outputs if o.condition == KeyLock(w.public)]
    if len(paid) != 1 or paid[0].amount != 3:
        raise DemoFailure("withdrawal", "payout to W missing")
    out(f"      {len(submitted[0].inputs)} locked output(s) spent; W receives 3; change returns to the peg lock")
