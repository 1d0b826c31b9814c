import hashlib
import random
import statistics

import pytest
from hypothesis import given, settings, strategies as st

from ledger_helpers import ALICE, BOB, CAROL, FED, OWNERS, funded, side_rules, stamped
from oracles import merkle_root_reference
from strongfed.crypto import Scalar, authorize_key, commit, keypair_generate, range_prove
from strongfed.encoding import digest
from strongfed.ledger import (
    PEGGED_ASSET,
    AssetError,
    Block,
    BlockRejected,
    ConfidentialAmount,
    KeyLock,
    MainChainClock,
    OutPoint,
    PeginData,
    PegLock,
    PegoutData,
    TimelockLock,
    Transaction,
    TxInput,
    TxOutput,
    Unspendable,
    asset_destroy,
    asset_issue,
    block_apply,
    mainchain_extend,
    mainchain_race,
    make_witness,
    merkle_root,
    tx_validate,
)
from strongfed.ledger.block import block_merkle_root
from strongfed.ledger.state import fee_outpoint
from strongfed.ledger.wallet import Payment, WalletError, build_transfer, coins_from, sign_inputs


def leaf(i: int) -> bytes:
    return hashlib.sha256(i.to_bytes(4, "little")).digest()


def node(a, b):
    return hashlib.sha256(b"strongfed/merkle" + a + b).digest()


# --- merkle -----------------------------------------------------------------


def test_merkle_single_leaf_hashes_with_itself():
    assert merkle_root([leaf(0)]) == node(leaf(0), leaf(0))


def test_merkle_two_leaves():
    assert merkle_root([leaf(0), leaf(1)]) == node(leaf(0), leaf(1))


def test_merkle_five_leaves_matches_reference():
    xs = [leaf(i) for i in range(5)]
    assert merkle_root(xs) == merkle_root_reference(xs)


@given(st.integers(1, 32))
def test_merkle_matches_reference_up_to_32(n):
    xs = [leaf(i + 1000 * n) for i in range(n)]
    assert merkle_root(xs) == merkle_root_reference(xs)


def test_merkle_empty_is_error():
    with pytest.raises(ValueError):
        merkle_root([])


# --- transactions -----------------------------------------------------------


def pay(coins, payments, fee=None, skip=(), **kw):
    tx, openings = build_transfer(coins, payments, fee, **kw)
    return sign_inputs(tx, coins, skip), openings


def test_simple_transfer_accepts_and_overspend_rejects():
    rules, state, coins = funded()
    tx, _ = pay(coins[:1], [Payment(PEGGED_ASSET, 100, KeyLock(BOB.public))])
    assert tx_validate(tx, state, rules).ok
    bad = Transaction(tx.inputs, (TxOutput(PEGGED_ASSET, 101, KeyLock(BOB.public)),))
    bad = sign_inputs(bad, coins[:1])
    res = tx_validate(bad, state, rules)
    assert (res.ok, res.reason) == (False, "balance")


def test_unsigned_and_wrongly_signed_inputs():
    rules, state, coins = funded()
    tx, _ = build_transfer(coins[:1], [Payment(PEGGED_ASSET, 100, KeyLock(BOB.public))])
    assert tx_validate(tx, state, rules).reason == "signature"
    forged = tx.with_inputs((TxInput(tx.inputs[0].prevout, make_witness(tx.txid, [(0, BOB.secret)])),))
    assert tx_validate(forged, state, rules).reason == "signature"


def test_transaction_encoding_round_trip_and_txid_ignores_witness():
    rules, state, coins = funded()
    tx, _ = pay(coins, [Payment(PEGGED_ASSET, 140, KeyLock(CAROL.public), True), Payment(PEGGED_ASSET, 5, KeyLock(ALICE.public))], {PEGGED_ASSET: 5})
    assert Transaction.from_bytes(tx.to_bytes()) == tx
    unsigned = tx.with_inputs(tuple(TxInput(i.prevout) for i in tx.inputs))
    assert unsigned.txid == tx.txid
    assert unsigned.wtxid != tx.wtxid


def make_swap():
    rules, state, _ = funded()
    gold = asset_issue(ALICE, 10, b"gold")
    silver = asset_issue(BOB, 20, b"silver")
    state = block_apply(state, stamped(state, [gold, silver]), rules)
    a_coin = coins_from(gold, [(10, Scalar(0))], OWNERS)[0]
    b_coin = coins_from(silver, [(20, Scalar(0))], OWNERS)[0]
    coins = [a_coin, b_coin]
    payments = [
        Payment(a_coin.asset, 10, KeyLock(BOB.public)),
        Payment(b_coin.asset, 20, KeyLock(ALICE.public)),
    ]
    return rules, state, coins, payments


def test_atomic_swap_needs_both_signatures():
    rules, state, coins, payments = make_swap()
    full, _ = pay(coins, payments)
    assert tx_validate(full, state, rules).ok
    for missing in (0, 1):
        half, _ = pay(coins, payments, skip=[missing])
        res = tx_validate(half, state, rules)
        assert (res.ok, res.reason) == (False, "signature")


def test_duplicate_input_in_one_tx_is_double_spend():
    rules, state, coins = funded()
    op = coins[0].outpoint
    tx = Transaction((TxInput(op), TxInput(op)), (TxOutput(PEGGED_ASSET, 200, KeyLock(BOB.public)),))
    assert tx_validate(tx, state, rules).reason == "double-spend"


def test_missing_input():
    rules, state, _ = funded()
    tx = Transaction((TxInput(OutPoint(bytes(32), 0)),), (TxOutput(PEGGED_ASSET, 1, KeyLock(BOB.public)),))
    assert tx_validate(tx, state, rules).reason == "missing-input"


def test_confidential_mixing_and_bad_proof():
    rules, state, coins = funded()
    tx, openings = pay(
        coins[:1],
        [Payment(PEGGED_ASSET, 60, KeyLock(BOB.public), True), Payment(PEGGED_ASSET, 40, KeyLock(ALICE.public), True)],
    )
    assert tx_validate(tx, state, rules).ok
    assert sum(r for _, r in openings) == 0 or (openings[0][1] + openings[1][1]).is_zero()
    o = tx.outputs[0]
    wrong = range_prove(61, openings[0][1], PEGGED_ASSET)
    swapped = Transaction(tx.inputs, (TxOutput(o.asset, ConfidentialAmount(o.amount.commitment, wrong), o.condition), tx.outputs[1]))
    swapped = sign_inputs(swapped, coins[:1])
    assert tx_validate(swapped, state, rules).reason == "proof"


def test_spend_confidential_coin_onward():
    rules, state, coins = funded()
    tx, openings = pay(
        coins[:1],
        [Payment(PEGGED_ASSET, 60, KeyLock(BOB.public), True), Payment(PEGGED_ASSET, 40, KeyLock(ALICE.public), True)],
    )
    state = block_apply(state, stamped(state, [tx]), rules)
    bob_coin = [c for c in coins_from(tx, openings, OWNERS) if c.owner == BOB][0]
    nxt, _ = pay([bob_coin], [Payment(PEGGED_ASSET, 59, KeyLock(CAROL.public), True)], {PEGGED_ASSET: 1})
    assert tx_validate(nxt, state, rules).ok
    with pytest.raises(WalletError):
        build_transfer([bob_coin], [Payment(PEGGED_ASSET, 60, KeyLock(CAROL.public))])


def test_confidential_burn_is_rejected():
    rules, state, coins = funded()
    tx, _ = pay(coins[:1], [Payment(PEGGED_ASSET, 100, Unspendable(), True)])
    assert tx_validate(tx, state, rules).reason == "script"


def test_timelock_condition():
    rules, state, coins = funded()
    lock = TimelockLock(5000, 1, (BOB.public,))
    tx, _ = pay(coins[:1], [Payment(PEGGED_ASSET, 100, lock)])
    state = block_apply(state, stamped(state, [tx]), rules)
    spend = Transaction((TxInput(OutPoint(tx.txid, 0)),), (TxOutput(PEGGED_ASSET, 100, KeyLock(BOB.public)),))
    spend = spend.with_inputs((TxInput(OutPoint(tx.txid, 0), make_witness(spend.txid, [(0, BOB.secret)])),))
    assert tx_validate(spend, state, rules, now_ms=4999).reason == "script"
    assert tx_validate(spend, state, rules, now_ms=5000).ok


# --- assets -----------------------------------------------------------------


def test_issue_supply_and_split():
    rules, state, _ = funded()
    iss = asset_issue(BOB, 1000, b"policy", split=[500, 300, 200], recipients=[ALICE, BOB, CAROL])
    state = block_apply(state, stamped(state, [iss]), rules)
    aid = iss.issued_asset(0)
    assert state.circulating(aid) == 1000
    outs = [state.utxos[OutPoint(iss.txid, i)] for i in range(3)]
    assert {o.asset for o in outs} == {aid}
    assert [o.amount for o in outs] == [500, 300, 200]


def test_two_issuances_distinct_and_no_reissue():
    rules, state, _ = funded()
    a = asset_issue(BOB, 10, b"a")
    b = asset_issue(BOB, 10, b"b")
    assert a.issued_asset(0) != b.issued_asset(0)
    state = block_apply(state, stamped(state, [a, b]), rules)
    again = tx_validate(a, state, rules)
    assert again.reason in ("issuance", "double-spend")
    with pytest.raises(AssetError):
        asset_issue(BOB, 0)


def issued(amount=1000):
    rules, state, _ = funded()
    iss = asset_issue(BOB, amount)
    state = block_apply(state, stamped(state, [iss]), rules)
    coin = (OutPoint(iss.txid, 0), state.utxos[OutPoint(iss.txid, 0)])
    return rules, state, iss.issued_asset(0), coin


def test_destroy_partial_and_full():
    rules, state, aid, coin = issued()
    burn = asset_destroy(BOB, [coin], 100)
    s1 = block_apply(state, stamped(state, [burn]), rules)
    assert s1.circulating(aid) == 900
    burn_all = asset_destroy(BOB, [coin])
    s2 = block_apply(state, stamped(state, [burn_all]), rules)
    assert s2.circulating(aid) == 0
    spend = Transaction((TxInput(OutPoint(burn_all.txid, 0)),), (TxOutput(aid, 1000, KeyLock(BOB.public)),))
    assert tx_validate(spend, s2, rules).reason == "script"


def test_destroy_condition_mismatch():
    _, _, _, coin = issued()
    with pytest.raises(AssetError):
        asset_destroy(ALICE, [coin])


# --- blocks -----------------------------------------------------------------


def test_empty_block_increments_height():
    rules, state, _ = funded()
    nxt = block_apply(state, stamped(state, []), rules)
    assert nxt.height == state.height + 1
    assert dict(nxt.utxos) == dict(state.utxos)


def test_block_with_too_few_signatures():
    rules, state, _ = funded()
    with pytest.raises(BlockRejected) as e:
        block_apply(state, stamped(state, [], signers=[0, 1]), rules)
    assert e.value.reason == "stamp"


def test_block_replaying_spent_outpoint():
    rules, state, coins = funded()
    tx, _ = pay(coins[:1], [Payment(PEGGED_ASSET, 100, KeyLock(BOB.public))])
    s1 = block_apply(state, stamped(state, [tx]), rules)
    tx2, _ = pay(coins[:1], [Payment(PEGGED_ASSET, 100, KeyLock(CAROL.public))])
    snapshot = (dict(s1.utxos), dict(s1.spent), s1.headers, dict(s1.supply))
    with pytest.raises(BlockRejected) as e:
        block_apply(s1, stamped(s1, [tx2]), rules)
    assert e.value.reason == "double-spend" and e.value.tx_index == 0
    assert (dict(s1.utxos), dict(s1.spent), s1.headers, dict(s1.supply)) == snapshot


def test_header_linkage_checks():
    rules, state, _ = funded()
    blk = stamped(state, [])
    s1 = block_apply(state, blk, rules)
    with pytest.raises(BlockRejected):
        block_apply(s1, blk, rules)  # wrong height
    tx = asset_issue(BOB, 5)
    bad_root = Block(blk.header, (tx,), blk.stamp)
    with pytest.raises(BlockRejected) as e:
        block_apply(state, bad_root, rules)
    assert e.value.reason == "header"


def test_block_encoding_round_trip():
    rules, state, coins = funded()
    tx, _ = pay(coins[:1], [Payment(PEGGED_ASSET, 99, KeyLock(BOB.public), True)], {PEGGED_ASSET: 1})
    blk = stamped(state, [tx])
    assert Block.from_bytes(blk.to_bytes()) == blk


def test_fees_go_to_federation_output():
    rules, state, coins = funded()
    tx, _ = pay(coins[:1], [Payment(PEGGED_ASSET, 97, KeyLock(BOB.public))], {PEGGED_ASSET: 3})
    blk = stamped(state, [tx])
    s1 = block_apply(state, blk, rules)
    fee_out = s1.utxos[fee_outpoint(blk.digest, 0)]
    assert fee_out.amount == 3 and fee_out.condition == rules.fee_condition
    assert s1.circulating(PEGGED_ASSET) == 150


# --- peg metadata -----------------------------------------------------------

PEG_LOCK = PegLock(3, tuple(k.public for k in FED), 10_000, 1, (CAROL.public,))


def test_pegin_claim_rules():
    lock = OutPoint(b"\x07" * 32, 0)
    claim = PeginData(lock, 5, ALICE.public.to_bytes())
    rules = side_rules(pegin_check=lambda c, now: c == claim)
    _, state, _ = funded(rules)
    mint = Transaction(outputs=(TxOutput(PEGGED_ASSET, 5, KeyLock(ALICE.public)),), pegin=claim)
    assert tx_validate(mint, state, rules).ok
    s1 = block_apply(state, stamped(state, [mint]), rules)
    assert s1.circulating(PEGGED_ASSET) == 155
    assert tx_validate(mint, s1, rules).reason == "peg"
    over = Transaction(outputs=(TxOutput(PEGGED_ASSET, 6, KeyLock(ALICE.public)),), pegin=claim)
    assert tx_validate(over, state, rules).reason == "peg"
    other = Transaction(outputs=(TxOutput(PEGGED_ASSET, 5, KeyLock(ALICE.public)),), pegin=PeginData(OutPoint(b"\x08" * 32, 0), 5, ALICE.public.to_bytes()))
    assert tx_validate(other, state, rules).reason == "peg"


def pegout_setup():
    P = [keypair_generate(f"mP{i}") for i in range(3)]
    Q = [keypair_generate(f"mQ{i}") for i in range(3)]
    rules = side_rules(members_P=tuple(k.public for k in P), members_Q=tuple(k.public for k in Q))
    _, state, coins = funded(rules)
    W = keypair_generate("dest")
    proof = authorize_key(2, P[2].secret, W.secret + Q[2].secret, W.public, rules.members_P, rules.members_Q)
    return rules, state, coins, W, proof


def test_pegout_request_rules():
    rules, state, coins, W, proof = pegout_setup()
    base, _ = build_transfer(coins[:1], [Payment(PEGGED_ASSET, 3, Unspendable(b"pegout")), Payment(PEGGED_ASSET, 97, KeyLock(ALICE.public))])

    def with_meta(meta):
        t = Transaction(base.inputs, base.outputs, pegout=meta)
        return sign_inputs(t, coins[:1])

    good = with_meta(PegoutData(0, W.public, proof))
    assert tx_validate(good, state, rules).ok
    s1 = block_apply(state, stamped(state, [good]), rules)
    assert s1.circulating(PEGGED_ASSET) == 147
    assert s1.pegouts[0].amount == 3 and s1.pegouts[0].destination == W.public
    other_W = keypair_generate("other").public
    assert tx_validate(with_meta(PegoutData(0, other_W, proof)), state, rules).reason == "authorization"
    assert tx_validate(with_meta(PegoutData(0, W.public, None)), state, rules).reason == "authorization"
    assert tx_validate(with_meta(PegoutData(1, W.public, proof)), state, rules).reason == "peg"


# --- main chain timing -------------------------------------------------------


def draw_times(seed, n, mean):
    rng = random.Random(seed)
    chain, out = MainChainClock(), []
    for _ in range(n):
        prev = chain.tip_time
        chain, t = mainchain_extend(chain, rng, mean)
        out.append(t - prev)
    return out


def test_exponential_interval_mean():
    gaps = draw_times(2024, 10_000, 600.0)
    assert abs(statistics.fmean(gaps) - 600) <= 3 * 600 / 100


def test_block_times_deterministic():
    assert draw_times(9, 50, 600.0) == draw_times(9, 50, 600.0)
    with pytest.raises(ValueError):
        mainchain_extend(MainChainClock(), random.Random(0), 0)


def test_two_miner_race_orphans():
    res = mainchain_race(random.Random(1), 500, 600.0, (0.5, 0.5), 10.0)
    assert res.orphans >= 1
    assert res.best_height + res.orphans == res.blocks
    solo = mainchain_race(random.Random(1), 500, 600.0, (1.0,), 10.0)
    assert solo.orphans == 0 and solo.best_height == 500


# --- fuzz: no double spend, conservation -------------------------------------


def test_random_block_sequences_never_double_spend():
    rng = random.Random(3)
    rules, state, coins = funded()
    wallet = list(coins)
    keys = [ALICE, BOB, CAROL]
    spent_seen: set = set()
    rejected = 0
    for step in range(40):
        txs, used = [], set()
        for _ in range(rng.randint(0, 3)):
            pick = rng.sample(wallet, min(len(wallet), rng.randint(1, 2)))
            total = sum(c.value for c in pick)
            if total == 0:
                payments = [Payment(PEGGED_ASSET, total, KeyLock(rng.choice(keys).public))]
            else:
                a = rng.randint(0, total)
                payments = [
                    Payment(PEGGED_ASSET, a, KeyLock(rng.choice(keys).public), rng.random() < 0.5),
                    Payment(PEGGED_ASSET, total - a, KeyLock(rng.choice(keys).public), True),
                ]
            try:
                tx, openings = build_transfer(pick, payments, salt=bytes([step]))
            except WalletError:
                continue
            tx = sign_inputs(tx, pick)
            txs.append((tx, openings, pick))
            used |= {c.outpoint for c in pick}
        blk = stamped(state, [t for t, _, _ in txs])
        try:
            new = block_apply(state, blk, rules)
        except BlockRejected as e:
            assert e.reason == "double-spend"  # sibling txs picked the same coin
            rejected += 1
            continue
        for tx, openings, pick in txs:
            for inp in tx.inputs:
                assert inp.prevout not in spent_seen
                spent_seen.add(inp.prevout)
            wallet = [c for c in wallet if c.outpoint not in {c2.outpoint for c2 in pick}]
            wallet += coins_from(tx, openings, OWNERS)
        state = new
        # plaintext oracle: supply equals the openings of every unspent coin
        assert sum(c.value for c in wallet) == state.circulating(PEGGED_ASSET) == 150
        assert {c.outpoint for c in wallet} == set(state.utxos)
    assert state.height >= 10 and rejected >= 1
