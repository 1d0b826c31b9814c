import itertools
import random
from dataclasses import replace

import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from consensus_helpers import ToyNet
from strongfed.consensus import (
    Behavior,
    BlockSig,
    Deliver,
    FederationParams,
    ParamError,
    Precommit,
    RoundRecord,
    RoundStart,
    censorship_monitor,
    consensus_step,
    detect_equivocation,
    first_flag,
    fork_robustness,
    functionary_sign,
    liveness_tolerance,
    make_fork_proof,
    non_precommitters,
    round_proposer,
    upgrade_apply,
    usp_publish,
    verify_fork_proof,
)
from strongfed.crypto import keypair_generate, sign
from strongfed.ledger import BlockHeader, SignatureStamp, header_message


# --- arithmetic ---------------------------------------------------------------


@pytest.mark.parametrize("h,a,n,want", [(0, 0, 8, 0), (13, 0, 8, 5), (13, 3, 8, 0)])
def test_round_proposer(h, a, n, want):
    assert round_proposer(h, a, n) == want


@pytest.mark.parametrize("k,n,want", [(5, 8, 1), (6, 8, 3), (8, 11, 4)])
def test_fork_robustness(k, n, want):
    assert fork_robustness(k, n) == want


@pytest.mark.parametrize("k,n,want", [(5, 8, 3), (8, 11, 3), (7, 7, 0)])
def test_liveness_tolerance(k, n, want):
    assert liveness_tolerance(k, n) == want


@given(st.integers(1, 40).flatmap(lambda n: st.tuples(st.integers(1, n), st.just(n))))
def test_thresholds_are_complementary(kn):
    k, n = kn
    # an equivocating coalition one past the bound plus the honest remainder
    # can fill two disjoint-looking quorums
    e = fork_robustness(k, n) + 1
    if 2 * k > n:
        assert 2 * k - e <= n
        assert 2 * k - (e - 1) > n
    assert liveness_tolerance(k, n) + k == n


@pytest.mark.parametrize("k,n", [(0, 3), (4, 3), (-1, 2)])
def test_bad_thresholds_rejected(k, n):
    with pytest.raises(ParamError):
        fork_robustness(k, n)


def test_precommit_threshold_bounds():
    assert FederationParams(5, 3, precommit_threshold=5).X == 5
    with pytest.raises(ParamError):
        FederationParams(5, 3, precommit_threshold=2)
    with pytest.raises(ParamError):
        FederationParams(5, 3, precommit_threshold=6)


def test_attempt_timeout_backs_off_and_caps():
    p = FederationParams(4, 3, proposal_timeout=0.6, max_backoff=4)
    assert [p.attempt_timeout_ms(a) for a in range(7)] == [600, 1200, 2400, 4800, 9600, 9600, 9600]


def test_round_start_on_slot_boundary():
    p = FederationParams(4, 3, block_interval=60)
    assert p.next_round_start(60_000) == 60_000
    assert p.next_round_start(60_001) == 120_000
    assert FederationParams(4, 3, block_interval=0).next_round_start(1234) == 1234


# --- the state machine --------------------------------------------------------


def test_three_honest_signers_accept_one_block():
    net = ToyNet(3, 2).run(5_000, max_height=1)
    assert all(h >= 1 for h in net.heights())
    assert net.digests_at()[1] and len(net.digests_at()[1]) == 1
    blk = net.nodes[0].blocks[1]
    assert len(blk.stamp.valid_signers(blk.digest, net.keys)) >= 2


def test_crashed_proposer_skips_to_next_attempt():
    # height 1, attempt 0 belongs to signer 1
    net = ToyNet(4, 3, behaviors={1: Behavior("crashed")}).run(10_000, max_height=1)
    honest = [0, 2, 3]
    assert all(net.nodes[i].height > 1 for i in honest)
    blk = net.nodes[0].blocks[1]
    assert blk.header.proposer == round_proposer(1, 1, 4)
    assert net.nodes[1].height == 1


def test_unanimous_precommit_stalls_on_one_withholder():
    net = ToyNet(4, 3, x=4, behaviors={2: Behavior("withholder", withhold_phase="all")}).run(30_000)
    assert net.heights() == [0, 0, 0, 0]
    assert net.digests_at() == {}


def test_withholder_below_unanimity_only_slows():
    net = ToyNet(4, 3, behaviors={2: Behavior("withholder", withhold_phase="all")}).run(30_000)
    assert min(net.heights()[i] for i in (0, 1, 3)) >= 5


def test_step_is_pure():
    net = ToyNet(3, 2)
    node = net.nodes[1]
    before = (node.height, node.attempt, node.active, dict(node.proposals))
    nxt, out = consensus_step(node, RoundStart(1), net.params, 0)
    assert (node.height, node.attempt, node.active, node.proposals) == before
    assert nxt.active and out


def test_foreign_precommit_with_bad_signature_is_ignored():
    net = ToyNet(3, 2)
    node = net.nodes[0]
    fake = Precommit(1, 0, 2, bytes(32), bytes(64))
    nxt, out = consensus_step(node, Deliver(2, fake), net.params, 0)
    assert nxt.precommits == node.precommits


def test_no_reorg_in_honest_runs():
    net = ToyNet(5, 4, seed=3, delay=(5, 120)).run(20_000)
    seen = net.digests_at()
    assert len(seen) >= 10
    assert all(len(d) == 1 for d in seen.values())
    # every honest node holds the same prefix
    tips = [nd.blocks for nd in net.nodes]
    short = min(len(b) for b in tips)
    assert len({tuple(b.digest for b in blocks[:short]) for blocks in tips}) == 1


@settings(max_examples=15, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(seed=st.integers(0, 10_000), drop=st.sampled_from([0.0, 0.05, 0.2]), lo=st.integers(1, 50), spread=st.integers(0, 400))
def test_honest_votes_once_per_attempt(seed, drop, lo, spread):
    net = ToyNet(4, 3, seed=seed, drop=drop, delay=(lo, lo + spread)).run(4_000)
    pcs = net.votes(Precommit)
    assert len({(i, h, a) for i, h, a, _ in pcs}) == len({(i, h, a, d) for i, h, a, d in pcs})
    # a signature may be resent, but never for a second digest at one height
    sigs = net.votes(BlockSig)
    per = {}
    for i, h, _, d in sigs:
        per.setdefault((i, h), set()).add(d)
    assert all(len(d) == 1 for d in per.values())
    assert all(len(d) == 1 for d in net.digests_at().values())


def _safety_cases():
    for n in range(3, 6):
        for k in range(n // 2 + 1, n + 1):
            for e in range(fork_robustness(k, n) + 1):
                yield n, k, e


@pytest.mark.parametrize("n,k,e", list(_safety_cases()))
def test_safety_below_bound_exhaustive_splits(n, k, e):
    honest = list(range(e, n))
    if e == 0:
        net = ToyNet(n, k, delay=(5, 60)).run(3_000)
        assert all(len(d) == 1 for d in net.digests_at().values())
        return
    for r in range(len(honest) + 1):
        for split in itertools.combinations(honest, r):
            beh = {i: Behavior("equivocator", split=frozenset(split), colluders=frozenset(range(e))) for i in range(e)}
            net = ToyNet(n, k, behaviors=beh, seed=len(split), delay=(5, 60)).run(3_000)
            assert all(len(d) == 1 for d in net.digests_at().values()), (n, k, e, split)


@pytest.mark.slow
@pytest.mark.parametrize("seed", range(5))
def test_safety_randomized_larger_federation(seed):
    rng = random.Random(seed)
    n, k = 8, 6
    e = fork_robustness(k, n)
    split = frozenset(rng.sample(range(e, n), (n - e) // 2))
    beh = {i: Behavior("equivocator", split=split, colluders=frozenset(range(e))) for i in range(e)}
    net = ToyNet(n, k, behaviors=beh, seed=seed, delay=(5, 100), drop=0.02).run(20_000)
    assert all(len(d) == 1 for d in net.digests_at().values())


# --- fork proofs ---------------------------------------------------------------


def _signed(header, kps, ids):
    msg = header_message(header.digest)
    return SignatureStamp(tuple((i, sign(kps[i].secret, msg).to_bytes()) for i in ids))


@pytest.fixture(scope="module")
def fed8():
    kps = [keypair_generate(f"fork/{i}") for i in range(8)]
    return kps, tuple(kp.public for kp in kps)


def test_single_chain_has_no_equivocation(fed8):
    kps, keys = fed8
    prev, chain = bytes(32), []
    for h in range(1, 101):
        hd = BlockHeader(h, prev, bytes(32), h * 1000, h % 8)
        chain.append((hd, _signed(hd, kps, range(5))))
        prev = hd.digest
    assert detect_equivocation(chain, keys, 5) is None


def test_different_heights_are_not_a_fork(fed8):
    kps, keys = fed8
    a = BlockHeader(1, bytes(32), bytes(32), 0)
    b = BlockHeader(2, bytes(32), bytes(32), 0)
    assert detect_equivocation([(a, _signed(a, kps, range(5))), (b, _signed(b, kps, range(5)))], keys, 5) is None
    assert make_fork_proof((a, _signed(a, kps, range(5))), (b, _signed(b, kps, range(5))), keys, 5) is None


@pytest.mark.parametrize("k", [5, 6])
def test_equivocation_with_2k_minus_n_signers(fed8, k):
    kps, keys = fed8
    n = 8
    e = 2 * k - n
    a = BlockHeader(3, bytes(32), b"a" * 32, 0)
    b = BlockHeader(3, bytes(32), b"b" * 32, 0)
    rest = list(range(e, n))
    sa = _signed(a, kps, list(range(e)) + rest[: k - e])
    sb = _signed(b, kps, list(range(e)) + rest[k - e :])
    proof = detect_equivocation([(a, sa), (b, sb)], keys, k)
    assert proof is not None and len(proof.overlap) >= e
    assert verify_fork_proof(proof, keys, k)
    # one equivocator fewer cannot stamp both
    short = _signed(b, kps, list(range(e - 1)) + rest[k - e :])
    assert detect_equivocation([(a, sa), (b, short)], keys, k) is None


def test_tampered_fork_proof_rejected(fed8):
    kps, keys = fed8
    a = BlockHeader(3, bytes(32), b"a" * 32, 0)
    b = BlockHeader(3, bytes(32), b"b" * 32, 0)
    proof = make_fork_proof((a, _signed(a, kps, range(5))), (b, _signed(b, kps, range(3, 8))), keys, 5)
    assert proof is not None and proof.overlap == frozenset({3, 4})
    assert not verify_fork_proof(replace(proof, overlap=frozenset({3})), keys, 5)
    assert not verify_fork_proof(replace(proof, stamp_b=_signed(b, kps, range(4))), keys, 5)


# --- censorship ------------------------------------------------------------------


def test_monitor_quiet_when_all_succeed():
    hist = [RoundRecord(h, 0, h % 4, (), True) for h in range(100)]
    assert censorship_monitor(hist, 10) == set()


def test_monitor_flags_vetoed_victim():
    hist = []
    h = 0
    for _ in range(12):
        hist.append(RoundRecord(h, 0, 0, (b"v",), False, frozenset({0, 1})))
        hist.append(RoundRecord(h, 1, 1, (), True, frozenset({0, 1, 2, 3})))
        h += 1
    assert first_flag(hist, 10, 0) == 10
    assert censorship_monitor(hist, 10) == {0}
    assert non_precommitters(hist, 0, range(4)) - {0} == {2, 3}


def test_monitor_needs_someone_else_to_succeed():
    # a fully stalled federation is not censorship
    hist = [RoundRecord(h, a, (h + a) % 4, (), False) for h in range(5) for a in range(10)]
    assert censorship_monitor(hist, 10) == set()


def test_monitor_window_validation():
    with pytest.raises(ValueError):
        censorship_monitor([], 0)


def test_uniform_failures_rarely_flag():
    quiet = 0
    for seed in range(100):
        rng = random.Random(seed)
        hist = [RoundRecord(h, 0, h % 4, (), rng.random() >= 0.05) for h in range(200)]
        quiet += censorship_monitor(hist, 10) == set()
    assert quiet >= 95


# --- upgrades -------------------------------------------------------------------


@pytest.fixture(scope="module")
def upgrade_fed():
    kps = [keypair_generate(f"upg/{i}") for i in range(11)]
    usp = keypair_generate("upg/usp")
    return kps, tuple(kp.public for kp in kps), usp


def _package(kps, usp, signers, version=2):
    pkg = usp_publish(usp, version, b"\x07" * 32)
    return pkg.with_signatures([functionary_sign(kps[i].secret, i, pkg) for i in signers])


def test_upgrade_all_sign(upgrade_fed):
    kps, keys, usp = upgrade_fed
    res = upgrade_apply(_package(kps, usp, range(11)), keys, 8, usp.public)
    assert res and res.signers == frozenset(range(11))


def test_upgrade_one_short_rejected(upgrade_fed):
    kps, keys, usp = upgrade_fed
    res = upgrade_apply(_package(kps, usp, range(7)), keys, 8, usp.public)
    assert not res and res.reason == "quorum"


def test_upgrade_minority_refusal_recorded(upgrade_fed):
    kps, keys, usp = upgrade_fed
    res = upgrade_apply(_package(kps, usp, range(3, 11)), keys, 8, usp.public)
    assert res and set(range(11)) - res.signers == {0, 1, 2}


def test_upgrade_needs_usp_signature(upgrade_fed):
    kps, keys, usp = upgrade_fed
    other = keypair_generate("upg/other")
    res = upgrade_apply(_package(kps, other, range(11)), keys, 8, usp.public)
    assert not res and res.reason == "signature"


def test_upgrade_duplicate_signatures_count_once(upgrade_fed):
    kps, keys, usp = upgrade_fed
    pkg = usp_publish(usp, 2, b"\x07" * 32)
    sigs = [functionary_sign(kps[i].secret, i, pkg) for i in range(4)] * 2
    assert not upgrade_apply(pkg.with_signatures(sigs), keys, 8, usp.public)
