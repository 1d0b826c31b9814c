"""Acceptance checks, one test per criterion.

Each test prints a single PASS/FAIL verdict line (also repeated in the
terminal summary) and then asserts it.
"""

import random
import time

import pytest

from oracles import plaintext_balanced
from sim_runs import bundled_dict, merge, run, run_bundled
from strongfed.cli import EXIT_FAILED, boundary_lines, main, sweep
from strongfed.consensus.params import fork_robustness
from strongfed.crypto import RangeProof, authorize_key, authorize_verify, balance_check, base_mul, commit, keypair_generate, range_prove, range_verify, sign, verify
from strongfed.crypto.group import ORDER, GroupElement, Scalar
from strongfed.ledger.mainchain import mainchain_race
from strongfed.simnet.latency import latency_compare, latency_pair
from strongfed.simnet.scenario import scenario_from_dict
from strongfed.simnet.trace import write_trace
from strongfed.verify import verify_trace
from verdicts import report

HONEST = [
    "liquid-default",
    "stall-boundary",
    "censorship",
    "censorship-control",
    "confiscation",
    "backup-withdrawal",
    "pegcycle",
    "garbage-key",
    "upgrade",
]


def timed(fn):
    start = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - start


# --- 1: robustness boundary -------------------------------------------------------

# (k, n, duration): long enough for 1000 heights below the boundary
BOUNDARY = [(5, 8, 1250), (6, 8, 700), (8, 11, 1250)]


def test_criterion_1_robustness_boundary():
    def work():
        rows, lines = [], []
        for k, n, duration in BOUNDARY:
            d = merge(bundled_dict("robustness-5of8"), {"duration": duration})
            e = fork_robustness(k, n)
            rep = sweep(scenario_from_dict(d), {"federation.k": [k], "federation.n": [n], "adversary.equivocators": [e, e + 1]}, [0])
            rows.append((k, n, e, rep["cells"]))
            lines += boundary_lines(rep)
        return rows, lines

    (rows, lines), secs = timed(work)
    ok = secs < 60
    parts = []
    for k, n, e, (safe, broken) in rows:
        ok &= safe["forked_runs"] == 0 and safe["min_blocks"] >= 1000
        ok &= broken["forked_runs"] == 1 and broken["fork_proofs"] == 1
        parts.append(f"{k}of{n}: e={e} {safe['min_blocks']} blocks 0 forks, e={e + 1} ForkProof={bool(broken['fork_proofs'])}")
    assert report(1, ok, "; ".join(parts) + f"; {secs:.1f} s")
    assert lines == [f"k={k} n={n}: forks first at e={2 * k - n} (2k-n = {2 * k - n})" for k, n, _ in BOUNDARY]


# --- 2: liveness boundary --------------------------------------------------------------


def test_criterion_2_liveness_boundary():
    three, _ = run(merge(bundled_dict("stall-boundary"), {"faults": [{"kind": "crash", "t": 0, "ids": [8, 9, 10]}]}))
    four, _ = run_bundled("stall-boundary")
    slots = [int(t // 60) for t in three["block_times"]]
    every_slot = slots == list(range(len(slots))) and len(slots) >= 59
    ok = every_slot and three["forks"] == 0 and four["blocks"] == 0 and four["stalls"] == [[0.0, 3600.0]]
    detail = (
        f"3 crashed: {three['blocks']} blocks, one per 60 s slot={every_slot}, "
        f"{three['failed_proposals']} missed proposer turns; 4 crashed: {four['blocks']} blocks in 3600 s"
    )
    assert report(2, ok, detail)


# --- 3: no reorgs --------------------------------------------------------------------------


def test_criterion_3_single_header_per_height():
    def work():
        out = {name: run_bundled(name)[0] for name in HONEST}
        race = mainchain_race(random.Random(0), 500, 600.0, (0.5, 0.5), 10.0)
        return out, race

    (runs, race), secs = timed(work)
    multi = [n for n, m in runs.items() if m["max_headers_per_height"] > 1]
    blocks = runs["liquid-default"]["blocks"]
    ok = not multi and 59 <= blocks <= 60 and race.orphans >= 1 and secs < 30
    detail = (
        f"{len(runs)} honest scenarios, multi-header heights in {multi or 'none'}; "
        f"liquid-default {blocks} blocks/hour; two-miner race: {race.orphans} orphans in {race.blocks} blocks; {secs:.1f} s"
    )
    assert report(3, ok, detail)


# --- 4: latency ratio -----------------------------------------------------------------------


def test_criterion_4_latency_ratio():
    results = [latency_compare(*latency_pair(seed)) for seed in range(3)]
    ok = all(r.side_count >= 1000 and r.main_count >= 1000 and 8.0 <= r.ratio <= 12.0 for r in results)
    detail = ", ".join(
        f"seed {s}: {r.main_mean:.0f} s / {r.side_mean:.1f} s = {r.ratio:.2f} ({r.side_count}/{r.main_count} txs)"
        for s, r in enumerate(results)
    )
    assert report(4, ok, detail)


# --- 5: peg conservation -------------------------------------------------------------------

# every fault the simulator offers short of compromising keys
FAULT_VARIANTS = {
    "none": ([], {}),
    "drops": ([], {"network": {"drop_rate": 0.01}}),
    "signer-crash": ([{"kind": "crash", "ids": [5, 6], "t": 300}, {"kind": "recover", "ids": [5], "t": 900}], {}),
    "watchman-crash": ([{"kind": "crash", "role": "watchman", "ids": [0, 6], "t": 200}], {}),
    "partition": ([{"kind": "partition", "t": 400, "groups": [[0, 1, 2, 3], [4, 5, 6]], "duration": 300}], {}),
    "tamper": ([{"kind": "tamper_alarm", "ids": [2], "t": 500}], {}),
}


def test_criterion_5_peg_conservation():
    base = merge(bundled_dict("pegcycle"), {"duration": 1800, "workload": {"confidential": False}})
    worst, parts, ok = 0, [], True
    for name, (faults, extra) in FAULT_VARIANTS.items():
        m, _ = run(merge(merge(base, extra), {"faults": faults}))
        ops = m["workload"]["transfers"] + m["workload"]["swaps"] + m["peg"]["pegins"] + m["peg"]["pegouts"]
        deltas = [a["delta"] for a in m["audits"]]
        ok &= ops >= 500 and len(deltas) > 0 and all(d == 0 for d in deltas)
        worst = max([worst] + [abs(d) for d in deltas])
        parts.append(f"{name} {ops} ops/{len(deltas)} audits")
    assert report(5, ok, f"max |delta| {worst}; " + ", ".join(parts))


# --- 6: confidential-transaction oracle ------------------------------------------------------


def aid(i: int) -> bytes:
    return (1000 + i).to_bytes(32, "little")


def random_tx(rng: random.Random, tamper: bool):
    assets = [aid(i) for i in rng.sample(range(6), rng.randint(1, 3))]
    n_in = rng.randint(len(assets), 8)
    in_assets = assets + [rng.choice(assets) for _ in range(n_in - len(assets))]
    counts = {a: in_assets.count(a) for a in assets}
    ins = [(a, rng.randrange((1 << 16) // counts[a]), rng.randrange(ORDER)) for a in in_assets]
    n_out = rng.randint(len(assets), 8)
    out_assets = assets + [rng.choice(assets) for _ in range(n_out - len(assets))]
    outs, fee = [], {}
    for a in assets:
        total = sum(v for b, v, _ in ins if b == a)
        f = rng.randrange(min(total, 100) + 1)
        if f:
            fee[a] = f
        k = out_assets.count(a)
        cuts = sorted(rng.randint(0, total - f) for _ in range(k - 1))
        values = [hi - lo for lo, hi in zip([0] + cuts, cuts + [total - f])]
        blinders = [rng.randrange(ORDER) for _ in range(k - 1)]
        blinders.append((sum(r for b, _, r in ins if b == a) - sum(blinders)) % ORDER)
        outs += [(a, v, r) for v, r in zip(values, blinders)]
    if tamper:
        i = rng.randrange(len(outs))
        a, v, r = outs[i]
        kind = rng.randrange(3)
        if kind == 0:
            outs[i] = (a, v + 1 if v < (1 << 16) - 1 else v - 1, r)
        elif kind == 1:
            outs[i] = (aid(7), v, r)
        else:
            fee[a] = fee.get(a, 0) + 1
    return ins, outs, fee


def mutate(rng: random.Random, raw: bytes) -> bytes:
    m = bytearray(raw)
    kind = rng.randrange(4)
    if kind == 0:  # one bit
        pos = rng.randrange(len(m) * 8)
        m[pos // 8] ^= 1 << (pos % 8)
    elif kind == 1:  # one byte
        pos = rng.randrange(len(m))
        m[pos] = (m[pos] + rng.randrange(1, 256)) % 256
    elif kind == 2:  # swap two bit commitments (their sum is unchanged)
        i, j = rng.sample(range(16), 2)
        a, b = 1 + 32 * i, 1 + 32 * j
        m[a : a + 32], m[b : b + 32] = m[b : b + 32], m[a : a + 32]
    else:  # truncate
        del m[rng.randrange(len(m)) :]
    return bytes(m)


def test_criterion_6_confidential_oracle():
    rng = random.Random(2024)
    agree = 0
    txs = 1000
    for trial in range(txs):
        ins, outs, fee = random_tx(rng, tamper=trial % 2 == 1)
        expected = plaintext_balanced([(a, v) for a, v, _ in ins], [(a, v) for a, v, _ in outs], fee)
        got = balance_check([commit(v, r, a) for a, v, r in ins], [commit(v, r, a) for a, v, r in outs], fee)
        agree += got == expected

    asset = aid(0)
    proofs = []
    for _ in range(10):
        v, r = rng.randrange(1 << 16), rng.randrange(ORDER)
        proofs.append((commit(v, r, asset), range_prove(v, r, asset, 16).to_bytes()))
    assert all(range_verify(c, RangeProof.from_bytes(raw), asset) for c, raw in proofs)
    mutations, rejected = 10_000, 0
    for i in range(mutations):
        c, raw = proofs[i % len(proofs)]
        bad = mutate(rng, raw)
        if bad == raw:
            bad = raw[:-1]
        try:
            rejected += not range_verify(c, RangeProof.from_bytes(bad), asset)
        except ValueError:
            rejected += 1
    ok = agree == txs and rejected == mutations
    assert report(6, ok, f"balance_check agrees with the plaintext oracle on {agree}/{txs} txs; {rejected}/{mutations} mutated range proofs rejected")


# --- 7: peg-out authorization ------------------------------------------------------------


def test_criterion_7_pegout_authorization():
    members = 6
    P = [keypair_generate(f"acc/P{i}") for i in range(members)]
    Q = [keypair_generate(f"acc/Q{i}") for i in range(members)]
    allP, allQ = [k.public for k in P], [k.public for k in Q]
    round_trips = 0
    for i in range(members):
        w = keypair_generate(f"acc/W{i}")
        round_trips += authorize_verify(authorize_key(i, P[i].secret, w.secret + Q[i].secret, w.public, allP, allQ), allP, allQ)

    cycle, _ = run_bundled("pegcycle")
    everyone_out = cycle["peg"]["pegout_users"] == list(range(cycle["scenario"]["workload"]["users"]))

    seven, _ = run_bundled("confiscation", faults=[{"kind": "compromise_keys", "role": "watchman", "t": 600, "ids": list(range(7))}])
    refused = seven["peg"]["unauthorized_withdrawals"] == 0 and seven["peg"]["withdrawal_refusals"] > 0

    garbage, trace = run_bundled("garbage-key")
    header_Q = [GroupElement.from_bytes(bytes.fromhex(h)) for h in trace[0]["members_Q"]]
    unspendable = True
    for g in garbage["peg"]["garbage_pegouts"]:
        t = Scalar.from_bytes(bytes.fromhex(g["t"]))
        W = GroupElement.from_bytes(bytes.fromhex(g["W"]))
        unspendable &= W == base_mul(t) - header_Q[g["user"]]
        unspendable &= not verify(W, b"spend", sign(t, b"spend"))
    paid = garbage["peg"]["pegouts_paid"] == len(garbage["peg"]["garbage_pegouts"]) >= 1

    ok = round_trips == members and everyone_out and refused and paid and unspendable
    detail = (
        f"round trips {round_trips}/{members}, pegcycle paid every member={everyone_out}; "
        f"7-of-11 compromised: {seven['peg']['withdrawal_refusals']} refusals, {seven['peg']['unauthorized_withdrawals']} unauthorized; "
        f"garbage-key: {len(garbage['peg']['garbage_pegouts'])} paid to unspendable W={unspendable}"
    )
    assert report(7, ok, detail)


# --- 8: censorship detection -----------------------------------------------------------------


def test_criterion_8_censorship_detection():
    seeds = range(100)
    within = 0
    for s in seeds:
        m, _ = run_bundled("censorship", seed=s)
        first = m["censorship_first_flag"].get("0")
        within += m["censorship_flags"] == [0] and first is not None and first <= 10
    quiet = sum(run_bundled("censorship-control", seed=s)[0]["censorship_flags"] == [] for s in seeds)
    ok = within >= 95 and quiet >= 95
    assert report(8, ok, f"censored proposer flagged within 10 attempts in {within}/100 seeds; control quiet in {quiet}/100")


# --- 9: fork-proof halt --------------------------------------------------------------------


def test_criterion_9_fork_proof_halt(tmp_path):
    lags, flagged, ok = [], 0, True
    for k, n, _ in BOUNDARY:
        d = merge(bundled_dict("robustness-5of8"), {"duration": 120, "federation": {"k": k, "n": n}, "adversary": {"equivocators": 2 * k - n}})
        m, trace = run(d)
        max_delay = m["scenario"]["network"]["delay_max"]
        ok &= m["fork_proof_constructed"] and m["halt_lag_max"] is not None and m["halt_lag_max"] <= max_delay
        lags.append(m["halt_lag_max"])
        p = tmp_path / f"fork-{k}of{n}.jsonl"
        write_trace(trace, p)
        rep = verify_trace(trace)
        if main(["verify", str(p), "--quiet"]) == EXIT_FAILED and rep.violation is not None and rep.violation.fork_proof is not None:
            flagged += 1
    ok &= flagged == len(BOUNDARY)
    assert report(9, ok, f"slowest honest halt after the proof: {max(lags):.3f} s (max delay 0.15 s); verify flagged {flagged}/{len(BOUNDARY)} traces")


# --- 10: confiscation and backup ----------------------------------------------------------------


def test_criterion_10_confiscation_and_backup():
    eight, _ = run_bundled("confiscation")
    seven, _ = run_bundled("confiscation", faults=[{"kind": "compromise_keys", "role": "watchman", "t": 600, "ids": list(range(7))}])
    backup, _ = run_bundled("backup-withdrawal")
    T = backup["scenario"]["watchmen"]["timelock"]
    b = backup["peg"]
    before_ok = b["backup_attempts_before_T"] >= 1
    ok = (
        eight["peg"]["unauthorized_withdrawals"] >= 1
        and seven["peg"]["unauthorized_withdrawals"] == 0
        and before_ok
        and b["backup_recovered_at"] is not None
        and b["backup_recovered_at"] >= T
        and b["backup_swept_all"] is True
        and backup["audit_max_abs_delta"] == 0
    )
    detail = (
        f"8 colluding: {eight['peg']['unauthorized_withdrawals']} unauthorized withdrawals, 7: {seven['peg']['unauthorized_withdrawals']}; "
        f"backup: {b['backup_attempts_before_T']} attempts before T={T:g} s all rejected, swept {b['backup_recovered']} at {b['backup_recovered_at']:.0f} s"
    )
    assert report(10, ok, detail)


# --- 11: upgrades ---------------------------------------------------------------------------


def test_criterion_11_upgrade_threshold():
    m, _ = run_bundled("upgrade")
    events = m["upgrades"]["events"]
    applied = {v: {e["node"] for e in events if e["event"] == "upgrade-applied" and e["version"] == v} for v in (2, 3)}
    n = m["scenario"]["federation"]["n"]
    ok = applied[2] == set(range(n)) and not applied[3] and m["upgrades"]["versions"] == [2] * n
    detail = f"supermajority package applied by {len(applied[2])}/{n}; supermajority-1 package applied by {len(applied[3])}"
    assert report(11, ok, detail)


@pytest.mark.parametrize("k,n", [(5, 8), (6, 8), (8, 11)])
def test_boundary_matches_formula(k, n):
    assert fork_robustness(k, n) == 2 * k - n - 1
