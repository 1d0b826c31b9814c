"""Independent replay of a simulation trace.

Only the trace header (keys, thresholds, genesis blocks) is trusted.  Every
main-chain block is re-applied with its work stamp checked, then every
sidechain block is re-applied against that main chain.  Every signature in
a sidechain stamp must verify, not merely ``k`` of them, so a single
flipped byte is caught.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from strongfed.consensus.forks import ForkProof, make_fork_proof
from strongfed.crypto.group import GroupElement
from strongfed.ledger.block import Block, SignatureStamp
from strongfed.ledger.mainchain import MainChain, pegin_checker
from strongfed.ledger.script import MultisigLock
from strongfed.ledger.state import MAIN, SIDE, BlockRejected, ChainRules, block_apply, genesis
from strongfed.peg.ops import federation_peg_lock
from strongfed.simnet.trace import TraceError


@dataclass
class Violation:
    chain: str
    height: int | None
    reason: str
    fork_proof: ForkProof | None = None

    def __str__(self) -> str:
        where = f"{self.chain} block {self.height}" if self.height is not None else f"{self.chain} chain"
        return f"{where}: {self.reason}"


@dataclass
class VerifyReport:
    side_blocks: int = 0
    main_blocks: int = 0
    txs: int = 0
    violation: Violation | None = None

    @property
    def ok(self) -> bool:
        return self.violation is None


def _keys(header: dict, name: str) -> tuple[GroupElement, ...]:
    try:
        return tuple(GroupElement.from_bytes(bytes.fromhex(h)) for h in header[name])
    except (KeyError, TypeError, ValueError) as e:
        raise TraceError(f"header field {name}: {e}") from None


def _block(rec: dict) -> Block:
    try:
        return Block.from_bytes(bytes.fromhex(rec["hex"]))
    except KeyError:
        raise TraceError(f"{rec.get('kind')} record at t={rec.get('t')} carries no block") from None


def verify_trace(records: Sequence[dict]) -> VerifyReport:
    """Replay ``records``; the report names the first violation, if any.

    Raises ``TraceError`` when the header itself is unusable.
    """
    if not records or records[0].get("kind") != "header":
        raise TraceError("trace has no header record")
    hd = records[0]
    report = VerifyReport()
    signer_keys = _keys(hd, "signer_keys")
    try:
        k = int(hd["threshold"])
        lock = federation_peg_lock(
            _keys(hd, "watch_keys"),
            int(hd["watch_threshold"]),
            _keys(hd, "backup_keys"),
            int(hd["backup_threshold"]),
            int(hd["backup_locktime"]),
        )
        depth = int(hd["confirmation_depth"])
        main_rules = ChainRules(MAIN, difficulty_bits=int(hd["difficulty_bits"]))
        main_g = Block.from_bytes(bytes.fromhex(hd["main_genesis"]))
        side_g = Block.from_bytes(bytes.fromhex(hd["side_genesis"]))
    except (KeyError, TypeError, ValueError) as e:
        raise TraceError(f"bad trace header: {e}") from None

    main = MainChain(main_rules, main_g.txs[0].outputs if main_g.txs else ())
    if main.blocks[0].to_bytes() != main_g.to_bytes():
        report.violation = Violation(MAIN, 0, "genesis block does not match its allocations")
        return report
    side_rules = ChainRules(
        SIDE,
        signer_keys=signer_keys,
        threshold=k,
        members_P=_keys(hd, "members_P"),
        members_Q=_keys(hd, "members_Q"),
        fee_condition=MultisigLock(k, signer_keys),
        pegin_check=pegin_checker(main, lock, depth),
    )
    side, g = genesis(side_rules, side_g.txs[0].outputs if side_g.txs else (), 0, tag=b"side")
    if g.to_bytes() != side_g.to_bytes():
        report.violation = Violation(SIDE, 0, "genesis block does not match its allocations")
        return report

    # Main-chain history first: peg-in maturity is judged by block timestamps,
    # so the verdict does not depend on how same-instant events interleave.
    for rec in records[1:]:
        if rec.get("kind") != "main-block":
            continue
        h = rec.get("height")
        try:
            blk = _block(rec)
            if blk.digest.hex() != rec.get("payload"):
                raise BlockRejected("digest", "record digest does not match the block", h)
            main.append(blk)
        except BlockRejected as e:
            report.violation = Violation(MAIN, h, str(e))
            return report
        except (ValueError, IndexError) as e:
            report.violation = Violation(MAIN, h, f"undecodable block: {e}")
            return report
        report.main_blocks += 1

    canon: dict[int, Block] = {0: side_g}
    for rec in records[1:]:
        if rec.get("kind") != "side-block":
            continue
        h = rec.get("height")
        try:
            blk = _block(rec)
        except (ValueError, IndexError) as e:
            report.violation = Violation(SIDE, h, f"undecodable block: {e}")
            return report
        if blk.digest.hex() != rec.get("payload") or blk.height != h:
            report.violation = Violation(SIDE, h, "record does not match the block it carries")
            return report
        stamp = blk.stamp
        if not isinstance(stamp, SignatureStamp):
            report.violation = Violation(SIDE, h, "block is not signature-stamped")
            return report
        good = stamp.valid_signers(blk.digest, signer_keys)
        if len(good) != len(stamp.signatures):
            bad = sorted({i for i, _ in stamp.signatures} - good)
            what = f"invalid stamp signature from signer(s) {bad}" if bad else "duplicate stamp signatures"
            report.violation = Violation(SIDE, h, what)
            return report
        prior = canon.get(h)
        if prior is not None:
            proof = make_fork_proof((prior.header, prior.stamp), (blk.header, stamp), signer_keys, k)
            reason = "two headers at one height"
            if proof is not None:
                reason += f"; ForkProof built, signers {sorted(proof.overlap)} signed both"
            report.violation = Violation(SIDE, h, reason, proof)
            return report
        try:
            side = block_apply(side, blk, side_rules)
        except BlockRejected as e:
            report.violation = Violation(SIDE, h, str(e))
            return report
        canon[h] = blk
        report.side_blocks += 1
        report.txs += len(blk.txs)
    return report
