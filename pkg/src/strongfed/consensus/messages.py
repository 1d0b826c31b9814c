"""Wire messages between blocksigners, node inputs and node outputs."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

from strongfed.encoding import Writer
from strongfed.ledger.block import Block
from strongfed.ledger.tx import Transaction

_TAG_PROPOSAL = b"strongfed/proposal"
_TAG_PRECOMMIT = b"strongfed/precommit"


def proposal_message(height: int, attempt: int, digest: bytes) -> bytes:
    return Writer().raw(_TAG_PROPOSAL).u64(height).u32(attempt).raw(digest).bytes()


def precommit_message(height: int, attempt: int, digest: bytes) -> bytes:
    return Writer().raw(_TAG_PRECOMMIT).u64(height).u32(attempt).raw(digest).bytes()


# --- messages ---------------------------------------------------------------


@dataclass(frozen=True)
class Proposal:
    height: int
    attempt: int
    proposer: int
    block: Block
    sig: bytes

    kind = "proposal"

    @property
    def digest(self) -> bytes:
        return self.block.digest


@dataclass(frozen=True)
class Precommit:
    height: int
    attempt: int
    signer: int
    digest: bytes
    sig: bytes

    kind = "precommit"


@dataclass(frozen=True)
class BlockSig:
    height: int
    signer: int
    digest: bytes
    sig: bytes

    kind = "signature"


@dataclass(frozen=True)
class Announce:
    block: Block

    kind = "announce"

    @property
    def height(self) -> int:
        return self.block.height

    @property
    def digest(self) -> bytes:
        return self.block.digest


@dataclass(frozen=True)
class SyncRequest:
    from_height: int

    kind = "sync"


@dataclass(frozen=True)
class ForkProofMsg:
    proof: Any  # ForkProof

    kind = "fork-proof"


@dataclass(frozen=True)
class IntegrityWarning:
    node: int

    kind = "integrity-warning"


@dataclass(frozen=True)
class UpgradeOffer:
    package: Any  # UpgradePackage without functionary signatures

    kind = "upgrade-offer"


@dataclass(frozen=True)
class UpgradeVote:
    version: int
    image_digest: bytes
    signer: int
    sig: bytes

    kind = "upgrade-vote"


# --- node inputs ------------------------------------------------------------


@dataclass(frozen=True)
class RoundStart:
    height: int


@dataclass(frozen=True)
class Timeout:
    height: int
    attempt: int


@dataclass(frozen=True)
class Deliver:
    sender: int
    msg: Any


@dataclass(frozen=True)
class SubmitTx:
    tx: Transaction


@dataclass(frozen=True)
class Reconnect:
    pass


@dataclass(frozen=True)
class TamperAlarm:
    pass


# --- node outputs -----------------------------------------------------------


@dataclass(frozen=True)
class Send:
    to: int
    msg: Any


@dataclass(frozen=True)
class Broadcast:
    msg: Any
    only: frozenset[int] | None = None  # restrict recipients (equivocation)


@dataclass(frozen=True)
class SetTimer:
    at: int
    event: Any


@dataclass(frozen=True)
class Accepted:
    block: Block
    state: Any = field(default=None, compare=False, repr=False)  # post-block ChainState


@dataclass(frozen=True)
class Log:
    kind: str
    data: dict
