"""Small builders shared by the ledger tests."""

from strongfed.crypto import Scalar, keypair_generate, sign
from strongfed.ledger import (
    PEGGED_ASSET,
    Block,
    BlockHeader,
    ChainRules,
    KeyLock,
    MultisigLock,
    OutPoint,
    SignatureStamp,
    TxOutput,
    block_merkle_root,
    genesis,
    header_message,
)
from strongfed.ledger.wallet import Coin

FED = [keypair_generate(f"fed{i}") for i in range(4)]
FED_KEYS = tuple(k.public for k in FED)
ALICE = keypair_generate("alice")
BOB = keypair_generate("bob")
CAROL = keypair_generate("carol")
OWNERS = {k.public: k for k in (ALICE, BOB, CAROL)}


def side_rules(**kw) -> ChainRules:
    base = dict(kind="side", signer_keys=FED_KEYS, threshold=3, fee_condition=MultisigLock(3, FED_KEYS))
    base.update(kw)
    return ChainRules(**base)


def funded(rules=None, allocations=None):
    rules = rules or side_rules()
    allocations = allocations or [
        TxOutput(PEGGED_ASSET, 100, KeyLock(ALICE.public)),
        TxOutput(PEGGED_ASSET, 50, KeyLock(BOB.public)),
    ]
    state, g = genesis(rules, allocations)
    coins = [
        Coin(OutPoint(g.txs[0].txid, i), o, o.amount, Scalar(0), OWNERS[o.condition.key])
        for i, o in enumerate(allocations)
    ]
    return rules, state, coins


def stamped(state, txs, t=None, signers=range(3)):
    t = state.timestamp + 1000 if t is None else t
    h = BlockHeader(state.height + 1, state.tip, block_merkle_root(txs), t)
    sigs = tuple((i, sign(FED[i].secret, header_message(h.digest)).to_bytes()) for i in signers)
    return Block(h, tuple(txs), SignatureStamp(sigs))
