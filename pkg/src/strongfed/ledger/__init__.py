"""UTXO ledger shared by the sidechain and the parent-chain model."""

from strongfed.ledger.assets import AssetError, asset_destroy, asset_issue
from strongfed.ledger.block import (
    Block,
    BlockHeader,
    SignatureStamp,
    WorkStamp,
    block_merkle_root,
    header_message,
    merkle_root,
    solve_work,
)
from strongfed.ledger.mainchain import MainChain, MainChainClock, mainchain_extend, mainchain_race, pegin_checker
from strongfed.ledger.script import (
    BRANCH_BACKUP,
    BRANCH_PRIMARY,
    KeyLock,
    MultisigLock,
    PegLock,
    TimelockLock,
    Unspendable,
    make_witness,
)
from strongfed.ledger.state import (
    BlockRejected,
    ChainRules,
    ChainState,
    PegoutRequest,
    ValidationResult,
    block_apply,
    genesis,
    tx_validate,
)
from strongfed.ledger.tx import (
    PEGGED_ASSET,
    ConfidentialAmount,
    IssuanceInput,
    OutPoint,
    PeginData,
    PegoutData,
    Transaction,
    TxInput,
    TxOutput,
    derive_asset_id,
    issuance_placeholder,
)

__all__ = [name for name in dir() if not name.startswith("_")]
