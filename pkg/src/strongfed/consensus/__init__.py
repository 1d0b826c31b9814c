"""Federated block signing: the node state machine and its analyses."""

from strongfed.consensus.censorship import RoundRecord, censorship_monitor, first_flag, non_precommitters
from strongfed.consensus.forks import ForkProof, detect_equivocation, make_fork_proof, verify_fork_proof
from strongfed.consensus.messages import *  # noqa: F401,F403
from strongfed.consensus.node import Behavior, ConsensusNode, consensus_step
from strongfed.consensus.params import (
    FederationParams,
    ParamError,
    fork_robustness,
    liveness_tolerance,
    round_proposer,
)
from strongfed.consensus.upgrade import (
    UpgradePackage,
    UpgradeResult,
    functionary_sign,
    upgrade_apply,
    usp_publish,
)

__all__ = [name for name in dir() if not name.startswith("_")]
