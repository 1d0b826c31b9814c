"""Group arithmetic, signatures, commitments and proofs."""

from strongfed.crypto.authproof import (
    AuthorizationError,
    AuthorizationProof,
    authorize_key,
    authorize_verify,
    derive_auth_key,
)
from strongfed.crypto.group import (
    GENERATOR,
    IDENTITY,
    ORDER,
    GroupElement,
    GroupError,
    Scalar,
    base_mul,
    hash_to_group,
    hash_to_scalar,
)
from strongfed.crypto.pedersen import (
    Commitment,
    RangeError,
    asset_generator,
    balance_check,
    commit,
    explicit_commitment,
)
from strongfed.crypto.rangeproof import DEFAULT_BITS, RangeProof, range_prove, range_verify
from strongfed.crypto.ring import RingError, RingSignature, ring_sign, ring_verify
from strongfed.crypto.schnorr import Keypair, SchnorrSignature, keypair_generate, sign, verify

__all__ = [
    "AuthorizationError",
    "AuthorizationProof",
    "Commitment",
    "DEFAULT_BITS",
    "GENERATOR",
    "GroupElement",
    "GroupError",
    "IDENTITY",
    "Keypair",
    "ORDER",
    "RangeError",
    "RangeProof",
    "RingError",
    "RingSignature",
    "Scalar",
    "SchnorrSignature",
    "asset_generator",
    "authorize_key",
    "authorize_verify",
    "balance_check",
    "base_mul",
    "commit",
    "derive_auth_key",
    "explicit_commitment",
    "hash_to_group",
    "hash_to_scalar",
    "keypair_generate",
    "range_prove",
    "range_verify",
    "ring_sign",
    "ring_verify",
    "sign",
    "verify",
]
