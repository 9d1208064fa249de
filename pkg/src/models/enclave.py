from enum import Enum
from typing import Optional, Union

from pydantic import Field

from .base import Amount, Digest, Ordinal, ProtocolModel
from .crypto import PublicKey, Signature
from .ledger import MicroTransaction
from .node import QueryAccount, QueryIncProof, QueryMemProof, QueryReceipt


class VersionTransitionPair(ProtocolModel):
    """Enclave-signed move of the public snapshot from ``root_from`` to ``root_to``."""
    root_from: Optional[Digest] = None
    root_to: Digest
    t_i: Amount
    t_s: Amount
    signature: Optional[Signature] = None


class EnclaveKeys(ProtocolModel):
    """Public half of an enclave's identity, as bound into its quote."""
    pk_tee: PublicKey
    pk_pb: PublicKey
    sealing_pk: bytes = Field(min_length=32, max_length=32)


class EscalatedTx(ProtocolModel):
    """Plaintext of an encrypted censored micro-transaction."""
    tx: MicroTransaction
    phase: Ordinal = 0


EscalatableQuery = Union[QueryReceipt, QueryIncProof, QueryMemProof, QueryAccount]


class EscalatedQuery(ProtocolModel):
    """Plaintext of an encrypted censored query; answers are sealed to ``reply_key``."""
    query: EscalatableQuery
    requester: PublicKey
    reply_key: bytes = Field(min_length=32, max_length=32)
    phase: Ordinal = 0


class CensStatus(str, Enum):
    OK = "OK"
    REVERTED = "REVERTED"
    REJECTED = "REJECTED"
    ANSWERED = "ANSWERED"
