"""Client ↔ operator message set and node configuration."""

from enum import Enum
from typing import Optional, Tuple, Union

from pydantic import Field, model_validator

from .base import Digest, Ordinal, ProtocolModel
from .crypto import PublicKey, Signature
from .ledger import (
    AccessTicket,
    Account,
    Header,
    MicroTransaction,
    Receipt,
    TransferEvidence,
)
from .proofs import Commitment, IncrementalProof, MembershipProof, StateProof


class MessageKind(str, Enum):
    SUBMIT_TX = "SubmitTx"
    REGISTER_CLIENT = "RegisterClient"
    QUERY_IOMC_ADDRS = "QueryIomcAddrs"
    QUERY_RECEIPT = "QueryReceipt"
    QUERY_INC_PROOF = "QueryIncProof"
    QUERY_MEM_PROOF = "QueryMemProof"
    QUERY_ACCOUNT = "QueryAccount"


class SubmitTx(ProtocolModel):
    tx: MicroTransaction


class RegisterClient(ProtocolModel):
    pk: PublicKey


class QueryIomcAddrs(ProtocolModel):
    pass


class QueryReceipt(ProtocolModel):
    """Receipt evidence for ``tx_hash``, relative to the version whose root is ``at_root``."""
    tx_hash: Digest
    at_root: Optional[Digest] = None


class QueryIncProof(ProtocolModel):
    from_commitment: Commitment
    to_root: Digest


class QueryMemProof(ProtocolModel):
    index: Ordinal
    version: Ordinal


class QueryAccount(ProtocolModel):
    pk: PublicKey


Query = Union[QueryIomcAddrs, QueryReceipt, QueryIncProof, QueryMemProof, QueryAccount]
Payload = Union[SubmitTx, RegisterClient, QueryIomcAddrs, QueryReceipt, QueryIncProof,
                QueryMemProof, QueryAccount]

PAYLOAD_KINDS = {
    SubmitTx: MessageKind.SUBMIT_TX,
    RegisterClient: MessageKind.REGISTER_CLIENT,
    QueryIomcAddrs: MessageKind.QUERY_IOMC_ADDRS,
    QueryReceipt: MessageKind.QUERY_RECEIPT,
    QueryIncProof: MessageKind.QUERY_INC_PROOF,
    QueryMemProof: MessageKind.QUERY_MEM_PROOF,
    QueryAccount: MessageKind.QUERY_ACCOUNT,
}


class ClientMessage(ProtocolModel):
    """Signed client request; ``phase`` tags the transfer phase it serves (0 otherwise)."""
    kind: MessageKind
    payload: Payload
    sender_pk: PublicKey
    phase: Ordinal = 0
    signature: Optional[Signature] = None

    @model_validator(mode="after")
    def _kind_matches_payload(self) -> "ClientMessage":
        if PAYLOAD_KINDS[type(self.payload)] != self.kind:
            raise ValueError(f"Message kind {self.kind.value} does not match payload")
        return self


# --- answers -----------------------------------------------------------------

class Ack(ProtocolModel):
    tx_hash: Digest


class Registration(ProtocolModel):
    receipt: Receipt
    ticket: AccessTicket
    header_id: Ordinal


class IomcAddrs(ProtocolModel):
    send: Digest
    receive: Digest


class ReceiptAnswer(ProtocolModel):
    evidence: TransferEvidence


class IncProofAnswer(ProtocolModel):
    proof: IncrementalProof


class MemProofAnswer(ProtocolModel):
    proof: MembershipProof
    header: Header


class AccountAnswer(ProtocolModel):
    account: Optional[Account] = None
    proof: StateProof
    st_root: Digest


Answer = Union[Ack, Registration, IomcAddrs, ReceiptAnswer, IncProofAnswer, MemProofAnswer,
               AccountAnswer]


# Error strings a client branches on.
NOT_EXECUTED = "transaction not executed yet"
NOT_INCLUDED = "transaction not included in that version"
REJECTED = "transaction rejected"
UNKNOWN_ROOT = "unknown ledger root"


class NodeResponse(ProtocolModel):
    ok: bool
    error: str = ""
    payload: Optional[Answer] = None


# --- configuration -----------------------------------------------------------

class AdversaryPolicy(ProtocolModel):
    """Operator misbehaviour switches; the default is an honest operator."""
    censor_tx_from: Tuple[PublicKey, ...] = ()
    censor_queries_from: Tuple[PublicKey, ...] = ()
    drop_sync: bool = False
    equivocate: bool = False
    stall_phase: Optional[int] = Field(default=None, ge=2, le=4)
    relay_escalations: bool = False

    @property
    def honest(self) -> bool:
        return self == AdversaryPolicy()

    def censors(self, message: ClientMessage) -> bool:
        if self.stall_phase is not None and message.phase == self.stall_phase:
            return True
        if message.kind == MessageKind.SUBMIT_TX:
            return message.sender_pk in self.censor_tx_from
        if message.kind == MessageKind.REGISTER_CLIENT:
            return False
        return message.sender_pk in self.censor_queries_from


class NodeConfig(ProtocolModel):
    instance_id: str
    batch_interval: int = Field(gt=0)
    sync_interval: int = Field(gt=0)
    adversary: AdversaryPolicy = AdversaryPolicy()
