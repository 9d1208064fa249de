"""
Ledger protocol types: accounts, micro-transactions, headers, receipts,
IOMC records and the evidence bundles exchanged during inter-bank transfers.
"""

from enum import Enum
from typing import ClassVar, Dict, Optional, Tuple, Union

from pydantic import Field, model_validator

from .base import Amount, Digest, Ordinal, ProtocolModel
from .crypto import PublicKey, Signature
from .proofs import Commitment, IncrementalProof, MembershipProof, MerkleProof, StateProof
from ..utils.encoding import canonical_decode
from ..utils.crypto import hash_bytes


class Status(str, Enum):
    OK = "OK"
    REVERTED = "REVERTED"


class IomcContract(str, Enum):
    SEND = "S"
    RECEIVE = "R"


class ClientId(ProtocolModel):
    """Globally unique account identity: key plus the instance's IPSC id."""
    pk: PublicKey
    ipsc: str


class Account(ProtocolModel):
    address: Digest
    pk: Optional[PublicKey] = None
    balance: Amount = 0
    nonce: Ordinal = 0


class AccessTicket(ProtocolModel):
    """Enclave-signed capability to file censorship requests at an IPSC."""
    client_pk: PublicKey
    issuing_ipsc: str
    expires_at: Ordinal
    signature: Optional[Signature] = None


# --- calls -------------------------------------------------------------------

class Transfer(ProtocolModel):
    to: Digest
    amount: Amount


class SendInitArgs(ProtocolModel):
    receiver: PublicKey
    receiver_ipsc: str
    hashlock: Digest


class SendCommitArgs(ProtocolModel):
    transfer_id: Ordinal
    secret: bytes
    ext_transfer_id: Ordinal
    evidence: Optional["ForeignEvidence"] = None


class SendRevertArgs(ProtocolModel):
    transfer_id: Ordinal


class ReceiveInitArgs(ProtocolModel):
    sender: PublicKey
    sender_ipsc: str
    hashlock: Digest
    amount: Amount


class ReceiveCommitArgs(ProtocolModel):
    transfer_id: Ordinal
    secret: bytes
    evidence: Optional["ForeignEvidence"] = None


class FundArgs(ProtocolModel):
    pass


IomcArgs = Union[
    SendInitArgs, SendCommitArgs, SendRevertArgs, ReceiveInitArgs, ReceiveCommitArgs, FundArgs
]

IOMC_METHODS: Dict[Tuple[IomcContract, str], type] = {
    (IomcContract.SEND, "sendInit"): SendInitArgs,
    (IomcContract.SEND, "sendCommit"): SendCommitArgs,
    (IomcContract.SEND, "sendRevert"): SendRevertArgs,
    (IomcContract.RECEIVE, "receiveInit"): ReceiveInitArgs,
    (IomcContract.RECEIVE, "receiveCommit"): ReceiveCommitArgs,
    (IomcContract.RECEIVE, "fund"): FundArgs,
}

# Phase 4 of the transfer protocol names the claim "receiveClaim".
METHOD_ALIASES = {"receiveClaim": "receiveCommit"}


class IomcCall(ProtocolModel):
    contract: IomcContract
    method: str
    args: IomcArgs

    @model_validator(mode="after")
    def _method_matches_args(self) -> "IomcCall":
        method = METHOD_ALIASES.get(self.method, self.method)
        expected = IOMC_METHODS.get((self.contract, method))
        if expected is None:
            raise ValueError(f"Unknown IOMC method {self.contract.value}.{self.method}")
        if not isinstance(self.args, expected):
            raise ValueError(f"{self.method} expects {expected.__name__}")
        return self

    @property
    def canonical_method(self) -> str:
        return METHOD_ALIASES.get(self.method, self.method)


class Register(ProtocolModel):
    """System call: open an account for ``pk``."""
    pk: PublicKey


class Issue(ProtocolModel):
    """System call: mint new tokens to ``beneficiary``."""
    beneficiary: Digest
    amount: Amount


Call = Union[Transfer, IomcCall, Register, Issue]


class MicroTransaction(ProtocolModel):
    sender_pk: PublicKey
    nonce: Ordinal
    call: Call
    value: Amount = 0
    signature: Optional[Signature] = None

    @property
    def tx_hash(self) -> bytes:
        return hash_bytes(self.encode())


# --- events and receipts -----------------------------------------------------

class Transferred(ProtocolModel):
    name: ClassVar[str] = "transferred"
    from_address: Digest
    to_address: Digest
    amount: Amount


class SendInitialized(ProtocolModel):
    name: ClassVar[str] = "sendInitialized"
    transfer_id: Ordinal
    timelock: Ordinal
    ticket: AccessTicket


class SendCommitted(ProtocolModel):
    name: ClassVar[str] = "sendCommitted"
    transfer_id: Ordinal
    ext_transfer_id: Ordinal
    receiver: PublicKey
    receiver_ipsc: str
    amount: Amount


class SendReverted(ProtocolModel):
    name: ClassVar[str] = "sendReverted"
    transfer_id: Ordinal


class ReceiveInitialized(ProtocolModel):
    name: ClassVar[str] = "receiveInitialized"
    transfer_id: Ordinal
    ticket: AccessTicket


class ReceiveCommitted(ProtocolModel):
    name: ClassVar[str] = "receiveCommited"
    transfer_id: Ordinal


class Funded(ProtocolModel):
    name: ClassVar[str] = "funded"
    amount: Amount


class ClientRegistered(ProtocolModel):
    name: ClassVar[str] = "clientRegistered"
    pk: PublicKey
    address: Digest


class TokensIssued(ProtocolModel):
    name: ClassVar[str] = "tokensIssued"
    beneficiary: Digest
    amount: Amount


class Reverted(ProtocolModel):
    name: ClassVar[str] = "reverted"
    reason: str


Event = Union[
    Transferred, SendInitialized, SendCommitted, SendReverted, ReceiveInitialized,
    ReceiveCommitted, Funded, ClientRegistered, TokensIssued, Reverted,
]


class Receipt(ProtocolModel):
    tx_hash: Digest
    status: Status
    events: Tuple[Event, ...] = ()
    gas: Ordinal = 0

    def event(self, kind: type) -> Optional[Event]:
        """First event of the given class, if any."""
        return next((e for e in self.events if isinstance(e, kind)), None)


class Header(ProtocolModel):
    id: Ordinal
    txs_root: Digest
    rcp_root: Digest
    st_root: Digest


# --- IOMC storage records ----------------------------------------------------

class LockedTransferOut(ProtocolModel):
    sender: PublicKey
    receiver: PublicKey
    receiver_ipsc: str
    amount: Amount = Field(gt=0)
    hashlock: Digest
    timelock: Ordinal
    is_completed: bool = False
    is_reverted: bool = False

    @model_validator(mode="after")
    def _exclusive(self) -> "LockedTransferOut":
        if self.is_completed and self.is_reverted:
            raise ValueError("A transfer cannot be both completed and reverted")
        return self

    @property
    def pending(self) -> bool:
        return not (self.is_completed or self.is_reverted)


class LockedTransferIn(ProtocolModel):
    sender: PublicKey
    sender_ipsc: str
    receiver: PublicKey
    amount: Amount = Field(gt=0)
    hashlock: Digest
    is_completed: bool = False


# --- partial state -----------------------------------------------------------

ACCOUNT_PREFIX = b"acct/"
OUT_PREFIX = b"iomc/S/"
IN_PREFIX = b"iomc/R/"


class StateEntry(ProtocolModel):
    key: bytes
    value: Optional[bytes] = None


class PartialState(ProtocolModel):
    """Touched state entries with proofs tying them to ``root``."""
    root: Digest
    entries: Tuple[StateEntry, ...] = ()
    witness: Tuple[StateProof, ...] = ()

    def values(self) -> Dict[bytes, Optional[bytes]]:
        return {entry.key: entry.value for entry in self.entries}

    @property
    def accounts(self) -> Dict[bytes, Account]:
        return {
            entry.key[len(ACCOUNT_PREFIX):]: canonical_decode(entry.value, Account)
            for entry in self.entries
            if entry.key.startswith(ACCOUNT_PREFIX) and entry.value is not None
        }

    @property
    def contract_storage(self) -> Dict[bytes, Optional[bytes]]:
        return {
            entry.key: entry.value
            for entry in self.entries
            if entry.key.startswith((OUT_PREFIX, IN_PREFIX))
        }


# --- evidence ----------------------------------------------------------------

class TransferEvidence(ProtocolModel):
    """A receipt, its header and the proofs placing both under ``lroot``."""
    mu_tx: MicroTransaction
    receipt: Receipt
    hdr: Header
    mem_proof: MembershipProof
    rcp_proof: MerkleProof
    lroot: Commitment


class ForeignEvidence(ProtocolModel):
    """TransferEvidence from another instance, linked to its IPSC snapshot."""
    ipsc: str
    evidence: TransferEvidence
    inc_proof: IncrementalProof
    lroot_pb: Commitment


SendCommitArgs.model_rebuild()
ReceiveCommitArgs.model_rebuild()
IomcCall.model_rebuild()
MicroTransaction.model_rebuild()
TransferEvidence.model_rebuild()
ForeignEvidence.model_rebuild()
