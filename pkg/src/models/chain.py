"""Public-chain transactions, receipts and contract state types."""

from decimal import Decimal
from enum import Enum
from fractions import Fraction
from typing import Dict, Optional, Tuple, Union

from pydantic import Field

from .base import Amount, Digest, Ordinal, ProtocolModel
from .crypto import PublicKey, SealedBox, Signature
from .enclave import CensStatus, EnclaveKeys, VersionTransitionPair
from .ledger import AccessTicket
from ..utils.encoding import canonical_encode
from ..utils.crypto import hash_bytes


DEPLOY_TARGET = ""


class Rate(ProtocolModel):
    """Non-negative rational, e.g. a yearly inflation rate."""
    num: Ordinal
    den: Ordinal = Field(gt=0)

    @classmethod
    def parse(cls, text: str) -> "Rate":
        text = text.strip()
        if text.endswith("%"):
            value = Fraction(Decimal(text[:-1])) / 100
        else:
            value = Fraction(Decimal(text)) if "/" not in text else Fraction(text)
        if value < 0:
            raise ValueError("Rate must be non-negative")
        return cls(num=value.numerator, den=value.denominator)

    def as_fraction(self) -> Fraction:
        return Fraction(self.num, self.den)


class ChainTxStatus(str, Enum):
    PENDING = "PENDING"
    OK = "OK"
    REVERTED = "REVERTED"
    REJECTED = "REJECTED"


# --- call arguments ----------------------------------------------------------

class IpscInitArgs(ProtocolModel):
    keys: EnclaveKeys
    t_i0: Amount
    i_r: Rate
    issue_authority: bool


class SnapshotArgs(ProtocolModel):
    pair: VersionTransitionPair


class CensTxArgs(ProtocolModel):
    etx: SealedBox
    ticket: AccessTicket


class CensQryArgs(ProtocolModel):
    equery: SealedBox
    ticket: AccessTicket


class ResolveCensTxArgs(ProtocolModel):
    index: Ordinal
    status: CensStatus
    signature: Signature


class ResolveCensQryArgs(ProtocolModel):
    index: Ordinal
    status: CensStatus
    edata: SealedBox
    signature: Signature


class ReplaceEncArgs(ProtocolModel):
    keys: EnclaveKeys
    pair: VersionTransitionPair
    operator_signature: Optional[Signature] = None


class ImscDInitArgs(ProtocolModel):
    ipscs: Tuple[str, ...]
    operators: Tuple[PublicKey, ...]


class NewJoinArgs(ProtocolModel):
    ipsc: str


class ApproveArgs(ProtocolModel):
    my_ipsc: str
    target_ipsc: str


class ImscCInitArgs(ProtocolModel):
    authority_ipsc: str


class ImscAddArgs(ProtocolModel):
    ipsc: str
    operator: PublicKey


class ImscDelArgs(ProtocolModel):
    ipsc: str


ChainArgs = Union[
    IpscInitArgs, SnapshotArgs, CensTxArgs, CensQryArgs, ResolveCensTxArgs, ResolveCensQryArgs,
    ReplaceEncArgs, ImscDInitArgs, NewJoinArgs, ApproveArgs, ImscCInitArgs, ImscAddArgs,
    ImscDelArgs,
]


class ChainTx(ProtocolModel):
    sender_pk: PublicKey
    nonce: Ordinal
    target: str
    method: str
    args: ChainArgs
    signature: Optional[Signature] = None

    @property
    def tx_hash(self) -> bytes:
        return hash_bytes(self.encode())


class ChainReceipt(ProtocolModel):
    tx_hash: Digest
    status: ChainTxStatus
    height: Ordinal = 0
    contract: str = ""
    method: str = ""
    reason: str = ""
    result: Optional[Union[bool, int, str]] = None


class Block(ProtocolModel):
    height: Ordinal
    timestamp: Ordinal
    tx_hashes: Tuple[Digest, ...] = ()


# --- contract state ----------------------------------------------------------

class CensInfo(ProtocolModel):
    etx: Optional[SealedBox] = None
    equery: Optional[SealedBox] = None
    status: Optional[CensStatus] = None
    edata: Optional[SealedBox] = None
    requester: PublicKey
    submitted_at: Ordinal

    @property
    def resolved(self) -> bool:
        return self.status is not None


class IpscState(ProtocolModel):
    pk_tee_history: Tuple[PublicKey, ...]
    pk_pb_history: Tuple[PublicKey, ...]
    sealing_pk_history: Tuple[bytes, ...]
    pk_operator: PublicKey
    lroot_pb: Optional[Digest] = None
    cens_reqs: Tuple[CensInfo, ...] = ()
    t_s: Amount
    t_i: Amount
    t_i0: Amount
    issue_authority: bool
    i_r: Rate
    created_at: Ordinal
    accepted_snapshots: Ordinal = 0

    @property
    def keys(self) -> EnclaveKeys:
        return EnclaveKeys(
            pk_tee=self.pk_tee_history[-1],
            pk_pb=self.pk_pb_history[-1],
            sealing_pk=self.sealing_pk_history[-1],
        )


class InstanceInfo(ProtocolModel):
    operator: PublicKey
    is_approved: bool = False
    approvals: Tuple[str, ...] = ()


class ImscDState(ProtocolModel):
    instances: Dict[str, InstanceInfo] = {}


class ImscCState(ProtocolModel):
    authority_ipsc: str
    authority_operator: PublicKey
    instances: Dict[str, PublicKey] = {}


# --- signed statements checked by IPSC ---------------------------------------

def cens_tx_statement(etx: SealedBox, status: CensStatus) -> bytes:
    return canonical_encode(["censTx", hash_bytes(etx.encode()), status])


def cens_qry_statement(equery: SealedBox, status: CensStatus, edata: SealedBox) -> bytes:
    return canonical_encode(["censQry", hash_bytes(equery.encode()), status, hash_bytes(edata.encode())])


def replace_statement(keys: EnclaveKeys, pair: VersionTransitionPair) -> bytes:
    return canonical_encode(["replaceEnc", keys, pair])
