# Protocol data models and workflow state
from .base import ProtocolModel, Digest, Amount, Ordinal
from .crypto import Scheme, PublicKey, Signature, AttestationQuote, SealedBox

__all__ = [
    "ProtocolModel",
    "Digest",
    "Amount",
    "Ordinal",
    "Scheme",
    "PublicKey",
    "Signature",
    "AttestationQuote",
    "SealedBox",
]
