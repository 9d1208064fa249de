from enum import Enum
from typing import Annotated

from pydantic import Field

from .base import Digest, ProtocolModel


class Scheme(str, Enum):
    """Signature schemes: PB for public-chain verification, TEE for attestation."""
    PB = "pb"
    TEE = "tee"


class PublicKey(ProtocolModel):
    scheme: Scheme
    key: Annotated[bytes, Field(min_length=32, max_length=32)]

    def short(self) -> str:
        return f"{self.scheme.value}:{self.key[:4].hex()}"


class Signature(ProtocolModel):
    scheme: Scheme
    value: Annotated[bytes, Field(min_length=64, max_length=64)]


class AttestationQuote(ProtocolModel):
    """Platform-signed statement binding an enclave measurement to its keys."""
    measurement: Digest
    enclave_pk: PublicKey
    report_data: bytes
    platform_pk: PublicKey
    platform_sig: Signature


class SealedBox(ProtocolModel):
    """X25519 + ChaCha20-Poly1305 ciphertext addressed to one recipient."""
    ephemeral_pk: Annotated[bytes, Field(min_length=32, max_length=32)]
    nonce: Annotated[bytes, Field(min_length=12, max_length=12)]
    ciphertext: bytes
