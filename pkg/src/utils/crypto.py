"""
Crypto kernel: hashing, the two signature schemes, sealing and the
simulated attestation platform.

Both signature schemes are Ed25519 under distinct domain-separation tags, so
a signature produced under one scheme never verifies under the other.
Keys are derived from seeds to keep scenarios reproducible.
"""

import hashlib
import os
from dataclasses import dataclass, field
from typing import Optional, Union

from cryptography.exceptions import InvalidSignature, InvalidTag
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)
from cryptography.hazmat.primitives.asymmetric.x25519 import (
    X25519PrivateKey,
    X25519PublicKey,
)
from cryptography.hazmat.primitives.ciphers.aead import ChaCha20Poly1305
from cryptography.hazmat.primitives.kdf.hkdf import HKDF

from ..models.crypto import AttestationQuote, PublicKey, Scheme, SealedBox, Signature
from .encoding import canonical_encode


class CryptoError(Exception):
    """Raised on key misuse, unknown platform keys or undecryptable boxes."""
    pass


Seed = Union[bytes, str, int]

_SIGNATURE_DOMAINS = {
    Scheme.PB: b"cbdc/sig/pb/v1\x00",
    Scheme.TEE: b"cbdc/sig/tee/v1\x00",
}
_KEYGEN_DOMAIN = b"cbdc/keygen/v1\x00"
_SEAL_INFO = b"cbdc/seal/v1\x00"
_RAW = serialization.Encoding.Raw


def hash_bytes(data: bytes) -> bytes:
    """SHA-256 digest of ``data``."""
    return hashlib.sha256(data).digest()


def hash_object(obj) -> bytes:
    """Digest of an object's canonical encoding."""
    return hash_bytes(canonical_encode(obj))


def _seed_bytes(seed: Seed) -> bytes:
    if isinstance(seed, bytes):
        return seed
    if isinstance(seed, int):
        return seed.to_bytes(16, "big", signed=True)
    return seed.encode("utf-8")


def derive_secret(seed: Optional[Seed], *labels: str) -> bytes:
    """32 secret bytes derived from a seed and labels, or fresh entropy."""
    if seed is None:
        return os.urandom(32)
    material = _KEYGEN_DOMAIN + _seed_bytes(seed)
    for label in labels:
        material += b"\x00" + label.encode("utf-8")
    return hash_bytes(material)


@dataclass(frozen=True)
class KeyPair:
    """Signing key pair tagged with its scheme."""
    scheme: Scheme
    public: PublicKey
    _private: Ed25519PrivateKey = field(repr=False, compare=False)


def keygen(scheme: Scheme, seed: Optional[Seed] = None, label: str = "") -> KeyPair:
    """Generate a key pair; the same (scheme, seed, label) gives the same keys."""
    secret = derive_secret(seed, scheme.value, label)
    private = Ed25519PrivateKey.from_private_bytes(secret)
    raw = private.public_key().public_bytes(_RAW, serialization.PublicFormat.Raw)
    return KeyPair(scheme=scheme, public=PublicKey(scheme=scheme, key=raw), _private=private)


def sign(keypair: KeyPair, message: bytes, scheme: Optional[Scheme] = None) -> Signature:
    """Sign ``message`` under the key pair's scheme domain."""
    if scheme is not None and scheme != keypair.scheme:
        raise CryptoError(f"Scheme mismatch: key is {keypair.scheme.value}, requested {scheme.value}")
    value = keypair._private.sign(_SIGNATURE_DOMAINS[keypair.scheme] + message)
    return Signature(scheme=keypair.scheme, value=value)


def verify(public_key: PublicKey, message: bytes, signature: Optional[Signature]) -> bool:
    """Check a signature; schemes must match on key and signature."""
    if signature is None or signature.scheme != public_key.scheme:
        return False
    try:
        Ed25519PublicKey.from_public_bytes(public_key.key).verify(
            signature.value, _SIGNATURE_DOMAINS[public_key.scheme] + message
        )
        return True
    except (InvalidSignature, ValueError):
        return False


# --- sealing -----------------------------------------------------------------

@dataclass(frozen=True)
class SealingKeyPair:
    """X25519 key pair used to receive sealed payloads."""
    public: bytes
    _private: X25519PrivateKey = field(repr=False, compare=False)


def sealing_keygen(seed: Optional[Seed] = None, label: str = "") -> SealingKeyPair:
    private = X25519PrivateKey.from_private_bytes(derive_secret(seed, "seal", label))
    public = private.public_key().public_bytes(_RAW, serialization.PublicFormat.Raw)
    return SealingKeyPair(public=public, _private=private)


def _box_key(shared: bytes, ephemeral_pk: bytes, recipient_pk: bytes) -> bytes:
    return HKDF(
        algorithm=hashes.SHA256(),
        length=32,
        salt=None,
        info=_SEAL_INFO + ephemeral_pk + recipient_pk,
    ).derive(shared)


def seal(recipient_public: bytes, plaintext: bytes, ephemeral_seed: Optional[Seed] = None) -> SealedBox:
    """Encrypt ``plaintext`` to an X25519 public key with an ephemeral sender key."""
    ephemeral = X25519PrivateKey.from_private_bytes(derive_secret(ephemeral_seed, "ephemeral"))
    ephemeral_pk = ephemeral.public_key().public_bytes(_RAW, serialization.PublicFormat.Raw)
    try:
        shared = ephemeral.exchange(X25519PublicKey.from_public_bytes(recipient_public))
    except ValueError as e:
        raise CryptoError(f"Invalid recipient key: {e}")
    key = _box_key(shared, ephemeral_pk, recipient_public)
    nonce = hash_bytes(ephemeral_pk + recipient_public)[:12]
    ciphertext = ChaCha20Poly1305(key).encrypt(nonce, plaintext, None)
    return SealedBox(ephemeral_pk=ephemeral_pk, nonce=nonce, ciphertext=ciphertext)


def open_sealed(keypair: SealingKeyPair, box: SealedBox) -> bytes:
    """Decrypt a sealed box addressed to ``keypair``."""
    try:
        shared = keypair._private.exchange(X25519PublicKey.from_public_bytes(box.ephemeral_pk))
        key = _box_key(shared, box.ephemeral_pk, keypair.public)
        return ChaCha20Poly1305(key).decrypt(box.nonce, box.ciphertext, None)
    except (InvalidTag, ValueError) as e:
        raise CryptoError(f"Cannot open sealed box: {e}")


# --- simulated attestation --------------------------------------------------

PLATFORM_SEED = b"cbdc-simulated-attestation-platform"

_platform: Optional[KeyPair] = keygen(Scheme.TEE, PLATFORM_SEED, "platform")


def install_platform_key(keypair: Optional[KeyPair]) -> None:
    """Install (or with None, remove) the simulated platform key."""
    global _platform
    _platform = keypair


def platform_public_key() -> PublicKey:
    if _platform is None:
        raise CryptoError("No simulated platform key installed")
    return _platform.public


def _quote_payload(measurement: bytes, enclave_pk: PublicKey, report_data: bytes) -> bytes:
    return canonical_encode(["quote", measurement, enclave_pk, report_data])


def attest(measurement: bytes, enclave_pk: PublicKey, report_data: bytes = b"") -> AttestationQuote:
    """Produce a platform-signed quote over the enclave measurement and key."""
    if _platform is None:
        raise CryptoError("No simulated platform key installed")
    signature = sign(_platform, _quote_payload(measurement, enclave_pk, report_data))
    return AttestationQuote(
        measurement=measurement,
        enclave_pk=enclave_pk,
        report_data=report_data,
        platform_pk=_platform.public,
        platform_sig=signature,
    )


def verify_quote(quote: AttestationQuote, expected_measurement: bytes) -> bool:
    """Check a quote against the installed platform key and a measurement."""
    if _platform is None:
        raise CryptoError("No simulated platform key installed")
    if quote.platform_pk != _platform.public:
        raise CryptoError(f"Unknown platform key {quote.platform_pk.short()}")
    if quote.measurement != expected_measurement:
        return False
    payload = _quote_payload(quote.measurement, quote.enclave_pk, quote.report_data)
    return verify(quote.platform_pk, payload, quote.platform_sig)
