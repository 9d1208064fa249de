import pytest

from src.models.crypto import Scheme
from src.utils.crypto import (
    CryptoError,
    attest,
    derive_secret,
    hash_bytes,
    install_platform_key,
    keygen,
    open_sealed,
    platform_public_key,
    seal,
    sealing_keygen,
    sign,
    verify,
    verify_quote,
)

MEASUREMENT = hash_bytes(b"enclave program")


class TestHashing:
    """Test hashing and secret derivation."""

    def test_hash_is_sha256_sized(self):
        """Digests are 32 bytes and deterministic."""
        assert len(hash_bytes(b"x")) == 32
        assert hash_bytes(b"x") == hash_bytes(b"x")
        assert hash_bytes(b"x") != hash_bytes(b"y")

    def test_no_collisions_over_sampled_inputs(self):
        """Ten thousand distinct inputs give ten thousand distinct digests."""
        digests = {hash_bytes(i.to_bytes(4, "big")) for i in range(10_000)}
        assert len(digests) == 10_000

    def test_derive_secret_depends_on_every_label(self):
        """Seeded secrets are reproducible and label-separated."""
        assert derive_secret(7, "a", "b") == derive_secret(7, "a", "b")
        assert derive_secret(7, "a", "b") != derive_secret(7, "a", "c")
        assert derive_secret(7, "a") != derive_secret(8, "a")

    def test_unseeded_secrets_differ(self):
        """Without a seed fresh entropy is used."""
        assert derive_secret(None) != derive_secret(None)


class TestSignatures:
    """Test the two signature schemes."""

    def test_sign_and_verify(self):
        """A signature verifies under its own key and message only."""
        pair = keygen(Scheme.PB, 7, "alice")
        signature = sign(pair, b"message")

        assert verify(pair.public, b"message", signature)
        assert not verify(pair.public, b"massage", signature)
        assert not verify(keygen(Scheme.PB, 7, "bob").public, b"message", signature)

    def test_keygen_is_deterministic(self):
        """Same scheme, seed and label give the same key."""
        assert keygen(Scheme.TEE, 1, "e").public == keygen(Scheme.TEE, 1, "e").public
        assert keygen(Scheme.TEE, 1, "e").public != keygen(Scheme.PB, 1, "e").public

    def test_schemes_are_domain_separated(self):
        """A TEE signature never verifies as a PB signature over the same key bytes."""
        tee = keygen(Scheme.TEE, 3, "k")
        signature = sign(tee, b"payload")
        as_pb = tee.public.model_copy(update={"scheme": Scheme.PB})
        forged = signature.model_copy(update={"scheme": Scheme.PB})

        assert verify(tee.public, b"payload", signature)
        assert not verify(as_pb, b"payload", forged)

    def test_scheme_mismatch_on_sign_raises(self):
        """Requesting another scheme than the key's is an error."""
        with pytest.raises(CryptoError):
            sign(keygen(Scheme.PB, 1), b"m", Scheme.TEE)

    def test_missing_signature_does_not_verify(self):
        """None is never a valid signature."""
        assert not verify(keygen(Scheme.PB, 1).public, b"m", None)

    def test_single_bit_flip_breaks_signature(self):
        """Flipping any bit of the signature value invalidates it."""
        pair = keygen(Scheme.PB, 5, "x")
        signature = sign(pair, b"m")
        for position in (0, 31, 63):
            value = bytearray(signature.value)
            value[position] ^= 1
            tampered = signature.model_copy(update={"value": bytes(value)})
            assert not verify(pair.public, b"m", tampered)


class TestSealing:
    """Test sealed boxes."""

    def test_seal_round_trip(self):
        """Only the recipient opens a sealed box."""
        recipient = sealing_keygen(7, "enclave")
        box = seal(recipient.public, b"secret query", ephemeral_seed="q1")

        assert open_sealed(recipient, box) == b"secret query"
        assert b"secret query" not in box.ciphertext

    def test_wrong_recipient_cannot_open(self):
        """Another key fails with CryptoError."""
        box = seal(sealing_keygen(7, "a").public, b"data", ephemeral_seed="s")

        with pytest.raises(CryptoError):
            open_sealed(sealing_keygen(7, "b"), box)

    def test_tampered_ciphertext_is_rejected(self):
        """Authentication catches a flipped ciphertext bit."""
        recipient = sealing_keygen(7, "a")
        box = seal(recipient.public, b"data", ephemeral_seed="s")
        ciphertext = bytearray(box.ciphertext)
        ciphertext[0] ^= 1

        with pytest.raises(CryptoError):
            open_sealed(recipient, box.model_copy(update={"ciphertext": bytes(ciphertext)}))


class TestAttestation:
    """Test the simulated attestation platform."""

    def test_quote_verifies_against_measurement(self):
        """A genuine quote verifies for its measurement only."""
        enclave = keygen(Scheme.TEE, 7, "enclave")
        quote = attest(MEASUREMENT, enclave.public, b"report")

        assert verify_quote(quote, MEASUREMENT)
        assert not verify_quote(quote, hash_bytes(b"other program"))

    def test_tampered_quote_fails(self):
        """Changing the enclave key breaks the platform signature."""
        quote = attest(MEASUREMENT, keygen(Scheme.TEE, 7, "enclave").public)
        swapped = quote.model_copy(update={"enclave_pk": keygen(Scheme.TEE, 7, "evil").public})

        assert not verify_quote(swapped, MEASUREMENT)

    def test_unknown_platform_key_raises(self):
        """Quotes from another platform are refused outright."""
        original = keygen(Scheme.TEE, b"cbdc-simulated-attestation-platform", "platform")
        quote = attest(MEASUREMENT, keygen(Scheme.TEE, 7, "enclave").public)
        try:
            install_platform_key(keygen(Scheme.TEE, 99, "other-platform"))
            with pytest.raises(CryptoError):
                verify_quote(quote, MEASUREMENT)
        finally:
            install_platform_key(original)

        assert platform_public_key() == original.public

    def test_missing_platform_raises(self):
        """Without a platform key nothing can be attested."""
        original = keygen(Scheme.TEE, b"cbdc-simulated-attestation-platform", "platform")
        try:
            install_platform_key(None)
            with pytest.raises(CryptoError):
                attest(MEASUREMENT, original.public)
        finally:
            install_platform_key(original)
