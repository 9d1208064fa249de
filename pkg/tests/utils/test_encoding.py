import pytest

from src.models.crypto import PublicKey, Scheme
from src.utils.encoding import (
    EncodingError,
    TAG_BYTES,
    TAG_MAP,
    TAG_UINT,
    canonical_decode,
    canonical_encode,
    frame,
    unframe,
)


class TestCanonicalEncoding:
    """Test the canonical codec."""

    def test_scalar_layouts(self):
        """Integers are tagged u64 big-endian, bytes are length-prefixed."""
        assert canonical_encode(5) == bytes([TAG_UINT]) + (5).to_bytes(8, "big")
        assert canonical_encode(b"ab") == bytes([TAG_BYTES]) + (2).to_bytes(4, "big") + b"ab"
        assert canonical_encode(True) != canonical_encode(1)

    def test_map_order_is_independent_of_insertion(self):
        """Maps encode sorted by encoded key."""
        first = canonical_encode({"b": 1, "a": 2})
        second = canonical_encode({"a": 2, "b": 1})

        assert first == second
        assert first[0] == TAG_MAP

    def test_values_decode_back(self):
        """Nested lists, maps and strings survive a round trip."""
        value = [None, True, 7, b"\x00\x01", "text", {"k": [1, 2]}]
        assert canonical_decode(canonical_encode(value)) == value

    def test_models_decode_to_their_type(self):
        """Registered protocol models come back as themselves."""
        key = PublicKey(scheme=Scheme.PB, key=b"\x11" * 32)
        decoded = PublicKey.decode(key.encode())

        assert decoded == key
        assert isinstance(decoded, PublicKey)

    def test_negative_and_oversized_integers_are_refused(self):
        """Only unsigned 64-bit integers encode."""
        with pytest.raises(EncodingError):
            canonical_encode(-1)
        with pytest.raises(EncodingError):
            canonical_encode(1 << 64)

    def test_unsupported_types_are_refused(self):
        """Floats have no canonical form."""
        with pytest.raises(EncodingError):
            canonical_encode(1.5)

    def test_trailing_and_truncated_input(self):
        """Decoding insists on exactly one value."""
        data = canonical_encode([1, 2])
        with pytest.raises(EncodingError):
            canonical_decode(data + b"\x00")
        with pytest.raises(EncodingError):
            canonical_decode(data[:-1])

    def test_expected_type_is_enforced(self):
        """Decoding as a model rejects other values."""
        with pytest.raises(EncodingError):
            PublicKey.decode(canonical_encode([1]))


class TestFraming:
    """Test length-prefixed frames."""

    def test_frame_and_unframe(self):
        """A frame splits off cleanly from following data."""
        data = frame(b"hello", 16) + b"rest"
        payload, rest = unframe(data, 16)

        assert payload == b"hello"
        assert rest == b"rest"

    def test_oversized_frames(self):
        """Both sides enforce the size limit."""
        with pytest.raises(EncodingError):
            frame(b"x" * 17, 16)
        with pytest.raises(EncodingError):
            unframe((100).to_bytes(4, "big") + b"x" * 100, 16)

    def test_truncated_frames(self):
        """Short headers and bodies are rejected."""
        with pytest.raises(EncodingError):
            unframe(b"\x00\x00", 16)
        with pytest.raises(EncodingError):
            unframe((5).to_bytes(4, "big") + b"abc", 16)
