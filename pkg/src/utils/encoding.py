"""
Canonical byte encoding for protocol objects.

Every value that is hashed, signed or sent between roles goes through
``canonical_encode``. The layout is self-describing so that ``canonical_decode``
can rebuild the object from bytes alone:

    None      0x00
    False     0x01
    True      0x02
    uint      0x03 ‖ u64 big-endian
    bytes     0x04 ‖ u32 length ‖ raw
    str       0x05 ‖ u32 length ‖ UTF-8
    list      0x06 ‖ u32 count ‖ items
    map       0x07 ‖ u32 count ‖ (key ‖ value)* sorted by encoded key
    object    0x08 ‖ str type name ‖ u32 field count ‖ field values
              in declaration order

Enum members encode as their value. Models must be registered (see
``register_type``) to be decodable.
"""

import struct
from enum import Enum
from typing import Any, Dict, Iterable, Optional, Tuple, Type

from pydantic import BaseModel


class EncodingError(Exception):
    """Raised when a value cannot be encoded or bytes cannot be decoded."""
    pass


TAG_NONE = 0x00
TAG_FALSE = 0x01
TAG_TRUE = 0x02
TAG_UINT = 0x03
TAG_BYTES = 0x04
TAG_STR = 0x05
TAG_LIST = 0x06
TAG_MAP = 0x07
TAG_OBJECT = 0x08

U64_MAX = (1 << 64) - 1

_U64 = struct.Struct(">Q")
_U32 = struct.Struct(">I")

_REGISTRY: Dict[str, Type[BaseModel]] = {}


def register_type(name: str, cls: Type[BaseModel]) -> None:
    """Register a model class under its wire type name."""
    existing = _REGISTRY.get(name)
    if existing is not None and existing is not cls:
        raise EncodingError(f"Type name '{name}' already registered to {existing.__name__}")
    _REGISTRY[name] = cls


def registered_type(name: str) -> Type[BaseModel]:
    """Look up a registered model class by wire type name."""
    try:
        return _REGISTRY[name]
    except KeyError:
        raise EncodingError(f"Unknown type name '{name}'")


def type_name_of(obj: BaseModel) -> str:
    name = getattr(type(obj), "type_name", None)
    if not name or _REGISTRY.get(name) is not type(obj):
        raise EncodingError(f"Unsupported type: {type(obj).__name__} is not a registered protocol type")
    return name


def _encode_into(value: Any, out: bytearray) -> None:
    if value is None:
        out.append(TAG_NONE)
    elif isinstance(value, bool):
        out.append(TAG_TRUE if value else TAG_FALSE)
    elif isinstance(value, Enum):
        _encode_into(value.value, out)
    elif isinstance(value, int):
        if value < 0 or value > U64_MAX:
            raise EncodingError(f"Integer {value} outside unsigned 64-bit range")
        out.append(TAG_UINT)
        out += _U64.pack(value)
    elif isinstance(value, (bytes, bytearray, memoryview)):
        raw = bytes(value)
        out.append(TAG_BYTES)
        out += _U32.pack(len(raw))
        out += raw
    elif isinstance(value, str):
        raw = value.encode("utf-8")
        out.append(TAG_STR)
        out += _U32.pack(len(raw))
        out += raw
    elif isinstance(value, (list, tuple)):
        out.append(TAG_LIST)
        out += _U32.pack(len(value))
        for item in value:
            _encode_into(item, out)
    elif isinstance(value, dict):
        pairs = sorted((canonical_encode(k), canonical_encode(v)) for k, v in value.items())
        out.append(TAG_MAP)
        out += _U32.pack(len(pairs))
        for key_bytes, value_bytes in pairs:
            out += key_bytes
            out += value_bytes
    elif isinstance(value, BaseModel):
        name = type_name_of(value)
        fields = type(value).model_fields
        out.append(TAG_OBJECT)
        _encode_into(name, out)
        out += _U32.pack(len(fields))
        for field_name in fields:
            _encode_into(getattr(value, field_name), out)
    else:
        raise EncodingError(f"Unsupported type: {type(value).__name__}")


def canonical_encode(value: Any) -> bytes:
    """Encode a protocol value to its canonical bytes."""
    out = bytearray()
    _encode_into(value, out)
    return bytes(out)


def canonical_encode_fields(obj: BaseModel, exclude: Iterable[str] = ()) -> bytes:
    """Encode a model's type name and field values, skipping ``exclude``.

    Used for signing payloads, where the signature field itself is left out.
    """
    skipped = set(exclude)
    values = [type_name_of(obj)]
    values.extend(
        getattr(obj, name) for name in type(obj).model_fields if name not in skipped
    )
    return canonical_encode(values)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        end = self.pos + n
        if end > len(self.data):
            raise EncodingError("Truncated input")
        chunk = self.data[self.pos:end]
        self.pos = end
        return chunk

    def u32(self) -> int:
        return _U32.unpack(self.take(4))[0]

    def value(self) -> Any:
        tag = self.take(1)[0]
        if tag == TAG_NONE:
            return None
        if tag == TAG_FALSE:
            return False
        if tag == TAG_TRUE:
            return True
        if tag == TAG_UINT:
            return _U64.unpack(self.take(8))[0]
        if tag == TAG_BYTES:
            return self.take(self.u32())
        if tag == TAG_STR:
            try:
                return self.take(self.u32()).decode("utf-8")
            except UnicodeDecodeError as e:
                raise EncodingError(f"Invalid UTF-8 string: {e}")
        if tag == TAG_LIST:
            return [self.value() for _ in range(self.u32())]
        if tag == TAG_MAP:
            count = self.u32()
            result = {}
            for _ in range(count):
                key = self.value()
                result[_hashable(key)] = self.value()
            return result
        if tag == TAG_OBJECT:
            name = self.value()
            if not isinstance(name, str):
                raise EncodingError("Object type name must be a string")
            cls = registered_type(name)
            count = self.u32()
            field_names = list(cls.model_fields)
            if count != len(field_names):
                raise EncodingError(
                    f"Field count mismatch for {name}: expected {len(field_names)}, got {count}"
                )
            values = {field: self.value() for field in field_names}
            try:
                return cls.model_validate(values)
            except ValueError as e:
                raise EncodingError(f"Invalid {name}: {e}")
        raise EncodingError(f"Unknown tag 0x{tag:02x}")


def _hashable(value: Any) -> Any:
    if isinstance(value, list):
        return tuple(_hashable(v) for v in value)
    return value


def canonical_decode(data: bytes, expected: Optional[Type[BaseModel]] = None) -> Any:
    """Decode canonical bytes; optionally require a specific model type."""
    reader = _Reader(bytes(data))
    value = reader.value()
    if reader.pos != len(reader.data):
        raise EncodingError("Trailing bytes after value")
    if expected is not None and not isinstance(value, expected):
        raise EncodingError(f"Expected {expected.__name__}, got {type(value).__name__}")
    return value


def frame(payload: bytes, max_bytes: int) -> bytes:
    """Length-prefix a payload for the node transport."""
    if len(payload) > max_bytes:
        raise EncodingError(f"Frame of {len(payload)} bytes exceeds limit {max_bytes}")
    return _U32.pack(len(payload)) + payload


def unframe(data: bytes, max_bytes: int) -> Tuple[bytes, bytes]:
    """Split one length-prefixed frame off ``data``; returns (payload, rest)."""
    if len(data) < 4:
        raise EncodingError("Truncated frame header")
    length = _U32.unpack(data[:4])[0]
    if length > max_bytes:
        raise EncodingError(f"Frame of {length} bytes exceeds limit {max_bytes}")
    if len(data) < 4 + length:
        raise EncodingError("Truncated frame body")
    return data[4:4 + length], data[4 + length:]
