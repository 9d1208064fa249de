from typing import Annotated, Any, ClassVar, Tuple

from pydantic import BaseModel, ConfigDict, Field

from ..utils.encoding import (
    canonical_decode,
    canonical_encode,
    canonical_encode_fields,
    register_type,
)


Digest = Annotated[bytes, Field(min_length=32, max_length=32)]
Amount = Annotated[int, Field(ge=0, lt=1 << 64)]
Ordinal = Annotated[int, Field(ge=0, lt=1 << 64)]


class ProtocolModel(BaseModel):
    """
    Base class for every value that is hashed, signed or exchanged.

    Subclasses are frozen and registered under ``type_name`` (defaulting to
    the class name) so the canonical codec can decode them.
    """

    model_config = ConfigDict(frozen=True, extra="forbid", ser_json_bytes="hex", val_json_bytes="hex")

    type_name: ClassVar[str] = ""

    @classmethod
    def __pydantic_init_subclass__(cls, **kwargs: Any) -> None:
        super().__pydantic_init_subclass__(**kwargs)
        if "type_name" not in cls.__dict__ or not cls.__dict__["type_name"]:
            cls.type_name = cls.__name__
        register_type(cls.type_name, cls)

    def encode(self) -> bytes:
        """Canonical bytes of this object."""
        return canonical_encode(self)

    def signing_payload(self, exclude: Tuple[str, ...] = ("signature",)) -> bytes:
        """Canonical bytes of every field except the signature."""
        return canonical_encode_fields(self, exclude=exclude)

    @classmethod
    def decode(cls, data: bytes) -> "ProtocolModel":
        """Decode canonical bytes into an instance of this class."""
        return canonical_decode(data, expected=cls)
