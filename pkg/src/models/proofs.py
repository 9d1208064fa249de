from enum import Enum
from typing import Tuple

from pydantic import model_validator

from .base import Digest, Ordinal, ProtocolModel


class Side(str, Enum):
    LEFT = "L"
    RIGHT = "R"


class MerkleSibling(ProtocolModel):
    digest: Digest
    side: Side


class MerkleProof(ProtocolModel):
    """Inclusion of one item in a Merkle tree over a list (0-based index)."""
    leaf_index: Ordinal
    siblings: Tuple[MerkleSibling, ...] = ()


class Commitment(ProtocolModel):
    """History-tree root at a version (number of appended records)."""
    version: Ordinal
    root: Digest


class IncrementalProof(ProtocolModel):
    """Prefix consistency between two versions of one history tree."""
    from_version: Ordinal
    to_version: Ordinal
    from_root: Digest
    node_hashes: Tuple[Digest, ...] = ()

    @model_validator(mode="after")
    def _ordered(self) -> "IncrementalProof":
        if self.from_version < 1 or self.from_version > self.to_version:
            raise ValueError("from_version must satisfy 1 <= from_version <= to_version")
        return self


class MembershipProof(ProtocolModel):
    """Audit path placing record ``index`` (1-based) in version ``version``."""
    index: Ordinal
    version: Ordinal
    path: Tuple[Digest, ...] = ()

    @model_validator(mode="after")
    def _ordered(self) -> "MembershipProof":
        if self.index < 1 or self.index > self.version:
            raise ValueError("index must satisfy 1 <= index <= version")
        return self


class FrozenHashCache(ProtocolModel):
    """Completed-subtree hashes from which the current history root reduces."""
    entries: Tuple[Digest, ...] = ()
    count: Ordinal = 0


class StateProof(ProtocolModel):
    """Sparse-tree path for one key; ``bitmap`` bit d set means a non-default sibling at level d."""
    key: bytes
    bitmap: Ordinal
    siblings: Tuple[Digest, ...] = ()
