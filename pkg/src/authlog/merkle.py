"""
Merkle tree over an ordered list of byte strings.

Leaves and inner nodes carry distinct one-byte tags. Odd-width levels
duplicate their last node.
"""

from typing import List, Sequence

from ..models.proofs import MerkleProof, MerkleSibling, Side
from ..utils.crypto import hash_bytes


class ProofError(Exception):
    """Raised for malformed proofs or out-of-range requests."""
    pass


LEAF_TAG = b"\x00"
NODE_TAG = b"\x01"

# Root used for headers of batches without accepted transactions.
EMPTY_ROOT = hash_bytes(b"cbdc/merkle/empty-batch")


def leaf_hash(data: bytes) -> bytes:
    return hash_bytes(LEAF_TAG + data)


def node_hash(left: bytes, right: bytes) -> bytes:
    return hash_bytes(NODE_TAG + left + right)


def _levels(items: Sequence[bytes]) -> List[List[bytes]]:
    if not items:
        raise ProofError("Merkle tree needs at least one item")
    level = [leaf_hash(item) for item in items]
    levels = [level]
    while len(level) > 1:
        if len(level) % 2:
            level = level + [level[-1]]
        level = [node_hash(level[i], level[i + 1]) for i in range(0, len(level), 2)]
        levels.append(level)
    return levels


def mk_root(items: Sequence[bytes]) -> bytes:
    return _levels(items)[-1][0]


def mk_root_or_empty(items: Sequence[bytes]) -> bytes:
    """mk_root, or EMPTY_ROOT for an empty list."""
    return mk_root(items) if items else EMPTY_ROOT


def mk_proof(index: int, items: Sequence[bytes]) -> MerkleProof:
    if index < 0 or index >= len(items):
        raise ProofError(f"Leaf index {index} out of range for {len(items)} items")
    siblings = []
    position = index
    for level in _levels(items)[:-1]:
        sibling = position ^ 1
        digest = level[sibling] if sibling < len(level) else level[position]
        side = Side.LEFT if position & 1 else Side.RIGHT
        siblings.append(MerkleSibling(digest=digest, side=side))
        position >>= 1
    return MerkleProof(leaf_index=index, siblings=tuple(siblings))


def mk_verify(proof: MerkleProof, item: bytes, root: bytes) -> bool:
    current = leaf_hash(item)
    position = proof.leaf_index
    for sibling in proof.siblings:
        expected = Side.LEFT if position & 1 else Side.RIGHT
        if sibling.side != expected:
            return False
        if sibling.side == Side.LEFT:
            current = node_hash(sibling.digest, current)
        else:
            current = node_hash(current, sibling.digest)
        position >>= 1
    return position == 0 and current == root
