"""
Sparse Merkle tree committing to the ledger's key/value state.

Keys are placed by the first 64 bits of their hash. The operator keeps the
full tree; the enclave only sees touched entries plus their proofs and
recomputes roots from those (``compute_root``).
"""

from typing import Dict, Iterable, List, Mapping, Optional, Tuple

from ..models.proofs import StateProof
from ..utils.crypto import hash_bytes
from .merkle import ProofError, node_hash

DEPTH = 64

_STATE_LEAF_TAG = b"\x02"


def _empty_hashes() -> List[bytes]:
    empties = [hash_bytes(b"cbdc/state/empty-leaf")]
    for _ in range(DEPTH):
        empties.append(node_hash(empties[-1], empties[-1]))
    return empties


EMPTY = _empty_hashes()
EMPTY_STATE_ROOT = EMPTY[DEPTH]


def key_path(key: bytes) -> int:
    return int.from_bytes(hash_bytes(key)[:8], "big")


def state_leaf_hash(key: bytes, value: Optional[bytes]) -> bytes:
    if value is None:
        return EMPTY[0]
    return hash_bytes(_STATE_LEAF_TAG + len(key).to_bytes(4, "big") + key + value)


def _expand(proof: StateProof) -> List[bytes]:
    siblings = []
    remaining = iter(proof.siblings)
    for level in range(DEPTH):
        if proof.bitmap >> level & 1:
            try:
                siblings.append(next(remaining))
            except StopIteration:
                raise ProofError("State proof has fewer siblings than its bitmap")
        else:
            siblings.append(EMPTY[level])
    if next(remaining, None) is not None:
        raise ProofError("State proof has more siblings than its bitmap")
    return siblings


def _compress(key: bytes, siblings: List[bytes]) -> StateProof:
    bitmap = 0
    kept = []
    for level, digest in enumerate(siblings):
        if digest != EMPTY[level]:
            bitmap |= 1 << level
            kept.append(digest)
    return StateProof(key=key, bitmap=bitmap, siblings=tuple(kept))


def compute_root(
    values: Mapping[bytes, Optional[bytes]],
    proofs: Iterable[StateProof],
) -> Tuple[bytes, Dict[bytes, StateProof]]:
    """
    Root over the given key values, using proofs for everything else.

    Returns the root and a fresh proof per key against that root. Raises
    ProofError when proofs are malformed, missing or two keys collide.
    """
    known: Dict[Tuple[int, int], bytes] = {}
    paths: Dict[bytes, int] = {}
    occupied = set()
    for proof in proofs:
        if proof.key in paths:
            raise ProofError("Duplicate proof for one state key")
        path = key_path(proof.key)
        if path in occupied:
            raise ProofError("Two state keys share a tree path")
        paths[proof.key] = path
        occupied.add(path)
        for level, digest in enumerate(_expand(proof)):
            known.setdefault((level, (path >> level) ^ 1), digest)
    if set(values) != set(paths):
        raise ProofError("Every state value needs exactly one proof")

    current: Dict[Tuple[int, int], bytes] = {}
    for key, path in paths.items():
        current[(0, path)] = state_leaf_hash(key, values[key])
    frontier = set(paths.values())
    for level in range(DEPTH):
        parents = set()
        for index in frontier:
            pair = []
            for child in (index & ~1, index | 1):
                digest = current.get((level, child), known.get((level, child)))
                if digest is None:
                    raise ProofError(f"Missing sibling at level {level}")
                pair.append(digest)
            current[(level + 1, index >> 1)] = node_hash(pair[0], pair[1])
            parents.add(index >> 1)
        frontier = parents
    root = current[(DEPTH, 0)] if paths else EMPTY_STATE_ROOT

    fresh = {}
    for key, path in paths.items():
        siblings = []
        for level in range(DEPTH):
            sibling = (level, (path >> level) ^ 1)
            siblings.append(current.get(sibling, known.get(sibling)))
        fresh[key] = _compress(key, siblings)
    return root, fresh


def verify_state_proofs(
    values: Mapping[bytes, Optional[bytes]],
    proofs: Iterable[StateProof],
    root: bytes,
) -> bool:
    """True iff every (key, value) is committed under ``root``."""
    try:
        computed, _ = compute_root(values, proofs)
    except ProofError:
        return False
    return computed == root


class SparseStateTree:
    """Full state held by the operator."""

    def __init__(self, entries: Optional[Mapping[bytes, bytes]] = None):
        self._values: Dict[bytes, bytes] = {}
        self._nodes: Dict[Tuple[int, int], bytes] = {}
        self._paths: Dict[int, bytes] = {}
        for key, value in (entries or {}).items():
            self.set(key, value)

    @property
    def root(self) -> bytes:
        return self._node(DEPTH, 0)

    def _node(self, level: int, index: int) -> bytes:
        return self._nodes.get((level, index), EMPTY[level])

    def get(self, key: bytes) -> Optional[bytes]:
        return self._values.get(key)

    def items(self) -> Iterable[Tuple[bytes, bytes]]:
        return self._values.items()

    def set(self, key: bytes, value: Optional[bytes]) -> None:
        path = key_path(key)
        owner = self._paths.get(path)
        if owner is not None and owner != key:
            raise ProofError("Two state keys share a tree path")
        if value is None:
            self._values.pop(key, None)
            self._paths.pop(path, None)
        else:
            self._values[key] = value
            self._paths[path] = key
        digest = state_leaf_hash(key, value)
        index = path
        for level in range(DEPTH):
            self._store(level, index, digest)
            sibling = self._node(level, index ^ 1)
            digest = node_hash(digest, sibling) if index & 1 == 0 else node_hash(sibling, digest)
            index >>= 1
        self._store(DEPTH, 0, digest)

    def _store(self, level: int, index: int, digest: bytes) -> None:
        if digest == EMPTY[level]:
            self._nodes.pop((level, index), None)
        else:
            self._nodes[(level, index)] = digest

    def proof(self, key: bytes) -> StateProof:
        path = key_path(key)
        siblings = [self._node(level, (path >> level) ^ 1) for level in range(DEPTH)]
        return _compress(key, siblings)
