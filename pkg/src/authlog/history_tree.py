"""
Append-only history tree.

Records are hashed as tagged leaves and combined with the same tagged node
hash as the Merkle tree. The root at version n splits the first n leaves at
the largest power of two below n, so a subtree over an aligned power-of-two
range never changes once filled; such subtrees are cached.

Record indices are 1-based: after appending record i the tree is at
version i.
"""

from typing import Dict, List, Optional, Sequence, Tuple

from ..models.proofs import Commitment, IncrementalProof, MembershipProof
from .merkle import ProofError, leaf_hash, node_hash


def _split(n: int) -> int:
    """Largest power of two strictly below n (n >= 2)."""
    k = 1
    while k << 1 < n:
        k <<= 1
    return k


def _is_power_of_two(n: int) -> bool:
    return n > 0 and n & (n - 1) == 0


class HistoryTree:
    """One writer appends records; any version's root and proofs can be served."""

    def __init__(self) -> None:
        self._leaves: List[bytes] = []
        self._frozen: Dict[Tuple[int, int], bytes] = {}
        self._roots: List[bytes] = []
        self._versions_by_root: Dict[bytes, int] = {}

    @property
    def version(self) -> int:
        return len(self._leaves)

    def add(self, record: bytes) -> Commitment:
        return self.add_leaf_hash(leaf_hash(record))

    def add_leaf_hash(self, digest: bytes) -> Commitment:
        """Append a record already hashed with ``leaf_hash``."""
        self._leaves.append(digest)
        root = self._subtree(0, len(self._leaves))
        self._roots.append(root)
        self._versions_by_root.setdefault(root, len(self._leaves))
        return Commitment(version=len(self._leaves), root=root)

    def leaf(self, index: int) -> bytes:
        self._check_version(index)
        return self._leaves[index - 1]

    def root(self, version: int) -> bytes:
        self._check_version(version)
        return self._roots[version - 1]

    def commitment(self, version: Optional[int] = None) -> Commitment:
        version = self.version if version is None else version
        return Commitment(version=version, root=self.root(version))

    def version_of(self, root: bytes) -> Optional[int]:
        return self._versions_by_root.get(root)

    def knows(self, commitment: Commitment) -> bool:
        return (
            1 <= commitment.version <= self.version
            and self._roots[commitment.version - 1] == commitment.root
        )

    def _check_version(self, version: int) -> None:
        if version < 1 or version > self.version:
            raise ProofError(f"Version {version} outside 1..{self.version}")

    def _subtree(self, start: int, size: int) -> bytes:
        if size == 1:
            return self._leaves[start]
        key = (start, size)
        cached = self._frozen.get(key)
        if cached is not None:
            return cached
        k = _split(size)
        digest = node_hash(self._subtree(start, k), self._subtree(start + k, size - k))
        if _is_power_of_two(size):
            self._frozen[key] = digest
        return digest

    def _audit_path(self, index: int, start: int, size: int) -> List[bytes]:
        if size == 1:
            return []
        k = _split(size)
        if index < k:
            return self._audit_path(index, start, k) + [self._subtree(start + k, size - k)]
        return self._audit_path(index - k, start + k, size - k) + [self._subtree(start, k)]

    def _consistency(self, m: int, start: int, size: int, complete: bool) -> List[bytes]:
        if m == size:
            return [] if complete else [self._subtree(start, size)]
        k = _split(size)
        if m <= k:
            return self._consistency(m, start, k, complete) + [self._subtree(start + k, size - k)]
        return self._consistency(m - k, start + k, size - k, False) + [self._subtree(start, k)]

    def inc_proof(self, older: Commitment, newer: Commitment) -> IncrementalProof:
        if older.version > newer.version:
            raise ProofError(f"Cannot prove version {older.version} against older {newer.version}")
        for commitment in (older, newer):
            if not self.knows(commitment):
                raise ProofError(f"Unknown commitment at version {commitment.version}")
        nodes = self._consistency(older.version, 0, newer.version, True) \
            if older.version < newer.version else []
        return IncrementalProof(
            from_version=older.version,
            to_version=newer.version,
            from_root=older.root,
            node_hashes=tuple(nodes),
        )

    def mem_proof(self, index: int, commitment: Commitment) -> MembershipProof:
        if not self.knows(commitment):
            raise ProofError(f"Unknown commitment at version {commitment.version}")
        if index < 1 or index > commitment.version:
            raise ProofError(f"Record {index} beyond version {commitment.version}")
        path = self._audit_path(index - 1, 0, commitment.version)
        return MembershipProof(index=index, version=commitment.version, path=tuple(path))


def _consistency_roots(m: int, n: int, first_root: bytes, path: Sequence[bytes]) -> Tuple[bytes, bytes]:
    """Recompute (root at m, root at n) from a consistency path."""
    if m < 1 or m > n:
        raise ProofError(f"Bad version pair {m}..{n}")
    if m == n:
        if path:
            raise ProofError("Proof between equal versions must be empty")
        return first_root, first_root
    nodes = list(path)
    if _is_power_of_two(m):
        nodes.insert(0, first_root)
    if not nodes:
        raise ProofError("Empty consistency proof")
    fn, sn = m - 1, n - 1
    while fn & 1:
        fn >>= 1
        sn >>= 1
    fr = sr = nodes[0]
    for c in nodes[1:]:
        if sn == 0:
            raise ProofError("Consistency proof too long")
        if fn & 1 or fn == sn:
            fr = node_hash(c, fr)
            sr = node_hash(c, sr)
            while fn and not fn & 1:
                fn >>= 1
                sn >>= 1
        else:
            sr = node_hash(sr, c)
        fn >>= 1
        sn >>= 1
    if sn != 0:
        raise ProofError("Consistency proof too short")
    return fr, sr


def ht_add(tree: HistoryTree, record: bytes) -> Commitment:
    return tree.add(record)


def ht_inc_proof(tree: HistoryTree, older: Commitment, newer: Commitment) -> IncrementalProof:
    return tree.inc_proof(older, newer)


def ht_mem_proof(tree: HistoryTree, index: int, commitment: Commitment) -> MembershipProof:
    return tree.mem_proof(index, commitment)


def inc_verify(proof: IncrementalProof, older: Commitment, newer: Commitment) -> bool:
    """True iff ``older`` is a prefix of ``newer`` according to ``proof``."""
    if proof.from_version != older.version or proof.to_version != newer.version:
        return False
    if proof.from_root != older.root:
        return False
    try:
        fr, sr = _consistency_roots(older.version, newer.version, older.root, proof.node_hashes)
    except ProofError:
        return False
    return fr == older.root and sr == newer.root


def reduce_root(proof: IncrementalProof) -> Commitment:
    """The newer commitment a well-formed incremental proof commits to."""
    fr, sr = _consistency_roots(
        proof.from_version, proof.to_version, proof.from_root, proof.node_hashes
    )
    if fr != proof.from_root:
        raise ProofError("Proof does not reproduce its starting root")
    return Commitment(version=proof.to_version, root=sr)


def mem_verify_leaf(proof: MembershipProof, index: int, digest: bytes, commitment: Commitment) -> bool:
    """mem_verify for a record given by its leaf hash."""
    if proof.index != index or proof.version != commitment.version:
        return False
    if index < 1 or index > commitment.version:
        return False
    fn, sn = index - 1, commitment.version - 1
    current = digest
    for p in proof.path:
        if sn == 0:
            return False
        if fn & 1 or fn == sn:
            current = node_hash(p, current)
            while fn and not fn & 1:
                fn >>= 1
                sn >>= 1
        else:
            current = node_hash(current, p)
        fn >>= 1
        sn >>= 1
    return sn == 0 and current == commitment.root


def mem_verify(proof: MembershipProof, index: int, record: bytes, commitment: Commitment) -> bool:
    return mem_verify_leaf(proof, index, leaf_hash(record), commitment)
