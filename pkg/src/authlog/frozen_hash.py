"""
Frozen-hash cache: the O(log n) state an enclave keeps to compute the
history-tree root after each appended header.

Entries are the roots of completed power-of-two subtrees, largest first.
"""

from functools import reduce

from ..models.proofs import FrozenHashCache
from .merkle import ProofError, node_hash


def fh_update(cache: FrozenHashCache, hdr_hash: bytes, record_id: int) -> FrozenHashCache:
    """Append the leaf hash of header ``record_id`` and merge completed subtrees."""
    if record_id != cache.count + 1:
        raise ProofError(f"Expected record id {cache.count + 1}, got {record_id}")
    entries = list(cache.entries)
    entries.append(hdr_hash)
    i = 2
    while i <= record_id:
        if record_id % i == 0:
            right = entries.pop()
            entries[-1] = node_hash(entries[-1], right)
        i <<= 1
    return FrozenHashCache(entries=tuple(entries), count=record_id)


def fh_reduce(cache: FrozenHashCache) -> bytes:
    """History-tree root at version ``cache.count``."""
    if cache.count < 1 or not cache.entries:
        raise ProofError("Cannot reduce an empty frozen-hash cache")
    return reduce(lambda acc, left: node_hash(left, acc), reversed(cache.entries[:-1]), cache.entries[-1])
