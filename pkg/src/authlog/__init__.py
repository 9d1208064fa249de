# Authenticated data structures: Merkle tree, history tree, frozen-hash cache, state tree
from .merkle import (
    ProofError,
    EMPTY_ROOT,
    leaf_hash,
    node_hash,
    mk_root,
    mk_root_or_empty,
    mk_proof,
    mk_verify,
)
from .history_tree import (
    HistoryTree,
    ht_add,
    ht_inc_proof,
    ht_mem_proof,
    inc_verify,
    mem_verify,
    mem_verify_leaf,
    reduce_root,
)
from .frozen_hash import fh_update, fh_reduce
from .state_tree import (
    SparseStateTree,
    EMPTY_STATE_ROOT,
    compute_root,
    verify_state_proofs,
)

__all__ = [
    "ProofError",
    "EMPTY_ROOT",
    "leaf_hash",
    "node_hash",
    "mk_root",
    "mk_root_or_empty",
    "mk_proof",
    "mk_verify",
    "HistoryTree",
    "ht_add",
    "ht_inc_proof",
    "ht_mem_proof",
    "inc_verify",
    "mem_verify",
    "mem_verify_leaf",
    "reduce_root",
    "fh_update",
    "fh_reduce",
    "SparseStateTree",
    "EMPTY_STATE_ROOT",
    "compute_root",
    "verify_state_proofs",
]
