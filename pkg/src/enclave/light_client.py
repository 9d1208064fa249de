"""
Light client the enclave uses to follow other instances.

It only tracks instances approved in IMSC, and for each keeps the history of
LRoot_pb values it has seen at finalized heights. Foreign evidence is
accepted only when it links to one of those snapshots.
"""

from typing import Dict, List, Optional, Protocol, Sequence

from ..authlog.history_tree import inc_verify, mem_verify
from ..authlog.merkle import mk_verify
from ..models.ledger import ForeignEvidence, Status
from ..utils import get_logger

logger = get_logger(__name__)


class FinalizedReader(Protocol):
    """Read access to finalized public-chain state."""

    def is_approved(self, ipsc_id: str) -> bool:
        ...

    def snapshot_root(self, ipsc_id: str) -> Optional[bytes]:
        ...

    def snapshot_roots(self, ipsc_id: str) -> Sequence[bytes]:
        ...


class UnknownInstanceError(Exception):
    """Evidence names an instance this light client does not track."""
    pass


class LightClient:
    def __init__(self, local_ipsc: str, reader: Optional[FinalizedReader] = None):
        self.local_ipsc = local_ipsc
        self.reader = reader
        self._roots: Dict[str, List[bytes]] = {}

    def attach(self, reader: FinalizedReader) -> None:
        self.reader = reader

    def observe(self, ipsc_id: str) -> Optional[bytes]:
        """Pull the finalized snapshot of ``ipsc_id`` and remember it."""
        if self.reader is None or ipsc_id == self.local_ipsc:
            return None
        if not self.reader.is_approved(ipsc_id):
            self._roots.pop(ipsc_id, None)
            return None
        roots = list(self.reader.snapshot_roots(ipsc_id))
        known = self._roots.get(ipsc_id, [])
        if roots and (not known or known[-1] != roots[-1]):
            logger.debug("Light client saw %s at %s", ipsc_id[:12], roots[-1].hex()[:12])
        self._roots[ipsc_id] = roots
        return roots[-1] if roots else None

    def tracked(self) -> Dict[str, List[bytes]]:
        return {ipsc: list(roots) for ipsc, roots in self._roots.items()}

    def knows(self, ipsc_id: str, root: bytes) -> bool:
        return root in self._roots.get(ipsc_id, ())

    def verify(self, foreign: ForeignEvidence) -> bool:
        """
        True iff the evidence chains to a finalized snapshot of its instance.

        Checks, in order: the snapshot is tracked, the claimed root is a
        prefix of it, the header sits in the claimed root, and the receipt
        sits under the header with status OK.
        """
        self.observe(foreign.ipsc)
        if foreign.ipsc not in self._roots:
            raise UnknownInstanceError(f"Instance {foreign.ipsc} is not tracked")
        evidence = foreign.evidence
        if not self.knows(foreign.ipsc, foreign.lroot_pb.root):
            logger.info("Evidence from %s targets an unsynced root", foreign.ipsc[:12])
            return False
        if not inc_verify(foreign.inc_proof, evidence.lroot, foreign.lroot_pb):
            return False
        if not mem_verify(evidence.mem_proof, evidence.hdr.id, evidence.hdr.encode(), evidence.lroot):
            return False
        if evidence.receipt.status != Status.OK:
            return False
        return mk_verify(evidence.rcp_proof, evidence.receipt.encode(), evidence.hdr.rcp_root)
