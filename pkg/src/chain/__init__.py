# Simulated public chain with the IPSC and IMSC contract programs
from typing import Dict, List, Optional, Tuple

from ..models.chain import IpscState
from ..utils.clock import VirtualClock
from .chain import (
    CallContext,
    ChainAccount,
    ChainError,
    ContractRevert,
    Program,
    PublicChain,
    SignatureRejected,
    deploy_address,
)
from .imsc import IMSC_C_PROGRAM, IMSC_CENTRALIZED, IMSC_D_PROGRAM, IMSC_DECENTRALIZED, registry
from .ipsc import IPSC, IPSC_PROGRAM, get_cens_req, get_lroot, get_supply

PROGRAMS: Dict[str, Program] = {
    IPSC: IPSC_PROGRAM,
    IMSC_DECENTRALIZED: IMSC_D_PROGRAM,
    IMSC_CENTRALIZED: IMSC_C_PROGRAM,
}


def create_chain(clock: VirtualClock, seed: int = 0, finality_depth: int = 1) -> PublicChain:
    return PublicChain(clock=clock, programs=dict(PROGRAMS), seed=seed, finality_depth=finality_depth)


class ChainReader:
    """Finalized view of IPSC snapshots and the IMSC registry, as enclaves and clients read it."""

    def __init__(self, chain: PublicChain, imsc_address: str):
        self.chain = chain
        self.imsc_address = imsc_address
        self._roots: Dict[str, List[bytes]] = {}
        self._scanned: Dict[str, int] = {}

    def approved(self) -> tuple:
        return registry(self.chain.read(self.imsc_address))

    def is_approved(self, ipsc_id: str) -> bool:
        return ipsc_id in self.approved()

    def ipsc(self, ipsc_id: str) -> Optional[IpscState]:
        state = self.chain.read(ipsc_id)
        return state if isinstance(state, IpscState) else None

    def snapshot_root(self, ipsc_id: str) -> Optional[bytes]:
        state = self.ipsc(ipsc_id)
        return state.lroot_pb if state is not None else None

    def snapshot_roots(self, ipsc_id: str) -> Tuple[bytes, ...]:
        """Every LRoot_pb the instance has held at a finalized height, oldest first."""
        roots = self._roots.setdefault(ipsc_id, [])
        finalized = self.chain.finalized_height
        for height in range(self._scanned.get(ipsc_id, 0), finalized + 1):
            state = self.chain.read(ipsc_id, height)
            if isinstance(state, IpscState) and state.lroot_pb is not None:
                if not roots or roots[-1] != state.lroot_pb:
                    roots.append(state.lroot_pb)
        self._scanned[ipsc_id] = finalized + 1
        return tuple(roots)


__all__ = [
    "CallContext",
    "ChainAccount",
    "ChainError",
    "ChainReader",
    "ContractRevert",
    "Program",
    "PublicChain",
    "SignatureRejected",
    "deploy_address",
    "create_chain",
    "PROGRAMS",
    "IPSC",
    "IMSC_CENTRALIZED",
    "IMSC_DECENTRALIZED",
    "registry",
    "get_cens_req",
    "get_lroot",
    "get_supply",
]
