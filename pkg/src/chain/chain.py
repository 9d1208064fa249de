"""
Simulated public chain.

A single serializer: submissions wait in a mempool, ``produce_block`` orders
them (arrival order per sender, senders interleaved round-robin in a
seeded order) and runs each against its contract program. Every block keeps
a snapshot of all contract states, so reads can be served at the finalized
height.
"""

import random
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterator, List, Optional, Tuple

from ..models.base import ProtocolModel
from ..models.chain import (
    DEPLOY_TARGET,
    Block,
    ChainArgs,
    ChainReceipt,
    ChainTx,
    ChainTxStatus,
)
from ..models.crypto import PublicKey, Scheme
from ..utils import get_logger, log_chain_tx
from ..utils.clock import VirtualClock
from ..utils.crypto import KeyPair, Seed, hash_bytes, keygen, sign, verify
from ..utils.encoding import canonical_encode

logger = get_logger(__name__)


class ChainError(Exception):
    """Misuse of the chain simulator itself (unknown contract, bad height)."""
    pass


class ContractRevert(ChainError):
    """Raised by contract programs; recorded as a REVERTED receipt."""
    pass


class SignatureRejected(ChainError):
    """A submission whose signature does not verify; recorded as REJECTED."""
    pass


def require(condition: bool, reason: str) -> None:
    if not condition:
        raise ContractRevert(reason)


@dataclass(frozen=True)
class CallContext:
    sender_pk: PublicKey
    timestamp: int
    height: int
    address: str
    chain: "PublicChain"


@dataclass
class Program:
    """A contract type: its constructor and its methods."""
    name: str
    init: Callable[[CallContext, ChainArgs], ProtocolModel]
    init_args: type
    methods: Dict[str, Tuple[Callable[[CallContext, ProtocolModel, ChainArgs], Tuple[ProtocolModel, object]], type]]


def deploy_address(sender_pk: PublicKey, nonce: int) -> str:
    return hash_bytes(canonical_encode(["deploy", sender_pk, nonce])).hex()


@dataclass
class _Snapshot:
    height: int
    states: Dict[str, ProtocolModel]


@dataclass
class ChainAccount:
    """Key pair plus nonce counter for building signed chain transactions."""
    keypair: KeyPair
    next_nonce: int = 0

    @classmethod
    def generate(cls, seed: Optional[Seed] = None, label: str = "") -> "ChainAccount":
        return cls(keygen(Scheme.PB, seed, label))

    @property
    def pk(self) -> PublicKey:
        return self.keypair.public

    def build(self, target: str, method: str, args: ChainArgs) -> ChainTx:
        unsigned = ChainTx(sender_pk=self.pk, nonce=self.next_nonce, target=target, method=method, args=args)
        self.next_nonce += 1
        return unsigned.model_copy(update={"signature": sign(self.keypair, unsigned.signing_payload())})


@dataclass
class PublicChain:
    clock: VirtualClock
    programs: Dict[str, Program]
    seed: int = 0
    finality_depth: int = 1
    blocks: List[Block] = field(default_factory=list)
    _mempool: List[ChainTx] = field(default_factory=list)
    _states: Dict[str, ProtocolModel] = field(default_factory=dict)
    _kinds: Dict[str, str] = field(default_factory=dict)
    _snapshots: List[_Snapshot] = field(default_factory=list)
    _receipts: Dict[bytes, ChainReceipt] = field(default_factory=dict)
    _txs: Dict[bytes, ChainTx] = field(default_factory=dict)
    _nonces: Dict[PublicKey, set] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.finality_depth < 1:
            raise ChainError("Finality depth must be at least 1")
        genesis = Block(height=0, timestamp=self.clock.now())
        self.blocks.append(genesis)
        self._snapshots.append(_Snapshot(0, {}))

    # --- submission and blocks ---------------------------------------------

    @property
    def height(self) -> int:
        return self.blocks[-1].height

    @property
    def finalized_height(self) -> int:
        return max(0, self.height - self.finality_depth + 1)

    @property
    def mempool_size(self) -> int:
        return len(self._mempool)

    def submit(self, tx: ChainTx) -> ChainReceipt:
        """Queue ``tx``; bad signatures and replays are rejected immediately."""
        tx_hash = tx.tx_hash
        try:
            if not verify(tx.sender_pk, tx.signing_payload(), tx.signature):
                raise SignatureRejected("bad signature")
            if tx_hash in self._receipts or tx.nonce in self._nonces.get(tx.sender_pk, ()):
                raise SignatureRejected("replayed transaction")
        except SignatureRejected as exc:
            receipt = ChainReceipt(tx_hash=tx_hash, status=ChainTxStatus.REJECTED,
                                   contract=tx.target, method=tx.method, reason=str(exc))
            log_chain_tx(tx.target, tx.method, receipt.status.value, tx_hash.hex(), self.height)
            return receipt
        self._nonces.setdefault(tx.sender_pk, set()).add(tx.nonce)
        receipt = ChainReceipt(tx_hash=tx_hash, status=ChainTxStatus.PENDING,
                               contract=tx.target, method=tx.method)
        self._receipts[tx_hash] = receipt
        self._txs[tx_hash] = tx
        self._mempool.append(tx)
        return receipt

    def _order(self, height: int) -> List[ChainTx]:
        queues: Dict[PublicKey, List[ChainTx]] = {}
        for tx in self._mempool:
            queues.setdefault(tx.sender_pk, []).append(tx)
        senders = sorted(queues, key=lambda pk: pk.encode())
        random.Random(f"{self.seed}/{height}").shuffle(senders)
        ordered = []
        while any(queues.values()):
            for sender in senders:
                if queues[sender]:
                    ordered.append(queues[sender].pop(0))
        return ordered

    def produce_block(self) -> Block:
        height = self.height + 1
        timestamp = max(self.clock.now(), self.blocks[-1].timestamp)
        ordered = self._order(height)
        self._mempool.clear()
        for tx in ordered:
            self._receipts[tx.tx_hash] = self._apply(tx, height, timestamp)
        block = Block(height=height, timestamp=timestamp, tx_hashes=tuple(tx.tx_hash for tx in ordered))
        self.blocks.append(block)
        self._snapshots.append(_Snapshot(height, dict(self._states)))
        return block

    def _apply(self, tx: ChainTx, height: int, timestamp: int) -> ChainReceipt:
        if tx.target == DEPLOY_TARGET:
            address = deploy_address(tx.sender_pk, tx.nonce)
            kind = tx.method
        else:
            address = tx.target
            kind = self._kinds.get(address)
        ctx = CallContext(tx.sender_pk, timestamp, height, address, self)
        try:
            program = self.programs.get(kind)
            require(program is not None, f"unknown contract {address[:12]}")
            if tx.target == DEPLOY_TARGET:
                require(isinstance(tx.args, program.init_args), f"{kind} expects {program.init_args.__name__}")
                state, result = program.init(ctx, tx.args), address
                self._kinds[address] = kind
            else:
                entry = program.methods.get(tx.method)
                require(entry is not None, f"{kind} has no method {tx.method}")
                method, args_type = entry
                require(isinstance(tx.args, args_type), f"{tx.method} expects {args_type.__name__}")
                state, result = method(ctx, self._states[address], tx.args)
            self._states[address] = state
            status, reason = ChainTxStatus.OK, ""
        except ContractRevert as revert:
            status, reason, result = ChainTxStatus.REVERTED, str(revert), None
        log_chain_tx(kind or "?", tx.method, status.value, tx.tx_hash.hex(), height)
        return ChainReceipt(
            tx_hash=tx.tx_hash, status=status, height=height, contract=address,
            method=tx.method, reason=reason, result=result,
        )

    # --- reads ---------------------------------------------------------------

    def receipt(self, tx_hash: bytes) -> Optional[ChainReceipt]:
        return self._receipts.get(tx_hash)

    def finalized_receipt(self, tx_hash: bytes) -> Optional[ChainReceipt]:
        receipt = self._receipts.get(tx_hash)
        if receipt is None or receipt.status == ChainTxStatus.PENDING:
            return None
        if receipt.status != ChainTxStatus.REJECTED and receipt.height > self.finalized_height:
            return None
        return receipt

    def transaction(self, tx_hash: bytes) -> Optional[ChainTx]:
        return self._txs.get(tx_hash)

    def mined(self, up_to: Optional[int] = None) -> Iterator[Tuple[ChainTx, ChainReceipt]]:
        """Mined transactions with their receipts in block order, up to height ``up_to``."""
        last = self.height if up_to is None else up_to
        for block in self.blocks[1:last + 1]:
            for tx_hash in block.tx_hashes:
                yield self._txs[tx_hash], self._receipts[tx_hash]

    def kind_of(self, address: str) -> Optional[str]:
        return self._kinds.get(address)

    def read(self, address: str, height: Optional[int] = None) -> Optional[ProtocolModel]:
        """Contract state at ``height`` (default: the finalized height)."""
        height = self.finalized_height if height is None else height
        if height < 0 or height > self.height:
            raise ChainError(f"No block at height {height}")
        return self._snapshots[height].states.get(address)

    def read_latest(self, address: str) -> Optional[ProtocolModel]:
        return self._states.get(address)

    def timestamp_at(self, height: int) -> int:
        return self.blocks[height].timestamp

    def digest(self) -> bytes:
        """Commitment to the whole chain, for determinism checks."""
        return hash_bytes(canonical_encode(list(self.blocks)))
