"""
Bank node: the operator of one CBDC instance.

Owns the full ledger state, the history tree of headers and the enclave.
Clients talk to it with signed ``ClientMessage`` frames; ticks drive batch
execution, snapshot synchronization to IPSC and the relay of escalated
requests. An ``AdversaryPolicy`` switches on misbehaviour for scenarios.
"""

from dataclasses import dataclass
from typing import Dict, List, Optional, Set, Tuple

from ..authlog.history_tree import HistoryTree
from ..authlog.merkle import ProofError, mk_proof
from ..authlog.state_tree import SparseStateTree
from ..chain import ChainAccount, ChainReader, PublicChain, deploy_address
from ..chain.ipsc import IPSC
from ..enclave import Enclave, EnclaveError, ExecOutput, StaleStateError
from ..ledger.iomc import ExecutionContext
from ..ledger.state import (
    IOMC_RECEIVE_ADDRESS,
    IOMC_SEND_ADDRESS,
    LedgerTotals,
    MissingStateError,
    RecordingView,
    account_key,
    address_of,
    genesis_entries,
    ledger_totals,
)
from ..ledger.vm import execute_batch
from ..models.chain import (
    DEPLOY_TARGET,
    ChainTxStatus,
    IpscInitArgs,
    IpscState,
    Rate,
    ReplaceEncArgs,
    ResolveCensQryArgs,
    ResolveCensTxArgs,
    SnapshotArgs,
)
from ..models.crypto import PublicKey
from ..models.enclave import VersionTransitionPair
from ..models.ledger import (
    AccessTicket,
    Account,
    Header,
    MicroTransaction,
    PartialState,
    Receipt,
    StateEntry,
    Transfer,
    TransferEvidence,
)
from ..models.node import (
    AccountAnswer,
    Ack,
    AdversaryPolicy,
    Answer,
    ClientMessage,
    IncProofAnswer,
    IomcAddrs,
    MemProofAnswer,
    NodeConfig,
    NOT_EXECUTED,
    NOT_INCLUDED,
    REJECTED,
    UNKNOWN_ROOT,
    NodeResponse,
    QueryAccount,
    QueryIncProof,
    QueryIomcAddrs,
    QueryMemProof,
    QueryReceipt,
    ReceiptAnswer,
    RegisterClient,
    Registration,
    SubmitTx,
)
from ..models.proofs import Commitment
from ..utils import get_logger, log_error_with_context
from ..utils.clock import VirtualClock
from ..utils.config import Settings
from ..utils.crypto import sign, verify
from ..utils.encoding import EncodingError, canonical_decode, frame, unframe

logger = get_logger(__name__)


class NodeError(Exception):
    """A request the node cannot serve; becomes an error response."""
    pass


class UnknownClientError(NodeError):
    pass


@dataclass
class _Batch:
    header: Header
    txs: Tuple[MicroTransaction, ...]
    receipts: Tuple[Receipt, ...]


@dataclass(frozen=True)
class InstanceParams:
    t_i0: int
    i_r: Rate
    issue_authority: bool


class BankNode:
    """Operator O of one instance."""

    def __init__(
        self,
        name: str,
        clock: VirtualClock,
        chain: PublicChain,
        operator: ChainAccount,
        params: InstanceParams,
        settings: Settings,
        seed: int = 0,
    ):
        self.name = name
        self.clock = clock
        self.chain = chain
        self.operator = operator
        self.params = params
        self.settings = settings
        self.seed = seed
        self.reader: Optional[ChainReader] = None
        self.config: Optional[NodeConfig] = None

        self.enclave_generation = 0
        self.enclave = Enclave(clock, seed, f"{name}/enclave/0")
        self.tree = SparseStateTree(genesis_entries(operator.pk, params.t_i0))
        self.history = HistoryTree()
        self.headers: List[Header] = []
        self.batches: Dict[int, _Batch] = {}
        self.tx_index: Dict[bytes, Tuple[int, int]] = {}
        self.pending: List[MicroTransaction] = []
        self.rejected: List[bytes] = []
        self.quote = None
        self.created_at = 0

        self._sync_tx: Optional[bytes] = None
        self._emitted_pairs: List[VersionTransitionPair] = []
        # Per-version writes over the genesis state; full states are rebuilt on demand.
        self._genesis_state: Dict[bytes, bytes] = dict(self.tree.items())
        self._writes: Dict[int, Dict[bytes, Optional[bytes]]] = {}
        self._state_cursor: Tuple[int, Dict[bytes, bytes]] = (0, self._genesis_state)
        self._relay_done: Set[int] = set()
        self._relay_waiting: Dict[int, bytes] = {}
        self._treasury_nonce = 0

    # --- bootstrap ---------------------------------------------------------

    @property
    def instance_id(self) -> str:
        if self.config is None:
            raise NodeError("Node not deployed yet")
        return self.config.instance_id

    @property
    def adversary(self) -> AdversaryPolicy:
        return self.config.adversary if self.config else AdversaryPolicy()

    def deploy(self) -> str:
        """Initialize the enclave and submit the IPSC deployment; returns the IPSC id."""
        keys, self.quote = self.enclave.init()
        nonce = self.operator.next_nonce
        tx = self.operator.build(
            DEPLOY_TARGET, IPSC,
            IpscInitArgs(keys=keys, t_i0=self.params.t_i0, i_r=self.params.i_r,
                         issue_authority=self.params.issue_authority),
        )
        self.chain.submit(tx)
        instance_id = deploy_address(self.operator.pk, nonce)
        self.config = NodeConfig(
            instance_id=instance_id,
            batch_interval=self.settings.batch_interval_seconds,
            sync_interval=self.settings.sync_interval_seconds,
        )
        logger.info("Node %s deploying IPSC %s", self.name, instance_id[:12])
        return instance_id

    def activate(self, reader: ChainReader) -> None:
        """Bind the enclave once the IPSC deployment is on chain."""
        state = self.chain.read_latest(self.instance_id)
        if not isinstance(state, IpscState):
            raise NodeError("IPSC deployment not mined yet")
        self.reader = reader
        self.created_at = state.created_at
        genesis_root = self.enclave.configure(
            self.instance_id,
            self.operator.pk,
            self.params.t_i0,
            self.params.i_r.as_fraction(),
            state.created_at,
            self.params.issue_authority,
            self.settings.htlc_timeout_seconds,
            self.settings.ticket_window_seconds,
            reader,
        )
        if genesis_root != self.tree.root:
            raise NodeError("Enclave genesis root differs from the operator's")

    def set_adversary(self, policy: AdversaryPolicy) -> None:
        self.config = self.config.model_copy(update={"adversary": policy})
        logger.info("Node %s adversary policy: %s", self.name, policy.model_dump(exclude_defaults=True))

    # --- message handling --------------------------------------------------

    def handle_frame(self, data: bytes) -> Optional[bytes]:
        """Wire entry point: one framed ClientMessage in, one framed response out (or nothing)."""
        max_bytes = self.settings.max_frame_bytes
        try:
            payload, rest = unframe(data, max_bytes)
            if rest:
                raise EncodingError("Trailing bytes after frame")
            message = canonical_decode(payload, ClientMessage)
        except (EncodingError, ValueError) as exc:
            return frame(NodeResponse(ok=False, error=f"malformed frame: {exc}").encode(), max_bytes)
        response = self.handle(message)
        return frame(response.encode(), max_bytes) if response is not None else None

    def handle(self, message: ClientMessage) -> Optional[NodeResponse]:
        """Serve one message; censored messages are dropped silently (None)."""
        if not verify(message.sender_pk, message.signing_payload(), message.signature):
            return NodeResponse(ok=False, error="bad message signature")
        if self.adversary.censors(message):
            logger.info("Node %s drops %s from %s (phase %d)", self.name, message.kind.value,
                        message.sender_pk.short(), message.phase)
            return None
        try:
            return NodeResponse(ok=True, payload=self._dispatch(message))
        except NodeError as exc:
            return NodeResponse(ok=False, error=str(exc))

    def _dispatch(self, message: ClientMessage) -> Answer:
        payload = message.payload
        if isinstance(payload, RegisterClient):
            if payload.pk != message.sender_pk:
                raise NodeError("registration must be signed by the registering key")
            return self.register_client(payload.pk)
        if isinstance(payload, SubmitTx):
            self._require_registered(message.sender_pk)
            if payload.tx.sender_pk != message.sender_pk:
                raise NodeError("transaction sender differs from message sender")
            return self.submit(payload.tx)
        if isinstance(payload, QueryAccount):
            self._require_registered(message.sender_pk)
            return self.answer(payload)
        return self.answer(payload)

    def _require_registered(self, pk: PublicKey) -> None:
        if self.account(pk) is None:
            raise UnknownClientError(f"unknown client {pk.short()}")

    def account(self, pk: PublicKey) -> Optional[Account]:
        raw = self.tree.get(account_key(address_of(pk)))
        return canonical_decode(raw, Account) if raw is not None else None

    def submit(self, tx: MicroTransaction) -> Ack:
        if tx.tx_hash not in self.tx_index and tx not in self.pending:
            self.pending.append(tx)
        return Ack(tx_hash=tx.tx_hash)

    def answer(self, query) -> Answer:
        if isinstance(query, QueryIomcAddrs):
            return IomcAddrs(send=IOMC_SEND_ADDRESS, receive=IOMC_RECEIVE_ADDRESS)
        if isinstance(query, QueryReceipt):
            return ReceiptAnswer(evidence=self.receipt_evidence(query.tx_hash, query.at_root))
        if isinstance(query, QueryIncProof):
            return IncProofAnswer(proof=self.inc_proof(query.from_commitment, query.to_root))
        if isinstance(query, QueryMemProof):
            return self.mem_proof(query.index, query.version)
        if isinstance(query, QueryAccount):
            key = account_key(address_of(query.pk))
            return AccountAnswer(account=self.account(query.pk), proof=self.tree.proof(key), st_root=self.tree.root)
        raise NodeError(f"unsupported query {type(query).__name__}")

    def _commitment_for(self, root: Optional[bytes]) -> Commitment:
        if root is None:
            if self.history.version == 0:
                raise NodeError("ledger has no versions yet")
            return self.history.commitment()
        version = self.history.version_of(root)
        if version is None:
            raise NodeError(UNKNOWN_ROOT)
        return Commitment(version=version, root=root)

    def receipt_evidence(self, tx_hash: bytes, at_root: Optional[bytes] = None) -> TransferEvidence:
        location = self.tx_index.get(tx_hash)
        if location is None:
            if tx_hash in self.rejected:
                raise NodeError(REJECTED)
            raise NodeError(NOT_EXECUTED)
        header_id, position = location
        commitment = self._commitment_for(at_root)
        if header_id > commitment.version:
            raise NodeError(NOT_INCLUDED)
        batch = self.batches[header_id]
        return TransferEvidence(
            mu_tx=batch.txs[position],
            receipt=batch.receipts[position],
            hdr=batch.header,
            mem_proof=self.history.mem_proof(header_id, commitment),
            rcp_proof=mk_proof(position, [receipt.encode() for receipt in batch.receipts]),
            lroot=commitment,
        )

    def inc_proof(self, older: Commitment, to_root: bytes):
        newer = self._commitment_for(to_root)
        if not self.history.knows(older):
            raise NodeError(UNKNOWN_ROOT)
        if older.version > newer.version:
            raise NodeError(NOT_INCLUDED)
        try:
            return self.history.inc_proof(older, newer)
        except ProofError as exc:
            raise NodeError(str(exc)) from exc

    def mem_proof(self, index: int, version: int) -> MemProofAnswer:
        if version < 1 or version > self.history.version or index < 1 or index > version:
            raise NodeError("no such record or version")
        commitment = self.history.commitment(version)
        return MemProofAnswer(proof=self.history.mem_proof(index, commitment), header=self.headers[index - 1])

    # --- execution ---------------------------------------------------------

    def _partial_for(self, keys) -> PartialState:
        ordered = sorted(set(keys))
        return PartialState(
            root=self.tree.root,
            entries=tuple(StateEntry(key=key, value=self.tree.get(key)) for key in ordered),
            witness=tuple(self.tree.proof(key) for key in ordered),
        )

    def _touched_keys(self, txs: List[MicroTransaction]) -> Set[bytes]:
        """Dry-run the batch over the full tree to learn which entries it reads or writes."""
        view = RecordingView(self.tree)
        ctx = ExecutionContext(
            now=self.clock.now(),
            local_ipsc=self.instance_id,
            htlc_timeout=self.settings.htlc_timeout_seconds,
            ticket_window=self.settings.ticket_window_seconds,
            batch_id=self.enclave.id_cur,
            system_pk=self.enclave.keys.pk_pb,
            verify_foreign=lambda evidence: True,
            issue_ticket=lambda pk, expires_at: AccessTicket(
                client_pk=pk, issuing_ipsc=self.instance_id, expires_at=expires_at
            ),
            may_issue=lambda total: True,
        )
        execute_batch(txs, view, ctx)
        return view.touched

    def _apply(self, output: ExecOutput) -> None:
        for entry in output.partial_state.entries:
            self.tree.set(entry.key, entry.value)
        if self.tree.root != output.header.st_root:
            raise NodeError("Local state diverged from the enclave's state root")
        self.history.add(output.header.encode())
        self.headers.append(output.header)
        self.batches[output.header.id] = _Batch(output.header, output.accepted, output.receipts)
        for position, tx in enumerate(output.accepted):
            self.tx_index[tx.tx_hash] = (output.header.id, position)
        self.rejected.extend(tx.tx_hash for tx in output.rejected)
        self._writes[output.header.id] = {entry.key: entry.value for entry in output.partial_state.entries}
        self._emitted_pairs.append(output.pair)

    def batch_tick(self) -> Optional[Header]:
        """Execute the pending queue as one batch; empty queues produce no version."""
        if not self.pending:
            return None
        txs, self.pending = list(self.pending), []
        while txs:
            try:
                output = self.enclave.exec(txs, self._partial_for(self._touched_keys(txs)))
            except StaleStateError as exc:
                missing = exc.__cause__
                if isinstance(missing, MissingStateError) and missing.tx_index is not None:
                    dropped = txs.pop(missing.tx_index)
                    self.rejected.append(dropped.tx_hash)
                    logger.warning("Node %s moved tx %s to rejected: %s", self.name,
                                   dropped.tx_hash.hex()[:12], exc)
                    continue
                log_error_with_context(exc, {"node": self.name, "operation_type": "batch"}, __name__)
                raise
            self._apply(output)
            return output.header
        return None

    def register_client(self, pk: PublicKey) -> Registration:
        key = account_key(address_of(pk))
        try:
            output, ticket = self.enclave.register_client(
                pk, self.settings.ticket_window_seconds, self._partial_for([key])
            )
        except EnclaveError as exc:
            raise NodeError(str(exc)) from exc
        self._apply(output)
        return Registration(receipt=output.receipts[0], ticket=ticket, header_id=output.header.id)

    def issue(self, amount: int, beneficiary: bytes) -> Receipt:
        """Mint through the enclave; raises the enclave's IssuanceError when refused."""
        output = self.enclave.issue_tokens(amount, beneficiary, self._partial_for([account_key(beneficiary)]))
        self._apply(output)
        return output.receipts[0]

    def fund(self, recipient: PublicKey, amount: int) -> bytes:
        """Queue a treasury transfer to ``recipient``'s account."""
        treasury = self.account(self.operator.pk)
        nonce = max(self._treasury_nonce, treasury.nonce if treasury else 0)
        unsigned = MicroTransaction(
            sender_pk=self.operator.pk, nonce=nonce,
            call=Transfer(to=address_of(recipient), amount=amount),
        )
        tx = unsigned.model_copy(update={"signature": sign(self.operator.keypair, unsigned.signing_payload())})
        self._treasury_nonce = nonce + 1
        self.pending.append(tx)
        return tx.tx_hash

    # --- synchronization ---------------------------------------------------

    def ipsc_state(self, finalized: bool = True) -> Optional[IpscState]:
        if finalized:
            return self.chain.read(self.instance_id)
        return self.chain.read_latest(self.instance_id)

    def _reconcile(self) -> None:
        """Flush the enclave to whatever root IPSC has finally accepted."""
        state = self.ipsc_state()
        if state is None or state.lroot_pb is None or state.lroot_pb == self.enclave.lroot_pb:
            return
        try:
            self.enclave.flush(state.lroot_pb)
            logger.info("Node %s flushed to version %s", self.name, self.history.version_of(state.lroot_pb))
        except EnclaveError as exc:
            logger.warning("Node %s cannot flush to IPSC root: %s", self.name, exc)

    def sync_tick(self) -> List[bytes]:
        """Submit the newest transition pair(s) to IPSC; returns submitted chain tx hashes."""
        if self.adversary.drop_sync:
            logger.info("Node %s withholds its snapshot", self.name)
            return []
        self._reconcile()
        if self._sync_tx is not None:
            receipt = self.chain.finalized_receipt(self._sync_tx)
            if receipt is None:
                return []
            if receipt.status != ChainTxStatus.OK or receipt.result is False:
                logger.warning("Node %s snapshot not accepted: %s %s", self.name,
                               receipt.status.value, receipt.reason)
            self._sync_tx = None
            self._reconcile()
        if self.enclave.lroot_cur is None or self.enclave.lroot_cur == self.enclave.lroot_pb:
            self._emitted_pairs.clear()
            return []

        if self.adversary.equivocate:
            pairs = [pair for pair in self._emitted_pairs if pair.root_from == self.enclave.lroot_pb]
            pairs = pairs or [self.enclave.sign_current_pair()]
        else:
            pairs = [self.enclave.sign_current_pair()]
        self._emitted_pairs.clear()
        hashes = []
        for pair in pairs:
            tx = self.operator.build(self.instance_id, "snapshotLedger", SnapshotArgs(pair=pair))
            self.chain.submit(tx)
            hashes.append(tx.tx_hash)
        self._sync_tx = hashes[-1]
        return hashes

    # --- censorship relay --------------------------------------------------

    def relay_tick(self) -> List[int]:
        """Forward escalated requests at our IPSC to the enclave and post resolutions."""
        if not (self.adversary.honest or self.adversary.relay_escalations):
            return []
        state = self.ipsc_state()
        if state is None:
            return []
        resolved = []
        for index, info in enumerate(state.cens_reqs):
            if info.resolved or index in self._relay_done:
                continue
            try:
                if info.etx is not None:
                    done = self._relay_tx(index, info.etx)
                else:
                    done = self._relay_query(index, info.equery)
            except (EnclaveError, NodeError) as exc:
                logger.info("Node %s cannot resolve request %d yet: %s", self.name, index, exc)
                continue
            if done:
                self._relay_done.add(index)
                resolved.append(index)
        return resolved

    def _relay_tx(self, index: int, etx) -> bool:
        if index not in self._relay_waiting:
            request = self.enclave.open_censored_tx(etx)
            self._relay_waiting[index] = request.tx.tx_hash
            self.submit(request.tx)
            return False
        tx_hash = self._relay_waiting[index]
        if tx_hash not in self.tx_index and tx_hash not in self.rejected:
            return False
        status, signature = self.enclave.resolve_censored_tx(etx)
        self.chain.submit(self.operator.build(
            self.instance_id, "resolveCensTx", ResolveCensTxArgs(index=index, status=status, signature=signature)
        ))
        return True

    def _relay_query(self, index: int, equery) -> bool:
        request = self.enclave.open_censored_query(equery)
        answer = self.answer(request.query)
        status, edata, signature = self.enclave.answer_censored_query(equery, answer)
        self.chain.submit(self.operator.build(
            self.instance_id, "resolveCensQry",
            ResolveCensQryArgs(index=index, status=status, edata=edata, signature=signature),
        ))
        return True

    # --- enclave replacement -----------------------------------------------

    def replace_enclave(self) -> bytes:
        """Start a fresh enclave at the last public snapshot and submit ReplaceEnc."""
        state = self.ipsc_state()
        if state is None or state.lroot_pb is None:
            raise NodeError("No public snapshot to restore from")
        version = self.history.version_of(state.lroot_pb)
        if version is None:
            raise NodeError("Public snapshot unknown to the operator")

        self.enclave_generation += 1
        enclave = Enclave(self.clock, self.seed, f"{self.name}/enclave/{self.enclave_generation}")
        keys, self.quote = enclave.init()
        pair = enclave.restore(
            self.instance_id, self.params.t_i0, self.params.i_r.as_fraction(), state.created_at,
            self.params.issue_authority, self.settings.htlc_timeout_seconds,
            self.settings.ticket_window_seconds, self.headers[:version], state.lroot_pb,
            state.t_i, state.t_s, self.reader,
        )
        self._rollback(version)
        self.enclave = enclave
        statement = enclave.replacement_statement(pair)
        tx = self.operator.build(
            self.instance_id, "replaceEnc",
            ReplaceEncArgs(keys=keys, pair=pair, operator_signature=sign(self.operator.keypair, statement)),
        )
        self.chain.submit(tx)
        self._sync_tx = tx.tx_hash
        logger.info("Node %s replaced its enclave at version %d", self.name, version)
        return tx.tx_hash

    def _rollback(self, version: int) -> None:
        """Drop unflushed batches; their transactions go back to the queue."""
        requeue = []
        for header in self.headers[version:]:
            requeue.extend(self.batches.pop(header.id).txs)
        self.headers = self.headers[:version]
        self.tree = SparseStateTree(self.state_at(version))
        history = HistoryTree()
        for header in self.headers:
            history.add(header.encode())
        self.history = history
        self.tx_index = {h: loc for h, loc in self.tx_index.items() if loc[0] <= version}
        self._writes = {v: w for v, w in self._writes.items() if v <= version}
        if self._state_cursor[0] > version:
            self._state_cursor = (0, self._genesis_state)
        self._emitted_pairs.clear()
        self.pending = [tx for tx in requeue if tx.sender_pk != self.enclave.keys.pk_pb] + self.pending

    # --- admin -------------------------------------------------------------

    def dump_state(self) -> Dict:
        """Summary for the harness and the admin endpoint."""
        return {
            "name": self.name,
            "instance_id": self.instance_id,
            "version": self.history.version,
            "lroot_cur": self.enclave.lroot_cur.hex() if self.enclave.lroot_cur else None,
            "lroot_pb": self.enclave.lroot_pb.hex() if self.enclave.lroot_pb else None,
            "t_i": self.enclave.t_i,
            "t_s": self.enclave.t_s,
            "pending": len(self.pending),
            "rejected": len(self.rejected),
            "adversary": self.adversary.model_dump(mode="json", exclude_defaults=True),
        }

    def balances(self) -> Dict[bytes, int]:
        accounts = {}
        for key, raw in self.tree.items():
            if key.startswith(b"acct/"):
                account = canonical_decode(raw, Account)
                accounts[account.address] = account.balance
        return accounts

    def state_at(self, version: int) -> Optional[Dict[bytes, bytes]]:
        """Full ledger state after ``version``; None once rolled back. Treat the result as read-only."""
        if version < 0 or version > len(self.headers):
            return None
        start, base = self._state_cursor
        if start > version:
            start, base = 0, self._genesis_state
        if start == version:
            return base
        state = dict(base)
        for v in range(start + 1, version + 1):
            for key, value in self._writes[v].items():
                if value is None:
                    state.pop(key, None)
                else:
                    state[key] = value
        self._state_cursor = (version, state)
        return state

    def totals(self, version: Optional[int] = None) -> Optional[LedgerTotals]:
        entries = dict(self.tree.items()) if version is None else self.state_at(version)
        return ledger_totals(entries) if entries is not None else None

    def is_idle(self) -> bool:
        """Nothing queued, nothing awaiting sync, no escalation this node would still relay."""
        if self.pending:
            return False
        if not self.adversary.drop_sync:
            if self._sync_tx is not None:
                return False
            if self.enclave.lroot_cur is not None and self.enclave.lroot_cur != self.enclave.lroot_pb:
                return False
        if self.adversary.honest or self.adversary.relay_escalations:
            state = self.ipsc_state()
            if state is not None and any(
                not info.resolved and index not in self._relay_done
                for index, info in enumerate(state.cens_reqs)
            ):
                return False
        return True
