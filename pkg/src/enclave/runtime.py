"""
Simulated enclave program.

One ``Enclave`` per CBDC instance. It owns the signing keys, the frozen-hash
cache of the ledger's history tree and the supply counters, executes
batches through the native VM and signs version-transition pairs for IPSC.
Calls are serialized by the operator; every output is an immutable value.
"""

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

from ..authlog.frozen_hash import fh_reduce, fh_update
from ..authlog.history_tree import inc_verify, mem_verify
from ..authlog.merkle import leaf_hash, mk_root_or_empty, mk_verify
from ..authlog.state_tree import SparseStateTree, verify_state_proofs
from ..ledger.inflation import allowed_issued, meets_inflation_rate
from ..ledger.iomc import ExecutionContext
from ..ledger.state import MissingStateError, account_key, address_of, genesis_entries
from ..ledger.vm import VmError, run_vm
from ..models.chain import cens_qry_statement, cens_tx_statement, replace_statement
from ..models.crypto import AttestationQuote, PublicKey, SealedBox, Scheme, Signature
from ..models.enclave import (
    CensStatus,
    EnclaveKeys,
    EscalatedQuery,
    EscalatedTx,
    VersionTransitionPair,
)
from ..models.ledger import (
    AccessTicket,
    ForeignEvidence,
    Header,
    Issue,
    MicroTransaction,
    PartialState,
    Receipt,
    Register,
    Status,
    TransferEvidence,
)
from ..models.node import (
    AccountAnswer,
    Answer,
    IncProofAnswer,
    MemProofAnswer,
    QueryAccount,
    QueryIncProof,
    QueryMemProof,
    QueryReceipt,
    ReceiptAnswer,
)
from ..models.proofs import Commitment, FrozenHashCache
from ..utils import get_logger, log_enclave_exec
from ..utils.clock import VirtualClock
from ..utils.crypto import (
    Seed,
    attest,
    hash_bytes,
    keygen,
    open_sealed,
    seal,
    sealing_keygen,
    sign,
)
from ..utils.encoding import EncodingError, canonical_decode
from .light_client import FinalizedReader, LightClient, UnknownInstanceError

logger = get_logger(__name__)

MEASUREMENT = hash_bytes(b"cbdc/prog-E/v1")


class EnclaveError(Exception):
    """Base class for refused enclave calls; the enclave state is unchanged."""
    pass


class StaleStateError(EnclaveError):
    pass


class IssuanceError(EnclaveError):
    pass


class RegistrationError(EnclaveError):
    pass


@dataclass(frozen=True)
class ExecOutput:
    pair: VersionTransitionPair
    partial_state: PartialState
    header: Header
    receipts: Tuple[Receipt, ...]
    accepted: Tuple[MicroTransaction, ...]
    rejected: Tuple[MicroTransaction, ...]


@dataclass
class _Instance:
    instance_id: str
    t_i0: int
    i_r: Fraction
    created_at: int
    issue_authority: bool
    htlc_timeout: int
    ticket_window: int


@dataclass
class _Relay:
    """Escalated requests this enclave decrypted, keyed by ciphertext hash."""
    txs: Dict[bytes, bytes] = field(default_factory=dict)
    queries: Dict[bytes, EscalatedQuery] = field(default_factory=dict)


class Enclave:
    """
    The trusted program of one instance.

    Lifecycle: ``init`` (keys and quote), ``configure`` (genesis parameters),
    then any number of ``exec``/``flush`` rounds. ``restore`` replaces
    ``configure`` for an enclave that takes over a failed one.
    """

    def __init__(self, clock: VirtualClock, seed: Optional[Seed] = None, label: str = "enclave"):
        self.clock = clock
        self._seed = seed
        self._label = label
        self._initialized = False
        self._instance: Optional[_Instance] = None
        self.light_client: Optional[LightClient] = None

        self.hdr_last: Optional[Header] = None
        self.lroot_pb: Optional[bytes] = None
        self.lroot_cur: Optional[bytes] = None
        self.id_cur = 0
        self.fh_cur = FrozenHashCache()
        self.t_i = 0
        self.t_s = 0
        self._st_root: Optional[bytes] = None
        self._emitted: Dict[bytes, int] = {}
        self._since_flush: List[bytes] = []
        self._outcomes: Dict[bytes, Optional[Status]] = {}
        self._relay = _Relay()

    # --- lifecycle ---------------------------------------------------------

    def init(self) -> Tuple[EnclaveKeys, AttestationQuote]:
        """Generate keys, reset state and attest to the program measurement."""
        if self._initialized:
            raise EnclaveError("Enclave already initialized")
        self._sk_tee = keygen(Scheme.TEE, self._seed, f"{self._label}/tee")
        self._sk_pb = keygen(Scheme.PB, self._seed, f"{self._label}/pb")
        self._sealing = sealing_keygen(self._seed, f"{self._label}/seal")
        self.id_cur = 1
        self._initialized = True
        keys = self.keys
        quote = attest(MEASUREMENT, keys.pk_tee, keys.encode())
        logger.info("Enclave %s initialized (pk_pb %s)", self._label, keys.pk_pb.short())
        return keys, quote

    @property
    def keys(self) -> EnclaveKeys:
        self._require_init()
        return EnclaveKeys(
            pk_tee=self._sk_tee.public,
            pk_pb=self._sk_pb.public,
            sealing_pk=self._sealing.public,
        )

    @property
    def instance_id(self) -> str:
        self._require_configured()
        return self._instance.instance_id

    @property
    def issue_authority(self) -> bool:
        self._require_configured()
        return self._instance.issue_authority

    def configure(
        self,
        instance_id: str,
        treasury_pk: PublicKey,
        t_i0: int,
        i_r: Fraction,
        created_at: int,
        issue_authority: bool,
        htlc_timeout: int,
        ticket_window: int,
        reader: Optional[FinalizedReader] = None,
    ) -> bytes:
        """Bind to an instance and compute the genesis state root."""
        self._require_init()
        if self._instance is not None:
            raise EnclaveError("Enclave already bound to an instance")
        self._instance = _Instance(
            instance_id, t_i0, Fraction(i_r), created_at, issue_authority, htlc_timeout, ticket_window
        )
        self._st_root = SparseStateTree(genesis_entries(treasury_pk, t_i0)).root
        self.t_i = self.t_s = t_i0
        self.light_client = LightClient(instance_id, reader)
        return self._st_root

    def restore(
        self,
        instance_id: str,
        t_i0: int,
        i_r: Fraction,
        created_at: int,
        issue_authority: bool,
        htlc_timeout: int,
        ticket_window: int,
        headers: Sequence[Header],
        lroot_pb: bytes,
        t_i: int,
        t_s: int,
        reader: Optional[FinalizedReader] = None,
    ) -> VersionTransitionPair:
        """
        Take over from a failed enclave at the last public snapshot.

        Replays the header chain into a fresh frozen-hash cache; the result
        must reduce to ``lroot_pb``. Returns the catch-up pair signed with
        this enclave's key, to be embedded in ReplaceEnc.
        """
        self._require_init()
        if self._instance is not None:
            raise EnclaveError("Enclave already bound to an instance")
        if not headers:
            raise EnclaveError("Cannot restore from an empty history")
        cache = FrozenHashCache()
        emitted: Dict[bytes, int] = {}
        for record_id, header in enumerate(headers, start=1):
            if header.id != record_id:
                raise EnclaveError(f"Header {header.id} out of order at {record_id}")
            cache = fh_update(cache, leaf_hash(header.encode()), record_id)
            emitted[fh_reduce(cache)] = record_id
        if fh_reduce(cache) != lroot_pb:
            raise EnclaveError("Replayed history does not match the public snapshot")
        if not meets_inflation_rate(t_i, t_i0, Fraction(i_r), created_at, self.clock.now()):
            raise IssuanceError("Restored issuance exceeds the inflation cap")

        self._instance = _Instance(
            instance_id, t_i0, Fraction(i_r), created_at, issue_authority, htlc_timeout, ticket_window
        )
        self.fh_cur = cache
        self.hdr_last = headers[-1]
        self._st_root = headers[-1].st_root
        self.id_cur = len(headers) + 1
        self.lroot_pb = self.lroot_cur = lroot_pb
        self._emitted = emitted
        self.t_i, self.t_s = t_i, t_s
        self.light_client = LightClient(instance_id, reader)
        logger.info("Enclave %s restored %s at version %d", self._label, instance_id[:12], len(headers))
        return self._pair(lroot_pb, lroot_pb)

    def replacement_statement(self, pair: VersionTransitionPair) -> bytes:
        return replace_statement(self.keys, pair)

    # --- execution ---------------------------------------------------------

    @property
    def st_root(self) -> Optional[bytes]:
        return self._st_root

    def allowed_issued(self, now: Optional[int] = None) -> int:
        self._require_configured()
        inst = self._instance
        return allowed_issued(inst.t_i0, inst.i_r, inst.created_at, self.clock.now() if now is None else now)

    def _context(self) -> ExecutionContext:
        inst = self._instance
        return ExecutionContext(
            now=self.clock.now(),
            local_ipsc=inst.instance_id,
            htlc_timeout=inst.htlc_timeout,
            ticket_window=inst.ticket_window,
            batch_id=self.id_cur,
            system_pk=self._sk_pb.public,
            verify_foreign=self._verify_for_vm,
            issue_ticket=self._ticket,
            may_issue=lambda total: meets_inflation_rate(
                self.t_i + total, inst.t_i0, inst.i_r, inst.created_at, self.clock.now()
            ),
        )

    def exec(self, txs: Sequence[MicroTransaction], partial: PartialState) -> ExecOutput:
        """
        Run a batch and advance the history by one header.

        The partial state must be rooted at the last header's state root.
        On any error nothing is applied.
        """
        self._require_configured()
        if partial.root != self._st_root:
            raise StaleStateError("Partial state is not rooted at the last header")
        try:
            result = run_vm(txs, partial, self._context())
        except (VmError, MissingStateError) as exc:
            raise StaleStateError(str(exc)) from exc

        header = Header(
            id=self.id_cur,
            txs_root=mk_root_or_empty([tx.encode() for tx in result.accepted]),
            rcp_root=mk_root_or_empty([receipt.encode() for receipt in result.receipts]),
            st_root=result.partial_state.root,
        )
        self.fh_cur = fh_update(self.fh_cur, leaf_hash(header.encode()), self.id_cur)
        self.lroot_cur = fh_reduce(self.fh_cur)
        self._emitted[self.lroot_cur] = self.id_cur
        self._since_flush.append(self.lroot_cur)
        self.hdr_last = header
        self._st_root = header.st_root
        self.id_cur += 1
        self.t_s += result.supply_delta
        self.t_i += result.issued_delta
        for receipt in result.receipts:
            self._outcomes[receipt.tx_hash] = receipt.status
        for tx in result.rejected:
            self._outcomes.setdefault(tx.tx_hash, None)

        log_enclave_exec(
            self._instance.instance_id, header.id, len(result.accepted), len(result.rejected),
            self.clock.now(),
        )
        return ExecOutput(
            pair=self._pair(self.lroot_pb, self.lroot_cur),
            partial_state=result.partial_state,
            header=header,
            receipts=tuple(result.receipts),
            accepted=tuple(result.accepted),
            rejected=tuple(result.rejected),
        )

    def _pair(self, root_from: Optional[bytes], root_to: bytes) -> VersionTransitionPair:
        unsigned = VersionTransitionPair(root_from=root_from, root_to=root_to, t_i=self.t_i, t_s=self.t_s)
        return unsigned.model_copy(update={"signature": sign(self._sk_pb, unsigned.signing_payload())})

    def sign_current_pair(self) -> VersionTransitionPair:
        """Pair from the flushed root to the current one, for resubmission."""
        self._require_configured()
        if self.lroot_cur is None:
            raise EnclaveError("Nothing executed yet")
        return self._pair(self.lroot_pb, self.lroot_cur)

    def flush(self, accepted_root: Optional[bytes] = None) -> None:
        """Shift LRoot_pb to the root IPSC accepted (default: the current root)."""
        self._require_configured()
        if accepted_root is None:
            if self.lroot_cur is not None:
                self.lroot_pb = self.lroot_cur
            self._since_flush.clear()
            return
        if accepted_root not in self._since_flush:
            raise EnclaveError("Flushed root was not emitted since the last flush")
        self.lroot_pb = accepted_root
        del self._since_flush[: self._since_flush.index(accepted_root) + 1]

    # --- registration and issuance -----------------------------------------

    def _ticket(self, client_pk: PublicKey, expires_at: int) -> AccessTicket:
        unsigned = AccessTicket(
            client_pk=client_pk, issuing_ipsc=self._instance.instance_id, expires_at=expires_at
        )
        return unsigned.model_copy(update={"signature": sign(self._sk_tee, unsigned.signing_payload())})

    def _system_tx(self, call) -> MicroTransaction:
        unsigned = MicroTransaction(sender_pk=self._sk_pb.public, nonce=self.id_cur, call=call)
        return unsigned.model_copy(update={"signature": sign(self._sk_pb, unsigned.signing_payload())})

    def _verified_value(self, partial: PartialState, key: bytes) -> Optional[bytes]:
        if partial.root != self._st_root:
            raise StaleStateError("Partial state is not rooted at the last header")
        values = partial.values()
        if key not in values:
            raise StaleStateError("Partial state lacks the entry this call needs")
        if not verify_state_proofs(values, partial.witness, partial.root):
            raise StaleStateError("Partial state witness does not verify")
        return values[key]

    def register_client(
        self, client_pk: PublicKey, window: int, partial: PartialState
    ) -> Tuple[ExecOutput, AccessTicket]:
        """Open an account for ``client_pk`` in a one-transaction batch and issue its ticket."""
        self._require_configured()
        if self._verified_value(partial, account_key(address_of(client_pk))) is not None:
            raise RegistrationError(f"Client {client_pk.short()} already registered")
        output = self.exec([self._system_tx(Register(pk=client_pk))], partial)
        if output.receipts[0].status != Status.OK:
            raise RegistrationError("Registration reverted")
        ticket = self._ticket(client_pk, self.clock.now() + window)
        logger.info("Registered client %s at %s", client_pk.short(), self._instance.instance_id[:12])
        return output, ticket

    def issue_tokens(self, amount: int, beneficiary: bytes, partial: PartialState) -> ExecOutput:
        """Mint ``amount`` to ``beneficiary`` within the inflation cap."""
        self._require_configured()
        if not self._instance.issue_authority:
            raise IssuanceError("Instance has no issue authority")
        if amount <= 0:
            raise IssuanceError("Amount must be positive")
        cap = self.allowed_issued()
        if self.t_i + amount > cap:
            raise IssuanceError(f"Issuing {amount} would exceed cap {cap} (issued {self.t_i})")
        if self._verified_value(partial, account_key(beneficiary)) is None:
            raise IssuanceError("Unknown beneficiary")
        return self.exec([self._system_tx(Issue(beneficiary=beneficiary, amount=amount))], partial)

    # --- foreign evidence --------------------------------------------------

    def verify_foreign_inclusion(self, foreign: ForeignEvidence) -> bool:
        """Light-client check of another instance's receipt; raises for untracked instances."""
        self._require_configured()
        return self.light_client.verify(foreign)

    def _verify_for_vm(self, foreign: ForeignEvidence) -> bool:
        try:
            return self.verify_foreign_inclusion(foreign)
        except UnknownInstanceError:
            return False

    # --- censorship relay --------------------------------------------------

    def open_censored_tx(self, etx: SealedBox) -> EscalatedTx:
        """Decrypt an escalated transaction so the operator can execute it."""
        self._require_init()
        try:
            request = canonical_decode(open_sealed(self._sealing, etx), EscalatedTx)
        except EncodingError as exc:
            raise EnclaveError(f"Malformed escalated transaction: {exc}") from exc
        self._relay.txs[hash_bytes(etx.encode())] = request.tx.tx_hash
        return request

    def resolve_censored_tx(self, etx: SealedBox) -> Tuple[CensStatus, Signature]:
        """Sign the outcome of an escalated transaction this enclave has processed."""
        self._require_init()
        tx_hash = self._relay.txs.get(hash_bytes(etx.encode()))
        if tx_hash is None:
            raise EnclaveError("Escalated transaction was never opened here")
        if tx_hash not in self._outcomes:
            raise EnclaveError("Escalated transaction not yet processed")
        outcome = self._outcomes[tx_hash]
        status = {Status.OK: CensStatus.OK, Status.REVERTED: CensStatus.REVERTED}.get(
            outcome, CensStatus.REJECTED
        )
        return status, sign(self._sk_pb, cens_tx_statement(etx, status))

    def open_censored_query(self, equery: SealedBox) -> EscalatedQuery:
        self._require_init()
        try:
            request = canonical_decode(open_sealed(self._sealing, equery), EscalatedQuery)
        except EncodingError as exc:
            raise EnclaveError(f"Malformed escalated query: {exc}") from exc
        self._relay.queries[hash_bytes(equery.encode())] = request
        return request

    def answer_censored_query(
        self, equery: SealedBox, answer: Answer
    ) -> Tuple[CensStatus, SealedBox, Signature]:
        """
        Check the operator's answer against this enclave's own roots, seal it
        to the requester and sign the resolution.
        """
        self._require_init()
        request = self._relay.queries.get(hash_bytes(equery.encode()))
        if request is None:
            raise EnclaveError("Escalated query was never opened here")
        if not self._answer_is_sound(request, answer):
            raise EnclaveError("Operator answer does not match the enclave's ledger")
        edata = seal(request.reply_key, answer.encode(), self._ephemeral_seed(equery))
        status = CensStatus.ANSWERED
        return status, edata, sign(self._sk_pb, cens_qry_statement(equery, status, edata))

    def _ephemeral_seed(self, box: SealedBox) -> Optional[bytes]:
        if self._seed is None:
            return None
        return hash_bytes(f"{self._seed}/{self._label}".encode() + box.encode())

    def _commitment(self, root: bytes) -> Optional[Commitment]:
        version = self._emitted.get(root)
        return Commitment(version=version, root=root) if version is not None else None

    def _answer_is_sound(self, request: EscalatedQuery, answer: Answer) -> bool:
        query = request.query
        if isinstance(query, QueryReceipt) and isinstance(answer, ReceiptAnswer):
            evidence = answer.evidence
            lroot = self._commitment(evidence.lroot.root)
            return (
                evidence.receipt.tx_hash == query.tx_hash
                and lroot == evidence.lroot
                and mem_verify(evidence.mem_proof, evidence.hdr.id, evidence.hdr.encode(), lroot)
                and self._receipt_under_header(evidence)
            )
        if isinstance(query, QueryIncProof) and isinstance(answer, IncProofAnswer):
            newer = self._commitment(query.to_root)
            return (
                newer is not None
                and self._commitment(query.from_commitment.root) == query.from_commitment
                and inc_verify(answer.proof, query.from_commitment, newer)
            )
        if isinstance(query, QueryMemProof) and isinstance(answer, MemProofAnswer):
            roots = [root for root, version in self._emitted.items() if version == query.version]
            return bool(roots) and mem_verify(
                answer.proof, query.index, answer.header.encode(),
                Commitment(version=query.version, root=roots[0]),
            )
        if isinstance(query, QueryAccount) and isinstance(answer, AccountAnswer):
            key = account_key(address_of(query.pk))
            value = answer.account.encode() if answer.account is not None else None
            return (
                answer.st_root == self._st_root
                and answer.proof.key == key
                and verify_state_proofs({key: value}, [answer.proof], self._st_root)
            )
        return False

    @staticmethod
    def _receipt_under_header(evidence: TransferEvidence) -> bool:
        return mk_verify(evidence.rcp_proof, evidence.receipt.encode(), evidence.hdr.rcp_root)

    # --- guards ------------------------------------------------------------

    def _require_init(self) -> None:
        if not self._initialized:
            raise EnclaveError("Enclave not initialized")

    def _require_configured(self) -> None:
        self._require_init()
        if self._instance is None:
            raise EnclaveError("Enclave not bound to an instance")
