"""
Client wallet: the client role C.

Holds the client's key pair (also its public-chain identity, so tickets it
receives can be used at IPSCs), a sealing key for escalated query answers,
per-instance registrations and nonces. The four transfer phases, recovery
and escalation are re-entrant methods over a shared ``TransferState``: each
call does what it can now and returns, so the orchestrator can interleave
many transfers on one virtual clock.
"""

from dataclasses import dataclass
from typing import Dict, Optional, Union

from ..authlog.history_tree import inc_verify, mem_verify
from ..authlog.merkle import mk_verify
from ..authlog.state_tree import verify_state_proofs
from ..chain import ChainAccount, ChainReader, PublicChain
from ..chain.ipsc import get_cens_req
from ..enclave import MEASUREMENT
from ..ledger.state import account_key, address_of
from ..models.chain import CensQryArgs, CensTxArgs, ChainTxStatus, IpscState
from ..models.crypto import AttestationQuote, PublicKey
from ..models.enclave import EscalatableQuery, EscalatedQuery, EscalatedTx
from ..models.ledger import (
    AccessTicket,
    Account,
    ForeignEvidence,
    IomcCall,
    IomcContract,
    MicroTransaction,
    ReceiveCommitArgs,
    ReceiveInitArgs,
    ReceiveInitialized,
    Reverted,
    SendCommitArgs,
    SendInitArgs,
    SendInitialized,
    SendRevertArgs,
    Status,
    Transfer,
    TransferEvidence,
)
from ..models.node import (
    PAYLOAD_KINDS,
    REJECTED,
    UNKNOWN_ROOT,
    AccountAnswer,
    Answer,
    ClientMessage,
    IncProofAnswer,
    QueryAccount,
    QueryIncProof,
    QueryReceipt,
    ReceiptAnswer,
    RegisterClient,
    Registration,
    SubmitTx,
)
from ..models.proofs import Commitment
from ..models.state import Escalation, TransferState, transition_phase
from ..utils import get_logger
from ..utils.clock import VirtualClock
from ..utils.config import Settings
from ..utils.crypto import (
    CryptoError,
    Seed,
    derive_secret,
    hash_bytes,
    open_sealed,
    seal,
    sealing_keygen,
    sign,
    verify,
    verify_quote,
)
from ..utils.encoding import EncodingError, canonical_decode
from .channel import Channel

logger = get_logger(__name__)

SECRET_BYTES = 32


class WalletError(Exception):
    """A wallet operation failed; the transfer may retry later."""
    pass


class TransferAborted(WalletError):
    """The transfer cannot continue on this side."""
    pass


@dataclass
class Reply:
    answer: Optional[Answer] = None
    error: str = ""
    dropped: bool = False


def verify_evidence(evidence: TransferEvidence) -> bool:
    """All-or-nothing check of a receipt package against its own ``lroot``."""
    tx = evidence.mu_tx
    return (
        evidence.receipt.tx_hash == tx.tx_hash
        and verify(tx.sender_pk, tx.signing_payload(), tx.signature)
        and mem_verify(evidence.mem_proof, evidence.hdr.id, evidence.hdr.encode(), evidence.lroot)
        and mk_verify(evidence.rcp_proof, evidence.receipt.encode(), evidence.hdr.rcp_root)
    )


def revert_reason(evidence: TransferEvidence) -> str:
    event = evidence.receipt.event(Reverted)
    return event.reason if event is not None else evidence.receipt.status.value


def _iomc(evidence: TransferEvidence, contract: IomcContract, method: str) -> Optional[IomcCall]:
    call = evidence.mu_tx.call
    if isinstance(call, IomcCall) and call.contract == contract and call.canonical_method == method:
        return call
    return None


class ClientWallet:
    def __init__(
        self,
        name: str,
        clock: VirtualClock,
        chain: PublicChain,
        reader: ChainReader,
        channels: Dict[str, Channel],
        settings: Settings,
        seed: Optional[Seed] = None,
    ):
        self.name = name
        self.clock = clock
        self.chain = chain
        self.reader = reader
        self.channels = channels
        self.settings = settings
        self.seed = seed
        self.account = ChainAccount.generate(seed, f"{name}/key")
        self.sealing = sealing_keygen(seed, f"{name}/seal")
        self.registrations: Dict[str, Registration] = {}
        self._nonces: Dict[str, int] = {}
        self._requests: Dict[str, EscalatableQuery] = {}
        self._answers: Dict[str, Answer] = {}

    @property
    def pk(self) -> PublicKey:
        return self.account.pk

    def address(self) -> bytes:
        return address_of(self.pk)

    # --- transport ---------------------------------------------------------

    def _message(self, payload, phase: int) -> ClientMessage:
        unsigned = ClientMessage(kind=PAYLOAD_KINDS[type(payload)], payload=payload, sender_pk=self.pk, phase=phase)
        return unsigned.model_copy(update={"signature": sign(self.account.keypair, unsigned.signing_payload())})

    def send(self, ipsc: str, payload, phase: int = 0) -> Reply:
        channel = self.channels.get(ipsc)
        if channel is None:
            raise WalletError(f"No channel to instance {ipsc[:12]}")
        response = channel.request(self._message(payload, phase))
        if response is None:
            return Reply(dropped=True)
        if not response.ok:
            return Reply(error=response.error)
        return Reply(answer=response.payload)

    # --- registration and accounts -----------------------------------------

    def register(self, ipsc: str) -> Registration:
        reply = self.send(ipsc, RegisterClient(pk=self.pk))
        if not isinstance(reply.answer, Registration):
            raise WalletError(f"Registration at {ipsc[:12]} failed: {reply.error or 'no answer'}")
        registration = reply.answer
        if registration.ticket.client_pk != self.pk or registration.ticket.issuing_ipsc != ipsc:
            raise WalletError("Registration ticket issued for someone else")
        self.registrations[ipsc] = registration
        logger.info("Wallet %s registered at %s", self.name, ipsc[:12])
        return registration

    def attest_instance(self, ipsc: str, quote: AttestationQuote) -> None:
        """Check the operator's quote: right program, and the keys IPSC currently holds."""
        ipsc_state = self.chain.read_latest(ipsc)
        if not isinstance(ipsc_state, IpscState):
            raise WalletError(f"No IPSC at {ipsc[:12]}")
        try:
            genuine = verify_quote(quote, MEASUREMENT)
        except CryptoError as exc:
            raise WalletError(f"Attestation of {ipsc[:12]} failed: {exc}") from exc
        keys = ipsc_state.keys
        if not genuine or quote.enclave_pk != keys.pk_tee or quote.report_data != keys.encode():
            raise WalletError(f"Attestation of {ipsc[:12]} does not match its IPSC keys")

    def ticket(self, ipsc: str) -> Optional[AccessTicket]:
        registration = self.registrations.get(ipsc)
        return registration.ticket if registration is not None else None

    def account_at(self, ipsc: str) -> Optional[Account]:
        """Own account at ``ipsc``, checked against the returned state root; None when unanswered."""
        reply = self.send(ipsc, QueryAccount(pk=self.pk))
        answer = reply.answer
        if not isinstance(answer, AccountAnswer):
            return None
        key = account_key(self.address())
        value = answer.account.encode() if answer.account is not None else None
        if answer.proof.key != key or not verify_state_proofs({key: value}, [answer.proof], answer.st_root):
            raise WalletError("Account answer does not match its state proof")
        return answer.account

    def balance(self, ipsc: str) -> Optional[int]:
        account = self.account_at(ipsc)
        return account.balance if account is not None else None

    def _next_nonce(self, ipsc: str) -> int:
        if ipsc not in self._nonces:
            account = self.account_at(ipsc)
            self._nonces[ipsc] = account.nonce if account is not None else 0
        nonce = self._nonces[ipsc]
        self._nonces[ipsc] = nonce + 1
        return nonce

    def _resync_nonce(self, ipsc: str) -> None:
        self._nonces.pop(ipsc, None)

    def build_tx(self, ipsc: str, call, value: int = 0) -> MicroTransaction:
        unsigned = MicroTransaction(sender_pk=self.pk, nonce=self._next_nonce(ipsc), call=call, value=value)
        return unsigned.model_copy(update={"signature": sign(self.account.keypair, unsigned.signing_payload())})

    def transfer_local(self, ipsc: str, to: PublicKey, amount: int) -> Optional[bytes]:
        """Intra-bank payment; returns the tx hash, or None if the operator dropped it."""
        tx = self.build_tx(ipsc, Transfer(to=address_of(to), amount=amount))
        reply = self.send(ipsc, SubmitTx(tx=tx))
        if reply.error:
            self._resync_nonce(ipsc)
            raise WalletError(reply.error)
        return None if reply.dropped else tx.tx_hash

    # --- escalation --------------------------------------------------------

    def _ephemeral_seed(self, key: str) -> Optional[bytes]:
        if self.seed is None:
            return None
        return hash_bytes(f"{self.seed}/{self.name}/{key}".encode())

    @staticmethod
    def find_escalation(state: TransferState, key: str) -> Optional[Escalation]:
        return next((e for e in state["escalations"] if e["request_key"] == key), None)

    def c_escalate(
        self,
        state: TransferState,
        key: str,
        request: Union[MicroTransaction, EscalatableQuery],
        target_ipsc: str,
        ticket: Optional[AccessTicket],
        phase: int,
    ) -> Escalation:
        """Post ``request`` encrypted to the target enclave at its IPSC; idempotent per key."""
        existing = self.find_escalation(state, key)
        if existing is not None:
            return existing
        ipsc_state = self.reader.ipsc(target_ipsc)
        if ipsc_state is None or ticket is None:
            raise WalletError(f"Cannot escalate at {target_ipsc[:12]}: no IPSC or no ticket")
        sealing_pk = ipsc_state.sealing_pk_history[-1]
        if isinstance(request, MicroTransaction):
            box = seal(sealing_pk, EscalatedTx(tx=request, phase=phase).encode(), self._ephemeral_seed(key))
            chain_tx = self.account.build(target_ipsc, "submitCensTx", CensTxArgs(etx=box, ticket=ticket))
            kind = "tx"
        else:
            plain = EscalatedQuery(query=request, requester=self.pk, reply_key=self.sealing.public, phase=phase)
            box = seal(sealing_pk, plain.encode(), self._ephemeral_seed(key))
            chain_tx = self.account.build(target_ipsc, "submitCensQry", CensQryArgs(equery=box, ticket=ticket))
            self._requests[key] = request
            kind = "query"
        receipt = self.chain.submit(chain_tx)
        escalation = Escalation(
            request_key=key,
            requester=self.pk,
            kind=kind,
            ipsc=target_ipsc,
            phase=phase,
            chain_tx_hash=chain_tx.tx_hash,
            index=None,
            submitted_at=self.clock.now(),
            resolved=receipt.status == ChainTxStatus.REJECTED,
            status=receipt.status.value if receipt.status == ChainTxStatus.REJECTED else None,
            proof_of_censorship=False,
        )
        state["escalations"].append(escalation)
        logger.info("Wallet %s escalated %s %s at %s", self.name, kind, key, target_ipsc[:12])
        return escalation

    def poll_escalation(self, escalation: Escalation) -> Optional[Answer]:
        """
        Refresh an escalation from the finalized chain.

        Returns the decrypted answer of a resolved query. An entry still
        unresolved past the deadline is flagged as proof of censorship.
        """
        key = escalation["request_key"]
        if escalation["resolved"]:
            return self._answers.get(key)
        if escalation["index"] is None:
            receipt = self.chain.finalized_receipt(escalation["chain_tx_hash"])
            if receipt is None:
                return None
            if receipt.status != ChainTxStatus.OK:
                # The contract refused the request itself, e.g. an expired ticket.
                escalation["resolved"] = True
                escalation["status"] = f"CONTRACT_{receipt.status.value}"
                logger.warning("Escalation %s refused at IPSC: %s", key, receipt.reason)
                return None
            escalation["index"] = receipt.result
        ipsc_state = self.reader.ipsc(escalation["ipsc"])
        info = get_cens_req(ipsc_state, escalation["index"]) if ipsc_state is not None else None
        if info is not None and info.resolved:
            escalation["resolved"] = True
            escalation["status"] = info.status.value
            if info.edata is not None:
                try:
                    self._answers[key] = canonical_decode(open_sealed(self.sealing, info.edata))
                except (CryptoError, EncodingError) as exc:
                    logger.warning("Cannot open resolution of %s: %s", key, exc)
            return self._answers.get(key)
        if self.clock.now() - escalation["submitted_at"] > self.settings.deadline_seconds:
            if not escalation["proof_of_censorship"]:
                logger.warning("Escalation %s unresolved past deadline at %s", key, escalation["ipsc"][:12])
            escalation["proof_of_censorship"] = True
        return None

    def _past_deadline(self, state: TransferState) -> bool:
        return self.clock.now() - state["phase_started_at"] > self.settings.deadline_seconds

    def _escalated_answer(
        self,
        state: TransferState,
        key: str,
        ipsc: str,
        query: EscalatableQuery,
        phase: int,
        ticket: Optional[AccessTicket],
        escalate_now: bool,
    ) -> Optional[Answer]:
        escalation = self.find_escalation(state, key)
        if escalation is None:
            if not (escalate_now or self._past_deadline(state)) or ticket is None:
                return None
            escalation = self.c_escalate(state, key, query, ipsc, ticket, phase)
        return self.poll_escalation(escalation)

    # --- step helpers ------------------------------------------------------

    def _submit_step(self, state: TransferState, step: str, ipsc: str, call, value: int,
                     phase: int, ticket: Optional[AccessTicket]) -> bytes:
        """Submit the micro-transaction of ``step`` once; a dropped submission is escalated."""
        tx = self.build_tx(ipsc, call, value)
        reply = self.send(ipsc, SubmitTx(tx=tx), phase)
        if reply.error:
            self._resync_nonce(ipsc)
            raise TransferAborted(f"{step} refused: {reply.error}")
        state["submitted"][step] = tx.tx_hash
        if reply.dropped:
            self.c_escalate(state, self._tx_key(step, tx.tx_hash), tx, ipsc, ticket, phase)
        return tx.tx_hash

    @staticmethod
    def _tx_key(step: str, tx_hash: bytes) -> str:
        return f"{step}/tx/{tx_hash.hex()[:16]}"

    def _receipt_step(self, state: TransferState, step: str, ipsc: str, phase: int,
                      ticket: Optional[AccessTicket], snapshotted: bool = True) -> Optional[TransferEvidence]:
        """
        Evidence for the transaction of ``step``; None while waiting.

        With ``snapshotted`` the receipt is requested relative to the
        instance's finalized IPSC snapshot, so it is only returned once
        that snapshot covers it.
        """
        tx_hash = state["submitted"][step]
        tx_escalation = self.find_escalation(state, self._tx_key(step, tx_hash))
        if tx_escalation is not None:
            self.poll_escalation(tx_escalation)
            if tx_escalation["status"] == "REJECTED":
                self._forget_step(state, step, ipsc)
                return None

        at_root = self.reader.snapshot_root(ipsc) if snapshotted else None
        reply = Reply()
        if at_root is not None or not snapshotted:
            reply = self.send(ipsc, QueryReceipt(tx_hash=tx_hash, at_root=at_root), phase)
        if isinstance(reply.answer, ReceiptAnswer):
            evidence = reply.answer.evidence
            if at_root is not None and evidence.lroot.root != at_root:
                raise WalletError("Receipt answered relative to another version")
        elif reply.error == REJECTED:
            self._forget_step(state, step, ipsc)
            return None
        else:
            answer = self._escalated_answer(
                state, f"{step}/receipt", ipsc, QueryReceipt(tx_hash=tx_hash), phase, ticket,
                escalate_now=reply.dropped,
            )
            if not isinstance(answer, ReceiptAnswer):
                return None
            evidence = answer.evidence
        if evidence.mu_tx.tx_hash != tx_hash or not verify_evidence(evidence):
            raise WalletError(f"Receipt evidence for {step} does not verify")
        return evidence

    def _forget_step(self, state: TransferState, step: str, ipsc: str) -> None:
        logger.info("Wallet %s resubmits %s: transaction was rejected", self.name, step)
        state["submitted"].pop(step, None)
        self._resync_nonce(ipsc)

    def _link(self, state: TransferState, key: str, ipsc: str, evidence: TransferEvidence,
              phase: int, ticket: Optional[AccessTicket]) -> Optional[ForeignEvidence]:
        """Tie ``evidence`` to the finalized snapshot of ``ipsc`` with an incremental proof."""
        lroot_pb = self.reader.snapshot_root(ipsc)
        if lroot_pb is None:
            return None
        query = QueryIncProof(from_commitment=evidence.lroot, to_root=lroot_pb)
        reply = self.send(ipsc, query, phase)
        if reply.error == UNKNOWN_ROOT:
            raise TransferAborted(f"Evidence root was never part of {ipsc[:12]}'s ledger")
        answer = reply.answer
        if not isinstance(answer, IncProofAnswer):
            if not reply.dropped and self.find_escalation(state, key) is None:
                return None
            answer = self._escalated_answer(state, key, ipsc, query, phase, ticket, escalate_now=reply.dropped)
            if not isinstance(answer, IncProofAnswer):
                return None
            lroot_pb = self._requests[key].to_root
        if lroot_pb not in self.reader.snapshot_roots(ipsc):
            return None
        newer = Commitment(version=answer.proof.to_version, root=lroot_pb)
        if not inc_verify(answer.proof, evidence.lroot, newer):
            raise TransferAborted("Incremental proof to the IPSC snapshot does not verify")
        return ForeignEvidence(ipsc=ipsc, evidence=evidence, inc_proof=answer.proof, lroot_pb=newer)

    def _now(self) -> int:
        return self.clock.now()

    # --- phase 1: sender escrows -------------------------------------------

    def c_phase1_init(self, state: TransferState) -> TransferState:
        sender_ipsc, receiver_ipsc = state["sender_ipsc"], state["receiver_ipsc"]
        ticket = self.ticket(sender_ipsc)
        if "sendInit" not in state["submitted"]:
            if not self.reader.is_approved(receiver_ipsc):
                raise TransferAborted("Receiver instance is not in the IMSC registry")
            balance = self.balance(sender_ipsc)
            if balance is not None and balance < state["amount"]:
                raise TransferAborted(f"Insufficient funds: {balance} < {state['amount']}")
            secret = derive_secret(self.seed, self.name, "secret", state["transfer_id"])[:SECRET_BYTES]
            state["secret"] = secret
            state["hashlock"] = hash_bytes(secret)
            call = IomcCall(
                contract=IomcContract.SEND,
                method="sendInit",
                args=SendInitArgs(receiver=state["receiver_pk"], receiver_ipsc=receiver_ipsc,
                                  hashlock=state["hashlock"]),
            )
            self._submit_step(state, "sendInit", sender_ipsc, call, state["amount"], 1, ticket)
            return state

        evidence = self._receipt_step(state, "sendInit", sender_ipsc, 1, ticket)
        if evidence is None:
            return state
        if evidence.receipt.status != Status.OK:
            raise TransferAborted(f"sendInit reverted: {revert_reason(evidence)}")
        event = evidence.receipt.event(SendInitialized)
        state["evidence"]["phase1"] = evidence
        state["tickets"]["receiver_at_sender"] = event.ticket
        state["timelock"] = event.timelock
        state["send_transfer_id"] = event.transfer_id
        return transition_phase(state, "phase2", self._now(), "escrow snapshotted")

    # --- phase 2: receiver records the incoming transfer -------------------

    def _check_ticket(self, ticket: Optional[AccessTicket], ipsc: str) -> None:
        ipsc_state = self.reader.ipsc(ipsc)
        valid = (
            ticket is not None
            and ipsc_state is not None
            and ticket.client_pk == self.pk
            and ticket.issuing_ipsc == ipsc
            and ticket.expires_at >= self._now()
            and any(verify(pk, ticket.signing_payload(), ticket.signature) for pk in ipsc_state.pk_tee_history)
        )
        if not valid:
            raise TransferAborted(f"No valid access ticket for {ipsc[:12]}")

    def _check_send_init(self, state: TransferState, evidence: TransferEvidence) -> None:
        call = _iomc(evidence, IomcContract.SEND, "sendInit")
        valid = (
            call is not None
            and verify_evidence(evidence)
            and evidence.receipt.status == Status.OK
            and evidence.mu_tx.sender_pk == state["sender_pk"]
            and evidence.mu_tx.value == state["amount"]
            and call.args.receiver == self.pk
            and call.args.receiver_ipsc == state["receiver_ipsc"]
            and evidence.receipt.event(SendInitialized) is not None
        )
        if not valid:
            raise TransferAborted("Phase-1 evidence does not name this receiver or does not verify")

    def c_phase2_receive(self, state: TransferState) -> TransferState:
        sender_ipsc, receiver_ipsc = state["sender_ipsc"], state["receiver_ipsc"]
        evidence1 = state["evidence"]["phase1"]
        ticket_at_sender = state["tickets"].get("receiver_at_sender")
        if "receiveInit" not in state["submitted"]:
            self._check_ticket(ticket_at_sender, sender_ipsc)
            self._check_send_init(state, evidence1)
            if self._link(state, "phase2/inc", sender_ipsc, evidence1, 2, ticket_at_sender) is None:
                return state
            call = IomcCall(
                contract=IomcContract.RECEIVE,
                method="receiveInit",
                args=ReceiveInitArgs(sender=state["sender_pk"], sender_ipsc=sender_ipsc,
                                     hashlock=evidence1.mu_tx.call.args.hashlock, amount=state["amount"]),
            )
            self._submit_step(state, "receiveInit", receiver_ipsc, call, 0, 2, self.ticket(receiver_ipsc))
            return state

        evidence = self._receipt_step(state, "receiveInit", receiver_ipsc, 2, self.ticket(receiver_ipsc))
        if evidence is None:
            return state
        if evidence.receipt.status != Status.OK:
            raise TransferAborted(f"receiveInit reverted: {revert_reason(evidence)}")
        event = evidence.receipt.event(ReceiveInitialized)
        state["evidence"]["phase2"] = evidence
        state["tickets"]["sender_at_receiver"] = event.ticket
        state["receive_transfer_id"] = event.transfer_id
        return transition_phase(state, "phase3", self._now(), "incoming transfer snapshotted")

    # --- phase 3: sender burns with proof of the receiving record ----------

    def c_phase3_commit(self, state: TransferState) -> TransferState:
        sender_ipsc, receiver_ipsc = state["sender_ipsc"], state["receiver_ipsc"]
        evidence2 = state["evidence"]["phase2"]
        ticket_at_receiver = state["tickets"].get("sender_at_receiver")
        if "sendCommit" not in state["submitted"]:
            if _iomc(evidence2, IomcContract.RECEIVE, "receiveInit") is None or not verify_evidence(evidence2):
                raise TransferAborted("Phase-2 evidence does not verify")
            foreign = self._link(state, "phase3/inc", receiver_ipsc, evidence2, 3, ticket_at_receiver)
            if foreign is None:
                return state
            call = IomcCall(
                contract=IomcContract.SEND,
                method="sendCommit",
                args=SendCommitArgs(
                    transfer_id=state["send_transfer_id"],
                    secret=state["secret"],
                    ext_transfer_id=state["receive_transfer_id"],
                    evidence=foreign,
                ),
            )
            self._submit_step(state, "sendCommit", sender_ipsc, call, 0, 3, self.ticket(sender_ipsc))
            return state

        evidence = self._receipt_step(state, "sendCommit", sender_ipsc, 3, self.ticket(sender_ipsc))
        if evidence is None:
            return state
        if evidence.receipt.status != Status.OK:
            state["error_state"] = {"type": "sendCommit", "message": revert_reason(evidence), "at": self._now()}
            return transition_phase(state, "recover", self._now(), "burn reverted")
        state["evidence"]["phase3"] = evidence
        state["burned"] = True
        return transition_phase(state, "phase4", self._now(), "burn snapshotted")

    # --- phase 4: receiver mints with proof of the burn ----------------------

    def _revealed_secret(self, state: TransferState, evidence: TransferEvidence) -> bytes:
        call = _iomc(evidence, IomcContract.SEND, "sendCommit")
        if call is None or hash_bytes(call.args.secret) != state["hashlock"]:
            raise TransferAborted("Burn evidence does not reveal the secret")
        return call.args.secret

    def c_phase4_claim(self, state: TransferState) -> TransferState:
        sender_ipsc, receiver_ipsc = state["sender_ipsc"], state["receiver_ipsc"]
        evidence3 = state["evidence"]["phase3"]
        ticket_at_sender = state["tickets"].get("receiver_at_sender")
        if "receiveClaim" not in state["submitted"]:
            if not verify_evidence(evidence3):
                raise TransferAborted("Phase-3 evidence does not verify")
            secret = self._revealed_secret(state, evidence3)
            foreign = self._link(state, "phase4/inc", sender_ipsc, evidence3, 4, ticket_at_sender)
            if foreign is None:
                return state
            call = IomcCall(
                contract=IomcContract.RECEIVE,
                method="receiveClaim",
                args=ReceiveCommitArgs(transfer_id=state["receive_transfer_id"], secret=secret, evidence=foreign),
            )
            self._submit_step(state, "receiveClaim", receiver_ipsc, call, 0, 4, self.ticket(receiver_ipsc))
            return state

        evidence = self._receipt_step(state, "receiveClaim", receiver_ipsc, 4, self.ticket(receiver_ipsc))
        if evidence is None:
            return state
        if evidence.receipt.status != Status.OK:
            state["error_state"] = {"type": "receiveClaim", "message": revert_reason(evidence), "at": self._now()}
            return transition_phase(state, "aborted", self._now(), "claim reverted")
        state["evidence"]["phase4"] = evidence
        state["minted"] = True
        return transition_phase(state, "done", self._now(), "mint snapshotted")

    def c_claim_without_burn(self, state: TransferState) -> TransferState:
        """Colluding receiver: claim with the leaked secret and no proof of the burn."""
        receiver_ipsc = state["receiver_ipsc"]
        after = "reverted" if state["refunded"] else "recover"
        if state["receive_transfer_id"] is None or state["secret"] is None:
            return transition_phase(state, after, self._now(), "nothing to claim")
        if "collusionClaim" not in state["submitted"]:
            call = IomcCall(
                contract=IomcContract.RECEIVE,
                method="receiveClaim",
                args=ReceiveCommitArgs(transfer_id=state["receive_transfer_id"], secret=state["secret"]),
            )
            self._submit_step(state, "collusionClaim", receiver_ipsc, call, 0, 4, self.ticket(receiver_ipsc))
            return state
        evidence = self._receipt_step(state, "collusionClaim", receiver_ipsc, 4, self.ticket(receiver_ipsc),
                                      snapshotted=False)
        if evidence is None:
            return state
        state["collusion_claim_status"] = evidence.receipt.status.value
        if evidence.receipt.status == Status.OK:
            state["minted"] = True
        return transition_phase(state, after, self._now(), f"claim without burn {evidence.receipt.status.value}")

    # --- recovery -------------------------------------------------------------

    def c_recover(self, state: TransferState) -> TransferState:
        """After the timelock, refund the escrow with sendRevert."""
        sender_ipsc = state["sender_ipsc"]
        if state["send_transfer_id"] is None:
            return transition_phase(state, "aborted", self._now(), "nothing escrowed")
        if state["timelock"] is None or self._now() < state["timelock"]:
            return state
        if "sendRevert" not in state["submitted"]:
            call = IomcCall(
                contract=IomcContract.SEND,
                method="sendRevert",
                args=SendRevertArgs(transfer_id=state["send_transfer_id"]),
            )
            self._submit_step(state, "sendRevert", sender_ipsc, call, 0, 1, self.ticket(sender_ipsc))
            return state
        evidence = self._receipt_step(state, "sendRevert", sender_ipsc, 1, self.ticket(sender_ipsc),
                                      snapshotted=False)
        if evidence is None:
            return state
        if evidence.receipt.status != Status.OK:
            state["error_state"] = {"type": "sendRevert", "message": revert_reason(evidence), "at": self._now()}
            return transition_phase(state, "aborted", self._now(), "refund reverted")
        state["refunded"] = True
        if (state["leak_secret"] == "after_refund" and state["collusion_claim_status"] is None
                and state["receive_transfer_id"] is not None):
            return transition_phase(state, "phase4", self._now(), "refunded; receiver tries a late claim")
        return transition_phase(state, "reverted", self._now(), "escrow refunded")
