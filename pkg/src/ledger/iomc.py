"""
Interoperability micro contracts, executed natively by the VM.

IOMC^S escrows, burns and refunds on the sending instance; IOMC^R records
incoming transfers and mints once the sending side proves the burn. Both
may touch the instance's total supply, which ordinary calls cannot.
"""

from dataclasses import dataclass, field
from typing import Callable, List, Optional

from ..models.crypto import PublicKey
from ..models.ledger import (
    AccessTicket,
    Event,
    ForeignEvidence,
    FundArgs,
    IomcCall,
    IomcContract,
    LockedTransferIn,
    LockedTransferOut,
    MicroTransaction,
    ReceiveCommitArgs,
    ReceiveCommitted,
    ReceiveInitArgs,
    ReceiveInitialized,
    SendCommitArgs,
    SendCommitted,
    SendInitArgs,
    SendInitialized,
    SendReverted,
    SendRevertArgs,
    Funded,
)
from ..utils.crypto import hash_bytes, verify
from .state import (
    IN_COUNT_KEY,
    IOMC_RECEIVE_ADDRESS,
    IOMC_SEND_ADDRESS,
    OUT_COUNT_KEY,
    StateView,
    address_of,
)


class Revert(Exception):
    """A call failed; the VM records a REVERTED receipt and rolls back its writes."""
    pass


@dataclass
class ExecutionContext:
    """Everything a batch may depend on besides its transactions and state."""
    now: int
    local_ipsc: str
    htlc_timeout: int
    ticket_window: int
    batch_id: int = 0
    system_pk: Optional[PublicKey] = None
    verify_foreign: Callable[[ForeignEvidence], bool] = lambda evidence: False
    issue_ticket: Callable[[PublicKey, int], AccessTicket] = None
    may_issue: Callable[[int], bool] = lambda total: False


@dataclass
class CallEffect:
    events: List[Event] = field(default_factory=list)
    supply_delta: int = 0


PAYABLE = {"sendInit", "fund"}


def _require(condition: bool, reason: str) -> None:
    if not condition:
        raise Revert(reason)


def _credit(view: StateView, address: bytes, amount: int) -> None:
    account = view.account(address)
    _require(account is not None, "unknown account")
    view.put_account(account.model_copy(update={"balance": account.balance + amount}))


def _debit(view: StateView, address: bytes, amount: int) -> None:
    account = view.account(address)
    _require(account is not None, "unknown account")
    _require(account.balance >= amount, "insufficient balance")
    view.put_account(account.model_copy(update={"balance": account.balance - amount}))


def _signed_by_sender(tx: MicroTransaction) -> bool:
    return verify(tx.sender_pk, tx.signing_payload(), tx.signature)


def send_init(view: StateView, ctx: ExecutionContext, caller: PublicKey,
              args: SendInitArgs, value: int) -> CallEffect:
    _require(value > 0, "value must be positive")
    transfer_id = view.counter(OUT_COUNT_KEY)
    timelock = ctx.now + ctx.htlc_timeout
    record = LockedTransferOut(
        sender=caller,
        receiver=args.receiver,
        receiver_ipsc=args.receiver_ipsc,
        amount=value,
        hashlock=args.hashlock,
        timelock=timelock,
    )
    view.put_transfer_out(transfer_id, record)
    view.put_counter(OUT_COUNT_KEY, transfer_id + 1)
    ticket = ctx.issue_ticket(args.receiver, timelock + ctx.ticket_window)
    return CallEffect(events=[SendInitialized(transfer_id=transfer_id, timelock=timelock, ticket=ticket)])


def check_receive_init_evidence(
    foreign: ForeignEvidence, record: LockedTransferOut, ext_transfer_id: int, local_ipsc: str
) -> None:
    """The foreign receipt must be the receiveInit matching this sending record."""
    _require(foreign.ipsc == record.receiver_ipsc, "evidence from wrong instance")
    evidence = foreign.evidence
    tx = evidence.mu_tx
    _require(evidence.receipt.tx_hash == tx.tx_hash, "receipt does not belong to transaction")
    _require(_signed_by_sender(tx), "foreign transaction not signed by its sender")
    call = tx.call
    _require(
        isinstance(call, IomcCall) and call.contract == IomcContract.RECEIVE
        and call.canonical_method == "receiveInit",
        "evidence is not a receiveInit",
    )
    args = call.args
    _require(tx.sender_pk == record.receiver, "receiveInit not sent by the receiver")
    _require(args.sender == record.sender, "receiveInit names another sender")
    _require(args.sender_ipsc == local_ipsc, "receiveInit names another sending instance")
    _require(args.hashlock == record.hashlock, "hashlock mismatch")
    _require(args.amount == record.amount, "amount mismatch")
    event = evidence.receipt.event(ReceiveInitialized)
    _require(event is not None, "receipt lacks receiveInitialized")
    _require(event.transfer_id == ext_transfer_id, "transfer id mismatch")


def send_commit(view: StateView, ctx: ExecutionContext, caller: PublicKey,
                args: SendCommitArgs, value: int) -> CallEffect:
    record = view.transfer_out(args.transfer_id)
    _require(record is not None, "unknown transfer")
    _require(record.pending, "transfer not pending")
    _require(hash_bytes(args.secret) == record.hashlock, "wrong secret")
    _require(args.evidence is not None, "missing receive-side evidence")
    check_receive_init_evidence(args.evidence, record, args.ext_transfer_id, ctx.local_ipsc)
    _require(ctx.verify_foreign(args.evidence), "foreign evidence rejected")
    _debit(view, IOMC_SEND_ADDRESS, record.amount)
    view.put_transfer_out(args.transfer_id, record.model_copy(update={"is_completed": True}))
    event = SendCommitted(
        transfer_id=args.transfer_id,
        ext_transfer_id=args.ext_transfer_id,
        receiver=record.receiver,
        receiver_ipsc=record.receiver_ipsc,
        amount=record.amount,
    )
    return CallEffect(events=[event], supply_delta=-record.amount)


def send_revert(view: StateView, ctx: ExecutionContext, caller: PublicKey,
                args: SendRevertArgs, value: int) -> CallEffect:
    record = view.transfer_out(args.transfer_id)
    _require(record is not None, "unknown transfer")
    _require(record.pending, "transfer not pending")
    _require(record.timelock <= ctx.now, "timelock not expired")
    _debit(view, IOMC_SEND_ADDRESS, record.amount)
    _credit(view, address_of(record.sender), record.amount)
    view.put_transfer_out(args.transfer_id, record.model_copy(update={"is_reverted": True}))
    return CallEffect(events=[SendReverted(transfer_id=args.transfer_id)])


def receive_init(view: StateView, ctx: ExecutionContext, caller: PublicKey,
                 args: ReceiveInitArgs, value: int) -> CallEffect:
    _require(args.amount > 0, "amount must be positive")
    transfer_id = view.counter(IN_COUNT_KEY)
    record = LockedTransferIn(
        sender=args.sender,
        sender_ipsc=args.sender_ipsc,
        receiver=caller,
        amount=args.amount,
        hashlock=args.hashlock,
    )
    view.put_transfer_in(transfer_id, record)
    view.put_counter(IN_COUNT_KEY, transfer_id + 1)
    ticket = ctx.issue_ticket(args.sender, ctx.now + ctx.htlc_timeout + ctx.ticket_window)
    return CallEffect(events=[ReceiveInitialized(transfer_id=transfer_id, ticket=ticket)])


def check_send_commit_evidence(
    foreign: ForeignEvidence, record: LockedTransferIn, transfer_id: int, local_ipsc: str
) -> None:
    """The foreign receipt must prove the burn for this receiving record."""
    _require(foreign.ipsc == record.sender_ipsc, "evidence from wrong instance")
    evidence = foreign.evidence
    tx = evidence.mu_tx
    _require(evidence.receipt.tx_hash == tx.tx_hash, "receipt does not belong to transaction")
    _require(_signed_by_sender(tx), "foreign transaction not signed by its sender")
    call = tx.call
    _require(
        isinstance(call, IomcCall) and call.contract == IomcContract.SEND
        and call.canonical_method == "sendCommit",
        "evidence is not a sendCommit",
    )
    _require(tx.sender_pk == record.sender, "sendCommit not sent by the sender")
    _require(call.args.ext_transfer_id == transfer_id, "transfer id mismatch")
    event = evidence.receipt.event(SendCommitted)
    _require(event is not None, "receipt lacks sendCommitted")
    _require(event.ext_transfer_id == transfer_id, "transfer id mismatch")
    _require(event.receiver == record.receiver, "burn names another receiver")
    _require(event.receiver_ipsc == local_ipsc, "burn names another receiving instance")
    _require(event.amount == record.amount, "amount mismatch")


def receive_commit(view: StateView, ctx: ExecutionContext, caller: PublicKey,
                   args: ReceiveCommitArgs, value: int) -> CallEffect:
    record = view.transfer_in(args.transfer_id)
    _require(record is not None, "unknown transfer")
    _require(not record.is_completed, "transfer already completed")
    _require(hash_bytes(args.secret) == record.hashlock, "wrong secret")
    _require(args.evidence is not None, "missing deduction evidence")
    check_send_commit_evidence(args.evidence, record, args.transfer_id, ctx.local_ipsc)
    _require(ctx.verify_foreign(args.evidence), "foreign evidence rejected")
    _credit(view, IOMC_RECEIVE_ADDRESS, record.amount)
    _debit(view, IOMC_RECEIVE_ADDRESS, record.amount)
    _credit(view, address_of(record.receiver), record.amount)
    view.put_transfer_in(args.transfer_id, record.model_copy(update={"is_completed": True}))
    return CallEffect(events=[ReceiveCommitted(transfer_id=args.transfer_id)], supply_delta=record.amount)


def fund(view: StateView, ctx: ExecutionContext, caller: PublicKey,
         args: FundArgs, value: int) -> CallEffect:
    _require(value > 0, "value must be positive")
    return CallEffect(events=[Funded(amount=value)])


DISPATCH = {
    (IomcContract.SEND, "sendInit"): send_init,
    (IomcContract.SEND, "sendCommit"): send_commit,
    (IomcContract.SEND, "sendRevert"): send_revert,
    (IomcContract.RECEIVE, "receiveInit"): receive_init,
    (IomcContract.RECEIVE, "receiveCommit"): receive_commit,
    (IomcContract.RECEIVE, "fund"): fund,
}

CONTRACT_ADDRESSES = {
    IomcContract.SEND: IOMC_SEND_ADDRESS,
    IomcContract.RECEIVE: IOMC_RECEIVE_ADDRESS,
}


def call_iomc(view: StateView, ctx: ExecutionContext, tx: MicroTransaction) -> CallEffect:
    """Move any attached value into the contract, then run the method."""
    call = tx.call
    method = call.canonical_method
    if tx.value:
        _require(method in PAYABLE, f"{method} does not accept value")
        _debit(view, address_of(tx.sender_pk), tx.value)
        _credit(view, CONTRACT_ADDRESSES[call.contract], tx.value)
    handler = DISPATCH[(call.contract, method)]
    return handler(view, ctx, tx.sender_pk, call.args, tx.value)
