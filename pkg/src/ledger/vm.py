"""
Native micro-ledger VM.

``run_vm`` verifies a partial state against its root, executes a batch in
order and returns the new partial state with fresh proofs. Transactions
that fail screening (signature, registration, nonce, privilege) go to the
rejected list and leave no receipt; everything else gets exactly one
receipt, OK or REVERTED.
"""

from dataclasses import dataclass, field
from typing import List, Optional, Sequence

from ..authlog.merkle import ProofError
from ..authlog.state_tree import compute_root
from ..models.ledger import (
    Account,
    ClientRegistered,
    IomcCall,
    Issue,
    MicroTransaction,
    PartialState,
    Receipt,
    Register,
    Reverted,
    StateEntry,
    Status,
    TokensIssued,
    Transfer,
    Transferred,
)
from ..utils import get_logger
from ..utils.crypto import verify
from .iomc import CallEffect, ExecutionContext, Revert, _credit, _debit, _require, call_iomc
from .state import DictView, MissingStateError, Overlay, StateView, address_of

logger = get_logger(__name__)


class VmError(Exception):
    """The whole batch is unusable, e.g. its partial state does not verify."""
    pass


@dataclass
class VmResult:
    partial_state: Optional[PartialState]
    receipts: List[Receipt] = field(default_factory=list)
    accepted: List[MicroTransaction] = field(default_factory=list)
    rejected: List[MicroTransaction] = field(default_factory=list)
    supply_delta: int = 0
    issued_delta: int = 0


def _is_system(tx: MicroTransaction, ctx: ExecutionContext) -> bool:
    return ctx.system_pk is not None and tx.sender_pk == ctx.system_pk


def screen(tx: MicroTransaction, view: StateView, ctx: ExecutionContext) -> Optional[str]:
    """Reason the transaction must be filtered out of the batch, or None."""
    if tx.signature is None or not verify(tx.sender_pk, tx.signing_payload(), tx.signature):
        return "bad signature"
    privileged = isinstance(tx.call, (Register, Issue))
    if _is_system(tx, ctx):
        if not privileged:
            return "system sender may only register or issue"
        if tx.nonce != ctx.batch_id:
            return "stale system nonce"
        return None
    if privileged:
        return "privileged call from client"
    account = view.account(address_of(tx.sender_pk))
    if account is None or account.pk != tx.sender_pk:
        return "unregistered sender"
    if tx.nonce != account.nonce:
        return "wrong nonce"
    return None


def _transfer(view: StateView, tx: MicroTransaction, call: Transfer) -> CallEffect:
    _require(tx.value == 0, "transfer does not accept value")
    _require(call.amount > 0, "amount must be positive")
    source = address_of(tx.sender_pk)
    _require(view.account(call.to) is not None, "unknown recipient")
    _debit(view, source, call.amount)
    _credit(view, call.to, call.amount)
    return CallEffect(events=[Transferred(from_address=source, to_address=call.to, amount=call.amount)])


def _register(view: StateView, call: Register) -> CallEffect:
    address = address_of(call.pk)
    _require(view.account(address) is None, "client already registered")
    view.put_account(Account(address=address, pk=call.pk, balance=0, nonce=0))
    return CallEffect(events=[ClientRegistered(pk=call.pk, address=address)])


def _issue(view: StateView, ctx: ExecutionContext, call: Issue, issued_so_far: int) -> CallEffect:
    _require(call.amount > 0, "amount must be positive")
    _require(ctx.may_issue(issued_so_far + call.amount), "issuance exceeds inflation cap")
    _credit(view, call.beneficiary, call.amount)
    return CallEffect(
        events=[TokensIssued(beneficiary=call.beneficiary, amount=call.amount)],
        supply_delta=call.amount,
    )


def _dispatch(view: StateView, ctx: ExecutionContext, tx: MicroTransaction, issued_so_far: int) -> CallEffect:
    call = tx.call
    if isinstance(call, Transfer):
        return _transfer(view, tx, call)
    if isinstance(call, IomcCall):
        return call_iomc(view, ctx, tx)
    if isinstance(call, Register):
        return _register(view, call)
    return _issue(view, ctx, call, issued_so_far)


def execute_batch(txs: Sequence[MicroTransaction], view: StateView, ctx: ExecutionContext) -> VmResult:
    """Screen and run ``txs`` in order against ``view``."""
    result = VmResult(partial_state=None)
    for index, tx in enumerate(txs):
        try:
            reason = screen(tx, view, ctx)
            if reason is not None:
                logger.debug("Rejected tx %s: %s", tx.tx_hash.hex()[:12], reason)
                result.rejected.append(tx)
                continue

            if not _is_system(tx, ctx):
                sender = view.account(address_of(tx.sender_pk))
                view.put_account(sender.model_copy(update={"nonce": sender.nonce + 1}))

            journal = Overlay(view)
            try:
                effect = _dispatch(journal, ctx, tx, result.issued_delta)
            except Revert as revert:
                receipt = Receipt(tx_hash=tx.tx_hash, status=Status.REVERTED,
                                  events=(Reverted(reason=str(revert)),))
            else:
                journal.commit()
                result.supply_delta += effect.supply_delta
                if isinstance(tx.call, Issue):
                    result.issued_delta += tx.call.amount
                receipt = Receipt(tx_hash=tx.tx_hash, status=Status.OK, events=tuple(effect.events))
        except MissingStateError as missing:
            raise MissingStateError(missing.key, index) from missing

        result.accepted.append(tx)
        result.receipts.append(receipt)
    return result


def run_vm(txs: Sequence[MicroTransaction], partial: PartialState, ctx: ExecutionContext) -> VmResult:
    """
    Execute ``txs`` over ``partial`` and return the new partial state.

    The witness is checked first; an invalid one rejects the whole batch.
    An empty partial state carries no witness and keeps its root, so any
    transaction touching state fails with ``MissingStateError``.
    """
    values = partial.values()
    if partial.entries:
        try:
            root, _ = compute_root(values, partial.witness)
        except ProofError as exc:
            raise VmError(f"Malformed partial state witness: {exc}") from exc
        if root != partial.root:
            raise VmError("Partial state witness does not match its root")

    view = DictView(dict(values))
    result = execute_batch(txs, view, ctx)

    if partial.entries:
        new_root, fresh = compute_root(view.values, partial.witness)
        keys = [entry.key for entry in partial.entries]
        result.partial_state = PartialState(
            root=new_root,
            entries=tuple(StateEntry(key=key, value=view.values[key]) for key in keys),
            witness=tuple(fresh[key] for key in keys),
        )
    else:
        result.partial_state = partial
    return result
