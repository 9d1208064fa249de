from typing import TypedDict, List, Dict, Any, Optional, Literal

from .crypto import PublicKey
from .ledger import AccessTicket, TransferEvidence


Phase = Literal["phase1", "phase2", "phase3", "phase4", "recover", "done", "reverted", "aborted"]

# When a colluding sender hands the secret to the receiver.
LeakPoint = Literal["before_commit", "after_refund"]

TERMINAL_PHASES = ("done", "reverted", "aborted")

PHASE_NUMBERS = {"phase1": 1, "phase2": 2, "phase3": 3, "phase4": 4, "recover": 1}


class Escalation(TypedDict):
    """One request posted to an IPSC because the operator did not answer."""

    request_key: str
    requester: PublicKey
    kind: Literal["tx", "query"]
    ipsc: str
    phase: int
    chain_tx_hash: bytes
    index: Optional[int]
    submitted_at: int
    resolved: bool
    status: Optional[str]
    proof_of_censorship: bool


class TransferState(TypedDict):
    """
    One inter-instance transfer, as both wallets and the orchestrator see it.

    The LangGraph workflow advances this state one step per invocation; the
    phase functions of the wallets are re-entrant and record what they have
    already done here.
    """

    # Identity
    transfer_id: str
    sender_pk: PublicKey
    sender_ipsc: str
    receiver_pk: PublicKey
    receiver_ipsc: str
    amount: int
    created_at: int
    updated_at: int

    # Progress
    phase: Phase
    phase_started_at: int
    steps: int
    route: Optional[str]

    # Hash lock, known to the sender from phase 1 and to the receiver after phase 3
    secret: Optional[bytes]
    hashlock: Optional[bytes]
    timelock: Optional[int]
    send_transfer_id: Optional[int]
    receive_transfer_id: Optional[int]

    # Evidence and tickets handed between the two clients
    evidence: Dict[str, TransferEvidence]
    tickets: Dict[str, AccessTicket]

    # Submitted micro-transactions by step name
    submitted: Dict[str, bytes]
    escalations: List[Escalation]

    # Fault injection
    stop_after: Optional[str]
    leak_secret: Optional[LeakPoint]
    collusion_claim_status: Optional[str]

    # Outcome
    outcome: Optional[str]
    burned: bool
    minted: bool
    refunded: bool
    trace: List[str]
    error_state: Optional[Dict[str, Any]]
    retry_count: int


class RouterDecision(TypedDict):
    """Output from the transfer router: which node runs next."""

    next_node: str
    reasoning: str


def initialize_transfer_state(
    transfer_id: str,
    sender_pk: PublicKey,
    sender_ipsc: str,
    receiver_pk: PublicKey,
    receiver_ipsc: str,
    amount: int,
    now: int,
    stop_after: Optional[str] = None,
    leak_secret: Optional[LeakPoint] = None,
) -> TransferState:
    """Initialize a new transfer session at phase 1."""
    return TransferState(
        transfer_id=transfer_id,
        sender_pk=sender_pk,
        sender_ipsc=sender_ipsc,
        receiver_pk=receiver_pk,
        receiver_ipsc=receiver_ipsc,
        amount=amount,
        created_at=now,
        updated_at=now,
        phase="phase1",
        phase_started_at=now,
        steps=0,
        route=None,
        secret=None,
        hashlock=None,
        timelock=None,
        send_transfer_id=None,
        receive_transfer_id=None,
        evidence={},
        tickets={},
        submitted={},
        escalations=[],
        stop_after=stop_after,
        leak_secret=leak_secret,
        collusion_claim_status=None,
        outcome=None,
        burned=False,
        minted=False,
        refunded=False,
        trace=[],
        error_state=None,
        retry_count=0,
    )


def transition_phase(state: TransferState, new_phase: Phase, now: int, note: str = "") -> TransferState:
    """Move to a new phase; phases only move forward or to recovery/termination."""
    state["trace"].append(f"{now}:{state['phase']}->{new_phase}{' ' + note if note else ''}")
    state["phase"] = new_phase
    state["phase_started_at"] = now
    state["updated_at"] = now
    if new_phase in TERMINAL_PHASES and state["outcome"] is None:
        state["outcome"] = new_phase
    return state


def record_error(state: TransferState, now: int, error_type: str, message: str) -> TransferState:
    state["error_state"] = {"type": error_type, "message": message, "at": now, "phase": state["phase"]}
    state["updated_at"] = now
    return state


def is_terminal(state: TransferState) -> bool:
    return state["phase"] in TERMINAL_PHASES
