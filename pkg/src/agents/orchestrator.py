from typing import Callable, Dict, Optional

from langgraph.graph import StateGraph, END

from ..models.crypto import PublicKey
from ..models.state import (
    LeakPoint,
    TransferState,
    initialize_transfer_state,
    is_terminal,
    record_error,
    transition_phase,
)
from ..utils import get_logger, log_error_with_context, log_transfer_phase
from ..utils.clock import VirtualClock
from .channel import ChannelError
from .client_wallet import ClientWallet, TransferAborted, WalletError
from .router import NODE_ROLES, TransferRouter


logger = get_logger(__name__)

# Transport or wallet failures tolerated per transfer before it is given up.
MAX_RETRIES = 20


class TransferOrchestrator:
    """
    Drives inter-instance transfers through the four-phase protocol.

    The LangGraph workflow is router -> one phase node -> end; every
    ``advance`` call runs one step of one transfer, so the scenario engine can
    interleave transfers, batches, syncs and blocks on a single virtual clock.
    """

    def __init__(self, clock: VirtualClock, wallets: Optional[Dict[PublicKey, ClientWallet]] = None):
        self.clock = clock
        self.wallets: Dict[PublicKey, ClientWallet] = dict(wallets or {})
        self.router = TransferRouter()
        self.workflow = self._build_workflow()
        self.app = self.workflow.compile()
        logger.info("Transfer orchestrator initialized")

    def add_wallet(self, wallet: ClientWallet) -> None:
        self.wallets[wallet.pk] = wallet

    def _build_workflow(self) -> StateGraph:
        workflow = StateGraph(TransferState)

        workflow.add_node("router", self._router_node)
        workflow.add_node("phase1", self._step("phase1", ClientWallet.c_phase1_init))
        workflow.add_node("phase2", self._step("phase2", ClientWallet.c_phase2_receive))
        workflow.add_node("phase3", self._step("phase3", ClientWallet.c_phase3_commit))
        workflow.add_node("phase4", self._step("phase4", ClientWallet.c_phase4_claim))
        workflow.add_node("recover", self._step("recover", ClientWallet.c_recover))
        workflow.add_node("collusion", self._step("collusion", ClientWallet.c_claim_without_burn))

        workflow.set_entry_point("router")
        workflow.add_conditional_edges(
            "router",
            self._route_to_node,
            {node: node for node in NODE_ROLES} | {"end": END},
        )
        for node in NODE_ROLES:
            workflow.add_edge(node, END)

        logger.debug("Transfer workflow built")
        return workflow

    # --- scripting API -------------------------------------------------------

    def start_transfer(
        self,
        transfer_id: str,
        sender: ClientWallet,
        sender_ipsc: str,
        receiver: ClientWallet,
        receiver_ipsc: str,
        amount: int,
        stop_after: Optional[str] = None,
        leak_secret: Optional[LeakPoint] = None,
    ) -> TransferState:
        self.add_wallet(sender)
        self.add_wallet(receiver)
        state = initialize_transfer_state(
            transfer_id=transfer_id,
            sender_pk=sender.pk,
            sender_ipsc=sender_ipsc,
            receiver_pk=receiver.pk,
            receiver_ipsc=receiver_ipsc,
            amount=amount,
            now=self.clock.now(),
            stop_after=stop_after,
            leak_secret=leak_secret,
        )
        log_transfer_phase(transfer_id, "phase1", "started", self.clock.now(), sender.name)
        return state

    def advance(self, state: TransferState) -> TransferState:
        """Run one workflow step of ``state``; terminal transfers are returned unchanged."""
        if is_terminal(state):
            return state
        try:
            return self.app.invoke(state)
        except Exception as exc:
            log_error_with_context(exc, {"transfer_id": state["transfer_id"], "phase": state["phase"]},
                                   logger_name=__name__)
            record_error(state, self.clock.now(), type(exc).__name__, str(exc))
            state["retry_count"] += 1
            return state

    def inject_abort(self, state: TransferState, reason: str = "aborted by scenario") -> TransferState:
        """Stop a transfer from the outside; escrowed funds still go through recovery."""
        if is_terminal(state):
            return state
        return self._give_up(state, reason)

    # --- nodes ------------------------------------------------------------------

    def _router_node(self, state: TransferState) -> TransferState:
        decision = self.router.make_routing_decision(state, self.clock.now())
        state["route"] = decision["next_node"]
        logger.debug("Transfer %s routed to %s: %s", state["transfer_id"], decision["next_node"],
                     decision["reasoning"])
        return state

    def _route_to_node(self, state: TransferState) -> str:
        return state.get("route") or "end"

    def _wallet_for(self, state: TransferState, node: str) -> ClientWallet:
        pk = state["sender_pk"] if NODE_ROLES[node] == "sender" else state["receiver_pk"]
        wallet = self.wallets.get(pk)
        if wallet is None:
            raise WalletError(f"No wallet for the {NODE_ROLES[node]} of {state['transfer_id']}")
        return wallet

    def _step(self, node: str, phase_fn: Callable[[ClientWallet, TransferState], TransferState]):
        def run(state: TransferState) -> TransferState:
            before = state["phase"]
            state["steps"] += 1
            if node == "recover" and before != "recover":
                state = transition_phase(state, "recover", self.clock.now(), "routed to recovery")
            wallet: Optional[ClientWallet] = None
            try:
                wallet = self._wallet_for(state, node)
                state = phase_fn(wallet, state)
            except TransferAborted as exc:
                logger.warning("Transfer %s aborted in %s: %s", state["transfer_id"], node, exc)
                record_error(state, self.clock.now(), "TransferAborted", str(exc))
                state = self._give_up(state, str(exc))
            except (WalletError, ChannelError) as exc:
                record_error(state, self.clock.now(), type(exc).__name__, str(exc))
                state["retry_count"] += 1
                if state["retry_count"] > MAX_RETRIES:
                    state = self._give_up(state, f"retry limit exceeded: {exc}")
            state["updated_at"] = self.clock.now()
            if state["phase"] != before:
                log_transfer_phase(state["transfer_id"], state["phase"], f"from {before}", self.clock.now(),
                                   wallet.name if wallet is not None else None)
            return state

        return run

    def _give_up(self, state: TransferState, reason: str) -> TransferState:
        escrowed = state["send_transfer_id"] is not None
        if escrowed and not state["burned"] and not state["refunded"] and state["phase"] != "recover":
            return transition_phase(state, "recover", self.clock.now(), reason)
        return transition_phase(state, "aborted", self.clock.now(), reason)
