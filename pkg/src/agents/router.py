from typing import Dict

from ..models.state import RouterDecision, TransferState, is_terminal
from ..utils import get_logger


logger = get_logger(__name__)


# Which wallet acts in each workflow node.
NODE_ROLES: Dict[str, str] = {
    "phase1": "sender",
    "phase2": "receiver",
    "phase3": "sender",
    "phase4": "receiver",
    "recover": "sender",
    "collusion": "receiver",
}


class TransferRouter:
    """
    Picks the next workflow node for a transfer.

    Decisions depend only on the transfer state and the current time, so a
    replay of the same scenario routes identically. Fault-injection fields
    (``stop_after`` and ``leak_secret``) divert the honest path here.
    """

    def make_routing_decision(self, state: TransferState, now: int) -> RouterDecision:
        phase = state["phase"]

        if is_terminal(state):
            return RouterDecision(next_node="end", reasoning=f"transfer {phase}")

        if phase == "phase1":
            return RouterDecision(next_node="phase1", reasoning="sender escrows")

        if self._timelock_passed(state, now) and not state["burned"] and self._burn_not_pending(state):
            return RouterDecision(next_node="recover", reasoning="timelock expired before the burn")

        if phase == "phase2":
            if state["stop_after"] == "phase1":
                return RouterDecision(next_node="recover", reasoning="receiver walked away after phase 1")
            return RouterDecision(next_node="phase2", reasoning="receiver records the incoming transfer")

        if phase == "phase3":
            if state["leak_secret"] == "before_commit" and state["collusion_claim_status"] is None:
                return RouterDecision(next_node="collusion", reasoning="sender leaked the secret before burning")
            if state["stop_after"] == "phase2":
                return RouterDecision(next_node="recover", reasoning="sender walked away after phase 2")
            return RouterDecision(next_node="phase3", reasoning="sender burns")

        if phase == "phase4":
            if not state["burned"]:
                return RouterDecision(next_node="collusion", reasoning="receiver claims without a burn")
            return RouterDecision(next_node="phase4", reasoning="receiver mints")

        return RouterDecision(next_node="recover", reasoning="sender refunds the escrow")

    @staticmethod
    def _timelock_passed(state: TransferState, now: int) -> bool:
        return state["timelock"] is not None and now >= state["timelock"]

    @staticmethod
    def _burn_not_pending(state: TransferState) -> bool:
        # A submitted burn is settled by phase 3 itself, which falls back to recovery on revert.
        return not (state["phase"] == "phase3" and "sendCommit" in state["submitted"])
