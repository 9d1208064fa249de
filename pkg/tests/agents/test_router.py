"""
Tests for the transfer router.
"""

import pytest

from src.agents.router import NODE_ROLES, TransferRouter
from src.models.crypto import Scheme
from src.models.state import initialize_transfer_state, transition_phase
from src.utils.crypto import keygen

SENDER = keygen(Scheme.PB, 7, "router/sender").public
RECEIVER = keygen(Scheme.PB, 7, "router/receiver").public


def _state(phase="phase1", timelock=None, **faults):
    state = initialize_transfer_state("t1", SENDER, "ipsc-A", RECEIVER, "ipsc-B", 25, now=0, **faults)
    if phase != "phase1":
        transition_phase(state, phase, now=0)
    state["timelock"] = timelock
    return state


def _route(state, now=0):
    return TransferRouter().make_routing_decision(state, now)["next_node"]


@pytest.mark.unit
@pytest.mark.agents
class TestHonestPath:
    """Honest transfers walk the four phases in order."""

    @pytest.mark.parametrize("phase", ["phase1", "phase2", "phase3"])
    def test_phase_routes_to_itself(self, phase):
        assert _route(_state(phase, timelock=100)) == phase

    def test_phase4_mints_after_burn(self):
        state = _state("phase4", timelock=100)
        state["burned"] = True
        assert _route(state) == "phase4"

    @pytest.mark.parametrize("phase", ["done", "reverted", "aborted"])
    def test_terminal_phases_end(self, phase):
        assert _route(_state(phase)) == "end"

    def test_recover_stays_in_recovery(self):
        assert _route(_state("recover", timelock=100), now=50) == "recover"

    def test_every_workflow_node_has_a_role(self):
        assert set(NODE_ROLES.values()) == {"sender", "receiver"}
        assert {"phase1", "phase2", "phase3", "phase4", "recover", "collusion"} == set(NODE_ROLES)


@pytest.mark.unit
@pytest.mark.agents
class TestTimelock:
    """An expired timelock sends unburned transfers to recovery."""

    def test_expired_before_burn(self):
        assert _route(_state("phase2", timelock=100), now=100) == "recover"

    def test_not_yet_expired(self):
        assert _route(_state("phase2", timelock=100), now=99) == "phase2"

    def test_phase1_ignores_timelock(self):
        assert _route(_state("phase1", timelock=100), now=500) == "phase1"

    def test_pending_burn_is_settled_by_phase3(self):
        state = _state("phase3", timelock=100)
        state["submitted"]["sendCommit"] = b"\x01" * 32
        assert _route(state, now=200) == "phase3"

    def test_burned_transfer_is_not_recovered(self):
        state = _state("phase4", timelock=100)
        state["burned"] = True
        assert _route(state, now=200) == "phase4"


@pytest.mark.unit
@pytest.mark.agents
class TestFaultInjection:
    """Scripted misbehaviour diverts the honest path."""

    def test_receiver_walks_away_after_phase1(self):
        assert _route(_state("phase2", timelock=100, stop_after="phase1")) == "recover"

    def test_sender_walks_away_after_phase2(self):
        assert _route(_state("phase3", timelock=100, stop_after="phase2")) == "recover"

    def test_leak_before_commit_tries_collusion_once(self):
        state = _state("phase3", timelock=100, leak_secret="before_commit")
        assert _route(state) == "collusion"
        state["collusion_claim_status"] = "REVERTED"
        assert _route(state) == "phase3"

    def test_claim_without_burn_is_collusion(self):
        assert _route(_state("phase4", timelock=100)) == "collusion"
