"""
Tests for world construction.
"""

import pytest

from src.models.chain import IpscState
from src.models.scenario import ScenarioConfig
from src.scenario.invariants import check_global_invariants
from src.scenario.loader import ScenarioError
from src.scenario.world import World


def _config(**overrides) -> ScenarioConfig:
    data = {
        "name": "w",
        "instances": [
            {"name": "A", "clients": [{"name": "alice", "balance": 50}]},
            {"name": "B", "clients": [{"name": "bob", "balance": 50}]},
            {"name": "C", "approved": False},
        ],
    }
    data.update(overrides)
    return ScenarioConfig.model_validate(data)


@pytest.mark.integration
@pytest.mark.scenario
class TestWorldBuild:
    """A built world is quiet and fully snapshotted."""

    def test_built_world(self, world):
        assert world.is_idle()
        assert world.approved_names() == ["A", "B"]
        assert set(world.wallets) == {"alice", "bob", "carol"}
        assert world.names == {instance_id: name for name, instance_id in world.ids.items()}
        assert world.orchestrator is not None
        assert world.events[-1].endswith("registry ['A', 'B']")

    def test_every_ipsc_holds_a_snapshot(self, world):
        for name, node in world.nodes.items():
            state = world.chain.read(world.ids[name])
            assert isinstance(state, IpscState)
            assert state.lroot_pb == node.enclave.lroot_pb
            assert state.lroot_pb is not None

    def test_scenario_timing_reaches_settings(self, world):
        assert world.settings.htlc_timeout_seconds == 600
        assert world.nodes["A"].settings.ticket_window_seconds == 1200

    def test_invariants_hold_after_build(self, world):
        failures = [check for check in check_global_invariants(world) if not check.passed and not check.informational]
        assert failures == []

    def test_unapproved_instance_is_outside_the_registry(self, test_settings):
        world = World(_config(), test_settings, 7).build()
        assert world.approved_names() == ["A", "B"]
        assert "C" in world.nodes

    def test_centralized_registry(self, test_settings):
        world = World(_config(imsc_mode="centralized", authority="B"), test_settings, 7).build()
        assert world.approved_names() == ["A", "B"]

    def test_overfunded_instance(self, test_settings):
        config = _config(instances=[{"name": "A", "t_i0": 10, "clients": [{"name": "alice", "balance": 50}]}])
        with pytest.raises(ScenarioError, match="clients hold 50 but t_i0 is 10"):
            World(config, test_settings, 7).build()

    def test_decentralized_needs_an_approved_instance(self, test_settings):
        config = _config(instances=[{"name": "A", "approved": False}])
        with pytest.raises(ScenarioError, match="at least one approved instance"):
            World(config, test_settings, 7).build()


@pytest.mark.integration
@pytest.mark.scenario
class TestRegistryCalls:

    def test_decentralized_ops(self, world):
        tx = world.registry_tx("join", "A", "B")
        assert tx.method == "newJoin"
        assert tx.sender_pk == world.nodes["B"].operator.pk
        assert world.registry_tx("approve", "A", "B").method == "approveJoin"
        assert world.registry_tx("delete", "A", "B").method == "approveDelete"

    def test_add_is_centralized_only(self, world):
        with pytest.raises(ScenarioError, match="not available in decentralized mode"):
            world.registry_tx("add", "A", "B")


@pytest.mark.integration
@pytest.mark.scenario
class TestReattest:

    def test_clients_accept_replaced_enclave(self, world):
        world.nodes["A"].replace_enclave()
        world.settle()
        events = len(world.events)
        world.reattest("A")
        assert len(world.events) == events
