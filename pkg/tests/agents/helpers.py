"""Drivers that move a built world forward in virtual time."""

from src.models.node import PAYLOAD_KINDS, ClientMessage
from src.models.state import TransferState, is_terminal
from src.scenario.world import World
from src.utils.crypto import sign


def run_until_idle(world: World, max_ticks: int = 200) -> None:
    for _ in range(max_ticks):
        world.tick()
        if world.is_idle():
            return
        world.clock.advance(world.settings.batch_interval_seconds)
    raise AssertionError("world did not go idle")


def drive(world: World, state: TransferState, max_ticks: int = 1000) -> TransferState:
    """Advance one transfer step per tick until it is terminal, then let the world settle."""
    for _ in range(max_ticks):
        state = world.orchestrator.advance(state)
        world.tick()
        if is_terminal(state):
            run_until_idle(world)
            return state
        world.clock.advance(world.settings.batch_interval_seconds)
    raise AssertionError(f"transfer stuck in {state['phase']}")


def message(keypair, payload, phase: int = 0, sender_pk=None) -> ClientMessage:
    """A ClientMessage signed by ``keypair``; ``sender_pk`` overrides the claimed sender."""
    unsigned = ClientMessage(
        kind=PAYLOAD_KINDS[type(payload)],
        payload=payload,
        sender_pk=sender_pk or keypair.public,
        phase=phase,
    )
    return unsigned.model_copy(update={"signature": sign(keypair, unsigned.signing_payload())})
