"""
Randomized transfer schedules.

``fuzz_transfers`` takes a base scenario (its instances, clients and any
scheduled actions) and appends ``n_rounds`` randomly placed inter-bank
transfers. With ``adversarial`` set it also sprinkles phase stalls,
early stops, secret leaks and outside aborts. The invariant suite runs at
every height exactly as for a hand-written scenario; all randomness comes
from the seed, so a round list is reproducible.
"""

import random
from collections import Counter
from typing import List, Optional, Tuple

from ..models.scenario import (
    AbortAction,
    AdversaryAction,
    CheckResult,
    RunReport,
    ScenarioConfig,
    TransferAction,
)
from ..utils import get_logger
from ..utils.config import Settings, get_settings
from .engine import ScenarioEngine
from .loader import ScenarioError

logger = get_logger(__name__)

# Virtual seconds between consecutive round starts, drawn uniformly.
ROUND_SPACING = (0, 60)
STOP_POINTS = ("phase1", "phase2")
LEAK_POINTS = ("before_commit", "after_refund")


def _client_pairs(config: ScenarioConfig) -> List[Tuple[str, str]]:
    clients = [(spec.name, client.name) for spec in config.instances for client in spec.clients]
    return [(a, b) for home_a, a in clients for home_b, b in clients if home_a != home_b]


def _funding(config: ScenarioConfig) -> dict:
    return {client.name: client.balance for spec in config.instances for client in spec.clients}


def build_fuzz_schedule(config: ScenarioConfig, n_rounds: int, seed: int,
                        adversarial: bool = False) -> ScenarioConfig:
    """The base scenario with ``n_rounds`` random transfers appended."""
    if n_rounds < 1:
        raise ScenarioError("fuzz needs at least one round")
    pairs = _client_pairs(config)
    if not pairs:
        raise ScenarioError(f"{config.name}: fuzzing needs clients at two different instances")

    rng = random.Random(f"fuzz/{seed}")
    funding = _funding(config)
    base = list(config.schedule)
    at = base[-1].at if base else 0
    actions = []
    stalled: Optional[str] = None
    for round_no in range(n_rounds):
        at += rng.randint(*ROUND_SPACING)
        sender, receiver = rng.choice(pairs)
        amount = rng.randint(1, max(1, funding[sender] // 10))
        transfer = TransferAction(at=at, id=f"fuzz-{round_no:04d}", sender=sender, receiver=receiver,
                                  amount=amount)
        if adversarial:
            roll = rng.random()
            if roll < 0.1:
                transfer.stop_after = rng.choice(STOP_POINTS)
            elif roll < 0.2:
                transfer.leak_secret = rng.choice(LEAK_POINTS)
        actions.append(transfer)

        if not adversarial:
            continue
        if stalled is None and rng.random() < 0.1:
            stalled = config.home_of(rng.choice((sender, receiver)))
            actions.append(AdversaryAction(at=at, instance=stalled, stall_phase=rng.randint(2, 4),
                                           relay_escalations=rng.random() < 0.5))
        elif stalled is not None and rng.random() < 0.3:
            actions.append(AdversaryAction(at=at, instance=stalled))
            stalled = None
        if rng.random() < 0.05:
            actions.append(AbortAction(at=at + rng.randint(1, 30), transfer=transfer.id))

    if stalled is not None:
        actions.append(AdversaryAction(at=at + 1, instance=stalled))
    # Aborts may land after the next transfer starts; keep the schedule ordered.
    actions.sort(key=lambda action: action.at)
    return config.model_copy(update={
        "name": f"{config.name}/fuzz",
        "schedule": base + actions,
        "expect": config.expect.model_copy(update={"outcomes": {}, "balances": {}, "supplies": {},
                                                   "proof_of_censorship": None}),
    })


def fuzz_transfers(config: ScenarioConfig, n_rounds: int, seed: Optional[int] = None,
                   adversarial: bool = False, settings: Optional[Settings] = None) -> RunReport:
    settings = settings or get_settings()
    seed = seed if seed is not None else (config.seed if config.seed is not None else settings.seed)
    fuzzed = ScenarioConfig.model_validate(build_fuzz_schedule(config, n_rounds, seed, adversarial).model_dump())
    logger.info("Fuzzing %s: %d rounds, seed %d%s", config.name, n_rounds, seed,
                " (adversarial)" if adversarial else "")
    report = ScenarioEngine(fuzzed, settings, seed).run()

    outcomes = Counter(t.outcome or f"unfinished:{t.phase}" for t in report.transfers
                       if t.id.startswith("fuzz-"))
    report.checks.append(CheckResult(
        name="fuzz_outcomes",
        passed=True,
        informational=True,
        witness=", ".join(f"{outcome}={count}" for outcome, count in sorted(outcomes.items())),
    ))
    return report
