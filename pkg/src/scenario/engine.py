"""
Scenario engine.

Runs a ``ScenarioConfig`` on a fresh ``World`` under the virtual clock:
scheduled actions fire at their offsets, every live transfer advances one
workflow step per tick, operators batch, sync and relay, and one block is
mined. When nothing can happen before some future instant (a timelock, a
deadline, the next action) the clock jumps there, so day-long timeouts
cost a handful of ticks.
"""

from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Tuple

from ..agents.bank_node import NodeError
from ..agents.client_wallet import WalletError
from ..enclave import EnclaveError
from ..ledger.state import address_of
from ..models.chain import ChainTxStatus, IpscState
from ..models.ledger import Status
from ..models.node import AdversaryPolicy
from ..models.scenario import (
    AbortAction,
    ActionResult,
    AdversaryAction,
    CensorshipEntry,
    CheckResult,
    IssueAction,
    PayAction,
    RegistryAction,
    ReplaceEnclaveAction,
    RunReport,
    ScenarioConfig,
    SupplyRecord,
    TransferAction,
    TransferOutcome,
)
from ..models.state import TransferState, is_terminal
from ..utils import get_logger
from ..utils.config import Settings, get_settings
from .invariants import InvariantMonitor
from .loader import ScenarioError
from .world import World

logger = get_logger(__name__)

# Safety net against a run that never quiesces.
MAX_TICKS = 20000


@dataclass
class _Pending:
    """An action whose effect is only known once something lands on chain or in a batch."""
    result: ActionResult
    resolve: Callable[[], Optional[Tuple[bool, str]]]
    on_success: Optional[Callable[[], None]] = None


class ScenarioEngine:
    def __init__(self, config: ScenarioConfig, settings: Optional[Settings] = None, seed: Optional[int] = None):
        settings = settings or get_settings()
        self.config = config
        self.seed = seed if seed is not None else (config.seed if config.seed is not None else settings.seed)
        self.world = World(config, settings, self.seed)
        self.transfers: Dict[str, TransferState] = {}
        self.results: List[ActionResult] = []
        self._pending: List[_Pending] = []
        self._expected: List[Tuple[ActionResult, str]] = []
        self.start = 0

    @property
    def settings(self) -> Settings:
        return self.world.settings

    # --- main loop -----------------------------------------------------------

    def run(self) -> RunReport:
        world = self.world
        world.build()
        clock = world.clock
        monitor = InvariantMonitor(world)
        monitor.observe()
        self.start = clock.now()
        schedule = list(self.config.schedule)
        horizon = self.start + self._duration()
        logger.info("Scenario %s started (seed %d, %d actions)", self.config.name, self.seed, len(schedule))

        for _ in range(MAX_TICKS):
            now = clock.now()
            while schedule and self.start + schedule[0].at <= now:
                self._run_action(schedule.pop(0))
            before = self._fingerprint()
            for state in self.transfers.values():
                if not is_terminal(state):
                    world.orchestrator.advance(state)
            world.tick()
            self._resolve_pending()
            monitor.observe()

            if not schedule and self._settled():
                break
            if now >= horizon:
                world.record(f"run cut at horizon {horizon - self.start}s")
                break
            step = self.settings.batch_interval_seconds
            target = now + step
            if world.is_idle() and not self._pending and self._fingerprint() == before:
                target = max(target, min(self._wake_times(schedule, now) or [target]))
            clock.advance_to(max(now + step, min(target, horizon)))
        else:
            world.record(f"run stopped after {MAX_TICKS} ticks")

        for state in self.transfers.values():
            if not is_terminal(state):
                world.record(f"transfer {state['transfer_id']} unfinished in {state['phase']}")
        checks = monitor.finish(self.transfers.values())
        checks.append(self._action_expectations())
        checks.extend(self._scenario_expectations())
        report = self._report(checks)
        logger.info("Scenario %s finished at t=%d: %s", self.config.name, clock.now(),
                    "PASS" if report.passed else f"FAIL ({len(report.failures())} checks)")
        return report

    def _duration(self) -> int:
        if self.config.max_duration is not None:
            return self.config.max_duration
        last = self.config.schedule[-1].at if self.config.schedule else 0
        return last + 3 * self.settings.htlc_timeout_seconds

    def _fingerprint(self) -> Tuple:
        return tuple(
            (tid, state["phase"], len(state["submitted"]), len(state["evidence"]), state["retry_count"],
             tuple((e["resolved"], e["proof_of_censorship"], e["index"]) for e in state["escalations"]))
            for tid, state in sorted(self.transfers.items())
        )

    def _settled(self) -> bool:
        if self._pending or any(not is_terminal(state) for state in self.transfers.values()):
            return False
        if not self.world.is_idle():
            return False
        now = self.world.clock.now()
        deadline = self.settings.deadline_seconds
        for instance_id in self.world.ids.values():
            state = self.world.chain.read(instance_id)
            if isinstance(state, IpscState) and any(
                not info.resolved and now - info.submitted_at <= deadline for info in state.cens_reqs
            ):
                return False
        return True

    def _wake_times(self, schedule, now: int) -> List[int]:
        """Future instants at which something may change without outside input."""
        deadline = self.settings.deadline_seconds
        times = []
        if schedule:
            times.append(self.start + schedule[0].at)
        for state in self.transfers.values():
            if is_terminal(state):
                continue
            if state["timelock"] is not None:
                times.append(state["timelock"])
            times.append(state["phase_started_at"] + deadline + 1)
            times.extend(e["submitted_at"] + deadline + 1 for e in state["escalations"] if not e["resolved"])
        for instance_id in self.world.ids.values():
            state = self.world.chain.read(instance_id)
            if isinstance(state, IpscState):
                times.extend(info.submitted_at + deadline + 1 for info in state.cens_reqs if not info.resolved)
        return [t for t in times if t > now]

    # --- actions -------------------------------------------------------------

    def _run_action(self, action) -> None:
        result = ActionResult(at=action.at, action=action.action, ok=True)
        handlers = {
            TransferAction: self._transfer,
            PayAction: self._pay,
            AdversaryAction: self._adversary,
            RegistryAction: self._registry,
            IssueAction: self._issue,
            ReplaceEnclaveAction: self._replace_enclave,
            AbortAction: self._abort,
        }
        try:
            handlers[type(action)](action, result)
        except (ScenarioError, WalletError, NodeError, EnclaveError) as exc:
            result.ok = False
            result.detail = f"{type(exc).__name__}: {exc}"
        self.results.append(result)
        if action.expect is not None:
            self._expected.append((result, action.expect))
        self.world.record(f"{action.action} {result.detail or ''}".rstrip())

    def _transfer(self, action: TransferAction, result: ActionResult) -> None:
        world = self.world
        sender, receiver = world.wallets[action.sender], world.wallets[action.receiver]
        if world.home_id(action.sender) == world.home_id(action.receiver):
            raise ScenarioError(f"{action.id}: both clients live at {world.config.home_of(action.sender)}; use pay")
        state = world.orchestrator.start_transfer(
            action.id, sender, world.home_id(action.sender), receiver, world.home_id(action.receiver),
            action.amount, stop_after=action.stop_after, leak_secret=action.leak_secret,
        )
        self.transfers[action.id] = state
        result.detail = f"{action.id}: {action.sender} -> {action.receiver} {action.amount}"

    def _pay(self, action: PayAction, result: ActionResult) -> None:
        world = self.world
        home = world.config.home_of(action.sender)
        if world.config.home_of(action.receiver) != home:
            raise ScenarioError(f"{action.receiver} is not a client of {home}")
        node = world.nodes[home]
        tx_hash = world.wallets[action.sender].transfer_local(
            node.instance_id, world.wallets[action.receiver].pk, action.amount
        )
        result.detail = f"{action.sender} -> {action.receiver} {action.amount}"
        if tx_hash is None:
            result.ok = False
            result.detail += ": dropped by operator"
            return

        def resolve() -> Optional[Tuple[bool, str]]:
            if tx_hash in node.rejected:
                return False, "rejected"
            location = node.tx_index.get(tx_hash)
            if location is None:
                return None
            receipt = node.batches[location[0]].receipts[location[1]]
            return receipt.status == Status.OK, receipt.status.value

        self._pending.append(_Pending(result, resolve))

    def _adversary(self, action: AdversaryAction, result: ActionResult) -> None:
        wallets = self.world.wallets
        policy = AdversaryPolicy(
            censor_tx_from=tuple(wallets[name].pk for name in action.censor_tx_from),
            censor_queries_from=tuple(wallets[name].pk for name in action.censor_queries_from),
            drop_sync=action.drop_sync,
            equivocate=action.equivocate,
            stall_phase=action.stall_phase,
            relay_escalations=action.relay_escalations,
        )
        self.world.nodes[action.instance].set_adversary(policy)
        result.detail = f"{action.instance}: {'honest' if policy.honest else 'adversarial'}"

    def _await_chain(self, tx_hash: bytes, result: ActionResult,
                     on_success: Optional[Callable[[], None]] = None) -> None:
        def resolve() -> Optional[Tuple[bool, str]]:
            final = self.world.final_receipt(tx_hash)
            if final is None:
                return None
            outcome = final.reason or (f"result {final.result}" if final.result is not None else "")
            return final.status == ChainTxStatus.OK, f"{final.status.value} {outcome}".strip()

        self._pending.append(_Pending(result, resolve, on_success))

    def _registry(self, action: RegistryAction, result: ActionResult) -> None:
        result.detail = f"{action.op} {action.target} by {action.by}"
        tx = self.world.registry_tx(action.op, action.by, action.target)
        receipt = self.world.chain.submit(tx)
        if receipt.status == ChainTxStatus.REJECTED:
            raise ScenarioError(f"chain rejected the transaction: {receipt.reason}")
        self._await_chain(tx.tx_hash, result)

    def _issue(self, action: IssueAction, result: ActionResult) -> None:
        node = self.world.nodes[action.instance]
        if action.beneficiary is not None:
            beneficiary = self.world.wallets[action.beneficiary].address()
        else:
            beneficiary = address_of(node.operator.pk)
        result.detail = f"{action.instance} issues {action.amount}"
        receipt = node.issue(action.amount, beneficiary)
        if receipt.status != Status.OK:
            result.ok = False
            result.detail += f": {receipt.status.value}"

    def _replace_enclave(self, action: ReplaceEnclaveAction, result: ActionResult) -> None:
        result.detail = f"{action.instance} replaces its enclave"
        tx_hash = self.world.nodes[action.instance].replace_enclave()
        self._await_chain(tx_hash, result, lambda: self.world.reattest(action.instance))

    def _abort(self, action: AbortAction, result: ActionResult) -> None:
        state = self.transfers.get(action.transfer)
        if state is None:
            raise ScenarioError(f"transfer {action.transfer} has not started")
        if is_terminal(state):
            raise ScenarioError(f"transfer {action.transfer} already {state['phase']}")
        self.world.orchestrator.inject_abort(state)
        result.detail = f"{action.transfer} -> {state['phase']}"

    def _resolve_pending(self) -> None:
        still = []
        for pending in self._pending:
            outcome = pending.resolve()
            if outcome is None:
                still.append(pending)
                continue
            pending.result.ok, detail = outcome
            pending.result.detail = f"{pending.result.detail}: {detail}" if detail else pending.result.detail
            self.world.record(f"{pending.result.action} settled: {pending.result.detail}")
            if pending.result.ok and pending.on_success is not None:
                pending.on_success()
        self._pending = still

    # --- expectations and report ---------------------------------------------

    def _action_expectations(self) -> CheckResult:
        for result, expected in self._expected:
            if result.ok != (expected == "ok"):
                return CheckResult(name="expected_action_results", passed=False,
                                   witness=f"{result.action} at {result.at}: expected {expected}, "
                                           f"got {'ok' if result.ok else 'fail'} ({result.detail})")
        return CheckResult(name="expected_action_results", passed=True, witness=f"{len(self._expected)} actions")

    def _balances(self) -> Dict[str, int]:
        balances = {}
        for name, wallet in sorted(self.world.wallets.items()):
            account = self.world.node_of(name).account(wallet.pk)
            balances[name] = account.balance if account is not None else 0
        return balances

    def _supplies(self) -> Dict[str, SupplyRecord]:
        supplies = {}
        for name, node in sorted(self.world.nodes.items()):
            state = node.ipsc_state()
            supplies[name] = SupplyRecord(t_i=state.t_i, t_s=state.t_s, version=node.history.version,
                                          snapshots=state.accepted_snapshots)
        return supplies

    def _censorship(self) -> List[CensorshipEntry]:
        now = self.world.clock.now()
        entries = []
        for name, instance_id in sorted(self.world.ids.items()):
            state = self.world.chain.read(instance_id)
            if not isinstance(state, IpscState):
                continue
            for index, info in enumerate(state.cens_reqs):
                entries.append(CensorshipEntry(
                    instance=name,
                    index=index,
                    kind="tx" if info.etx is not None else "query",
                    submitted_at=info.submitted_at,
                    status=info.status.value if info.status is not None else None,
                    proof_of_censorship=not info.resolved and now - info.submitted_at > self.settings.deadline_seconds,
                ))
        return entries

    def _scenario_expectations(self) -> List[CheckResult]:
        expect = self.config.expect
        checks = []
        if expect.outcomes:
            wrong = [f"{tid}: {self.transfers[tid]['outcome'] if tid in self.transfers else 'not started'} "
                     f"!= {outcome}"
                     for tid, outcome in sorted(expect.outcomes.items())
                     if tid not in self.transfers or self.transfers[tid]["outcome"] != outcome]
            checks.append(CheckResult(name="expected_outcomes", passed=not wrong, witness="; ".join(wrong)))
        if expect.balances:
            balances = self._balances()
            wrong = [f"{name}: {balances.get(name)} != {value}" for name, value in sorted(expect.balances.items())
                     if balances.get(name) != value]
            checks.append(CheckResult(name="expected_balances", passed=not wrong, witness="; ".join(wrong)))
        if expect.supplies:
            supplies = self._supplies()
            wrong = []
            for name, wanted in sorted(expect.supplies.items()):
                actual = supplies.get(name)
                if actual is None or (wanted.t_i is not None and actual.t_i != wanted.t_i) \
                        or (wanted.t_s is not None and actual.t_s != wanted.t_s):
                    wrong.append(f"{name}: {actual.t_i if actual else None}/{actual.t_s if actual else None} "
                                 f"!= {wanted.t_i}/{wanted.t_s}")
            checks.append(CheckResult(name="expected_supplies", passed=not wrong, witness="; ".join(wrong)))
        if expect.registry is not None:
            registry = self.world.approved_names()
            checks.append(CheckResult(name="expected_registry", passed=registry == sorted(expect.registry),
                                      witness=f"registry {registry}"))
        if expect.proof_of_censorship is not None:
            found = any(e.proof_of_censorship for e in self._censorship()) or any(
                esc["proof_of_censorship"] for state in self.transfers.values() for esc in state["escalations"]
            )
            checks.append(CheckResult(name="expected_proof_of_censorship",
                                      passed=found == expect.proof_of_censorship,
                                      witness=f"proof of censorship {'present' if found else 'absent'}"))
        return checks

    def _report(self, checks: List[CheckResult]) -> RunReport:
        world = self.world
        names = {wallet.pk: name for name, wallet in world.wallets.items()}
        transfers = [
            TransferOutcome(
                id=tid,
                sender=names[state["sender_pk"]],
                receiver=names[state["receiver_pk"]],
                amount=state["amount"],
                outcome=state["outcome"],
                phase=state["phase"],
                burned=state["burned"],
                minted=state["minted"],
                refunded=state["refunded"],
                collusion_claim_status=state["collusion_claim_status"],
                escalations=len(state["escalations"]),
                proofs_of_censorship=sum(1 for e in state["escalations"] if e["proof_of_censorship"]),
                error=(state["error_state"] or {}).get("message"),
                trace=list(state["trace"]),
            )
            for tid, state in sorted(self.transfers.items())
        ]
        return RunReport(
            scenario=self.config.name,
            seed=self.seed,
            imsc_mode=self.config.imsc_mode,
            final_time=world.clock.now() - self.start,
            chain_height=world.chain.height,
            checks=checks,
            transfers=transfers,
            actions=self.results,
            supplies=self._supplies(),
            balances=self._balances(),
            registry=world.approved_names(),
            censorship=self._censorship(),
            events=list(world.events),
        )


def run_scenario(config: ScenarioConfig, settings: Optional[Settings] = None, seed: Optional[int] = None) -> RunReport:
    return ScenarioEngine(config, settings, seed).run()
