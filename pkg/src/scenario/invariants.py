"""
Global invariant suite.

``InvariantMonitor.observe`` walks every newly finalized chain height and
checks the supply, snapshot and issuance properties there; ``finish`` adds
the whole-run checks (evidence tampering, non-equivocation, censorship,
privacy, transfer atomicity) once the engine has stopped. Every check is a
named ``CheckResult``; the first failing height or item is kept as witness.
"""

from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Set, Tuple

from ..agents.client_wallet import verify_evidence
from ..authlog.history_tree import inc_verify
from ..authlog.state_tree import SparseStateTree
from ..ledger.inflation import allowed_issued
from ..ledger.state import IN_COUNT_KEY, OUT_COUNT_KEY, ledger_totals
from ..models.chain import (
    DEPLOY_TARGET,
    ChainTxStatus,
    IpscState,
    cens_qry_statement,
    cens_tx_statement,
)
from ..models.ledger import IN_PREFIX, OUT_PREFIX, LockedTransferIn, LockedTransferOut, Status
from ..models.proofs import Commitment
from ..models.scenario import CheckResult
from ..models.state import TransferState
from ..utils import get_logger
from ..utils.crypto import verify
from ..utils.encoding import canonical_decode
from .world import World

logger = get_logger(__name__)


@dataclass
class _Check:
    name: str
    informational: bool = False
    passed: bool = True
    witness: str = ""
    evaluated: int = 0

    def fail(self, witness: str) -> None:
        if self.passed:
            self.passed = False
            self.witness = witness
            if not self.informational:
                logger.warning("Invariant %s violated: %s", self.name, witness)

    def require(self, condition: bool, witness: str) -> None:
        self.evaluated += 1
        if not condition:
            self.fail(witness)

    def result(self) -> CheckResult:
        witness = self.witness if not self.passed else self.witness or f"{self.evaluated} checks"
        return CheckResult(name=self.name, passed=self.passed, witness=witness, informational=self.informational)


@dataclass
class _Records:
    outs: List[LockedTransferOut] = field(default_factory=list)
    ins: List[LockedTransferIn] = field(default_factory=list)


def transfer_records(entries: Dict[bytes, bytes]) -> _Records:
    records = _Records()
    for key, raw in entries.items():
        if key.startswith(OUT_PREFIX) and key != OUT_COUNT_KEY:
            records.outs.append(canonical_decode(raw, LockedTransferOut))
        elif key.startswith(IN_PREFIX) and key != IN_COUNT_KEY:
            records.ins.append(canonical_decode(raw, LockedTransferIn))
    return records


@dataclass
class IpscReplay:
    """What the mined transactions to one IPSC establish, independent of its stored state."""
    accepted: List[Tuple[Optional[bytes], bytes, int, bool]] = field(default_factory=list)
    attempts: Dict[Optional[bytes], int] = field(default_factory=dict)
    resolutions: Dict[int, bool] = field(default_factory=dict)
    t_i: Optional[int] = None


def replay_ipsc(world: World, instance_id: str, up_to: int) -> IpscReplay:
    """Rebuild accepted transitions and resolution signatures from mined transactions."""
    replay = IpscReplay()
    pk_pb = None
    requests: Dict[int, object] = {}
    for tx, receipt in world.chain.mined(up_to):
        if tx.target == DEPLOY_TARGET and receipt.contract == instance_id:
            if receipt.status == ChainTxStatus.OK:
                pk_pb = tx.args.keys.pk_pb
                replay.t_i = tx.args.t_i0
            continue
        if tx.target != instance_id or receipt.status != ChainTxStatus.OK:
            continue
        if tx.method == "snapshotLedger":
            pair = tx.args.pair
            replay.attempts[pair.root_from] = replay.attempts.get(pair.root_from, 0) + 1
            if receipt.result is True:
                signed = verify(pk_pb, pair.signing_payload(), pair.signature)
                replay.accepted.append((pair.root_from, pair.root_to, pair.t_i, signed))
                replay.t_i = pair.t_i
        elif tx.method == "replaceEnc":
            pk_pb = tx.args.keys.pk_pb
            pair = tx.args.pair
            signed = verify(pk_pb, pair.signing_payload(), pair.signature)
            replay.accepted.append((pair.root_from, pair.root_to, pair.t_i, signed))
            replay.t_i = pair.t_i
        elif tx.method == "submitCensTx":
            requests[receipt.result] = ("tx", tx.args.etx)
        elif tx.method == "submitCensQry":
            requests[receipt.result] = ("query", tx.args.equery)
        elif tx.method in ("resolveCensTx", "resolveCensQry"):
            kind, box = requests.get(tx.args.index, (None, None))
            if kind == "tx":
                statement = cens_tx_statement(box, tx.args.status)
            elif kind == "query":
                statement = cens_qry_statement(box, tx.args.status, tx.args.edata)
            else:
                replay.resolutions[tx.args.index] = False
                continue
            replay.resolutions[tx.args.index] = verify(pk_pb, statement, tx.args.signature)
    return replay


class InvariantMonitor:
    def __init__(self, world: World):
        self.world = world
        self.checks: Dict[str, _Check] = {}
        for name in (
            "supply_bound", "zero_drift", "instance_supply", "correctness", "integrity",
            "transparent_issuance",
        ):
            self.checks[name] = _Check(name)
        self.checks["supply_bound_issued_le_supplied"] = _Check("supply_bound_issued_le_supplied", informational=True)
        self.ever_approved: Set[str] = set()
        self.heights_checked = 0
        self.strict_heights = 0
        self._next_height = 0
        self._roots: Dict[str, Tuple[int, bytes]] = {}
        self._t_i: Dict[str, int] = {}
        self._verified_versions: Set[Tuple[str, int]] = set()

    # --- per finalized height ----------------------------------------------

    def observe(self) -> None:
        finalized = self.world.chain.finalized_height
        for height in range(self._next_height, finalized + 1):
            self._check_height(height)
        self._next_height = max(self._next_height, finalized + 1)

    def _check_height(self, height: int) -> None:
        world = self.world
        imsc = world.chain.read(world.imsc_address, height) if world.imsc_address else None
        if imsc is not None:
            self.ever_approved.update(world.approved_names(height))
        states: Dict[str, IpscState] = {}
        for name, instance_id in world.ids.items():
            state = world.chain.read(instance_id, height)
            if isinstance(state, IpscState):
                states[name] = state
        if not states:
            return
        self.heights_checked += 1
        sum_t_i = sum(state.t_i for state in states.values())
        sum_t_s = sum(state.t_s for state in states.values())
        self.checks["supply_bound"].require(
            sum_t_s <= sum_t_i, f"height {height}: total supplied {sum_t_s} exceeds total issued {sum_t_i}"
        )
        self.checks["supply_bound_issued_le_supplied"].require(
            sum_t_i <= sum_t_s, f"height {height}: issued {sum_t_i} > supplied {sum_t_s} (tokens in flight)"
        )
        if sum_t_s < sum_t_i:
            self.strict_heights += 1

        burned: Dict[bytes, int] = {}
        minted: Set[bytes] = set()
        complete = True
        for name, state in states.items():
            node = world.nodes[name]
            version = node.history.version_of(state.lroot_pb) if state.lroot_pb is not None else 0
            self._check_correctness(name, state, version, height)
            self._check_integrity(name, state, version, height)
            self._check_issuance(name, state, height)
            entries = node.state_at(version) if version is not None else None
            if entries is None:
                complete = False
                continue
            totals = ledger_totals(entries)
            self.checks["instance_supply"].require(
                state.t_s == totals.supply and totals.iomc_send == totals.escrow and totals.iomc_receive == 0,
                f"height {height}, {name} v{version}: t_s {state.t_s}, ledger holds {totals.supply} "
                f"(escrow account {totals.iomc_send}, pending escrow {totals.escrow})",
            )
            records = transfer_records(entries)
            for record in records.outs:
                if record.is_completed:
                    burned[record.hashlock] = burned.get(record.hashlock, 0) + record.amount
            minted.update(record.hashlock for record in records.ins if record.is_completed)
        if complete:
            in_flight = sum(amount for hashlock, amount in burned.items() if hashlock not in minted)
            self.checks["zero_drift"].require(
                sum_t_i - sum_t_s == in_flight,
                f"height {height}: issued - supplied = {sum_t_i - sum_t_s}, burned but unminted = {in_flight}",
            )

    def _check_correctness(self, name: str, state: IpscState, version: Optional[int], height: int) -> None:
        check = self.checks["correctness"]
        if state.lroot_pb is None:
            return
        node = self.world.nodes[name]
        check.require(version is not None, f"height {height}: {name} snapshot root unknown to its operator")
        if version is None or (name, version) in self._verified_versions:
            return
        entries = node.state_at(version)
        if entries is not None:
            header = node.headers[version - 1] if version <= len(node.headers) else None
            check.require(
                header is not None and SparseStateTree(entries).root == header.st_root,
                f"height {height}: {name} v{version} state does not match its header",
            )
        self._verified_versions.add((name, version))

    def _check_integrity(self, name: str, state: IpscState, version: Optional[int], height: int) -> None:
        if state.lroot_pb is None or version is None:
            return
        previous = self._roots.get(name)
        self._roots[name] = (version, state.lroot_pb)
        if previous is None or previous[1] == state.lroot_pb:
            return
        history = self.world.nodes[name].history
        older = Commitment(version=previous[0], root=previous[1])
        newer = Commitment(version=version, root=state.lroot_pb)
        check = self.checks["integrity"]
        check.require(older.version <= newer.version, f"height {height}: {name} snapshot moved backwards")
        if older.version <= newer.version and history.knows(older):
            check.require(
                inc_verify(history.inc_proof(older, newer), older, newer),
                f"height {height}: {name} v{older.version} is not a prefix of v{newer.version}",
            )

    def _check_issuance(self, name: str, state: IpscState, height: int) -> None:
        check = self.checks["transparent_issuance"]
        previous = self._t_i.get(name, state.t_i0)
        cap = allowed_issued(state.t_i0, state.i_r.as_fraction(), state.created_at,
                             self.world.chain.timestamp_at(height))
        check.require(state.t_i >= previous, f"height {height}: {name} issued total fell from {previous} to {state.t_i}")
        check.require(state.t_i <= cap or not state.issue_authority,
                      f"height {height}: {name} issued {state.t_i} above cap {cap}")
        if not state.issue_authority:
            check.require(state.t_i == state.t_i0, f"height {height}: {name} issued without authority")
        self._t_i[name] = state.t_i

    # --- end of run --------------------------------------------------------

    def finish(self, transfers: Iterable[TransferState]) -> List[CheckResult]:
        transfers = list(transfers)
        self.observe()
        world = self.world
        up_to = world.chain.finalized_height
        replays = {name: replay_ipsc(world, instance_id, up_to) for name, instance_id in world.ids.items()}

        self._finish_replays(replays, up_to)
        checks = [check.result() for check in self.checks.values()]
        checks.append(self._verifiability())
        checks.append(self._non_equivocation(replays))
        checks.append(self._censorship_evidence(replays))
        checks.append(self._privacy(transfers))
        checks.append(self._htlc_exclusivity())
        checks.append(self._atomic_transfer(transfers))
        checks.append(self._inter_instance_censorship(transfers))
        checks.append(self._collusion_rejection(transfers))
        checks.append(self._recovery(transfers))
        checks.append(self._identity_management())
        checks.append(self._supply_equality_at_rest())
        return checks

    def _finish_replays(self, replays: Dict[str, IpscReplay], up_to: int) -> None:
        correctness = self.checks["correctness"]
        issuance = self.checks["transparent_issuance"]
        for name, replay in replays.items():
            for root_from, root_to, _, signed in replay.accepted:
                correctness.require(signed, f"{name}: accepted transition to {root_to.hex()[:12]} "
                                            f"not signed by the enclave key of its time")
            state = self.world.chain.read(self.world.ids[name], up_to)
            if isinstance(state, IpscState):
                issuance.require(replay.t_i == state.t_i,
                                 f"{name}: mined transactions give issued {replay.t_i}, IPSC holds {state.t_i}")

    def _verifiability(self) -> CheckResult:
        """Genuine receipt packages verify; single flipped bits in receipt or header do not."""
        check = _Check("verifiability")
        for name, node in self.world.nodes.items():
            if not node.headers:
                continue
            batch = node.batches[node.headers[-1].id]
            if not batch.txs:
                continue
            evidence = node.receipt_evidence(batch.txs[0].tx_hash)
            check.require(verify_evidence(evidence), f"{name}: genuine receipt evidence rejected")
            flipped = Status.REVERTED if evidence.receipt.status == Status.OK else Status.OK
            bad_receipt = evidence.model_copy(update={"receipt": evidence.receipt.model_copy(update={"status": flipped})})
            check.require(not verify_evidence(bad_receipt), f"{name}: tampered receipt accepted")
            root = bytearray(evidence.hdr.st_root)
            root[0] ^= 1
            bad_header = evidence.model_copy(update={"hdr": evidence.hdr.model_copy(update={"st_root": bytes(root)})})
            check.require(not verify_evidence(bad_header), f"{name}: tampered header accepted")
        return check.result()

    def _non_equivocation(self, replays: Dict[str, IpscReplay]) -> CheckResult:
        check = _Check("non_equivocation")
        for name, replay in replays.items():
            successors: Dict[Optional[bytes], bytes] = {}
            for root_from, root_to, _, _ in replay.accepted:
                if root_from == root_to:
                    continue
                known = successors.setdefault(root_from, root_to)
                check.require(known == root_to, f"{name}: two accepted successors of one snapshot root")
            rejected = sum(count - 1 for count in replay.attempts.values() if count > 1)
            if rejected:
                self.world.record(f"{name}: {rejected} competing snapshot(s) ignored by IPSC")
        return check.result()

    def _censorship_evidence(self, replays: Dict[str, IpscReplay]) -> CheckResult:
        """Every public request is resolved under an enclave signature or is overdue."""
        check = _Check("censorship_evidence")
        now = self.world.clock.now()
        deadline = self.world.settings.deadline_seconds
        for name, instance_id in self.world.ids.items():
            state = self.world.chain.read(instance_id)
            if not isinstance(state, IpscState):
                continue
            for index, info in enumerate(state.cens_reqs):
                if info.resolved:
                    check.require(replays[name].resolutions.get(index, False),
                                  f"{name} request {index}: resolution not signed by the enclave")
                else:
                    check.require(now - info.submitted_at > deadline,
                                  f"{name} request {index}: unresolved and still within its deadline")
        return check.result()

    def _privacy(self, transfers: List[TransferState]) -> CheckResult:
        """No micro-transaction signature or transfer secret appears in public-chain data."""
        check = _Check("privacy")
        markers = set()
        for node in self.world.nodes.values():
            for batch in node.batches.values():
                markers.update(tx.signature.value for tx in batch.txs if tx.signature is not None)
        markers.update(state["secret"] for state in transfers if state["secret"])
        public = [tx.encode() for tx, _ in self.world.chain.mined()]
        for instance_id in self.world.ids.values():
            state = self.world.chain.read_latest(instance_id)
            if state is not None:
                public.append(state.encode())
        blob = b"".join(public)
        for marker in sorted(markers):
            check.require(marker not in blob, f"plaintext marker {marker.hex()[:16]} found on chain")
        return check.result()

    def _records(self) -> Dict[str, _Records]:
        return {name: transfer_records(dict(node.tree.items())) for name, node in self.world.nodes.items()}

    def _htlc_exclusivity(self) -> CheckResult:
        """Each completed receiving record matches a burned, never refunded sending record."""
        check = _Check("htlc_exclusivity")
        records = self._records()
        outs = {(name, record.hashlock): record for name, rec in records.items() for record in rec.outs}
        for name, rec in records.items():
            for record in rec.ins:
                if not record.is_completed:
                    continue
                sender = self.world.names.get(record.sender_ipsc)
                source = outs.get((sender, record.hashlock))
                check.require(
                    source is not None and source.is_completed and source.amount == record.amount,
                    f"{name}: mint of {record.amount} without a matching burn at {sender}",
                )
        return check.result()

    def _atomic_transfer(self, transfers: List[TransferState]) -> CheckResult:
        check = _Check("atomic_transfer")
        records = self._records()
        for state in transfers:
            tid = state["transfer_id"]
            check.require(not (state["minted"] and state["refunded"]), f"{tid}: both minted and refunded")
            check.require(not state["minted"] or state["burned"], f"{tid}: minted without a burn")
            if state["outcome"] == "done":
                check.require(state["burned"] and state["minted"], f"{tid}: done without burn and mint")
            elif state["outcome"] == "reverted":
                check.require(state["refunded"] and not state["burned"], f"{tid}: reverted without refund")
            elif state["burned"] and not state["minted"]:
                # The receiver may still claim: its receiving record must be open.
                receiver = self.world.names[state["receiver_ipsc"]]
                open_claim = any(
                    record.hashlock == state["hashlock"] and not record.is_completed
                    for record in records[receiver].ins
                )
                check.require(open_claim, f"{tid}: burned, unminted and no open claim at {receiver}")
            elif state["send_transfer_id"] is not None and not state["refunded"]:
                sender = self.world.names[state["sender_ipsc"]]
                still_locked = any(
                    record.hashlock == state["hashlock"] and record.pending for record in records[sender].outs
                )
                check.require(still_locked, f"{tid}: escrow neither burned, refunded nor locked")
        return check.result()

    def _inter_instance_censorship(self, transfers: List[TransferState]) -> CheckResult:
        check = _Check("inter_instance_censorship")
        wallets = {wallet.pk: wallet for wallet in self.world.wallets.values()}
        for state in transfers:
            for escalation in state["escalations"]:
                wallet = wallets.get(escalation["requester"])
                if wallet is not None and not escalation["resolved"]:
                    wallet.poll_escalation(escalation)
                check.require(
                    escalation["resolved"] or escalation["proof_of_censorship"],
                    f"{state['transfer_id']}: escalation {escalation['request_key']} neither resolved "
                    f"nor a proof of censorship",
                )
        return check.result()

    def _collusion_rejection(self, transfers: List[TransferState]) -> CheckResult:
        check = _Check("collusion_rejection")
        for state in transfers:
            status = state["collusion_claim_status"]
            check.require(status != Status.OK.value,
                          f"{state['transfer_id']}: claim with a leaked secret and no burn was credited")
        return check.result()

    def _recovery(self, transfers: List[TransferState]) -> CheckResult:
        """Abandoned transfers end refunded: the escrow comes back in full."""
        check = _Check("recovery")
        records = self._records()
        for state in transfers:
            if not state["refunded"]:
                check.require(
                    state["stop_after"] is None or state["send_transfer_id"] is None,
                    f"{state['transfer_id']}: sender walked away but was never refunded",
                )
                continue
            sender = self.world.names[state["sender_ipsc"]]
            refunded = [r for r in records[sender].outs if r.hashlock == state["hashlock"] and r.is_reverted]
            check.require(
                len(refunded) == 1 and refunded[0].amount == state["amount"],
                f"{state['transfer_id']}: refund does not match the escrow of {state['amount']}",
            )
        return check.result()

    def _identity_management(self) -> CheckResult:
        """Nothing minted on the strength of an instance that was never registered."""
        check = _Check("identity_management")
        for name, rec in self._records().items():
            for record in rec.ins:
                if record.is_completed:
                    sender = self.world.names.get(record.sender_ipsc, record.sender_ipsc[:12])
                    check.require(sender in self.ever_approved,
                                  f"{name} minted {record.amount} for unregistered instance {sender}")
        return check.result()

    def _supply_equality_at_rest(self) -> CheckResult:
        check = _Check("supply_equality_at_rest")
        states = [self.world.chain.read(instance_id) for instance_id in self.world.ids.values()]
        states = [state for state in states if isinstance(state, IpscState)]
        records = self._records()
        burned = {r.hashlock: r.amount for rec in records.values() for r in rec.outs if r.is_completed}
        minted = {r.hashlock for rec in records.values() for r in rec.ins if r.is_completed}
        in_flight = sum(amount for hashlock, amount in burned.items() if hashlock not in minted)
        if in_flight == 0 and self.world.is_idle():
            total_i = sum(state.t_i for state in states)
            total_s = sum(state.t_s for state in states)
            check.require(total_i == total_s, f"at rest: issued {total_i} != supplied {total_s}")
        else:
            check.witness = f"not at rest: {in_flight} burned but unminted"
        return check.result()


def check_global_invariants(world: World) -> List[CheckResult]:
    """Supply, snapshot chaining, HTLC and censorship checks over every finalized height so far."""
    monitor = InvariantMonitor(world)
    monitor.observe()
    replays = {name: replay_ipsc(world, instance_id, world.chain.finalized_height)
               for name, instance_id in world.ids.items()}
    checks = [check.result() for check in monitor.checks.values()]
    checks.append(monitor._htlc_exclusivity())
    checks.append(monitor._censorship_evidence(replays))
    return checks
