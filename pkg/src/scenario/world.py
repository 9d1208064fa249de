"""
A simulated ecosystem: one public chain, N bank nodes, their clients.

``World.build`` deploys every IPSC, the registry contract of the chosen
flavour, registers and funds the clients, and drains the start-up traffic,
so scheduled actions begin on a quiet, fully snapshotted world.
"""

from typing import Dict, List, Optional

from ..agents.bank_node import BankNode, InstanceParams, NodeError
from ..agents.channel import InProcessChannel
from ..agents.client_wallet import ClientWallet, WalletError
from ..agents.orchestrator import TransferOrchestrator
from ..chain import (
    IMSC_CENTRALIZED,
    IMSC_DECENTRALIZED,
    ChainAccount,
    ChainReader,
    create_chain,
    deploy_address,
    registry,
)
from ..enclave import EnclaveError
from ..models.chain import (
    DEPLOY_TARGET,
    ApproveArgs,
    ChainReceipt,
    ChainTx,
    ImscAddArgs,
    ImscCInitArgs,
    ImscDelArgs,
    ImscDInitArgs,
    NewJoinArgs,
    Rate,
)
from ..models.scenario import ScenarioConfig
from ..utils import get_logger, log_error_with_context
from ..utils.clock import VirtualClock
from ..utils.config import Settings
from .loader import ScenarioError

logger = get_logger(__name__)

# Ticks allowed for start-up traffic to settle.
BOOT_TICKS = 200


class World:
    def __init__(self, config: ScenarioConfig, settings: Settings, seed: int):
        self.config = config
        self.settings = settings.with_overrides(
            htlc_timeout_seconds=config.htlc_timeout_seconds,
            finality_depth=config.finality_depth,
        )
        self.settings.validate_timing()
        self.seed = seed
        self.clock = VirtualClock(self.settings.start_time)
        self.chain = create_chain(self.clock, seed, self.settings.finality_depth)
        self.nodes: Dict[str, BankNode] = {}
        self.wallets: Dict[str, ClientWallet] = {}
        self.ids: Dict[str, str] = {}
        self.names: Dict[str, str] = {}
        self.reader: Optional[ChainReader] = None
        self.imsc_address: Optional[str] = None
        self.orchestrator: Optional[TransferOrchestrator] = None
        self.events: List[str] = []
        self._next_sync = self.clock.now()

    # --- lookups -----------------------------------------------------------

    def node_of(self, client: str) -> BankNode:
        return self.nodes[self.config.home_of(client)]

    def home_id(self, client: str) -> str:
        return self.ids[self.config.home_of(client)]

    def approved_names(self, height: Optional[int] = None) -> List[str]:
        state = self.chain.read(self.imsc_address, height)
        return sorted(self.names[ipsc] for ipsc in registry(state) if ipsc in self.names)

    def record(self, message: str) -> None:
        self.events.append(f"{self.clock.now()}: {message}")

    # --- construction ------------------------------------------------------

    def build(self) -> "World":
        config = self.config
        for bank in config.instances:
            operator = ChainAccount.generate(self.seed, f"{bank.name}/operator")
            params = InstanceParams(t_i0=bank.t_i0, i_r=Rate.parse(bank.i_r), issue_authority=bank.issue_authority)
            node = BankNode(bank.name, self.clock, self.chain, operator, params, self.settings, self.seed)
            instance_id = node.deploy()
            self.nodes[bank.name] = node
            self.ids[bank.name] = instance_id
            self.names[instance_id] = bank.name
            funding = sum(client.balance for client in bank.clients)
            if funding > bank.t_i0:
                raise ScenarioError(f"instances[{bank.name}]: clients hold {funding} but t_i0 is {bank.t_i0}")
        self.settle()

        self._deploy_registry()
        self.reader = ChainReader(self.chain, self.imsc_address)
        for node in self.nodes.values():
            node.activate(self.reader)

        for bank in config.instances:
            node = self.nodes[bank.name]
            channels = {
                other.instance_id: InProcessChannel(other, self.settings.max_frame_bytes)
                for other in self.nodes.values()
            }
            for client in bank.clients:
                wallet = ClientWallet(client.name, self.clock, self.chain, self.reader, channels,
                                      self.settings, self.seed)
                wallet.attest_instance(node.instance_id, node.quote)
                wallet.register(node.instance_id)
                if client.balance:
                    node.fund(wallet.pk, client.balance)
                self.wallets[client.name] = wallet

        for _ in range(BOOT_TICKS):
            self.tick()
            if self.is_idle():
                break
            self.clock.advance(self.settings.batch_interval_seconds)
        else:
            raise ScenarioError("World did not settle after start-up")

        self.orchestrator = TransferOrchestrator(self.clock, {w.pk: w for w in self.wallets.values()})
        self.record(f"world ready: {len(self.nodes)} instances, {len(self.wallets)} clients, "
                    f"registry {self.approved_names()}")
        logger.info("World %s ready at t=%d, height %d", config.name, self.clock.now(), self.chain.height)
        return self

    def _deploy_registry(self) -> None:
        config = self.config
        approved = [bank.name for bank in config.instances if bank.approved]
        if config.imsc_mode == "centralized":
            authority = config.authority or (approved[0] if approved else config.instances[0].name)
            deployer = self.nodes[authority].operator
            nonce = deployer.next_nonce
            self.chain.submit(deployer.build(
                DEPLOY_TARGET, IMSC_CENTRALIZED, ImscCInitArgs(authority_ipsc=self.ids[authority])
            ))
            self.imsc_address = deploy_address(deployer.pk, nonce)
            self.settle()
            for name in approved:
                if name != authority:
                    self.chain.submit(deployer.build(
                        self.imsc_address, "add",
                        ImscAddArgs(ipsc=self.ids[name], operator=self.nodes[name].operator.pk),
                    ))
        else:
            if not approved:
                raise ScenarioError("instances: decentralized mode needs at least one approved instance")
            deployer = self.nodes[approved[0]].operator
            nonce = deployer.next_nonce
            self.chain.submit(deployer.build(
                DEPLOY_TARGET, IMSC_DECENTRALIZED,
                ImscDInitArgs(
                    ipscs=tuple(self.ids[name] for name in approved),
                    operators=tuple(self.nodes[name].operator.pk for name in approved),
                ),
            ))
            self.imsc_address = deploy_address(deployer.pk, nonce)
        self.settle()
        if self.chain.read(self.imsc_address) is None:
            raise ScenarioError("Registry deployment failed")

    # --- registry mutations ------------------------------------------------

    def registry_tx(self, op: str, by: str, target: str) -> ChainTx:
        """Build the registry call for ``op``; raises ScenarioError when the mode has no such call."""
        mode = self.config.imsc_mode
        operator = self.nodes[by].operator
        if mode == "decentralized":
            if op == "join":
                # Joining is always requested by the joining instance's own operator.
                operator = self.nodes[target].operator
                return operator.build(self.imsc_address, "newJoin", NewJoinArgs(ipsc=self.ids[target]))
            if op in ("approve", "delete"):
                method = "approveJoin" if op == "approve" else "approveDelete"
                return operator.build(self.imsc_address, method,
                                      ApproveArgs(my_ipsc=self.ids[by], target_ipsc=self.ids[target]))
        else:
            if op == "add":
                return operator.build(self.imsc_address, "add",
                                      ImscAddArgs(ipsc=self.ids[target], operator=self.nodes[target].operator.pk))
            if op == "delete":
                return operator.build(self.imsc_address, "del", ImscDelArgs(ipsc=self.ids[target]))
        raise ScenarioError(f"registry op {op} is not available in {mode} mode")

    # --- ticks -------------------------------------------------------------

    def tick(self) -> None:
        """One round of operator work on every node, then one block."""
        now = self.clock.now()
        run_sync = now >= self._next_sync
        for name, node in self.nodes.items():
            self._guarded(name, "batch", node.batch_tick)
            if run_sync:
                self._guarded(name, "sync", node.sync_tick)
            self._guarded(name, "relay", node.relay_tick)
        if run_sync:
            self._next_sync = now + self.settings.sync_interval_seconds
        self.chain.produce_block()

    def _guarded(self, name: str, operation: str, step) -> None:
        try:
            step()
        except (NodeError, EnclaveError) as exc:
            log_error_with_context(exc, {"node": name, "operation_type": operation}, __name__)
            self.record(f"{name} {operation} failed: {exc}")

    def settle(self) -> None:
        """Mine until everything submitted so far is final."""
        target = self.chain.height + (1 if self.chain.mempool_size else 0)
        while self.chain.mempool_size or self.chain.finalized_height < target:
            self.chain.produce_block()

    def chain_settled(self) -> bool:
        if self.chain.mempool_size:
            return False
        return all(not block.tx_hashes for block in self.chain.blocks[self.chain.finalized_height + 1:])

    def is_idle(self) -> bool:
        return self.chain_settled() and all(node.is_idle() for node in self.nodes.values())

    def reattest(self, instance: str) -> None:
        """Clients of ``instance`` check the quote of its new enclave."""
        node = self.nodes[instance]
        for client in self.config.instance(instance).clients:
            try:
                self.wallets[client.name].attest_instance(node.instance_id, node.quote)
            except WalletError as exc:
                self.record(f"{client.name} rejects the new enclave of {instance}: {exc}")

    def final_receipt(self, tx_hash: bytes) -> Optional[ChainReceipt]:
        return self.chain.finalized_receipt(tx_hash)
