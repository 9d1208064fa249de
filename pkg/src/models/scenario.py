"""
Scenario files and run reports.

Scenario files are JSON documents validated into ``ScenarioConfig``; every
run produces a ``RunReport`` whose JSON form is a pure function of the
scenario and the seed.
"""

from typing import Annotated, Dict, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .state import LeakPoint


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ClientSpec(_Strict):
    """A client of one instance, funded from the operator treasury at start."""
    name: str
    balance: int = Field(default=0, ge=0)


class InstanceSpec(_Strict):
    name: str
    t_i0: int = Field(default=1000, ge=0)
    i_r: str = Field(default="10%", description="Yearly inflation rate, e.g. '10%' or '1/10'")
    issue_authority: bool = True
    approved: bool = Field(default=True, description="Part of the registry at genesis")
    clients: List[ClientSpec] = Field(default_factory=list)


# --- scheduled actions -------------------------------------------------------

class _Action(_Strict):
    at: int = Field(ge=0, description="Virtual seconds after the world is ready")
    expect: Optional[Literal["ok", "fail"]] = None


class TransferAction(_Action):
    action: Literal["transfer"] = "transfer"
    id: str
    sender: str
    receiver: str
    amount: int = Field(gt=0)
    stop_after: Optional[Literal["phase1", "phase2"]] = None
    leak_secret: Optional[LeakPoint] = None


class PayAction(_Action):
    """Intra-bank payment between two clients of the same instance."""
    action: Literal["pay"] = "pay"
    sender: str
    receiver: str
    amount: int = Field(gt=0)


class AdversaryAction(_Action):
    """Replace an operator's misbehaviour switches; client names stand for their keys."""
    action: Literal["adversary"] = "adversary"
    instance: str
    censor_tx_from: List[str] = Field(default_factory=list)
    censor_queries_from: List[str] = Field(default_factory=list)
    drop_sync: bool = False
    equivocate: bool = False
    stall_phase: Optional[int] = Field(default=None, ge=2, le=4)
    relay_escalations: bool = False


class RegistryAction(_Action):
    """
    Registry mutation issued by the operator of ``by``.

    ``join``, ``approve`` and ``delete`` address IMSC-d (newJoin,
    approveJoin, approveDelete); ``add`` and ``delete`` address IMSC-c.
    """
    action: Literal["registry"] = "registry"
    op: Literal["join", "approve", "add", "delete"]
    by: str
    target: str


class IssueAction(_Action):
    action: Literal["issue"] = "issue"
    instance: str
    amount: int = Field(gt=0)
    beneficiary: Optional[str] = Field(default=None, description="Client name; the treasury when omitted")


class ReplaceEnclaveAction(_Action):
    action: Literal["replace_enclave"] = "replace_enclave"
    instance: str


class AbortAction(_Action):
    action: Literal["abort"] = "abort"
    transfer: str


Action = Annotated[
    Union[TransferAction, PayAction, AdversaryAction, RegistryAction, IssueAction,
          ReplaceEnclaveAction, AbortAction],
    Field(discriminator="action"),
]


class SupplyExpectation(_Strict):
    t_i: Optional[int] = None
    t_s: Optional[int] = None


class Expectations(_Strict):
    """Scenario-specific postconditions, checked next to the invariant suite."""
    outcomes: Dict[str, str] = Field(default_factory=dict)
    balances: Dict[str, int] = Field(default_factory=dict, description="Client name to final balance")
    supplies: Dict[str, SupplyExpectation] = Field(default_factory=dict)
    registry: Optional[List[str]] = None
    proof_of_censorship: Optional[bool] = None


class ScenarioConfig(_Strict):
    name: str
    description: str = ""
    seed: Optional[int] = None
    imsc_mode: Literal["decentralized", "centralized"] = "decentralized"
    authority: Optional[str] = Field(default=None, description="Authority instance in centralized mode")
    instances: List[InstanceSpec] = Field(min_length=1)
    schedule: List[Action] = Field(default_factory=list)
    finality_depth: Optional[int] = Field(default=None, ge=1)
    htlc_timeout_seconds: Optional[int] = Field(default=None, gt=0)
    max_duration: Optional[int] = Field(default=None, gt=0, description="Virtual seconds before the run is cut")
    expect: Expectations = Field(default_factory=Expectations)

    @field_validator("schedule")
    @classmethod
    def _monotone(cls, schedule: List[Action]) -> List[Action]:
        times = [action.at for action in schedule]
        if times != sorted(times):
            raise ValueError("schedule times must be non-decreasing")
        return schedule

    @model_validator(mode="after")
    def _names_resolve(self) -> "ScenarioConfig":
        instances = [spec.name for spec in self.instances]
        clients = [client.name for spec in self.instances for client in spec.clients]
        if len(set(instances)) != len(instances):
            raise ValueError("duplicate instance name")
        if len(set(clients)) != len(clients):
            raise ValueError("duplicate client name")
        if self.authority is not None and self.authority not in instances:
            raise ValueError(f"unknown authority instance {self.authority}")
        transfer_ids = [a.id for a in self.schedule if isinstance(a, TransferAction)]
        if len(set(transfer_ids)) != len(transfer_ids):
            raise ValueError("duplicate transfer id")
        for position, action in enumerate(self.schedule):
            for field_name in ("sender", "receiver", "beneficiary"):
                name = getattr(action, field_name, None)
                if name is not None and name not in clients:
                    raise ValueError(f"schedule[{position}].{field_name}: unknown client {name}")
            for field_name in ("instance", "by", "target"):
                name = getattr(action, field_name, None)
                if name is not None and name not in instances:
                    raise ValueError(f"schedule[{position}].{field_name}: unknown instance {name}")
            if isinstance(action, AbortAction) and action.transfer not in transfer_ids:
                raise ValueError(f"schedule[{position}].transfer: unknown transfer {action.transfer}")
        return self

    def home_of(self, client: str) -> str:
        return next(spec.name for spec in self.instances for c in spec.clients if c.name == client)

    def instance(self, name: str) -> InstanceSpec:
        return next(spec for spec in self.instances if spec.name == name)


# --- reports -----------------------------------------------------------------

class CheckResult(BaseModel):
    name: str
    passed: bool
    witness: str = ""
    informational: bool = False


class TransferOutcome(BaseModel):
    id: str
    sender: str
    receiver: str
    amount: int
    outcome: Optional[str]
    phase: str
    burned: bool
    minted: bool
    refunded: bool
    collusion_claim_status: Optional[str] = None
    escalations: int = 0
    proofs_of_censorship: int = 0
    error: Optional[str] = None
    trace: List[str] = Field(default_factory=list)


class SupplyRecord(BaseModel):
    t_i: int
    t_s: int
    version: int
    snapshots: int


class CensorshipEntry(BaseModel):
    instance: str
    index: int
    kind: Literal["tx", "query"]
    submitted_at: int
    status: Optional[str]
    proof_of_censorship: bool


class ActionResult(BaseModel):
    at: int
    action: str
    ok: bool
    detail: str = ""


class RunReport(BaseModel):
    scenario: str
    seed: int
    imsc_mode: str
    final_time: int
    chain_height: int
    checks: List[CheckResult] = Field(default_factory=list)
    transfers: List[TransferOutcome] = Field(default_factory=list)
    actions: List[ActionResult] = Field(default_factory=list)
    supplies: Dict[str, SupplyRecord] = Field(default_factory=dict)
    balances: Dict[str, int] = Field(default_factory=dict)
    registry: List[str] = Field(default_factory=list)
    censorship: List[CensorshipEntry] = Field(default_factory=list)
    events: List[str] = Field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks if not check.informational)

    def failures(self) -> List[CheckResult]:
        return [check for check in self.checks if not check.passed and not check.informational]
