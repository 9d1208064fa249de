"""
Identity Management Smart Contracts: the registry of valid CBDC instances.

IMSC-d is governed by majority vote of the approved instances' operators;
IMSC-c by a single authority bank.
"""

from typing import Tuple

from ..models.chain import (
    ApproveArgs,
    ImscAddArgs,
    ImscCInitArgs,
    ImscCState,
    ImscDelArgs,
    ImscDInitArgs,
    ImscDState,
    InstanceInfo,
    IpscState,
    NewJoinArgs,
)
from .chain import CallContext, Program, require

IMSC_DECENTRALIZED = "IMSC-d"
IMSC_CENTRALIZED = "IMSC-c"


def _majority(votes: int, instances: int) -> bool:
    # The denominator counts pending entries too.
    return votes > instances // 2


def _voter(ctx: CallContext, state: ImscDState, my_ipsc: str) -> InstanceInfo:
    info = state.instances.get(my_ipsc)
    require(info is not None and info.is_approved, "voting instance is not approved")
    require(info.operator == ctx.sender_pk, "caller does not operate the voting instance")
    return info


def imsc_d_init(ctx: CallContext, args: ImscDInitArgs) -> ImscDState:
    require(len(args.ipscs) == len(args.operators), "one operator per instance")
    require(len(set(args.ipscs)) == len(args.ipscs), "duplicate instance")
    return ImscDState(instances={
        ipsc: InstanceInfo(operator=operator, is_approved=True)
        for ipsc, operator in zip(args.ipscs, args.operators)
    })


def new_join(ctx: CallContext, state: ImscDState, args: NewJoinArgs) -> Tuple[ImscDState, bool]:
    require(args.ipsc not in state.instances, "instance already exists")
    ipsc = ctx.chain.read_latest(args.ipsc)
    require(isinstance(ipsc, IpscState), "no IPSC at that address")
    require(ipsc.pk_operator == ctx.sender_pk, "caller does not operate that IPSC")
    instances = dict(state.instances)
    instances[args.ipsc] = InstanceInfo(operator=ctx.sender_pk, is_approved=False)
    return state.model_copy(update={"instances": instances}), True


def approve_join(ctx: CallContext, state: ImscDState, args: ApproveArgs) -> Tuple[ImscDState, bool]:
    _voter(ctx, state, args.my_ipsc)
    require(args.my_ipsc != args.target_ipsc, "an instance cannot approve itself")
    target = state.instances.get(args.target_ipsc)
    require(target is not None and not target.is_approved, "no pending join for that instance")
    require(args.my_ipsc not in target.approvals, "already approved")
    approvals = target.approvals + (args.my_ipsc,)
    instances = dict(state.instances)
    if _majority(len(approvals), len(instances)):
        instances[args.target_ipsc] = target.model_copy(update={"is_approved": True, "approvals": ()})
        approved = True
    else:
        instances[args.target_ipsc] = target.model_copy(update={"approvals": approvals})
        approved = False
    return state.model_copy(update={"instances": instances}), approved


def approve_delete(ctx: CallContext, state: ImscDState, args: ApproveArgs) -> Tuple[ImscDState, bool]:
    _voter(ctx, state, args.my_ipsc)
    target = state.instances.get(args.target_ipsc)
    require(target is not None and target.is_approved, "no approved instance to delete")
    require(args.my_ipsc not in target.approvals, "already voted")
    approvals = target.approvals + (args.my_ipsc,)
    instances = dict(state.instances)
    if _majority(len(approvals), len(instances)):
        del instances[args.target_ipsc]
        deleted = True
    else:
        instances[args.target_ipsc] = target.model_copy(update={"approvals": approvals})
        deleted = False
    return state.model_copy(update={"instances": instances}), deleted


IMSC_D_PROGRAM = Program(
    name=IMSC_DECENTRALIZED,
    init=imsc_d_init,
    init_args=ImscDInitArgs,
    methods={
        "newJoin": (new_join, NewJoinArgs),
        "approveJoin": (approve_join, ApproveArgs),
        "approveDelete": (approve_delete, ApproveArgs),
    },
)


def imsc_c_init(ctx: CallContext, args: ImscCInitArgs) -> ImscCState:
    return ImscCState(
        authority_ipsc=args.authority_ipsc,
        authority_operator=ctx.sender_pk,
        instances={args.authority_ipsc: ctx.sender_pk},
    )


def _authority(ctx: CallContext, state: ImscCState) -> None:
    require(ctx.sender_pk == state.authority_operator, "only the authority can change the registry")


def imsc_c_add(ctx: CallContext, state: ImscCState, args: ImscAddArgs) -> Tuple[ImscCState, bool]:
    _authority(ctx, state)
    require(args.ipsc not in state.instances, "instance already exists")
    instances = dict(state.instances)
    instances[args.ipsc] = args.operator
    return state.model_copy(update={"instances": instances}), True


def imsc_c_del(ctx: CallContext, state: ImscCState, args: ImscDelArgs) -> Tuple[ImscCState, bool]:
    _authority(ctx, state)
    require(args.ipsc in state.instances, "unknown instance")
    require(args.ipsc != state.authority_ipsc, "the authority cannot delete itself")
    instances = dict(state.instances)
    del instances[args.ipsc]
    return state.model_copy(update={"instances": instances}), True


IMSC_C_PROGRAM = Program(
    name=IMSC_CENTRALIZED,
    init=imsc_c_init,
    init_args=ImscCInitArgs,
    methods={
        "add": (imsc_c_add, ImscAddArgs),
        "del": (imsc_c_del, ImscDelArgs),
    },
)


def registry(state) -> Tuple[str, ...]:
    """Approved instance ids of either registry flavour."""
    if isinstance(state, ImscDState):
        return tuple(sorted(ipsc for ipsc, info in state.instances.items() if info.is_approved))
    if isinstance(state, ImscCState):
        return tuple(sorted(state.instances))
    return ()
