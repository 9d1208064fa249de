"""
Integrity Preserving Smart Contract.

Holds one instance's latest public ledger root, its supply counters, the
enclave key histories and the public list of censorship requests.
"""

from typing import Optional, Tuple

from ..ledger.inflation import meets_inflation_rate
from ..models.chain import (
    CensInfo,
    CensQryArgs,
    CensTxArgs,
    IpscInitArgs,
    IpscState,
    ReplaceEncArgs,
    ResolveCensQryArgs,
    ResolveCensTxArgs,
    SnapshotArgs,
    cens_qry_statement,
    cens_tx_statement,
    replace_statement,
)
from ..models.enclave import CensStatus, VersionTransitionPair
from ..models.ledger import AccessTicket
from ..utils.crypto import verify
from .chain import CallContext, Program, require

IPSC = "IPSC"


def ipsc_init(ctx: CallContext, args: IpscInitArgs) -> IpscState:
    return IpscState(
        pk_tee_history=(args.keys.pk_tee,),
        pk_pb_history=(args.keys.pk_pb,),
        sealing_pk_history=(args.keys.sealing_pk,),
        pk_operator=ctx.sender_pk,
        lroot_pb=None,
        t_s=args.t_i0,
        t_i=args.t_i0,
        t_i0=args.t_i0,
        issue_authority=args.issue_authority,
        i_r=args.i_r,
        created_at=ctx.timestamp,
    )


def _transition(ctx: CallContext, state: IpscState, pair: VersionTransitionPair,
                pk_pb, strict: bool) -> Tuple[IpscState, bool]:
    """
    Apply ``pair`` if it extends the current root.

    A pair that does not chain is ignored, or with ``strict`` reverts.
    Issuance moves only together with an accepted transition.
    """
    require(verify(pk_pb, pair.signing_payload(), pair.signature), "bad enclave signature")
    if state.issue_authority:
        require(
            meets_inflation_rate(pair.t_i, state.t_i0, state.i_r.as_fraction(), state.created_at, ctx.timestamp),
            "inflation rate exceeded",
        )
    else:
        require(pair.t_i == state.t_i, "instance cannot issue tokens")
    if pair.root_from != state.lroot_pb:
        require(not strict, "snapshot does not extend the current root")
        return state, False
    updated = state.model_copy(update={
        "lroot_pb": pair.root_to,
        "t_i": pair.t_i,
        "t_s": pair.t_s,
        "accepted_snapshots": state.accepted_snapshots + 1,
    })
    return updated, True


def snapshot_ledger(ctx: CallContext, state: IpscState, args: SnapshotArgs) -> Tuple[IpscState, bool]:
    return _transition(ctx, state, args.pair, state.pk_pb_history[-1], strict=False)


def _access_control(ctx: CallContext, state: IpscState, ticket: AccessTicket) -> None:
    require(ticket.issuing_ipsc == ctx.address, "ticket issued for another instance")
    require(ticket.client_pk == ctx.sender_pk, "ticket belongs to another client")
    require(ticket.expires_at >= ctx.timestamp, "ticket expired")
    payload = ticket.signing_payload()
    require(
        any(verify(pk, payload, ticket.signature) for pk in state.pk_tee_history),
        "ticket not signed by this instance's enclave",
    )


def _append_request(state: IpscState, info: CensInfo) -> Tuple[IpscState, int]:
    return state.model_copy(update={"cens_reqs": state.cens_reqs + (info,)}), len(state.cens_reqs)


def submit_cens_tx(ctx: CallContext, state: IpscState, args: CensTxArgs) -> Tuple[IpscState, int]:
    _access_control(ctx, state, args.ticket)
    return _append_request(state, CensInfo(etx=args.etx, requester=ctx.sender_pk, submitted_at=ctx.timestamp))


def submit_cens_qry(ctx: CallContext, state: IpscState, args: CensQryArgs) -> Tuple[IpscState, int]:
    _access_control(ctx, state, args.ticket)
    return _append_request(state, CensInfo(equery=args.equery, requester=ctx.sender_pk, submitted_at=ctx.timestamp))


def _open_request(state: IpscState, index: int) -> CensInfo:
    require(index < len(state.cens_reqs), "request index out of range")
    info = state.cens_reqs[index]
    require(not info.resolved, "request already resolved")
    return info


def _replace_request(state: IpscState, index: int, info: CensInfo) -> IpscState:
    requests = list(state.cens_reqs)
    requests[index] = info
    return state.model_copy(update={"cens_reqs": tuple(requests)})


def resolve_cens_tx(ctx: CallContext, state: IpscState, args: ResolveCensTxArgs) -> Tuple[IpscState, bool]:
    info = _open_request(state, args.index)
    require(info.etx is not None, "request is not a transaction")
    require(args.status in (CensStatus.OK, CensStatus.REVERTED, CensStatus.REJECTED), "bad status")
    statement = cens_tx_statement(info.etx, args.status)
    require(verify(state.pk_pb_history[-1], statement, args.signature), "bad enclave signature")
    return _replace_request(state, args.index, info.model_copy(update={"status": args.status})), True


def resolve_cens_qry(ctx: CallContext, state: IpscState, args: ResolveCensQryArgs) -> Tuple[IpscState, bool]:
    info = _open_request(state, args.index)
    require(info.equery is not None, "request is not a query")
    require(args.status == CensStatus.ANSWERED, "bad status")
    statement = cens_qry_statement(info.equery, args.status, args.edata)
    require(verify(state.pk_pb_history[-1], statement, args.signature), "bad enclave signature")
    resolved = info.model_copy(update={"status": args.status, "edata": args.edata})
    return _replace_request(state, args.index, resolved), True


def replace_enclave(ctx: CallContext, state: IpscState, args: ReplaceEncArgs) -> Tuple[IpscState, bool]:
    """Rotate to a new enclave; the embedded snapshot must chain or the call reverts."""
    require(ctx.sender_pk == state.pk_operator, "only the operator can replace the enclave")
    require(
        verify(state.pk_operator, replace_statement(args.keys, args.pair), args.operator_signature),
        "bad operator signature",
    )
    updated, _ = _transition(ctx, state, args.pair, args.keys.pk_pb, strict=True)
    updated = updated.model_copy(update={
        "pk_tee_history": state.pk_tee_history + (args.keys.pk_tee,),
        "pk_pb_history": state.pk_pb_history + (args.keys.pk_pb,),
        "sealing_pk_history": state.sealing_pk_history + (args.keys.sealing_pk,),
    })
    return updated, True


IPSC_PROGRAM = Program(
    name=IPSC,
    init=ipsc_init,
    init_args=IpscInitArgs,
    methods={
        "snapshotLedger": (snapshot_ledger, SnapshotArgs),
        "submitCensTx": (submit_cens_tx, CensTxArgs),
        "resolveCensTx": (resolve_cens_tx, ResolveCensTxArgs),
        "submitCensQry": (submit_cens_qry, CensQryArgs),
        "resolveCensQry": (resolve_cens_qry, ResolveCensQryArgs),
        "replaceEnc": (replace_enclave, ReplaceEncArgs),
    },
)


# --- views -------------------------------------------------------------------

def get_lroot(state: IpscState) -> Optional[bytes]:
    return state.lroot_pb


def get_supply(state: IpscState) -> Tuple[int, int]:
    return state.t_i, state.t_s


def get_cens_req(state: IpscState, index: int) -> Optional[CensInfo]:
    return state.cens_reqs[index] if 0 <= index < len(state.cens_reqs) else None
