"""Small builders shared by the ledger tests."""

from src.ledger import DictView, ExecutionContext, execute_batch, genesis_entries
from src.ledger.state import address_of
from src.models.crypto import Scheme
from src.models.ledger import AccessTicket, Issue, MicroTransaction, Register
from src.utils.crypto import keygen, sign

OPERATOR = keygen(Scheme.PB, 7, "operator")
ALICE = keygen(Scheme.PB, 7, "alice")
BOB = keygen(Scheme.PB, 7, "bob")
IPSC = "ipsc-A"


def signed(pair, nonce, call, value=0) -> MicroTransaction:
    unsigned = MicroTransaction(sender_pk=pair.public, nonce=nonce, call=call, value=value)
    return unsigned.model_copy(update={"signature": sign(pair, unsigned.signing_payload())})


def context(batch_id=0, now=0, cap=100, **overrides) -> ExecutionContext:
    fields = dict(
        now=now,
        local_ipsc=IPSC,
        htlc_timeout=100,
        ticket_window=200,
        batch_id=batch_id,
        system_pk=OPERATOR.public,
        issue_ticket=lambda pk, expires_at: AccessTicket(
            client_pk=pk, issuing_ipsc=IPSC, expires_at=expires_at
        ),
        may_issue=lambda total: total <= cap,
    )
    fields.update(overrides)
    return ExecutionContext(**fields)


def funded_view(alice_balance=50) -> DictView:
    """Genesis plus registered alice and bob, alice holding freshly issued tokens."""
    view = DictView(genesis_entries(OPERATOR.public, 1000), strict=False)
    execute_batch(
        [
            signed(OPERATOR, 0, Register(pk=ALICE.public)),
            signed(OPERATOR, 0, Register(pk=BOB.public)),
            signed(OPERATOR, 0, Issue(beneficiary=address_of(ALICE.public), amount=alice_balance)),
        ],
        view,
        context(batch_id=0),
    )
    return view


def balance(view, pair) -> int:
    return view.account(address_of(pair.public)).balance
