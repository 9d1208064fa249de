import pytest

from src.authlog.state_tree import SparseStateTree
from src.ledger import (
    DictView,
    MissingStateError,
    RecordingView,
    VmError,
    execute_batch,
    genesis_entries,
    run_vm,
    screen,
)
from src.ledger.state import address_of
from src.models.crypto import Scheme
from src.models.ledger import (
    ClientRegistered,
    Issue,
    PartialState,
    Register,
    Reverted,
    StateEntry,
    Status,
    TokensIssued,
    Transfer,
    Transferred,
)
from src.utils.crypto import hash_bytes, keygen
from tests.ledger.helpers import ALICE, BOB, OPERATOR, balance, context, funded_view, signed


class TestScreening:
    """Test the filter that keeps bad transactions out of a batch."""

    def test_valid_client_transaction_passes(self):
        """A registered sender with the right nonce is admitted."""
        view = funded_view()
        tx = signed(ALICE, 0, Transfer(to=address_of(BOB.public), amount=1))

        assert screen(tx, view, context(batch_id=1)) is None

    def test_bad_signature(self):
        """A transaction signed by someone else is filtered."""
        view = funded_view()
        forged = signed(BOB, 0, Transfer(to=address_of(BOB.public), amount=1))
        forged = forged.model_copy(update={"sender_pk": ALICE.public})

        assert screen(forged, view, context(batch_id=1)) == "bad signature"

    def test_unregistered_sender(self):
        """Unknown keys cannot transact."""
        stranger = keygen(Scheme.PB, 7, "mallory")
        tx = signed(stranger, 0, Transfer(to=address_of(BOB.public), amount=1))

        assert screen(tx, funded_view(), context(batch_id=1)) == "unregistered sender"

    def test_wrong_nonce(self):
        """Replays and gaps are filtered."""
        tx = signed(ALICE, 5, Transfer(to=address_of(BOB.public), amount=1))

        assert screen(tx, funded_view(), context(batch_id=1)) == "wrong nonce"

    def test_client_cannot_issue_or_register(self):
        """Privileged calls come only from the system key."""
        view = funded_view()
        issue = signed(ALICE, 0, Issue(beneficiary=address_of(ALICE.public), amount=5))
        register = signed(ALICE, 0, Register(pk=ALICE.public))

        assert screen(issue, view, context(batch_id=1)) == "privileged call from client"
        assert screen(register, view, context(batch_id=1)) == "privileged call from client"

    def test_system_nonce_is_the_batch_id(self):
        """A system transaction prepared for another batch is stale."""
        tx = signed(OPERATOR, 0, Issue(beneficiary=address_of(ALICE.public), amount=5))

        assert screen(tx, funded_view(), context(batch_id=0)) is None
        assert screen(tx, funded_view(), context(batch_id=1)) == "stale system nonce"

    def test_system_key_cannot_transfer(self):
        """The operator key holds no spendable client role."""
        tx = signed(OPERATOR, 1, Transfer(to=address_of(BOB.public), amount=1))

        assert screen(tx, funded_view(), context(batch_id=1)) == "system sender may only register or issue"


class TestExecuteBatch:
    """Test in-order execution and receipts."""

    def test_registration_and_issuance(self):
        """Register opens zero-balance accounts, Issue mints to the beneficiary."""
        view = DictView(genesis_entries(OPERATOR.public, 1000), strict=False)
        result = execute_batch(
            [
                signed(OPERATOR, 0, Register(pk=ALICE.public)),
                signed(OPERATOR, 0, Issue(beneficiary=address_of(ALICE.public), amount=40)),
            ],
            view,
            context(batch_id=0),
        )

        assert [r.status for r in result.receipts] == [Status.OK, Status.OK]
        assert isinstance(result.receipts[0].events[0], ClientRegistered)
        assert isinstance(result.receipts[1].events[0], TokensIssued)
        assert balance(view, ALICE) == 40
        assert result.supply_delta == 40
        assert result.issued_delta == 40

    def test_transfer_moves_tokens_and_bumps_nonce(self):
        """A successful transfer debits, credits and advances the sender nonce."""
        view = funded_view()
        result = execute_batch([signed(ALICE, 0, Transfer(to=address_of(BOB.public), amount=20))],
                               view, context(batch_id=1))

        assert result.receipts[0].status == Status.OK
        assert isinstance(result.receipts[0].event(Transferred), Transferred)
        assert balance(view, ALICE) == 30
        assert balance(view, BOB) == 20
        assert view.account(address_of(ALICE.public)).nonce == 1
        assert result.supply_delta == 0

    def test_overdraft_reverts_but_consumes_nonce(self):
        """A reverted call leaves balances alone and still gets a receipt."""
        view = funded_view()
        result = execute_batch([signed(ALICE, 0, Transfer(to=address_of(BOB.public), amount=51))],
                               view, context(batch_id=1))

        receipt = result.receipts[0]
        assert receipt.status == Status.REVERTED
        assert receipt.event(Reverted).reason == "insufficient balance"
        assert balance(view, ALICE) == 50
        assert balance(view, BOB) == 0
        assert view.account(address_of(ALICE.public)).nonce == 1

    def test_transfer_to_unknown_recipient_reverts(self):
        """Tokens cannot be sent to an address without an account."""
        view = funded_view()
        result = execute_batch([signed(ALICE, 0, Transfer(to=hash_bytes(b"nobody"), amount=1))],
                               view, context(batch_id=1))

        assert result.receipts[0].event(Reverted).reason == "unknown recipient"

    def test_rejected_transactions_leave_no_receipt(self):
        """Filtered transactions are reported separately from accepted ones."""
        view = funded_view()
        good = signed(ALICE, 0, Transfer(to=address_of(BOB.public), amount=1))
        replay = good
        result = execute_batch([good, replay], view, context(batch_id=1))

        assert result.accepted == [good]
        assert result.rejected == [replay]
        assert len(result.receipts) == 1

    def test_nonces_chain_within_a_batch(self):
        """Consecutive nonces from one sender all execute in order."""
        view = funded_view()
        txs = [signed(ALICE, n, Transfer(to=address_of(BOB.public), amount=5)) for n in range(3)]
        result = execute_batch(txs, view, context(batch_id=1))

        assert all(r.status == Status.OK for r in result.receipts)
        assert balance(view, BOB) == 15

    def test_issuance_respects_the_cap_across_a_batch(self):
        """Issued amounts accumulate within the batch against the cap."""
        view = funded_view(alice_balance=10)
        result = execute_batch(
            [
                signed(OPERATOR, 1, Issue(beneficiary=address_of(BOB.public), amount=60)),
                signed(OPERATOR, 1, Issue(beneficiary=address_of(BOB.public), amount=50)),
            ],
            view,
            context(batch_id=1, cap=100),
        )

        assert [r.status for r in result.receipts] == [Status.OK, Status.REVERTED]
        assert result.receipts[1].event(Reverted).reason == "issuance exceeds inflation cap"
        assert result.issued_delta == 60
        assert balance(view, BOB) == 60

    def test_duplicate_registration_reverts(self):
        """An existing account cannot be registered again."""
        view = funded_view()
        result = execute_batch([signed(OPERATOR, 1, Register(pk=ALICE.public))], view, context(batch_id=1))

        assert result.receipts[0].event(Reverted).reason == "client already registered"


class TestRunVm:
    """Test execution over a verified partial state."""

    def _setup(self):
        tree = SparseStateTree({k: v for k, v in funded_view().values.items() if v is not None})
        txs = [signed(ALICE, 0, Transfer(to=address_of(BOB.public), amount=20))]
        recorder = RecordingView(tree)
        execute_batch(txs, recorder, context(batch_id=1))
        keys = sorted(recorder.touched)
        partial = PartialState(
            root=tree.root,
            entries=tuple(StateEntry(key=k, value=tree.get(k)) for k in keys),
            witness=tuple(tree.proof(k) for k in keys),
        )
        return tree, txs, partial

    def test_new_root_matches_the_full_tree(self):
        """Applying the returned entries to the full tree reproduces the new root."""
        tree, txs, partial = self._setup()
        result = run_vm(txs, partial, context(batch_id=1))

        for entry in result.partial_state.entries:
            tree.set(entry.key, entry.value)
        assert result.partial_state.root == tree.root
        assert result.partial_state.root != partial.root

    def test_returned_witness_verifies_against_new_root(self):
        """The returned witness verifies against the new root."""
        _, txs, partial = self._setup()
        first = run_vm(txs, partial, context(batch_id=1))
        second = run_vm([], first.partial_state, context(batch_id=2))

        assert second.partial_state.root == first.partial_state.root

    def test_tampered_entry_rejects_the_batch(self):
        """A value that does not match the witness aborts the whole run."""
        _, txs, partial = self._setup()
        bad = partial.entries[0].model_copy(update={"value": b"forged"})
        forged = partial.model_copy(update={"entries": (bad,) + partial.entries[1:]})

        with pytest.raises(VmError):
            run_vm(txs, forged, context(batch_id=1))

    def test_missing_entry_names_the_transaction(self):
        """Touching state outside the partial state fails with the tx index."""
        _, txs, partial = self._setup()
        empty = PartialState(root=partial.root)

        with pytest.raises(MissingStateError) as excinfo:
            run_vm(txs, empty, context(batch_id=1))
        assert excinfo.value.tx_index == 0
