import pytest

from src.enclave import LightClient, UnknownInstanceError
from src.ledger.state import address_of
from src.models.crypto import Scheme
from src.models.ledger import Transfer
from src.utils.crypto import keygen
from tests.enclave.host import Host, StaticReader, signed

ALICE = keygen(Scheme.PB, 7, "alice")
BOB = keygen(Scheme.PB, 7, "bob")


@pytest.fixture
def source():
    """Instance A with one confirmed transfer as its latest batch."""
    host = Host("ipsc-A")
    host.register(ALICE)
    host.register(BOB)
    host.issue(ALICE, 50)
    host.run([signed(ALICE, 0, Transfer(to=address_of(BOB.public), amount=10))])
    return host


def reader_for(host, roots=None):
    return StaticReader(approved={host.instance_id},
                        roots={host.instance_id: roots if roots is not None else [host.enclave.lroot_cur]})


class TestLightClient:
    """Test verification of other instances' receipts."""

    def test_evidence_at_the_snapshot_verifies(self, source):
        """Receipt, header and snapshot all chain together."""
        client = LightClient("ipsc-B", reader_for(source))
        foreign = source.foreign(source.evidence(source.outputs[-1]))

        assert client.verify(foreign)
        assert client.knows("ipsc-A", source.enclave.lroot_cur)

    def test_older_evidence_links_through_an_incremental_proof(self, source):
        """Evidence against an earlier version reaches a later snapshot."""
        transfer = source.outputs[-1]
        evidence = source.evidence(transfer)
        source.run([])
        source.run([])
        client = LightClient("ipsc-B", reader_for(source))

        assert client.verify(source.foreign(evidence))

    def test_unsynced_snapshot_is_rejected(self, source):
        """Evidence pointing past the finalized snapshot fails."""
        older = source.history.root(2)
        client = LightClient("ipsc-B", reader_for(source, roots=[older]))

        assert not client.verify(source.foreign(source.evidence(source.outputs[-1])))

    def test_unapproved_instances_are_untracked(self, source):
        """Evidence from instances outside the registry raises."""
        client = LightClient("ipsc-B", StaticReader(roots={"ipsc-A": [source.enclave.lroot_cur]}))

        with pytest.raises(UnknownInstanceError):
            client.verify(source.foreign(source.evidence(source.outputs[-1])))

    def test_reverted_receipts_prove_nothing(self, source):
        """A REVERTED receipt is never accepted as evidence."""
        source.run([signed(ALICE, 1, Transfer(to=address_of(BOB.public), amount=10_000))])
        client = LightClient("ipsc-B", reader_for(source))

        assert not client.verify(source.foreign(source.evidence(source.outputs[-1])))

    def test_receipt_from_another_batch_fails(self, source):
        """Swapping in a receipt the header does not commit to breaks the proof."""
        evidence = source.evidence(source.outputs[-1])
        other = source.outputs[-2].receipts[0]
        client = LightClient("ipsc-B", reader_for(source))

        assert not client.verify(source.foreign(evidence.model_copy(update={"receipt": other})))

    def test_deregistration_forgets_roots(self, source):
        """An instance dropped from the registry is no longer tracked."""
        reader = reader_for(source)
        client = LightClient("ipsc-B", reader)
        client.observe("ipsc-A")
        reader.approved.clear()

        assert client.observe("ipsc-A") is None
        assert "ipsc-A" not in client.tracked()

    def test_local_instance_is_never_observed(self, source):
        """The light client ignores its own instance."""
        client = LightClient("ipsc-A", reader_for(source))

        assert client.observe("ipsc-A") is None
        assert client.tracked() == {}


class TestEnclaveForeignChecks:
    """Test the enclave's use of its light client."""

    def test_enclave_accepts_tracked_evidence(self, source):
        """An enclave configured with a reader verifies foreign receipts."""
        receiver = Host("ipsc-B", clock=source.clock, reader=reader_for(source))

        assert receiver.enclave.verify_foreign_inclusion(source.foreign(source.evidence(source.outputs[-1])))

    def test_untracked_evidence_is_false_inside_the_vm(self, source):
        """The VM-facing check turns unknown instances into a plain refusal."""
        receiver = Host("ipsc-B", clock=source.clock, reader=StaticReader())
        foreign = source.foreign(source.evidence(source.outputs[-1]))

        with pytest.raises(UnknownInstanceError):
            receiver.enclave.verify_foreign_inclusion(foreign)
        assert receiver.enclave._verify_for_vm(foreign) is False
